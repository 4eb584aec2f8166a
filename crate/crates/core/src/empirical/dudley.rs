//! Bounded-Lipschitz (Dudley) distance between atomic measures.
//!
//! With `‖φ‖_∞ + Lip(φ) ≤ 1`, the distance is `max_a V(a, 1 − a)` where
//! `V(a, L) = sup{Σ c_i φ_i : |φ_i| ≤ a, |φ_i − φ_j| ≤ L d_ij}` and
//! `c = weights(a) − weights(b)`. `V` is jointly concave, so the outer
//! maximum is a golden-section search. Each `V` is exact: a slope-trick
//! dynamic program on a sorted line, or the dual min-cost transshipment on
//! a graph whose shortest paths reproduce the metric.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use super::mcf::FlowNet;
use super::AtomicMeasure;
use crate::error::{Error, Result};

/// Largest combined support handled by [`dudley_distance`].
pub const ATOM_BUDGET: usize = 2000;

#[derive(Clone, Copy, PartialEq)]
struct Slope(f64);

impl Eq for Slope {}

impl Ord for Slope {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl PartialOrd for Slope {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// `V(a, L)` on sorted points `xs` with signed masses `c`.
fn chain_value(xs: &[f64], c: &[f64], a: f64, l: f64) -> f64 {
    if a <= 0.0 || xs.is_empty() {
        return 0.0;
    }
    // F(v) = best partial sum with φ_i = v, kept as a concave piecewise
    // linear function: value at `lo` plus segments keyed by slope − offset.
    let mut segs: BTreeMap<Slope, f64> = BTreeMap::new();
    let mut offset = 0.0;
    let mut lo = -a;
    let mut f_lo = -a * c[0];
    let mut total = 2.0 * a;
    segs.insert(Slope(c[0]), 2.0 * a);
    for i in 1..xs.len() {
        let w = l * (xs[i] - xs[i - 1]);
        if w > 0.0 {
            *segs.entry(Slope(-offset)).or_insert(0.0) += 2.0 * w;
            lo -= w;
            total += 2.0 * w;
        }
        offset += c[i];
        f_lo += c[i] * lo;
        let mut need = -a - lo;
        while need > 0.0 {
            let Some((&k, &len)) = segs.iter().next_back() else { break };
            let take = len.min(need);
            f_lo += (k.0 + offset) * take;
            if take >= len {
                segs.remove(&k);
            } else {
                *segs.get_mut(&k).unwrap() -= take;
            }
            need -= take;
            total -= take;
        }
        lo = -a;
        let mut extra = total - 2.0 * a;
        while extra > 0.0 {
            let Some((&k, &len)) = segs.iter().next() else { break };
            let take = len.min(extra);
            if take >= len {
                segs.remove(&k);
            } else {
                *segs.get_mut(&k).unwrap() -= take;
            }
            extra -= take;
            total -= take;
        }
    }
    f_lo + segs.iter().map(|(k, len)| (k.0 + offset).max(0.0) * len).sum::<f64>()
}

/// Maximizes a concave function of `a ∈ [0, 1]` with `g(0) = g(1) = 0`.
fn golden_max<F: FnMut(f64) -> f64>(mut g: F) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let mut f1 = g(x1);
    let mut f2 = g(x2);
    let mut best = f1.max(f2).max(0.0);
    while hi - lo > 1e-12 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = g(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = g(x1);
        }
        best = best.max(f1).max(f2);
    }
    best
}

fn sorted_support(a: &[(f64, f64)], b: &[(f64, f64)]) -> (Vec<f64>, Vec<f64>) {
    let mut all: Vec<(f64, f64)> = a.iter().copied().chain(b.iter().map(|&(x, w)| (x, -w))).collect();
    all.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut xs: Vec<f64> = Vec::with_capacity(all.len());
    let mut cs: Vec<f64> = Vec::with_capacity(all.len());
    for (x, w) in all {
        if xs.last() == Some(&x) {
            *cs.last_mut().unwrap() += w;
        } else {
            xs.push(x);
            cs.push(w);
        }
    }
    (xs, cs)
}

/// Dudley distance between atomic measures on the real line given as
/// `(point, weight)` lists. No atom budget.
pub fn dudley_distance_line(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let (xs, cs) = sorted_support(a, b);
    if cs.iter().all(|c| *c == 0.0) {
        return 0.0;
    }
    golden_max(|s| chain_value(&xs, &cs, s, 1.0 - s))
}

/// `W₁` on the line by the sorted cumulative formula.
pub fn wasserstein1_line(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let (xs, cs) = sorted_support(a, b);
    let mut acc = 0.0;
    let mut out = 0.0;
    for i in 0..xs.len().saturating_sub(1) {
        acc += cs[i];
        out += acc.abs() * (xs[i + 1] - xs[i]);
    }
    out
}

fn coordinate_gap(x: f64, y: f64, period: Option<f64>) -> f64 {
    let d = (x - y).abs();
    match period {
        Some(p) => {
            let d = d.rem_euclid(p);
            d.min(p - d)
        }
        None => d,
    }
}

/// `ℓ¹` distance with geodesic distance on periodic coordinates.
pub fn metric(x: &[f64], y: &[f64], periods: &[Option<f64>]) -> f64 {
    x.iter().zip(y).zip(periods).map(|((a, b), p)| coordinate_gap(*a, *b, *p)).sum()
}

/// Signed support: distinct points (periodic coordinates reduced) and
/// `c = weights(a) − weights(b)`.
fn signed_support(a: &AtomicMeasure, b: &AtomicMeasure) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut c: Vec<f64> = Vec::new();
    let mut add = |m: &AtomicMeasure, sign: f64| {
        for i in 0..m.len() {
            let p: Vec<f64> = m
                .point(i)
                .iter()
                .zip(&m.periods)
                .map(|(x, per)| match per {
                    Some(pd) => {
                        let r = x.rem_euclid(*pd);
                        if r >= *pd {
                            0.0
                        } else {
                            r
                        }
                    }
                    None => *x,
                })
                .map(|x| if x == 0.0 { 0.0 } else { x })
                .collect();
            let key: Vec<u64> = p.iter().map(|x| x.to_bits()).collect();
            let next = points.len();
            let idx = *index.entry(key).or_insert(next);
            if idx == next {
                points.push(p);
                c.push(0.0);
            }
            c[idx] += sign * m.weights[i];
        }
    };
    add(a, 1.0);
    add(b, -1.0);
    (points, c)
}

/// Graph whose shortest-path metric equals [`metric`] on the support.
/// Returns node count, edges and the node of each support point.
fn metric_graph(points: &[Vec<f64>], periods: &[Option<f64>]) -> (usize, Vec<(usize, usize, f64)>, Vec<usize>) {
    let s = points.len();
    let dim = periods.len();
    let axes: Vec<Vec<f64>> = (0..dim)
        .map(|d| {
            let mut v: Vec<f64> = points.iter().map(|p| p[d]).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        })
        .collect();
    let hanan_nodes = axes.iter().map(|a| a.len()).try_fold(1usize, |acc, n| acc.checked_mul(n));
    let complete_arcs = s * s.saturating_sub(1) / 2;
    match hanan_nodes {
        Some(nodes) if nodes.saturating_mul(dim) <= complete_arcs.max(4 * s) => {
            let strides: Vec<usize> = (0..dim).map(|d| axes[d + 1..].iter().map(|a| a.len()).product()).collect();
            let mut edges = Vec::with_capacity(nodes * dim);
            let mut coord = vec![0usize; dim];
            for node in 0..nodes {
                let mut rem = node;
                for d in 0..dim {
                    coord[d] = rem / strides[d];
                    rem %= strides[d];
                }
                for d in 0..dim {
                    let k = axes[d].len();
                    if coord[d] + 1 < k {
                        edges.push((node, node + strides[d], axes[d][coord[d] + 1] - axes[d][coord[d]]));
                    } else if let (Some(p), true) = (periods[d], k >= 2) {
                        let wrap = p - (axes[d][k - 1] - axes[d][0]);
                        edges.push((node, node - (k - 1) * strides[d], wrap));
                    }
                }
            }
            let locate = |p: &Vec<f64>| -> usize {
                (0..dim)
                    .map(|d| axes[d].binary_search_by(|v| v.total_cmp(&p[d])).expect("axis value") * strides[d])
                    .sum()
            };
            let at: Vec<usize> = points.iter().map(locate).collect();
            (nodes, edges, at)
        }
        _ => {
            let mut edges = Vec::with_capacity(complete_arcs);
            for i in 0..s {
                for j in i + 1..s {
                    edges.push((i, j, metric(&points[i], &points[j], periods)));
                }
            }
            (s, edges, (0..s).collect())
        }
    }
}

/// Exact Dudley distance for measures of equal dimension and geometry with
/// combined support at most [`ATOM_BUDGET`].
pub fn dudley_distance(a: &AtomicMeasure, b: &AtomicMeasure) -> Result<f64> {
    if a.dim != b.dim || a.periods != b.periods {
        return Err(Error::Incompatible("measures differ in dimension or geometry".into()));
    }
    let count = a.len() + b.len();
    if count > ATOM_BUDGET {
        return Err(Error::AtomBudget { count, limit: ATOM_BUDGET });
    }
    let (points, c) = signed_support(a, b);
    if c.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    if a.dim == 1 && a.periods[0].is_none() {
        let mut pairs: Vec<(f64, f64)> = points.iter().map(|p| p[0]).zip(c.iter().copied()).collect();
        pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
        let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let cs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        return Ok(golden_max(|s| chain_value(&xs, &cs, s, 1.0 - s)));
    }
    let (nodes, edges, at) = metric_graph(&points, &a.periods);
    let mut supply = vec![0.0; nodes + 1];
    for (i, &node) in at.iter().enumerate() {
        supply[node] += c[i];
    }
    let net = FlowNet::new(nodes, &edges, &at);
    debug_assert_eq!(net.ground(), nodes);
    Ok(golden_max(|s| net.min_cost(&supply, s, 1.0 - s)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dirac(x: f64) -> AtomicMeasure {
        AtomicMeasure::line(&[(x, 1.0)]).unwrap()
    }

    /// Brute-force LP oracle for two atoms: maximize φ₀ − φ₁ over a grid
    /// of feasible (a, L) splits.
    fn two_atom_oracle(h: f64) -> f64 {
        (0..=200_000)
            .map(|i| {
                let a = i as f64 / 200_000.0;
                (2.0 * a).min((1.0 - a) * h)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn two_diracs_closed_form() {
        for h in [0.1, 1.0, 10.0] {
            let d = dudley_distance(&dirac(0.0), &dirac(h)).unwrap();
            assert!((d - 2.0 * h / (2.0 + h)).abs() < 1e-9, "h={h}: {d}");
            assert!((d - two_atom_oracle(h)).abs() < 1e-4);
        }
    }

    #[test]
    fn saturation() {
        let d = dudley_distance(&dirac(0.0), &dirac(1e6)).unwrap();
        assert!((d - 2.0).abs() < 1e-5 && d <= 2.0);
    }

    #[test]
    fn graph_and_chain_agree_on_the_line() {
        let a = [(0.0, 0.2), (0.5, 0.3), (1.7, 0.5)];
        let b = [(0.1, 0.4), (0.9, 0.1), (3.0, 0.5)];
        let (xs, cs) = sorted_support(&a, &b);
        let edges: Vec<_> = (0..xs.len() - 1).map(|i| (i, i + 1, xs[i + 1] - xs[i])).collect();
        let net = FlowNet::new(xs.len(), &edges, &(0..xs.len()).collect::<Vec<_>>());
        let mut supply = cs.clone();
        supply.push(0.0);
        for s in [0.05, 0.3, 0.5, 0.77, 0.95] {
            let dp = chain_value(&xs, &cs, s, 1.0 - s);
            let flow = net.min_cost(&supply, s, 1.0 - s);
            assert!((dp - flow).abs() < 1e-12, "a={s}: {dp} vs {flow}");
        }
    }

    #[test]
    fn circle_wraps() {
        let tp = std::f64::consts::TAU;
        let m = |x: f64| AtomicMeasure::new(1, vec![Some(tp)], vec![x], vec![1.0]).unwrap();
        let d = dudley_distance(&m(0.1), &m(tp - 0.1)).unwrap();
        assert!((d - 2.0 * 0.2 / 2.2).abs() < 1e-9);
    }

    #[test]
    fn product_space_uses_l1() {
        let m = |x: f64, w: f64| AtomicMeasure::new(2, vec![None, None], vec![x, w], vec![1.0]).unwrap();
        let d = dudley_distance(&m(0.0, 0.0), &m(0.3, 0.4)).unwrap();
        assert!((d - 2.0 * 0.7 / 2.7).abs() < 1e-9);
    }

    #[test]
    fn budget_is_enforced() {
        let pts: Vec<(f64, f64)> = (0..1500).map(|i| (i as f64, 1.0 / 1500.0)).collect();
        let a = AtomicMeasure::line(&pts).unwrap();
        assert!(matches!(dudley_distance(&a, &a), Err(Error::AtomBudget { .. })));
    }
}
