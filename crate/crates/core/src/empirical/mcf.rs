//! Uncapacitated min-cost transshipment by successive shortest paths.
//!
//! Nodes of a metric graph plus one ground node. Edge arcs cost `L·len`,
//! arcs to and from the ground cost `a`, so the optimum is the transport
//! cost under the metric `min(L·d, 2a)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Clone, Copy, PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Copy)]
struct Arc {
    to: usize,
    /// Index of the paired arc.
    pair: usize,
    len: f64,
    ground: bool,
    forward: bool,
}

pub(crate) struct FlowNet {
    n: usize,
    start: Vec<usize>,
    arcs: Vec<Arc>,
}

impl FlowNet {
    /// `nodes` graph nodes with undirected `edges`; `grounded` nodes get
    /// arcs to the extra ground node `nodes`.
    pub(crate) fn new(nodes: usize, edges: &[(usize, usize, f64)], grounded: &[usize]) -> Self {
        let n = nodes + 1;
        let ground = nodes;
        let mut list: Vec<(usize, usize, f64, bool)> = Vec::with_capacity(2 * edges.len() + 2 * grounded.len());
        for &(u, v, len) in edges {
            list.push((u, v, len, false));
            list.push((v, u, len, false));
        }
        for &v in grounded {
            list.push((v, ground, 0.0, true));
            list.push((ground, v, 0.0, true));
        }
        // Each directed arc gets a residual twin stored next to it.
        let mut degree = vec![0usize; n];
        for &(u, v, _, _) in &list {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut start = vec![0usize; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + degree[i];
        }
        let mut fill = start.clone();
        let dummy = Arc { to: 0, pair: 0, len: 0.0, ground: false, forward: true };
        let mut arcs = vec![dummy; start[n]];
        for &(u, v, len, ground) in &list {
            let (i, j) = (fill[u], fill[v]);
            fill[u] += 1;
            fill[v] += 1;
            arcs[i] = Arc { to: v, pair: j, len, ground, forward: true };
            arcs[j] = Arc { to: u, pair: i, len, ground, forward: false };
        }
        FlowNet { n, start, arcs }
    }

    pub(crate) fn ground(&self) -> usize {
        self.n - 1
    }

    /// Minimum cost of routing `supply` (indexed by node, summing to 0).
    pub(crate) fn min_cost(&self, supply: &[f64], a: f64, l: f64) -> f64 {
        let n = self.n;
        let base = |e: &Arc| if e.ground { a } else { l * e.len };
        let scale: f64 = supply.iter().map(|s| s.abs()).sum::<f64>().max(1e-300);
        let eps = 1e-14 * scale;
        let mut excess = supply.to_vec();
        excess.resize(n, 0.0);
        let mut flow = vec![0.0f64; self.arcs.len()];
        let mut pot = vec![0.0f64; n];
        let mut dist = vec![f64::INFINITY; n];
        let mut parent = vec![usize::MAX; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        let mut total = 0.0;
        loop {
            dist.iter_mut().for_each(|d| *d = f64::INFINITY);
            parent.iter_mut().for_each(|p| *p = usize::MAX);
            done.iter_mut().for_each(|d| *d = false);
            heap.clear();
            let mut any = false;
            for v in 0..n {
                if excess[v] > eps {
                    dist[v] = 0.0;
                    heap.push(Entry(0.0, v));
                    any = true;
                }
            }
            if !any {
                break;
            }
            let mut sink = usize::MAX;
            while let Some(Entry(d, u)) = heap.pop() {
                if done[u] || d > dist[u] {
                    continue;
                }
                done[u] = true;
                if excess[u] < -eps {
                    sink = u;
                    break;
                }
                for idx in self.start[u]..self.start[u + 1] {
                    let e = &self.arcs[idx];
                    if !e.forward && flow[e.pair] <= 0.0 {
                        continue;
                    }
                    let c = if e.forward { base(e) } else { -base(e) };
                    let rc = (c + pot[u] - pot[e.to]).max(0.0);
                    let nd = d + rc;
                    if nd < dist[e.to] {
                        dist[e.to] = nd;
                        parent[e.to] = idx;
                        heap.push(Entry(nd, e.to));
                    }
                }
            }
            if sink == usize::MAX {
                // Only rounding residue left.
                break;
            }
            let dt = dist[sink];
            for v in 0..n {
                pot[v] += if done[v] { dist[v].min(dt) } else { dt };
            }
            // Walk back to the source, collecting the bottleneck.
            let mut delta = -excess[sink];
            let mut v = sink;
            while parent[v] != usize::MAX {
                let e = &self.arcs[parent[v]];
                if !e.forward {
                    delta = delta.min(flow[e.pair]);
                }
                v = self.arcs[e.pair].to;
            }
            let source = v;
            delta = delta.min(excess[source]);
            let mut v = sink;
            while parent[v] != usize::MAX {
                let idx = parent[v];
                let e = self.arcs[idx];
                if e.forward {
                    flow[idx] += delta;
                    total += delta * base(&e);
                } else {
                    flow[e.pair] -= delta;
                    total -= delta * base(&e);
                }
                v = self.arcs[e.pair].to;
            }
            excess[source] -= delta;
            excess[sink] += delta;
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points_on_a_segment() {
        let net = FlowNet::new(2, &[(0, 1, 3.0)], &[0, 1]);
        let supply = [0.5, -0.5, 0.0];
        assert!((net.min_cost(&supply, 10.0, 1.0) - 1.5).abs() < 1e-15);
        // Ground route is cheaper: 2a per unit.
        assert!((net.min_cost(&supply, 0.2, 1.0) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn chain_transport_matches_cumulative_formula() {
        // Points 0..5 on a line, unit gaps, supplies sum to zero.
        let edges: Vec<_> = (0..5).map(|i| (i, i + 1, 1.0)).collect();
        let net = FlowNet::new(6, &edges, &(0..6).collect::<Vec<_>>());
        let s = [0.3, -0.1, 0.2, -0.5, 0.4, -0.3, 0.0];
        let mut acc = 0.0;
        let mut w1 = 0.0;
        for v in &s[..5] {
            acc += v;
            w1 += f64::abs(acc);
        }
        assert!((net.min_cost(&s, 100.0, 1.0) - w1).abs() < 1e-14);
    }
}
