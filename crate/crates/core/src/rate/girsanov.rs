//! The interacting law against the uncoupled one: the functional
//! `J = J1 + J2 + J3 + J4` and the correction `K`, so that the log density
//! of `N` particles on `[0, T]` is `N·J(L_N) − T·K(L_N)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::disorder::DisorderSequence;
use crate::empirical::{empirical_measure, PathMeasure};
use crate::error::{Error, Result};
use crate::model::{InitialLaw, ModelSpec};
use crate::rng;
use crate::simulate::{simulate_uncoupled, PathEnsemble, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GirsanovTerms {
    pub j1: f64,
    pub j2: f64,
    pub j3: f64,
    pub j4: f64,
    pub j: f64,
    pub k: f64,
}

impl GirsanovTerms {
    /// `n·J − T·K`.
    pub fn log_density(&self, n: usize, horizon: f64) -> f64 {
        n as f64 * self.j - horizon * self.k
    }
}

/// Per-time sums: `ΣΣ w w f`, `ΣΣ w w f' g_i`, `ΣΣ w w f''`,
/// `Σ_i w_i (Σ_j w_j f')²`.
type Slice = (f64, f64, f64, f64);

fn slice_pairwise(m: &ModelSpec, x: &[f64], w: &[f64], om: &[f64]) -> Slice {
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..x.len() {
        let gi = (m.g)(x[i], om[i]);
        let mut inner = 0.0;
        for j in 0..x.len() {
            let d = x[i] - x[j];
            let ww = w[i] * w[j];
            s0 += ww * (m.f)(d, om[i], om[j]);
            let d1 = (m.df)(d, om[i], om[j]);
            s1 += ww * d1 * gi;
            s2 += ww * (m.d2f)(d, om[i], om[j]);
            inner += w[j] * d1;
        }
        s3 += w[i] * inner * inner;
    }
    (s0, s1, s2, s3)
}

/// Same sums through `Z = Σ w_j c_j e^{i x_j}` for `f = A c c cos`.
fn slice_reduced(m: &ModelSpec, x: &[f64], w: &[f64], om: &[f64], c: &[f64], amp: f64) -> Slice {
    let (mut re, mut im) = (0.0, 0.0);
    for i in 0..x.len() {
        re += w[i] * c[i] * x[i].cos();
        im += w[i] * c[i] * x[i].sin();
    }
    let z2 = re * re + im * im;
    let (mut s1, mut s3) = (0.0, 0.0);
    for i in 0..x.len() {
        // Σ_j w_j f'(x_i − x_j) = −A c_i (sin x_i Re Z − cos x_i Im Z)
        let inner = -amp * c[i] * (x[i].sin() * re - x[i].cos() * im);
        s1 += w[i] * inner * (m.g)(x[i], om[i]);
        s3 += w[i] * inner * inner;
    }
    (amp * z2, s1, -amp * z2, s3)
}

fn trapezoid(v: &[f64], dt: f64) -> f64 {
    match v.len() {
        0 | 1 => 0.0,
        n => dt * (0.5 * (v[0] + v[n - 1]) + v[1..n - 1].iter().sum::<f64>()),
    }
}

fn assemble(m: &ModelSpec, lambda: &PathMeasure, slices: Vec<Slice>) -> GirsanovTerms {
    let dt = lambda.dt;
    let last = slices.len() - 1;
    let j1 = 0.5 * (slices[0].0 - slices[last].0);
    let j2 = trapezoid(&slices.iter().map(|s| s.1).collect::<Vec<_>>(), dt);
    let j3 = 0.5 * trapezoid(&slices.iter().map(|s| s.2).collect::<Vec<_>>(), dt);
    let j4 = -0.5 * trapezoid(&slices.iter().map(|s| s.3).collect::<Vec<_>>(), dt);
    let k = 0.5 * (0..lambda.len()).map(|i| lambda.weights[i] * m.self_curvature(lambda.omega(i))).sum::<f64>();
    GirsanovTerms { j1, j2, j3, j4, j: j1 + j2 + j3 + j4, k }
}

fn columns(lambda: &PathMeasure) -> Result<(Vec<f64>, Vec<f64>)> {
    let om = lambda.disorder.clone().ok_or_else(|| Error::Incompatible("Girsanov terms need disorder atoms".into()))?;
    Ok((om, lambda.weights.clone()))
}

fn column(lambda: &PathMeasure, k: usize) -> Vec<f64> {
    (0..lambda.len()).map(|i| lambda.path(i)[k]).collect()
}

/// `J1..J4`, `J` and `K` by direct double sums over atoms; time integrals
/// by the trapezoid rule on the path grid.
pub fn girsanov_terms_pairwise(lambda: &PathMeasure, m: &ModelSpec) -> Result<GirsanovTerms> {
    let (om, w) = columns(lambda)?;
    let slices = (0..=lambda.steps).map(|k| slice_pairwise(m, &column(lambda, k), &w, &om)).collect();
    Ok(assemble(m, lambda, slices))
}

/// As [`girsanov_terms_pairwise`], through the trigonometric reduction
/// when the model has one.
pub fn girsanov_terms(lambda: &PathMeasure, m: &ModelSpec) -> Result<GirsanovTerms> {
    let Some(fast) = &m.fast else {
        return girsanov_terms_pairwise(lambda, m);
    };
    let (om, w) = columns(lambda)?;
    let c: Vec<f64> = om.iter().map(|&u| (fast.weight)(u)).collect();
    let slices =
        (0..=lambda.steps).map(|k| slice_reduced(m, &column(lambda, k), &w, &om, &c, fast.amplitude)).collect();
    Ok(assemble(m, lambda, slices))
}

/// Exact log-likelihood ratio of the Euler chain with interaction against
/// the one without, evaluated on an ensemble simulated without it.
pub fn discrete_log_likelihood(e: &PathEnsemble, m: &ModelSpec) -> f64 {
    let n = e.n();
    let nf = n as f64;
    let om = &e.disorder.omegas;
    let dt = e.dt;
    let mut total = 0.0;
    let mut x = e.column(0);
    for k in 0..e.steps {
        let next = e.column(k + 1);
        for i in 0..n {
            let s: f64 = (0..n).map(|j| (m.df)(x[i] - x[j], om[i], om[j])).sum();
            let d = -s / nf;
            let db = next[i] - x[i] - (m.g)(x[i], om[i]) * dt;
            total += d * db - 0.5 * d * d * dt;
        }
        x = next;
    }
    total
}

#[derive(Debug, Clone, Serialize)]
pub struct McNormalization {
    pub reps: usize,
    /// Mean and standard error of `exp(N J − T K)`.
    pub estimate: f64,
    pub stderr: f64,
    /// Same for the exact discrete likelihood ratio.
    pub discrete_estimate: f64,
    pub discrete_stderr: f64,
    pub max_exponent: f64,
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Monte-Carlo mean of the Girsanov density over `reps` uncoupled
/// ensembles. Replica `r` uses seed `derive_seed(seed, "replica", r)`.
pub fn mc_normalization(
    m: &ModelSpec,
    seq: &DisorderSequence,
    init: &InitialLaw,
    cfg: &SimConfig,
    reps: usize,
) -> Result<McNormalization> {
    if reps < 100 {
        return Err(Error::InvalidArgument(format!("need at least 100 replicas, got {reps}")));
    }
    let base = m.without_interaction();
    let draws: Vec<Result<(f64, f64)>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let c = SimConfig { seed: rng::derive_seed(cfg.seed, "replica", r as u64), ..cfg.clone() };
            let e = simulate_uncoupled(&base, seq, init, &c)?;
            let lam = empirical_measure(&e);
            let terms = girsanov_terms(&lam, m)?;
            Ok((terms.log_density(e.n(), e.horizon()), discrete_log_likelihood(&e, m)))
        })
        .collect();
    let mut cont = Vec::with_capacity(reps);
    let mut disc = Vec::with_capacity(reps);
    let mut max_exp = f64::NEG_INFINITY;
    for d in draws {
        let (a, b) = d?;
        for v in [a, b] {
            if !(v < 700.0) {
                return Err(Error::ExponentOverflow(v));
            }
        }
        max_exp = max_exp.max(a).max(b);
        cont.push(a.exp());
        disc.push(b.exp());
    }
    let (estimate, stderr) = mean_se(&cont);
    let (discrete_estimate, discrete_stderr) = mean_se(&disc);
    Ok(McNormalization { reps, estimate, stderr, discrete_estimate, discrete_stderr, max_exponent: max_exp })
}

#[derive(Debug, Clone, Serialize)]
pub struct PathwiseReport {
    pub samples: usize,
    /// Mean of the per-path log density `ln dP^{λ,ω}/dW^ω`.
    pub mean: f64,
    pub stderr: f64,
    /// `J(λ)` on the same sample.
    pub j: f64,
    /// Diagonal correction `T·K/n` of the empirical sample.
    pub diagonal: f64,
    pub difference: f64,
    pub slack: f64,
    pub passed: bool,
}

/// Samples `n` paths of `dx = b dt + dB` for one atom, then compares the
/// mean Girsanov log density of `P^{λ,ω}` against `W^ω` (left-point
/// stochastic integrals, `β` from the sample) with `J` of the same sample.
pub fn pathwise_logdensity_check(
    df: &super::DriftFlow,
    m: &ModelSpec,
    atom: usize,
    init: &InitialLaw,
    cfg: &SimConfig,
) -> Result<PathwiseReport> {
    let &(u, _) = df.flow.atoms.get(atom).ok_or_else(|| Error::InvalidArgument(format!("no atom {atom}")))?;
    let e = df.sample_paths(m, atom, init, cfg)?;
    let n = e.n();
    let nf = n as f64;
    let dt = e.dt;
    let mut ell = vec![0.0; n];
    let mut x = e.column(0);
    for k in 0..e.steps {
        let next = e.column(k + 1);
        for i in 0..n {
            let beta = -(0..n).map(|j| (m.df)(x[i] - x[j], u, u)).sum::<f64>() / nf;
            let db = next[i] - x[i] - (m.g)(x[i], u) * dt;
            ell[i] += beta * db - 0.5 * beta * beta * dt;
        }
        x = next;
    }
    let (mean, stderr) = mean_se(&ell);
    let terms = girsanov_terms(&empirical_measure(&e), m)?;
    let diagonal = e.horizon() * terms.k / nf;
    let difference = mean - (terms.j - diagonal);
    let slack = 3.0 * stderr + 10.0 * dt;
    Ok(PathwiseReport {
        samples: n,
        mean,
        stderr,
        j: terms.j,
        diagonal,
        difference,
        slack,
        passed: difference.abs() <= slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, Builtin, Geometry};
    use crate::simulate::simulate_interacting;

    fn kuramoto(k: f64) -> ModelSpec {
        builtin_model(Builtin::Kuramoto { k }).unwrap()
    }

    fn sample(m: &ModelSpec, n: usize, seed: u64) -> PathEnsemble {
        let seq = DisorderSequence::from_values((0..n).map(|i| 0.3 * i as f64 - 0.5).collect());
        simulate_interacting(m, &seq, &InitialLaw::uniform_circle(), &SimConfig::new(n, 0.2, 1e-2, seed)).unwrap()
    }

    #[test]
    fn kuramoto_correction_is_half_k() {
        for k in [0.5, 1.0, 3.0] {
            let m = kuramoto(k);
            let t = girsanov_terms(&empirical_measure(&sample(&m, 6, 1)), &m).unwrap();
            assert!((t.k - k / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn reduced_matches_pairwise() {
        let m = builtin_model(Builtin::Daido { b: std::sync::Arc::new(|w: f64| w.tanh()) }).unwrap();
        let lam = empirical_measure(&sample(&m, 7, 4));
        let a = girsanov_terms(&lam, &m).unwrap();
        let b = girsanov_terms_pairwise(&lam, &m).unwrap();
        for (x, y) in [(a.j1, b.j1), (a.j2, b.j2), (a.j3, b.j3), (a.j4, b.j4), (a.k, b.k)] {
            assert!((x - y).abs() < 1e-12, "{x} {y}");
        }
    }

    #[test]
    fn constant_single_path_has_no_boundary_term() {
        let m = kuramoto(1.0);
        let lam = PathMeasure {
            steps: 4,
            dt: 0.1,
            paths: vec![0.7; 5],
            disorder: Some(vec![0.0]),
            weights: vec![1.0],
            geometry: Geometry::Circle,
        };
        assert_eq!(girsanov_terms(&lam, &m).unwrap().j1, 0.0);
    }

    #[test]
    fn null_interaction_gives_zero_terms() {
        let m = ModelSpec::free_rotation(Geometry::Circle);
        let t = girsanov_terms(&empirical_measure(&sample(&m, 5, 2)), &m).unwrap();
        assert_eq!((t.j1, t.j2, t.j3, t.j4, t.k), (0.0, 0.0, 0.0, 0.0, 0.0));
        let seq = DisorderSequence::constant(0.2, 3);
        let r =
            mc_normalization(&m, &seq, &InitialLaw::uniform_circle(), &SimConfig::new(3, 0.1, 1e-2, 0), 100).unwrap();
        assert_eq!((r.estimate, r.stderr), (1.0, 0.0));
    }
}
