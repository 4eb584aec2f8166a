//! Euler–Maruyama simulation of the interacting, uncoupled, truncated and
//! nonlinear systems, with pathwise checks of the Gronwall-type bounds.
//!
//! Particle `i` draws its Brownian increments from its own stream, and its
//! initial condition is `F_{ω_i}^{-1}(U_i)`. Runs sharing a seed therefore
//! share noise and uniforms, whatever the thread count.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::disorder::{self, DisorderSequence};
use crate::error::{Error, Result};
use crate::mkv::FlowGrid;
use crate::model::{Geometry, InitialLaw, ModelSpec};
use crate::rng;

/// Below this particle count the step loop stays on one thread.
const PAR_MIN: usize = 128;

pub const QMF_MAGIC: &[u8; 4] = b"QMF1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InteractionMode {
    /// Reduced when the model has a trigonometric reduction.
    #[default]
    Auto,
    Pairwise,
    Reduced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
    /// 1 for the SDE, 0 for the deterministic limit.
    pub noise_scale: f64,
    pub interaction: InteractionMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { n: 100, t_end: 1.0, dt: 1e-3, seed: 0, noise_scale: 1.0, interaction: InteractionMode::Auto }
    }
}

impl SimConfig {
    pub fn new(n: usize, t_end: f64, dt: f64, seed: u64) -> Self {
        SimConfig { n, t_end, dt, seed, ..Default::default() }
    }

    pub fn deterministic(mut self) -> Self {
        self.noise_scale = 0.0;
        self
    }

    pub fn with_mode(mut self, mode: InteractionMode) -> Self {
        self.interaction = mode;
        self
    }

    /// Number of steps `T/dt`, which must be an integer within 1e-9.
    pub fn steps(&self) -> Result<usize> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("N must be >= 1".into()));
        }
        if !(self.dt > 0.0) || !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "need dt > 0 and T >= 0, got dt = {}, T = {}",
                self.dt, self.t_end
            )));
        }
        let ratio = self.t_end / self.dt;
        let s = ratio.round();
        if (ratio - s).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("T/dt = {ratio} is not an integer")));
        }
        Ok(s as usize)
    }
}

/// `N` trajectories on the grid `0, dt, …, S·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    /// Row-major `N × (S + 1)`.
    pub states: Vec<f64>,
    pub steps: usize,
    pub dt: f64,
    pub seed: u64,
    pub disorder: DisorderSequence,
    pub model: String,
    pub geometry: Geometry,
}

impl PathEnsemble {
    pub fn n(&self) -> usize {
        self.disorder.len()
    }

    pub fn path(&self, i: usize) -> &[f64] {
        let w = self.steps + 1;
        &self.states[i * w..(i + 1) * w]
    }

    pub fn at(&self, i: usize, k: usize) -> f64 {
        self.states[i * (self.steps + 1) + k]
    }

    /// All particles at step `k`.
    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.n()).map(|i| self.at(i, k)).collect()
    }

    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    /// Long CSV: `particle,step,t,x,omega`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "particle,step,t,x,omega")?;
        for i in 0..self.n() {
            let omega = self.disorder.omegas[i];
            for (k, x) in self.path(i).iter().enumerate() {
                writeln!(w, "{i},{k},{:e},{x:e},{omega:e}", k as f64 * self.dt)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// `QMF1`, then little-endian `N: u64`, `S: u64`, `dt: f64` and the
    /// row-major states as `f64`.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(QMF_MAGIC)?;
        w.write_all(&(self.n() as u64).to_le_bytes())?;
        w.write_all(&(self.steps as u64).to_le_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        for x in &self.states {
            w.write_all(&x.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Contents of a `QMF1` file.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryEnsemble {
    pub n: usize,
    pub steps: usize,
    pub dt: f64,
    pub states: Vec<f64>,
}

pub fn read_binary(path: &Path) -> Result<BinaryEnsemble> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != QMF_MAGIC {
        return Err(Error::InvalidArgument("not a QMF1 file".into()));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let n = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let steps = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let dt = f64::from_le_bytes(b8);
    let mut states = Vec::with_capacity(n * (steps + 1));
    for _ in 0..n * (steps + 1) {
        r.read_exact(&mut b8)?;
        states.push(f64::from_le_bytes(b8));
    }
    Ok(BinaryEnsemble { n, steps, dt, states })
}

/// Core Euler–Maruyama loop. `prepare` sees the state before each step and
/// returns a context shared by all particles; `drift` evaluates particle
/// `i` from it.
pub(crate) fn euler_maruyama<P, Prep, D>(
    x0: Vec<f64>,
    steps: usize,
    dt: f64,
    noise_scale: f64,
    seed: u64,
    mut prepare: Prep,
    drift: D,
) -> Result<Vec<f64>>
where
    P: Sync,
    Prep: FnMut(usize, &[f64]) -> Result<P>,
    D: Fn(&P, usize, &[f64]) -> f64 + Sync,
{
    let n = x0.len();
    let width = steps + 1;
    if let Some(i) = x0.iter().position(|x| !x.is_finite()) {
        return Err(Error::Overflow { step: 0, particle: i });
    }
    let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|i| rng::noise_stream(seed, i)).collect();
    let mut states = vec![0.0; n * width];
    for (i, x) in x0.iter().enumerate() {
        states[i * width] = *x;
    }
    let mut cur = x0;
    let mut next = vec![0.0; n];
    let amp = noise_scale * dt.sqrt();
    for k in 0..steps {
        let ctx = prepare(k, &cur)?;
        let update = |(i, (nx, r)): (usize, (&mut f64, &mut ChaCha8Rng))| {
            let xi = rng::standard_normal(r);
            *nx = cur[i] + drift(&ctx, i, &cur) * dt + amp * xi;
        };
        if n >= PAR_MIN {
            next.par_iter_mut().zip(rngs.par_iter_mut()).enumerate().for_each(update);
        } else {
            next.iter_mut().zip(rngs.iter_mut()).enumerate().for_each(update);
        }
        if let Some(i) = next.iter().position(|x| !x.is_finite()) {
            return Err(Error::Overflow { step: k + 1, particle: i });
        }
        for (i, x) in next.iter().enumerate() {
            states[i * width + k + 1] = *x;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(states)
}

pub(crate) fn initial_states(init: &InitialLaw, seq: &DisorderSequence, seed: u64) -> Vec<f64> {
    seq.omegas.iter().enumerate().map(|(i, &w)| init.quantile(rng::init_uniform(seed, i), w)).collect()
}

pub(crate) fn prelude(seq: &DisorderSequence, init: &InitialLaw, cfg: &SimConfig) -> Result<usize> {
    let steps = cfg.steps()?;
    if seq.len() != cfg.n {
        return Err(Error::Incompatible(format!("disorder has {} entries but N = {}", seq.len(), cfg.n)));
    }
    init.validate_params()?;
    Ok(steps)
}

pub(crate) fn ensemble(
    m: &ModelSpec,
    seq: &DisorderSequence,
    cfg: &SimConfig,
    steps: usize,
    states: Vec<f64>,
) -> PathEnsemble {
    PathEnsemble {
        states,
        steps,
        dt: cfg.dt,
        seed: cfg.seed,
        disorder: seq.clone(),
        model: m.name.clone(),
        geometry: m.geometry,
    }
}

/// Interacting system with drift `g(x_i, ω_i) − (1/N) Σ_j ∂f(x_i − x_j, ω_i, ω_j)`.
pub fn simulate_interacting(
    m: &ModelSpec,
    seq: &DisorderSequence,
    init: &InitialLaw,
    cfg: &SimConfig,
) -> Result<PathEnsemble> {
    let steps = prelude(seq, init, cfg)?;
    let x0 = initial_states(init, seq, cfg.seed);
    let omegas = &seq.omegas;
    let n = cfg.n as f64;
    let g = &m.g;
    let reduced = match (cfg.interaction, &m.fast) {
        (InteractionMode::Pairwise, _) => None,
        (_, Some(fast)) => Some(fast),
        (InteractionMode::Reduced, None) => {
            return Err(Error::Incompatible(format!("model {} has no trigonometric reduction", m.name)))
        }
        (InteractionMode::Auto, None) => None,
    };
    let states = match reduced {
        Some(fast) => {
            let c: Vec<f64> = omegas.iter().map(|&w| (fast.weight)(w)).collect();
            let amp = fast.amplitude;
            euler_maruyama(
                x0,
                steps,
                cfg.dt,
                cfg.noise_scale,
                cfg.seed,
                |_, x| {
                    let (mut re, mut im) = (0.0, 0.0);
                    for (xj, cj) in x.iter().zip(&c) {
                        re += cj * xj.cos();
                        im += cj * xj.sin();
                    }
                    Ok((re / n, im / n))
                },
                |&(re, im), i, x| {
                    let xi = x[i];
                    g(xi, omegas[i]) + amp * c[i] * (xi.sin() * re - xi.cos() * im)
                },
            )?
        }
        None => {
            let df = &m.df;
            euler_maruyama(
                x0,
                steps,
                cfg.dt,
                cfg.noise_scale,
                cfg.seed,
                |_, _| Ok(()),
                |_, i, x| {
                    let (xi, wi) = (x[i], omegas[i]);
                    let s: f64 = x.iter().zip(omegas).map(|(xj, wj)| df(xi - xj, wi, *wj)).sum();
                    g(xi, wi) - s / n
                },
            )?
        }
    };
    Ok(ensemble(m, seq, cfg, steps, states))
}

/// Independent diffusions `dx_i = g(x_i, ω_i) dt + dB_i`.
pub fn simulate_uncoupled(
    m: &ModelSpec,
    seq: &DisorderSequence,
    init: &InitialLaw,
    cfg: &SimConfig,
) -> Result<PathEnsemble> {
    let steps = prelude(seq, init, cfg)?;
    let x0 = initial_states(init, seq, cfg.seed);
    let omegas = &seq.omegas;
    let g = &m.g;
    let states =
        euler_maruyama(x0, steps, cfg.dt, cfg.noise_scale, cfg.seed, |_, _| Ok(()), |_, i, x| g(x[i], omegas[i]))?;
    Ok(ensemble(m, seq, cfg, steps, states))
}

/// Same noise and uniforms under `ω` and under `χ_M(ω)`.
pub fn simulate_coupled_truncated(
    m: &ModelSpec,
    seq: &DisorderSequence,
    big_m: f64,
    init: &InitialLaw,
    cfg: &SimConfig,
) -> Result<(PathEnsemble, PathEnsemble)> {
    if !(big_m > 0.0) {
        return Err(Error::InvalidArgument(format!("truncation level must be positive, got {big_m}")));
    }
    let raw = simulate_interacting(m, seq, init, cfg)?;
    let cut = simulate_interacting(m, &disorder::truncate(seq, big_m), init, cfg)?;
    Ok((raw, cut))
}

#[derive(Debug, Clone, Serialize)]
pub struct XinfReport {
    pub passed: bool,
    /// Largest `LHS − RHS` over grid times, floored at 0.
    pub max_slack_used: f64,
    pub slack: f64,
    /// First grid time where the slack was exceeded.
    pub witness_time: Option<f64>,
    pub dt: f64,
    /// Set when the verdict comes from the `dt/10` re-run.
    pub escalated: bool,
    pub final_lhs: f64,
    pub final_rhs: f64,
}

/// Checks at every grid time that the mean running sup-distance of the
/// coupled pair stays under the Gronwall envelope with `C₁ = 2C_f + C_g`,
/// up to a slack of `10·dt`.
pub fn check_xinf_bound(pair: (&PathEnsemble, &PathEnsemble), m: &ModelSpec, big_m: f64) -> Result<XinfReport> {
    let (a, b) = pair;
    if a.n() != b.n() || a.steps != b.steps || a.dt != b.dt {
        return Err(Error::Incompatible("coupled ensembles differ in shape".into()));
    }
    let n = a.n();
    let nf = n as f64;
    let c1 = 2.0 * m.c_f + m.c_g;
    let k2 = m.k2 as i32;
    let mut disorder_term = 0.0;
    let mut init_term = 0.0;
    for i in 0..n {
        let w = a.disorder.omegas[i];
        let wm = disorder::clamp(w, big_m);
        disorder_term += (w - wm).abs() * (1.0 + w.abs().powi(k2) + wm.abs().powi(k2));
        init_term += (a.at(i, 0) - b.at(i, 0)).abs();
    }
    disorder_term /= nf;
    init_term /= nf;
    let slack = 10.0 * a.dt;
    let mut sup = vec![0.0f64; n];
    let mut worst: f64 = 0.0;
    let mut witness = None;
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for k in 0..=a.steps {
        let t = k as f64 * a.dt;
        for (i, s) in sup.iter_mut().enumerate() {
            *s = s.max((a.at(i, k) - b.at(i, k)).abs());
        }
        lhs = sup.iter().sum::<f64>() / nf;
        rhs = (c1 * t).exp() * (c1 * t * disorder_term + init_term);
        let excess = lhs - rhs;
        worst = worst.max(excess);
        if excess > slack && witness.is_none() {
            witness = Some(t);
        }
    }
    Ok(XinfReport {
        passed: witness.is_none(),
        max_slack_used: worst,
        slack,
        witness_time: witness,
        dt: a.dt,
        escalated: false,
        final_lhs: lhs,
        final_rhs: rhs,
    })
}

/// Coupled run plus bound check; a failing run is repeated once at `dt/10`
/// and that verdict is final.
pub fn xinf_with_escalation(
    m: &ModelSpec,
    seq: &DisorderSequence,
    big_m: f64,
    init: &InitialLaw,
    cfg: &SimConfig,
) -> Result<XinfReport> {
    let (a, b) = simulate_coupled_truncated(m, seq, big_m, init, cfg)?;
    let report = check_xinf_bound((&a, &b), m, big_m)?;
    if report.passed {
        return Ok(report);
    }
    let fine = SimConfig { dt: cfg.dt / 10.0, ..cfg.clone() };
    let (a, b) = simulate_coupled_truncated(m, seq, big_m, init, &fine)?;
    let mut again = check_xinf_bound((&a, &b), m, big_m)?;
    again.escalated = true;
    Ok(again)
}

#[derive(Debug, Clone, Serialize)]
pub struct FellerReport {
    pub estimate: f64,
    pub stderr: f64,
    pub rhs: f64,
    pub passed: bool,
}

/// Two uncoupled diffusions with disorders `u`, `v`, started at `x0`,
/// `y0` and driven by the same noise: Monte-Carlo estimate of
/// `E sup_t |x − y|²` against `(|x0 − y0|² + T b) e^{aT}`.
pub fn check_feller_bound(
    m: &ModelSpec,
    u: f64,
    v: f64,
    x0: f64,
    y0: f64,
    cfg: &SimConfig,
    reps: usize,
) -> Result<FellerReport> {
    let steps = cfg.steps()?;
    if reps < 2 {
        return Err(Error::InvalidArgument("need at least 2 replicas".into()));
    }
    let g = &m.g;
    let amp = cfg.noise_scale * cfg.dt.sqrt();
    let key = rng::derive_seed(cfg.seed, "feller", 0);
    let samples: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut s = rng::stream(key, r as u64);
            let (mut x, mut y) = (x0, y0);
            let mut sup = (x - y).powi(2);
            for _ in 0..steps {
                let db = amp * rng::standard_normal(&mut s);
                let nx = x + g(x, u) * cfg.dt + db;
                let ny = y + g(y, v) * cfg.dt + db;
                x = nx;
                y = ny;
                sup = sup.max((x - y).powi(2));
            }
            sup
        })
        .collect();
    let nr = reps as f64;
    let mean = samples.iter().sum::<f64>() / nr;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (nr - 1.0);
    let se = (var / nr).sqrt();
    let t = steps as f64 * cfg.dt;
    let cg2 = m.c_g * m.c_g;
    let k2 = m.k2 as i32;
    let a = 2.0 * cg2 + 1.0;
    let b = 2.0 * cg2 * (u - v).powi(2) * (1.0 + u.abs().powi(k2) + v.abs().powi(k2)).powi(2);
    let rhs = ((x0 - y0).powi(2) + t * b) * (a * t).exp();
    Ok(FellerReport { estimate: mean, stderr: se, rhs, passed: mean - 3.0 * se <= rhs })
}

/// Samples of the nonlinear process `dx = [β^{λ_t, ω}(x) + g(x, ω)] dt + dB`
/// with `β` interpolated from a frozen flow.
pub fn simulate_nonlinear(
    m: &ModelSpec,
    flow: &FlowGrid,
    omega: f64,
    init: &InitialLaw,
    cfg: &SimConfig,
) -> Result<PathEnsemble> {
    let seq = DisorderSequence::constant(omega, cfg.n);
    let steps = prelude(&seq, init, cfg)?;
    if steps as f64 * cfg.dt > flow.horizon() * (1.0 + 1e-12) + 1e-12 {
        return Err(Error::Incompatible(format!(
            "flow covers [0, {}] but the run needs [0, {}]",
            flow.horizon(),
            steps as f64 * cfg.dt
        )));
    }
    let x0 = initial_states(init, &seq, cfg.seed);
    let profiles: Vec<Vec<f64>> = (0..flow.n_times()).map(|ti| flow.beta_profile(m, ti, omega)).collect();
    let grid = flow.grid;
    let g = &m.g;
    let states = euler_maruyama(
        x0,
        steps,
        cfg.dt,
        cfg.noise_scale,
        cfg.seed,
        |k, x| {
            if x.iter().any(|xi| grid.cell_of(*xi).is_none()) {
                return Err(Error::ExitedGrid { step: k });
            }
            Ok(time_blend(&flow.times, &profiles, k as f64 * cfg.dt))
        },
        |profile, i, x| grid.interpolate(profile, x[i]).unwrap_or(0.0) + g(x[i], omega),
    )?;
    if (0..cfg.n).any(|i| grid.cell_of(states[i * (steps + 1) + steps]).is_none()) {
        return Err(Error::ExitedGrid { step: steps });
    }
    Ok(ensemble(m, &seq, cfg, steps, states))
}

/// Linear interpolation in time between saved profiles.
pub(crate) fn time_blend(times: &[f64], profiles: &[Vec<f64>], t: f64) -> Vec<f64> {
    let j = times.partition_point(|s| *s <= t);
    if j == 0 {
        return profiles[0].clone();
    }
    if j >= times.len() {
        return profiles[times.len() - 1].clone();
    }
    let (t0, t1) = (times[j - 1], times[j]);
    let w = (t - t0) / (t1 - t0);
    profiles[j - 1].iter().zip(&profiles[j]).map(|(a, b)| a + w * (b - a)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, Builtin};
    use std::sync::Arc;

    fn kuramoto(k: f64) -> ModelSpec {
        builtin_model(Builtin::Kuramoto { k }).unwrap()
    }

    #[test]
    fn single_particle_pure_drift() {
        let cfg = SimConfig::new(1, 2.0, 1e-3, 3).deterministic();
        let seq = DisorderSequence::constant(0.5, 1);
        let init = InitialLaw::Dirac { offset: 0.0, slope: 0.0 };
        let e = simulate_interacting(&kuramoto(1.0), &seq, &init, &cfg).unwrap();
        assert!((e.at(0, e.steps) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_particles_match_rk4_reference() {
        let delta = 0.1;
        let cfg = SimConfig::new(2, 1.0, 1e-4, 0).deterministic();
        // Disorder ±1 only places the particles at ±δ; the drift ignores it.
        let seq = DisorderSequence::from_values(vec![1.0, -1.0]);
        let init = InitialLaw::Dirac { offset: 0.0, slope: delta };
        let m = kuramoto(1.0).with_drift(Arc::new(|_, _| 0.0), 1.0, 0, 0);
        let e = simulate_interacting(&m, &seq, &init, &cfg).unwrap();
        // The half gap y obeys y' = −½ sin(2y).
        let rhs = |y: f64| -0.5 * (2.0 * y).sin();
        let mut y = e.at(0, 0).abs();
        let h = 1e-3;
        for _ in 0..1000 {
            let k1 = rhs(y);
            let k2 = rhs(y + 0.5 * h * k1);
            let k3 = rhs(y + 0.5 * h * k2);
            let k4 = rhs(y + h * k3);
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        let x1 = e.path(0);
        assert!(x1.windows(2).all(|w| w[1].abs() < w[0].abs()));
        assert!((x1[e.steps].abs() - y).abs() < 10.0 * cfg.dt);
    }

    #[test]
    fn modes_agree_per_step() {
        let m = kuramoto(1.3);
        let seq = DisorderSequence::from_values((0..200).map(|i| (i as f64 * 0.37).sin()).collect());
        let init = InitialLaw::uniform_circle();
        let base = SimConfig::new(200, 0.05, 1e-3, 11);
        let a = simulate_interacting(&m, &seq, &init, &base.clone().with_mode(InteractionMode::Pairwise)).unwrap();
        let b = simulate_interacting(&m, &seq, &init, &base.with_mode(InteractionMode::Reduced)).unwrap();
        let worst = a.states.iter().zip(&b.states).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-10 * a.steps as f64, "{worst}");
    }

    #[test]
    fn uncoupled_equals_interacting_without_kernel() {
        let m = ModelSpec::free_rotation(Geometry::Line);
        let seq = DisorderSequence::from_values(vec![0.1, -0.4, 2.0]);
        let init = InitialLaw::Gaussian { offset: 0.0, slope: 0.0, std: 1.0 };
        let cfg = SimConfig::new(3, 0.5, 1e-2, 5);
        let a = simulate_interacting(&m, &seq, &init, &cfg).unwrap();
        let b = simulate_uncoupled(&m, &seq, &init, &cfg).unwrap();
        assert_eq!(a.states, b.states);
        let c = simulate_interacting(&m, &seq, &init, &cfg.clone().with_mode(InteractionMode::Pairwise)).unwrap();
        assert_eq!(a.states, c.states);
    }

    #[test]
    fn straight_lines_without_noise() {
        let m = ModelSpec::free_rotation(Geometry::Line);
        let seq = DisorderSequence::from_values(vec![0.25, -1.5]);
        let init = InitialLaw::Gaussian { offset: 1.0, slope: 0.0, std: 0.3 };
        let cfg = SimConfig::new(2, 1.0, 0.125, 9).deterministic();
        let e = simulate_uncoupled(&m, &seq, &init, &cfg).unwrap();
        for i in 0..2 {
            for k in 0..=e.steps {
                let t = k as f64 * cfg.dt;
                assert!((e.at(i, k) - (e.at(i, 0) + seq.omegas[i] * t)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn coupling_collapses_when_truncation_inactive() {
        let m = kuramoto(1.0);
        let seq = DisorderSequence::from_values(vec![0.3, -0.8, 1.1]);
        let init = InitialLaw::Gaussian { offset: 0.0, slope: 1.0, std: 0.5 };
        let cfg = SimConfig::new(3, 0.2, 1e-3, 2);
        let (a, b) = simulate_coupled_truncated(&m, &seq, 2.0, &init, &cfg).unwrap();
        assert_eq!(a.states, b.states);
        let r = check_xinf_bound((&a, &b), &m, 2.0).unwrap();
        assert!(r.passed && r.final_lhs == 0.0 && r.final_rhs == 0.0);
    }

    #[test]
    fn binary_truncation_clamps_and_rederives_initial_state() {
        let m = kuramoto(1.0);
        let seq = DisorderSequence::from_values(vec![-1.0, 1.0, 1.0]);
        let init = InitialLaw::Gaussian { offset: 0.0, slope: 1.0, std: 0.5 };
        let cfg = SimConfig::new(3, 0.1, 1e-2, 4);
        let (a, b) = simulate_coupled_truncated(&m, &seq, 0.5, &init, &cfg).unwrap();
        assert_eq!(b.disorder.omegas, vec![-0.5, 0.5, 0.5]);
        for i in 0..3 {
            let u = rng::init_uniform(cfg.seed, i);
            assert_eq!(b.at(i, 0), init.quantile(u, b.disorder.omegas[i]));
            assert_eq!(a.at(i, 0), init.quantile(u, seq.omegas[i]));
        }
        let plain = simulate_interacting(&m, &seq, &init, &cfg).unwrap();
        assert_eq!(plain.states, a.states);
    }

    #[test]
    fn single_particle_xinf_is_closed_form() {
        let m = ModelSpec::free_rotation(Geometry::Line);
        let seq = DisorderSequence::from_values(vec![3.0]);
        let init = InitialLaw::Gaussian { offset: 0.0, slope: 0.5, std: 1.0 };
        let cfg = SimConfig::new(1, 1.0, 1e-3, 8);
        let (a, b) = simulate_coupled_truncated(&m, &seq, 1.0, &init, &cfg).unwrap();
        let gap0 = (a.at(0, 0) - b.at(0, 0)).abs();
        for k in [0, 500, 1000] {
            let t = k as f64 * cfg.dt;
            let diff = (a.at(0, k) - b.at(0, k)).abs();
            assert!((diff - (gap0 + 2.0 * t)).abs() < 1e-9);
        }
        let r = check_xinf_bound((&a, &b), &m, 1.0).unwrap();
        assert!(r.passed && r.final_rhs / r.final_lhs >= 1.0);
    }

    #[test]
    fn feller_deterministic_difference() {
        let m = ModelSpec::free_rotation(Geometry::Line);
        let cfg = SimConfig::new(1, 1.0, 1e-3, 1);
        let r = check_feller_bound(&m, 0.3, 0.2, 0.0, 0.0, &cfg, 50).unwrap();
        assert!((r.estimate - 0.01).abs() < 1e-9);
        assert!(r.passed);
        let z = check_feller_bound(&m, 0.3, 0.3, 0.5, 0.5, &cfg, 10).unwrap();
        assert_eq!((z.estimate, z.rhs), (0.0, 0.0));
        assert!(z.passed);
    }

    #[test]
    fn binary_roundtrip() {
        let m = kuramoto(1.0);
        let seq = DisorderSequence::from_values(vec![0.1, 0.2]);
        let cfg = SimConfig::new(2, 0.01, 1e-3, 0);
        let e = simulate_interacting(&m, &seq, &InitialLaw::uniform_circle(), &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.qmf");
        e.write_binary(&p).unwrap();
        let back = read_binary(&p).unwrap();
        assert_eq!((back.n, back.steps, back.dt), (2, 10, 1e-3));
        assert_eq!(back.states, e.states);
    }

    #[test]
    fn rejects_non_integral_horizon() {
        assert!(SimConfig::new(1, 1.0, 0.3, 0).steps().is_err());
        assert!(SimConfig::new(0, 1.0, 0.1, 0).steps().is_err());
    }
}
