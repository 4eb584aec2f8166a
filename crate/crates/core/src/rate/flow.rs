//! Flows generated by a drift, their kinetic cost and the quenched and
//! averaged rate functionals built from it.

use std::sync::Arc;

use serde::Serialize;

use super::{relative_entropy, relative_entropy_density, RateValue};
use crate::disorder::DisorderSequence;
use crate::error::{Error, Result};
use crate::mkv::{self, initial_densities, Closure, FlowGrid, Grid, MkvConfig, Stepper};
use crate::model::{Fn3, InitialLaw, ModelSpec, TWO_PI};
use crate::simulate::{self, PathEnsemble, SimConfig};

/// How the drift `b(t, x, u)` of a flow is given.
#[derive(Clone)]
pub enum DriftSpec {
    /// Prescribed drift; the flow solves the linear equation.
    Explicit { b: Fn3, bound: f64 },
    /// `b = g + β^q + h` with `q` the flow itself.
    SelfConsistent { h: Fn3, bound: f64 },
}

/// A flow `q` together with the drift that generates it. Every time step
/// is stored.
#[derive(Clone)]
pub struct DriftFlow {
    pub spec: DriftSpec,
    pub flow: FlowGrid,
}

impl DriftFlow {
    /// Solves for the flow of `spec` from cell densities `q0`.
    pub fn solve(
        m: &ModelSpec,
        spec: DriftSpec,
        q0: Vec<f64>,
        atoms: &[(f64, f64)],
        cfg: &MkvConfig,
    ) -> Result<DriftFlow> {
        let cfg = MkvConfig { save_every: Some(1), ..cfg.clone() };
        let flow = match &spec {
            DriftSpec::Explicit { b, bound } => mkv::solve_linear(m, q0, atoms, b, *bound, &cfg)?,
            DriftSpec::SelfConsistent { h, bound } => {
                mkv::check_atoms(atoms)?;
                let grid = Grid::new(cfg.domain, cfg.cells)?;
                if q0.len() != atoms.len() * grid.cells {
                    return Err(Error::Incompatible("initial densities do not match the grid".into()));
                }
                let stepper = Stepper::new(m, &grid, atoms);
                let (dt, steps, save) = mkv::schedule(&cfg, &grid, stepper.nonlinear_bound() + bound)?;
                stepper.run(q0, dt, steps, save, Closure::Nonlinear { extra: Some(h) })?
            }
        };
        Ok(DriftFlow { spec, flow })
    }

    /// Self-consistent flow from `γ` with an added drift `h`.
    pub fn self_consistent(
        m: &ModelSpec,
        h: Fn3,
        bound: f64,
        init: &InitialLaw,
        atoms: &[(f64, f64)],
        cfg: &MkvConfig,
    ) -> Result<DriftFlow> {
        let grid = Grid::new(cfg.domain, cfg.cells)?;
        let q0 = initial_densities(&grid, init, atoms)?;
        DriftFlow::solve(m, DriftSpec::SelfConsistent { h, bound }, q0, atoms, cfg)
    }

    /// Linear flow of `b = g + β^{λ*}` (frozen, interpolated in time and
    /// space) started from `λ*_0`.
    pub fn from_mkv(m: &ModelSpec, lambda_star: &FlowGrid) -> Result<DriftFlow> {
        let grid = lambda_star.grid;
        let atoms = lambda_star.atoms.clone();
        let profiles: Vec<Vec<Vec<f64>>> = (0..atoms.len())
            .map(|k| (0..lambda_star.n_times()).map(|ti| lambda_star.beta_profile(m, ti, atoms[k].0)).collect())
            .collect();
        let times = lambda_star.times.clone();
        let g = m.g.clone();
        let locs: Vec<f64> = atoms.iter().map(|a| a.0).collect();
        let b: Fn3 = Arc::new(move |t, x, u| {
            let k = nearest(&locs, u);
            let p = &profiles[k];
            let j = times.partition_point(|s| *s <= t);
            let beta = if j == 0 || j >= times.len() {
                grid.interpolate(&p[j.min(times.len() - 1)], x)
            } else {
                let w = (t - times[j - 1]) / (times[j] - times[j - 1]);
                match (grid.interpolate(&p[j - 1], x), grid.interpolate(&p[j], x)) {
                    (Some(a), Some(c)) => Some(a + w * (c - a)),
                    _ => None,
                }
            };
            beta.unwrap_or(0.0) + g(x, u)
        });
        let bound = Stepper::new(m, &grid, &atoms).nonlinear_bound();
        let cfg = MkvConfig {
            domain: grid.domain,
            cells: grid.cells,
            t_end: lambda_star.horizon(),
            dt: Some(lambda_star.dt),
            save_every: Some(1),
        };
        let q0 = lambda_star.slice(0).to_vec();
        DriftFlow::solve(m, DriftSpec::Explicit { b, bound }, q0, &atoms, &cfg)
    }

    fn require_every_step(&self) -> Result<()> {
        if self.flow.save_every != 1 {
            return Err(Error::InvalidArgument("drift flows must keep every time step".into()));
        }
        Ok(())
    }

    /// `b(t_i, x_c, u_k)` at cell centres.
    pub fn drift_profile(&self, m: &ModelSpec, ti: usize, k: usize) -> Vec<f64> {
        let t = self.flow.times[ti];
        let u = self.flow.atoms[k].0;
        let xs = self.flow.grid.centers();
        match &self.spec {
            DriftSpec::Explicit { b, .. } => xs.iter().map(|&x| b(t, x, u)).collect(),
            DriftSpec::SelfConsistent { h, .. } => {
                let beta = self.flow.beta_profile(m, ti, u);
                xs.iter().zip(beta).map(|(&x, be)| (m.g)(x, u) + be + h(t, x, u)).collect()
            }
        }
    }

    /// Euler paths of `dx = b(t, x, u_k) dt + dB` started from `γ^{u_k}`.
    pub fn sample_paths(&self, m: &ModelSpec, k: usize, init: &InitialLaw, cfg: &SimConfig) -> Result<PathEnsemble> {
        let u = self.flow.atoms[k].0;
        let seq = DisorderSequence::constant(u, cfg.n);
        let steps = simulate::prelude(&seq, init, cfg)?;
        if steps as f64 * cfg.dt > self.flow.horizon() * (1.0 + 1e-12) + 1e-12 {
            return Err(Error::Incompatible(format!(
                "flow covers [0, {}] but the run needs [0, {}]",
                self.flow.horizon(),
                steps as f64 * cfg.dt
            )));
        }
        let profiles: Vec<Vec<f64>> = (0..self.flow.n_times()).map(|ti| self.drift_profile(m, ti, k)).collect();
        let grid = self.flow.grid;
        let times = &self.flow.times;
        let x0 = simulate::initial_states(init, &seq, cfg.seed);
        let states = simulate::euler_maruyama(
            x0,
            steps,
            cfg.dt,
            cfg.noise_scale,
            cfg.seed,
            |s, x| {
                if x.iter().any(|xi| grid.cell_of(*xi).is_none()) {
                    return Err(Error::ExitedGrid { step: s });
                }
                Ok(simulate::time_blend(times, &profiles, s as f64 * cfg.dt))
            },
            |p, i, x| grid.interpolate(p, x[i]).unwrap_or(0.0),
        )?;
        let mut e = simulate::ensemble(m, &seq, cfg, steps, states);
        e.geometry = if grid.periodic() { crate::model::Geometry::Circle } else { crate::model::Geometry::Line };
        Ok(e)
    }
}

fn nearest(locs: &[f64], u: f64) -> usize {
    locs.iter().enumerate().min_by(|a, b| (a.1 - u).abs().total_cmp(&(b.1 - u).abs())).map(|a| a.0).unwrap_or(0)
}

/// Kinetic cost of atom `k`:
/// `½ Σ_n Δt Σ_c (b − g − β^{q^n})²(t_n, x_c) q^n_c Δx`.
pub fn kinetic_closed(df: &DriftFlow, m: &ModelSpec, k: usize) -> Result<f64> {
    df.require_every_step()?;
    let flow = &df.flow;
    let u = flow.atoms.get(k).ok_or_else(|| Error::InvalidArgument(format!("no atom {k}")))?.0;
    let xs = flow.grid.centers();
    let mut total = 0.0;
    for ti in 0..flow.n_times() - 1 {
        let t = flow.times[ti];
        let dt = flow.times[ti + 1] - t;
        let q = flow.density(ti, k);
        let s: f64 = match &df.spec {
            DriftSpec::SelfConsistent { h, .. } => xs.iter().zip(q).map(|(&x, q)| h(t, x, u).powi(2) * q).sum(),
            DriftSpec::Explicit { b, .. } => {
                let beta = flow.beta_profile(m, ti, u);
                xs.iter().zip(q).zip(beta).map(|((&x, q), be)| (b(t, x, u) - (m.g)(x, u) - be).powi(2) * q).sum()
            }
        };
        total += 0.5 * dt * s * flow.grid.dx;
    }
    Ok(total)
}

/// Size of the bump basis used for the dual estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TestBasis {
    pub space: usize,
    pub time: usize,
}

impl Default for TestBasis {
    fn default() -> Self {
        TestBasis { space: 8, time: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowRate {
    pub closed: f64,
    /// `½ aᵀ G⁺ a` over the bump basis; never above the supremum.
    pub variational: f64,
    pub rank: usize,
}

fn bump(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (-1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

/// `aᵀ G⁺ a` by an LDLᵀ sweep that drops negligible pivots.
fn pseudo_quadratic(g: &[f64], a: &[f64]) -> (f64, usize) {
    let n = a.len();
    let scale = (0..n).map(|i| g[i * n + i]).fold(0.0, f64::max);
    let tol = 1e-12 * scale;
    let mut l = vec![0.0f64; n * n];
    let mut d = vec![0.0; n];
    for j in 0..n {
        let dj = g[j * n + j] - (0..j).map(|k| l[j * n + k].powi(2) * d[k]).sum::<f64>();
        if dj <= tol {
            continue;
        }
        d[j] = dj;
        l[j * n + j] = 1.0;
        for i in j + 1..n {
            l[i * n + j] = (g[i * n + j] - (0..j).map(|k| l[i * n + k] * l[j * n + k] * d[k]).sum::<f64>()) / dj;
        }
    }
    let mut z = vec![0.0; n];
    let mut value = 0.0;
    let mut rank = 0;
    for j in 0..n {
        if d[j] == 0.0 {
            continue;
        }
        z[j] = a[j] - (0..j).map(|k| l[j * n + k] * z[k]).sum::<f64>();
        value += z[j] * z[j] / d[j];
        rank += 1;
    }
    (value, rank)
}

/// Closed-form and dual estimates of the kinetic cost of atom `k`. The
/// dual one tests the flow against smooth bumps with the discrete
/// McKean–Vlasov operator of the solver.
pub fn flow_rate_k(df: &DriftFlow, m: &ModelSpec, k: usize, basis: TestBasis) -> Result<FlowRate> {
    let closed = kinetic_closed(df, m, k)?;
    let flow = &df.flow;
    let grid = flow.grid;
    let n = grid.cells;
    let (ns, nt) = (basis.space, basis.time);
    if ns == 0 || nt == 0 {
        return Err(Error::InvalidArgument("empty test basis".into()));
    }
    let centers = grid.centers();
    let space: Vec<Vec<f64>> = (0..ns)
        .map(|j| {
            centers
                .iter()
                .map(|&x| match grid.domain {
                    mkv::Domain::Circle => {
                        let c = TWO_PI * j as f64 / ns as f64;
                        let d = (x - c + std::f64::consts::PI).rem_euclid(TWO_PI) - std::f64::consts::PI;
                        bump(d / (TWO_PI / ns as f64))
                    }
                    mkv::Domain::Line { half_width: l } => {
                        let h = 2.0 * l / (ns + 1) as f64;
                        bump((x - (-l + (j + 1) as f64 * h)) / h)
                    }
                })
                .collect()
        })
        .collect();
    let faces = grid.faces();
    let grad: Vec<Vec<f64>> = space.iter().map(|p| (0..faces).map(|f| p[(f + 1) % n] - p[f]).collect()).collect();
    let horizon = flow.horizon();
    let ht = horizon / (nt + 1) as f64;
    let time = |l: usize, t: f64| bump((t - (l + 1) as f64 * ht) / ht);

    let stepper = Stepper::new(m, &grid, &flow.atoms);
    let dim = ns * nt;
    let mut a = vec![0.0; dim];
    let mut g = vec![0.0; dim * dim];
    for ti in 0..flow.n_times() - 1 {
        let t = flow.times[ti];
        let dt = flow.times[ti + 1] - t;
        let tf: Vec<f64> = (0..nt).map(|l| time(l, t)).collect();
        if tf.iter().all(|v| *v == 0.0) {
            continue;
        }
        let q = flow.density(ti, k);
        let q1 = flow.density(ti + 1, k);
        let beta = stepper.face_drift(flow.slice(ti), t, Closure::Nonlinear { extra: None });
        debug_assert_eq!(beta[k].len(), faces);
        let flux = stepper.fluxes(q, &beta[k]);
        let qbar: Vec<f64> = (0..faces).map(|f| 0.5 * (q[f] + q[(f + 1) % n])).collect();
        let aj: Vec<f64> = (0..ns)
            .map(|j| {
                let change: f64 = space[j].iter().zip(q.iter().zip(q1)).map(|(p, (a, b))| p * (b - a)).sum();
                let transport: f64 = grad[j].iter().zip(&flux).map(|(d, f)| d * f).sum();
                change * grid.dx - dt * transport
            })
            .collect();
        let mut s = vec![0.0; ns * ns];
        for j in 0..ns {
            for jj in j..ns {
                let v: f64 = (0..faces).map(|f| grad[j][f] * grad[jj][f] * qbar[f]).sum::<f64>() / grid.dx;
                s[j * ns + jj] = v;
                s[jj * ns + j] = v;
            }
        }
        for l in 0..nt {
            if tf[l] == 0.0 {
                continue;
            }
            for j in 0..ns {
                a[l * ns + j] += tf[l] * aj[j];
            }
            for ll in 0..nt {
                let w = dt * tf[l] * tf[ll];
                if w == 0.0 {
                    continue;
                }
                for j in 0..ns {
                    for jj in 0..ns {
                        g[(l * ns + j) * dim + ll * ns + jj] += w * s[j * ns + jj];
                    }
                }
            }
        }
    }
    let (value, rank) = pseudo_quadratic(&g, &a);
    Ok(FlowRate { closed, variational: 0.5 * value, rank })
}

#[derive(Debug, Clone, Serialize)]
pub struct QuenchedRate {
    /// `Σ_k μ_k [H(q_0^{u_k} | γ^{u_k}) + K_k]`.
    pub process: RateValue,
    /// `H(q_0 | γ) + Σ_k μ_k K_k` with the entropy taken jointly in `(x, u)`.
    pub flow: RateValue,
    pub entropy: Vec<RateValue>,
    pub kinetic: Vec<f64>,
}

fn per_atom(df: &DriftFlow, m: &ModelSpec, init: &InitialLaw) -> Result<(Vec<f64>, Vec<RateValue>, Vec<f64>)> {
    let flow = &df.flow;
    let gamma = initial_densities(&flow.grid, init, &flow.atoms)?;
    let n = flow.grid.cells;
    let mut entropy = Vec::with_capacity(flow.atoms.len());
    let mut kinetic = Vec::with_capacity(flow.atoms.len());
    for k in 0..flow.atoms.len() {
        entropy.push(relative_entropy_density(flow.density(0, k), &gamma[k * n..(k + 1) * n], flow.grid.dx)?);
        kinetic.push(kinetic_closed(df, m, k)?);
    }
    Ok((gamma, entropy, kinetic))
}

fn check_support(df: &DriftFlow, mu: &[(f64, f64)]) -> Result<()> {
    let atoms = &df.flow.atoms;
    if atoms.len() != mu.len() || atoms.iter().zip(mu).any(|(a, b)| (a.0 - b.0).abs() > 1e-12) {
        return Err(Error::Incompatible("flow atoms differ from the disorder atoms".into()));
    }
    Ok(())
}

fn weighted(weights: &[f64], entropy: &[RateValue], kinetic: &[f64]) -> RateValue {
    weights
        .iter()
        .zip(entropy.iter().zip(kinetic))
        .fold(RateValue::Finite(0.0), |acc, (&w, (&h, &kin))| acc + (h + RateValue::Finite(kin)).scale(w))
}

/// Quenched rate of a flow; `+∞` unless its disorder marginal is `μ`.
pub fn quenched_rate(df: &DriftFlow, m: &ModelSpec, init: &InitialLaw, mu: &[(f64, f64)]) -> Result<QuenchedRate> {
    check_support(df, mu)?;
    let (gamma, entropy, kinetic) = per_atom(df, m, init)?;
    let flow = &df.flow;
    if flow.atoms.iter().zip(mu).any(|(a, b)| (a.1 - b.1).abs() > 1e-12) {
        return Ok(QuenchedRate { process: RateValue::Infinite, flow: RateValue::Infinite, entropy, kinetic });
    }
    let weights: Vec<f64> = mu.iter().map(|a| a.1).collect();
    let process = weighted(&weights, &entropy, &kinetic);
    let n = flow.grid.cells;
    let mut joint = Vec::with_capacity(mu.len() * n);
    let mut reference = Vec::with_capacity(mu.len() * n);
    for (k, &w) in weights.iter().enumerate() {
        joint.extend(flow.density(0, k).iter().map(|q| w * q));
        reference.extend(gamma[k * n..(k + 1) * n].iter().map(|q| w * q));
    }
    let h = relative_entropy_density(&joint, &reference, flow.grid.dx)?;
    let kin: f64 = weights.iter().zip(&kinetic).map(|(w, kk)| w * kk).sum();
    Ok(QuenchedRate { process, flow: h + RateValue::Finite(kin), entropy, kinetic })
}

/// Averaged rate `Σ_k λ₂_k [H_k + K_k] + H(λ₂ | μ)`, where `λ₂` is the
/// disorder marginal of the flow.
pub fn averaged_rate(df: &DriftFlow, m: &ModelSpec, init: &InitialLaw, mu: &[(f64, f64)]) -> Result<RateValue> {
    check_support(df, mu)?;
    let (_, entropy, kinetic) = per_atom(df, m, init)?;
    let lam: Vec<f64> = df.flow.atoms.iter().map(|a| a.1).collect();
    let reference: Vec<f64> = mu.iter().map(|a| a.1).collect();
    let marginal = relative_entropy(&lam, &reference)?;
    Ok(weighted(&lam, &entropy, &kinetic) + marginal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mkv::{solve_mkv, Domain};
    use crate::model::{builtin_model, Builtin};

    fn kuramoto(k: f64) -> ModelSpec {
        builtin_model(Builtin::Kuramoto { k }).unwrap()
    }

    fn small_cfg() -> MkvConfig {
        MkvConfig { cells: 64, t_end: 0.5, ..Default::default() }
    }

    fn bumpy() -> InitialLaw {
        InitialLaw::Gaussian { offset: 1.0, slope: 0.5, std: 0.6 }
    }

    #[test]
    fn pseudo_inverse_of_diagonal_skips_null_pivot() {
        let g = [2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 4.0];
        let (v, r) = pseudo_quadratic(&g, &[1.0, 5.0, 2.0]);
        assert_eq!(r, 2);
        assert!((v - (0.5 + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn constant_kick_costs_half_c_squared_t() {
        let m = kuramoto(1.0);
        let atoms = [(-0.5, 0.4), (0.5, 0.6)];
        let c = 0.8;
        let h: Fn3 = Arc::new(move |_, _, u| if u < 0.0 { c } else { 0.0 });
        let df = DriftFlow::self_consistent(&m, h, c, &bumpy(), &atoms, &small_cfg()).unwrap();
        let r = quenched_rate(&df, &m, &bumpy(), &atoms).unwrap();
        let expect = 0.4 * 0.5 * c * c * 0.5;
        assert!((r.process.value() - expect).abs() < 1e-9, "{:?}", r.process);
        assert!((r.flow.value() - r.process.value()).abs() < 1e-12);
        let fr = flow_rate_k(&df, &m, 0, TestBasis::default()).unwrap();
        assert!(fr.variational <= fr.closed);
    }

    #[test]
    fn mkv_flow_has_no_kinetic_cost() {
        let m = kuramoto(2.0);
        let atoms = [(-1.0, 0.5), (1.0, 0.5)];
        let cfg = MkvConfig { save_every: Some(1), ..small_cfg() };
        let star = solve_mkv(&m, &bumpy(), &atoms, &cfg).unwrap();
        let df = DriftFlow::from_mkv(&m, &star).unwrap();
        let r = quenched_rate(&df, &m, &bumpy(), &atoms).unwrap();
        assert!(r.process.value() < 1e-6, "{:?}", r.process);
        let drift = df.flow.q.iter().zip(&star.q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(drift < 1e-3, "{drift}");
    }

    #[test]
    fn weights_off_mu_are_infinite() {
        let m = kuramoto(1.0);
        let zero: Fn3 = Arc::new(|_, _, _| 0.0);
        let df = DriftFlow::self_consistent(&m, zero, 0.0, &bumpy(), &[(-1.0, 0.3), (1.0, 0.7)], &small_cfg()).unwrap();
        let mu = [(-1.0, 0.5), (1.0, 0.5)];
        assert_eq!(quenched_rate(&df, &m, &bumpy(), &mu).unwrap().process, RateValue::Infinite);
        let avg = averaged_rate(&df, &m, &bumpy(), &mu).unwrap().value();
        let h2 = 0.3 * (0.6f64).ln() + 0.7 * (1.4f64).ln();
        assert!((avg - h2).abs() < 1e-12, "{avg} {h2}");
    }

    #[test]
    fn line_gradient_perturbation_closes_the_gap() {
        let m = ModelSpec::brownian(crate::model::Geometry::Line);
        let init = InitialLaw::Gaussian { offset: 0.0, slope: 0.0, std: 0.8 };
        let h: Fn3 = Arc::new(|t, x, _| 0.3 * (t * 3.0).sin() * (-x * x).exp() * x);
        let cfg = MkvConfig { domain: Domain::Line { half_width: 6.0 }, cells: 96, t_end: 1.0, ..Default::default() };
        let df = DriftFlow::self_consistent(&m, h, 0.3, &init, &[(0.0, 1.0)], &cfg).unwrap();
        let fr = flow_rate_k(&df, &m, 0, TestBasis { space: 12, time: 6 }).unwrap();
        assert!(fr.variational <= fr.closed * (1.0 + 1e-2), "{fr:?}");
        assert!(fr.variational >= 0.3 * fr.closed, "{fr:?}");
    }
}
