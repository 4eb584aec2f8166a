//! Explicit finite-volume solver for the McKean–Vlasov Fokker–Planck family
//! `∂_t q^u = ½ ∂²_x q^u − ∂_x[(β^{q,u} + g(·, u)) q^u]`, one density per
//! disorder atom `u`.

use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::empirical::AtomicMeasure;
use crate::error::{Error, Result};
use crate::model::{Fn3, InitialLaw, ModelSpec, TWO_PI};

/// Largest admissible `dt / min(Δx², Δx / max|drift|)`.
pub const CFL_FACTOR: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Domain {
    /// `[0, 2π)`, periodic.
    Circle,
    /// `[−half_width, half_width]` with no-flux walls.
    Line { half_width: f64 },
}

/// Uniform cell grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    pub domain: Domain,
    pub cells: usize,
    pub lo: f64,
    pub dx: f64,
}

impl Grid {
    pub fn new(domain: Domain, cells: usize) -> Result<Grid> {
        if cells < 2 {
            return Err(Error::InvalidArgument(format!("grid needs at least 2 cells, got {cells}")));
        }
        let (lo, len) = match domain {
            Domain::Circle => (0.0, TWO_PI),
            Domain::Line { half_width } => {
                if !(half_width > 0.0 && half_width.is_finite()) {
                    return Err(Error::InvalidArgument(format!("half width must be positive, got {half_width}")));
                }
                (-half_width, 2.0 * half_width)
            }
        };
        Ok(Grid { domain, cells, lo, dx: len / cells as f64 })
    }

    pub fn periodic(&self) -> bool {
        matches!(self.domain, Domain::Circle)
    }

    pub fn hi(&self) -> f64 {
        self.lo + self.cells as f64 * self.dx
    }

    pub fn center(&self, c: usize) -> f64 {
        self.lo + (c as f64 + 0.5) * self.dx
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.cells).map(|c| self.center(c)).collect()
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.cells).map(|c| self.lo + c as f64 * self.dx).collect()
    }

    /// Faces carrying flux: all `cells` on the circle (face `f` joins cells
    /// `f` and `f + 1 mod n`), the `cells − 1` interior ones on the line.
    pub(crate) fn faces(&self) -> usize {
        if self.periodic() {
            self.cells
        } else {
            self.cells - 1
        }
    }

    pub(crate) fn face(&self, f: usize) -> f64 {
        self.lo + (f + 1) as f64 * self.dx
    }

    /// Reduces a circle coordinate; `None` off a line domain.
    fn locate(&self, x: f64) -> Option<f64> {
        match self.domain {
            Domain::Circle => Some(x.rem_euclid(TWO_PI)),
            Domain::Line { .. } => (x >= self.lo && x <= self.hi()).then_some(x),
        }
    }

    /// Cell containing `x`.
    pub fn cell_of(&self, x: f64) -> Option<usize> {
        let y = self.locate(x)?;
        Some((((y - self.lo) / self.dx).floor() as usize).min(self.cells - 1))
    }

    /// Linear interpolation of a cell-centred profile; constant in the
    /// outer half cells on the line.
    pub fn interpolate(&self, values: &[f64], x: f64) -> Option<f64> {
        let y = self.locate(x)?;
        let s = (y - self.lo) / self.dx - 0.5;
        let n = self.cells;
        if self.periodic() {
            let i0 = s.floor();
            let frac = s - i0;
            let a = (i0 as i64).rem_euclid(n as i64) as usize;
            let b = (a + 1) % n;
            Some(values[a] + frac * (values[b] - values[a]))
        } else {
            let s = s.clamp(0.0, (n - 1) as f64);
            let a = (s.floor() as usize).min(n - 2);
            let frac = s - a as f64;
            Some(values[a] + frac * (values[a + 1] - values[a]))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MkvConfig {
    pub domain: Domain,
    pub cells: usize,
    pub t_end: f64,
    /// Step; chosen from the CFL limit when absent.
    pub dt: Option<f64>,
    /// Keep every `save_every`-th step (plus the last); automatic when
    /// absent.
    pub save_every: Option<usize>,
}

impl Default for MkvConfig {
    fn default() -> Self {
        MkvConfig { domain: Domain::Circle, cells: 256, t_end: 1.0, dt: None, save_every: None }
    }
}

/// Time-indexed cell densities `q[time][atom][cell]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowGrid {
    pub grid: Grid,
    /// Disorder atoms `(u_k, weight_k)`.
    pub atoms: Vec<(f64, f64)>,
    pub times: Vec<f64>,
    pub q: Vec<f64>,
    pub dt: f64,
    pub steps: usize,
    pub save_every: usize,
}

impl FlowGrid {
    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    fn block(&self) -> usize {
        self.atoms.len() * self.grid.cells
    }

    /// All atoms at saved time `ti`.
    pub fn slice(&self, ti: usize) -> &[f64] {
        &self.q[ti * self.block()..(ti + 1) * self.block()]
    }

    pub fn density(&self, ti: usize, k: usize) -> &[f64] {
        let n = self.grid.cells;
        &self.slice(ti)[k * n..(k + 1) * n]
    }

    pub fn mass(&self, ti: usize, k: usize) -> f64 {
        self.density(ti, k).iter().sum::<f64>() * self.grid.dx
    }

    pub fn min_value(&self) -> f64 {
        self.q.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    /// Saved index at time `t`, if `t` is a saved time.
    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|s| (s - t).abs() <= 1e-9 * self.horizon().max(1.0))
    }

    /// `(x_c, u_k)` atoms with weight `w_k q Δx`, renormalized to mass 1.
    pub fn quantized_measure(&self, ti: usize) -> Result<AtomicMeasure> {
        let n = self.grid.cells;
        let mut points = Vec::with_capacity(2 * n * self.atoms.len());
        let mut weights = Vec::with_capacity(n * self.atoms.len());
        for (k, &(u, w)) in self.atoms.iter().enumerate() {
            for (c, &q) in self.density(ti, k).iter().enumerate() {
                let m = w * q.max(0.0) * self.grid.dx;
                if m > 0.0 {
                    points.push(self.grid.center(c));
                    points.push(u);
                    weights.push(m);
                }
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let period = self.grid.periodic().then_some(TWO_PI);
        AtomicMeasure::new(2, vec![period, None], points, weights)
    }

    /// Snaps an `(x, ω)` measure to cell centres and the nearest atom.
    pub fn bin(&self, m: &AtomicMeasure) -> Result<AtomicMeasure> {
        if m.dim != 2 {
            return Err(Error::Incompatible("binning needs (x, ω) atoms".into()));
        }
        let n = self.grid.cells;
        let mut acc = vec![0.0; n * self.atoms.len()];
        for i in 0..m.len() {
            let p = m.point(i);
            let c = self.grid.cell_of(p[0]).ok_or(Error::OffGrid(p[0]))?;
            let k = self
                .atoms
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 .0 - p[1]).abs().total_cmp(&(b.1 .0 - p[1]).abs()))
                .map(|a| a.0)
                .unwrap_or(0);
            acc[k * n + c] += m.weights[i];
        }
        let mut points = vec![];
        let mut weights = vec![];
        for (k, &(u, _)) in self.atoms.iter().enumerate() {
            for c in 0..n {
                if acc[k * n + c] > 0.0 {
                    points.push(self.grid.center(c));
                    points.push(u);
                    weights.push(acc[k * n + c]);
                }
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let period = self.grid.periodic().then_some(TWO_PI);
        AtomicMeasure::new(2, vec![period, None], points, weights)
    }

    /// `Σ_c` of a cell profile against density `(ti, k)`.
    pub fn integrate(&self, ti: usize, k: usize, h: impl Fn(f64) -> f64) -> f64 {
        self.density(ti, k).iter().enumerate().map(|(c, q)| h(self.grid.center(c)) * q).sum::<f64>() * self.grid.dx
    }

    /// `β^{q_t, ω}` at cell centres for saved time `ti`.
    pub fn beta_profile(&self, m: &ModelSpec, ti: usize, omega: f64) -> Vec<f64> {
        let op = BetaOperator::new(m, &self.grid, &self.atoms);
        let xs = self.grid.centers();
        op.eval(self.slice(ti), omega, &xs)
    }

    /// Per-atom order parameter `r e^{iψ}` of `l*`.
    pub fn order_parameter(&self, ti: usize) -> (f64, f64) {
        let (mut re, mut im) = (0.0, 0.0);
        for (k, &(_, w)) in self.atoms.iter().enumerate() {
            re += w * self.integrate(ti, k, f64::cos);
            im += w * self.integrate(ti, k, f64::sin);
        }
        (re.hypot(im), im.atan2(re))
    }

    /// CSV rows `t,u,x,q`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "t,u,x,q")?;
        for (ti, t) in self.times.iter().enumerate() {
            for (k, &(u, _)) in self.atoms.iter().enumerate() {
                for (c, q) in self.density(ti, k).iter().enumerate() {
                    writeln!(w, "{t:e},{u:e},{:e},{q:e}", self.grid.center(c))?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Masses per atom and order parameter of `l*` at every saved time.
#[derive(Debug, Clone, Serialize)]
pub struct FlowSummary {
    pub times: Vec<f64>,
    pub masses: Vec<Vec<f64>>,
    pub order_parameter: Vec<f64>,
    pub phase: Vec<f64>,
    pub min_density: f64,
}

pub fn summary(flow: &FlowGrid) -> FlowSummary {
    let (r, psi) = (0..flow.n_times()).map(|ti| flow.order_parameter(ti)).unzip();
    FlowSummary {
        times: flow.times.clone(),
        masses: (0..flow.n_times()).map(|ti| (0..flow.atoms.len()).map(|k| flow.mass(ti, k)).collect()).collect(),
        order_parameter: r,
        phase: psi,
        min_density: flow.min_value(),
    }
}

/// `l*_t = Σ_k μ_k q_t^{u_k}` for every saved time.
pub fn contract_l_star(flow: &FlowGrid) -> Vec<Vec<f64>> {
    let n = flow.grid.cells;
    let total: f64 = flow.atoms.iter().map(|a| a.1).sum();
    (0..flow.n_times())
        .map(|ti| {
            let mut l = vec![0.0; n];
            for (k, &(_, w)) in flow.atoms.iter().enumerate() {
                for (lc, q) in l.iter_mut().zip(flow.density(ti, k)) {
                    *lc += w / total * q;
                }
            }
            l
        })
        .collect()
}

/// Evaluates `β^{q,ω}(x) = −Σ_k μ_k ∫ ∂_x f(x − x̃, ω, u_k) q^{u_k}(x̃) dx̃`
/// by the midpoint rule, using the trigonometric reduction when present.
pub(crate) struct BetaOperator<'a> {
    m: &'a ModelSpec,
    grid: &'a Grid,
    atoms: &'a [(f64, f64)],
    centers: Vec<f64>,
    cos_c: Vec<f64>,
    sin_c: Vec<f64>,
}

impl<'a> BetaOperator<'a> {
    pub(crate) fn new(m: &'a ModelSpec, grid: &'a Grid, atoms: &'a [(f64, f64)]) -> Self {
        let centers = grid.centers();
        let cos_c = centers.iter().map(|x| x.cos()).collect();
        let sin_c = centers.iter().map(|x| x.sin()).collect();
        BetaOperator { m, grid, atoms, centers, cos_c, sin_c }
    }

    /// `Z = Σ_k μ_k c(u_k) ∫ e^{ix} q^{u_k}`.
    fn moment(&self, slice: &[f64], weight: &dyn Fn(f64) -> f64) -> (f64, f64) {
        let n = self.grid.cells;
        let (mut re, mut im) = (0.0, 0.0);
        for (k, &(u, mu)) in self.atoms.iter().enumerate() {
            let q = &slice[k * n..(k + 1) * n];
            let (mut a, mut b) = (0.0, 0.0);
            for c in 0..n {
                a += q[c] * self.cos_c[c];
                b += q[c] * self.sin_c[c];
            }
            let s = mu * weight(u) * self.grid.dx;
            re += s * a;
            im += s * b;
        }
        (re, im)
    }

    pub(crate) fn eval(&self, slice: &[f64], omega: f64, xs: &[f64]) -> Vec<f64> {
        if let Some(fast) = &self.m.fast {
            if fast.amplitude == 0.0 {
                return vec![0.0; xs.len()];
            }
            let (re, im) = self.moment(slice, &*fast.weight);
            let amp = fast.amplitude * (fast.weight)(omega);
            return xs.iter().map(|x| amp * (x.sin() * re - x.cos() * im)).collect();
        }
        let n = self.grid.cells;
        let df = &self.m.df;
        xs.iter()
            .map(|&x| {
                let mut total = 0.0;
                for (k, &(u, mu)) in self.atoms.iter().enumerate() {
                    let q = &slice[k * n..(k + 1) * n];
                    let s: f64 = (0..n).map(|c| df(x - self.centers[c], omega, u) * q[c]).sum();
                    total += mu * s;
                }
                -total * self.grid.dx
            })
            .collect()
    }

    /// Evaluates `β` for every atom at once at the points `xs`.
    pub(crate) fn eval_atoms(&self, slice: &[f64], xs: &[f64]) -> Vec<Vec<f64>> {
        if let Some(fast) = &self.m.fast {
            if fast.amplitude == 0.0 {
                return vec![vec![0.0; xs.len()]; self.atoms.len()];
            }
            let (re, im) = self.moment(slice, &*fast.weight);
            let base: Vec<f64> = xs.iter().map(|x| x.sin() * re - x.cos() * im).collect();
            return self
                .atoms
                .iter()
                .map(|&(u, _)| {
                    let amp = fast.amplitude * (fast.weight)(u);
                    base.iter().map(|b| amp * b).collect()
                })
                .collect();
        }
        self.atoms.iter().map(|&(u, _)| self.eval(slice, u, xs)).collect()
    }
}

/// `β^{q,ω}(x)` for one slice (all atoms, cell densities).
pub fn beta_drift(m: &ModelSpec, grid: &Grid, atoms: &[(f64, f64)], slice: &[f64], omega: f64, x: f64) -> f64 {
    BetaOperator::new(m, grid, atoms).eval(slice, omega, &[x])[0]
}

/// Cell-averaged `γ^{u_k}` for every atom.
pub fn initial_densities(grid: &Grid, init: &InitialLaw, atoms: &[(f64, f64)]) -> Result<Vec<f64>> {
    let edges = grid.edges();
    let mut q = Vec::with_capacity(atoms.len() * grid.cells);
    for &(u, _) in atoms {
        let (masses, outside) = init
            .cell_masses(&edges, u, grid.periodic())
            .ok_or_else(|| Error::InvalidLaw("initial law has no CDF for cell averaging".into()))?;
        if outside > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "initial mass {outside:e} lies outside [{}, {}]; enlarge the domain",
                grid.lo,
                grid.hi()
            )));
        }
        let total: f64 = masses.iter().sum();
        q.extend(masses.iter().map(|m| m / total / grid.dx));
    }
    Ok(q)
}

/// Drift used by the stepper.
#[derive(Clone, Copy)]
pub(crate) enum Closure<'a> {
    /// `g + β^q + extra`.
    Nonlinear { extra: Option<&'a Fn3> },
    /// Prescribed `b(t, x, u)`; the linear Fokker–Planck equation.
    Linear { b: &'a Fn3 },
}

pub(crate) fn check_atoms(atoms: &[(f64, f64)]) -> Result<()> {
    if atoms.is_empty() {
        return Err(Error::InvalidArgument("no disorder atoms".into()));
    }
    if atoms.iter().any(|a| !(a.1 >= 0.0) || !a.0.is_finite()) {
        return Err(Error::InvalidLaw("atoms need finite locations and nonnegative weights".into()));
    }
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidLaw(format!("atom weights sum to {total}")));
    }
    Ok(())
}

/// Resolves `(dt, steps, save_every)` from the configuration and the
/// drift bound.
pub(crate) fn schedule(cfg: &MkvConfig, grid: &Grid, max_drift: f64) -> Result<(f64, usize, usize)> {
    if !(cfg.t_end >= 0.0 && cfg.t_end.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon must be >= 0, got {}", cfg.t_end)));
    }
    let dx = grid.dx;
    let limit = CFL_FACTOR * if max_drift > 0.0 { (dx * dx).min(dx / max_drift) } else { dx * dx };
    let (dt, steps) = match cfg.dt {
        Some(dt) => {
            if !(dt > 0.0) {
                return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
            }
            if dt > limit * (1.0 + 1e-12) {
                return Err(Error::Cfl { dt, limit });
            }
            let s = (cfg.t_end / dt).round();
            if (cfg.t_end / dt - s).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("T = {} is not a multiple of dt = {dt}", cfg.t_end)));
            }
            (dt, s as usize)
        }
        None => {
            // even, so the midpoint is a grid time
            let s = ((cfg.t_end / limit).ceil() as usize).next_multiple_of(2);
            (if s == 0 { limit } else { cfg.t_end / s as f64 }, s)
        }
    };
    let save = cfg.save_every.unwrap_or_else(|| steps.div_ceil(2000).max(1)).max(1);
    Ok((dt, steps, save))
}

/// Explicit upwind step of every atom.
pub(crate) struct Stepper<'a> {
    pub m: &'a ModelSpec,
    pub grid: &'a Grid,
    pub atoms: &'a [(f64, f64)],
    beta: BetaOperator<'a>,
    faces: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub(crate) fn new(m: &'a ModelSpec, grid: &'a Grid, atoms: &'a [(f64, f64)]) -> Self {
        let faces = (0..grid.faces()).map(|f| grid.face(f)).collect();
        Stepper { m, grid, atoms, beta: BetaOperator::new(m, grid, atoms), faces }
    }

    /// Drift at the faces for every atom at time `t`.
    pub(crate) fn face_drift(&self, slice: &[f64], t: f64, closure: Closure) -> Vec<Vec<f64>> {
        match closure {
            Closure::Linear { b } => {
                self.atoms.iter().map(|&(u, _)| self.faces.iter().map(|&x| b(t, x, u)).collect()).collect()
            }
            Closure::Nonlinear { extra } => {
                let mut beta = self.beta.eval_atoms(slice, &self.faces);
                for (k, &(u, _)) in self.atoms.iter().enumerate() {
                    for (f, &x) in self.faces.iter().enumerate() {
                        beta[k][f] += (self.m.g)(x, u);
                        if let Some(h) = extra {
                            beta[k][f] += h(t, x, u);
                        }
                    }
                }
                beta
            }
        }
    }

    /// Upwind-plus-diffusion fluxes through the faces of one density.
    pub(crate) fn fluxes(&self, q: &[f64], drift: &[f64]) -> Vec<f64> {
        let n = self.grid.cells;
        let inv = 0.5 / self.grid.dx;
        (0..self.faces.len())
            .map(|f| {
                let (a, b) = (q[f], q[(f + 1) % n]);
                let v = drift[f];
                v.max(0.0) * a + v.min(0.0) * b - inv * (b - a)
            })
            .collect()
    }

    /// `next = q − (dt/Δx)·(F_right − F_left)` for every atom.
    pub(crate) fn advance(&self, q: &[f64], next: &mut [f64], drift: &[Vec<f64>], dt: f64) {
        let n = self.grid.cells;
        let r = dt / self.grid.dx;
        let periodic = self.grid.periodic();
        next.par_chunks_mut(n).zip(q.par_chunks(n)).zip(drift.par_iter()).for_each(|((out, qk), d)| {
            let flux = self.fluxes(qk, d);
            for c in 0..n {
                let right = if c + 1 < n || periodic { flux[c] } else { 0.0 };
                let left = match (c, periodic) {
                    (0, true) => flux[n - 1],
                    (0, false) => 0.0,
                    _ => flux[c - 1],
                };
                out[c] = qk[c] - r * (right - left);
            }
        });
    }

    /// Runs the scheme from `q0` and keeps the scheduled snapshots.
    pub(crate) fn run(&self, q0: Vec<f64>, dt: f64, steps: usize, save: usize, closure: Closure) -> Result<FlowGrid> {
        let mut times = vec![0.0];
        let mut q = q0;
        let mut store = q.clone();
        let mut next = vec![0.0; q.len()];
        for s in 0..steps {
            let t = s as f64 * dt;
            let drift = self.face_drift(&q, t, closure);
            self.advance(&q, &mut next, &drift, dt);
            let low = next.iter().copied().fold(f64::INFINITY, f64::min);
            if low < -1e-8 || !low.is_finite() {
                return Err(Error::Negativity { step: s + 1, value: low });
            }
            std::mem::swap(&mut q, &mut next);
            if (s + 1) % save == 0 || s + 1 == steps {
                times.push((s + 1) as f64 * dt);
                store.extend_from_slice(&q);
            }
        }
        Ok(FlowGrid { grid: *self.grid, atoms: self.atoms.to_vec(), times, q: store, dt, steps, save_every: save })
    }

    /// Bound on `|g| + |β|` over the atoms.
    pub(crate) fn nonlinear_bound(&self) -> f64 {
        let g = self.atoms.iter().map(|&(u, _)| self.m.drift_bound(u)).fold(0.0, f64::max);
        g + self.m.c_f
    }
}

/// Solves the McKean–Vlasov family from `γ^{u_k}` on the given grid.
pub fn solve_mkv(m: &ModelSpec, init: &InitialLaw, atoms: &[(f64, f64)], cfg: &MkvConfig) -> Result<FlowGrid> {
    check_atoms(atoms)?;
    init.validate_params()?;
    let grid = Grid::new(cfg.domain, cfg.cells)?;
    let q0 = initial_densities(&grid, init, atoms)?;
    let stepper = Stepper::new(m, &grid, atoms);
    let (dt, steps, save) = schedule(cfg, &grid, stepper.nonlinear_bound())?;
    stepper.run(q0, dt, steps, save, Closure::Nonlinear { extra: None })
}

/// Linear Fokker–Planck flow of a prescribed drift `b(t, x, u)` bounded by
/// `bound`, started from explicit cell densities.
pub fn solve_linear(
    m: &ModelSpec,
    q0: Vec<f64>,
    atoms: &[(f64, f64)],
    b: &Fn3,
    bound: f64,
    cfg: &MkvConfig,
) -> Result<FlowGrid> {
    check_atoms(atoms)?;
    let grid = Grid::new(cfg.domain, cfg.cells)?;
    if q0.len() != atoms.len() * grid.cells {
        return Err(Error::Incompatible("initial densities do not match the grid".into()));
    }
    let stepper = Stepper::new(m, &grid, atoms);
    let (dt, steps, save) = schedule(cfg, &grid, bound)?;
    stepper.run(q0, dt, steps, save, Closure::Linear { b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, Builtin, Geometry};

    fn kuramoto(k: f64) -> ModelSpec {
        builtin_model(Builtin::Kuramoto { k }).unwrap()
    }

    #[test]
    fn flat_profile_is_stationary() {
        let m = kuramoto(2.0);
        let cfg = MkvConfig { t_end: 5.0, cells: 128, ..Default::default() };
        let flow = solve_mkv(&m, &InitialLaw::uniform_circle(), &[(-1.0, 0.5), (1.0, 0.5)], &cfg).unwrap();
        let flat = 1.0 / TWO_PI;
        let dev = flow.q.iter().map(|q| (q - flat).abs()).fold(0.0, f64::max);
        assert!(dev <= 1e-9, "{dev}");
    }

    #[test]
    fn point_mass_beta_matches_sine() {
        let m = kuramoto(1.5);
        let grid = Grid::new(Domain::Circle, 512).unwrap();
        let mut q = vec![0.0; 512];
        q[0] = 1.0 / grid.dx;
        let x0 = grid.center(0);
        let mut worst: f64 = 0.0;
        for i in 0..100 {
            let x = i as f64 * 0.0628;
            let b = beta_drift(&m, &grid, &[(0.0, 1.0)], &q, 0.0, x);
            worst = worst.max((b + 1.5 * (x - x0).sin()).abs());
        }
        assert!(worst < 1e-12 + 1.5 * grid.dx);
    }

    #[test]
    fn reduced_and_direct_beta_agree() {
        let m = builtin_model(Builtin::Daido { b: std::sync::Arc::new(|w: f64| w.tanh()) }).unwrap();
        let mut direct = m.clone();
        direct.fast = None;
        let grid = Grid::new(Domain::Circle, 64).unwrap();
        let atoms = [(-0.5, 0.3), (1.2, 0.7)];
        let q: Vec<f64> = (0..128).map(|i| 1.0 + 0.5 * (i as f64 * 0.3).sin()).collect();
        for x in [0.0, 1.0, 4.0] {
            let a = beta_drift(&m, &grid, &atoms, &q, 0.8, x);
            let b = beta_drift(&direct, &grid, &atoms, &q, 0.8, x);
            assert!((a - b).abs() < 1e-12, "{a} {b}");
        }
    }

    #[test]
    fn heat_equation_variance() {
        let m = ModelSpec::brownian(Geometry::Line);
        let s0 = 0.7;
        let init = InitialLaw::Gaussian { offset: 0.0, slope: 0.0, std: s0 };
        let cfg = MkvConfig { domain: Domain::Line { half_width: 8.0 }, cells: 320, t_end: 1.0, ..Default::default() };
        let flow = solve_mkv(&m, &init, &[(0.0, 1.0)], &cfg).unwrap();
        let last = flow.n_times() - 1;
        let var = flow.integrate(last, 0, |x| x * x) - flow.integrate(last, 0, |x| x).powi(2);
        let target = s0 * s0 + 1.0;
        assert!(((var - target) / target).abs() <= 2.0 * (flow.grid.dx.powi(2) + flow.dt), "{var}");
    }

    #[test]
    fn cfl_violation_refused() {
        let cfg = MkvConfig { dt: Some(0.1), ..Default::default() };
        let r = solve_mkv(&kuramoto(1.0), &InitialLaw::uniform_circle(), &[(0.0, 1.0)], &cfg);
        assert!(matches!(r, Err(Error::Cfl { .. })));
    }

    #[test]
    fn interpolation_is_exact_on_linear_profiles() {
        let g = Grid::new(Domain::Line { half_width: 2.0 }, 40).unwrap();
        let v: Vec<f64> = g.centers().iter().map(|x| 3.0 * x - 1.0).collect();
        for x in [-1.9, -0.3, 0.0, 1.2, 1.94] {
            assert!((g.interpolate(&v, x).unwrap() - (3.0 * x - 1.0)).abs() < 1e-12);
        }
        assert!(g.interpolate(&v, 2.5).is_none());
    }
}
