//! Probe-based checks of the structural assumptions on `f` and `g`.

use serde::{Deserialize, Serialize};

use super::{Derivatives, ModelSpec};
use crate::rng;

/// Deterministic grid plus seeded random probes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeGrid {
    pub xs: Vec<f64>,
    pub omegas: Vec<f64>,
    pub random: usize,
    pub x_range: f64,
    pub omega_range: f64,
    pub seed: u64,
}

impl Default for ProbeGrid {
    fn default() -> Self {
        let xs = (0..=40).map(|i| -10.0 + 0.5 * i as f64).chain([0.1, -0.1, 1e-3, 3.1]).collect();
        let omegas = (0..=20).map(|i| -5.0 + 0.5 * i as f64).chain([0.25, -0.75, 1e-3]).collect();
        ProbeGrid { xs, omegas, random: 500, x_range: 20.0, omega_range: 10.0, seed: 0x5eed }
    }
}

impl ProbeGrid {
    fn random_triples(&self) -> Vec<(f64, f64, f64)> {
        let mut s = rng::stream(rng::derive_seed(self.seed, "probes", 0), 0);
        (0..self.random)
            .map(|_| {
                let mut draw = |range: f64| range * (2.0 * rng::open_uniform(&mut s) - 1.0);
                (draw(self.x_range), draw(self.omega_range), draw(self.omega_range))
            })
            .collect()
    }

    /// Grid triples `(x, ω, ω̃)` followed by random ones.
    pub fn triples(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::with_capacity(self.xs.len() * self.omegas.len() * self.omegas.len() + self.random);
        for &x in &self.xs {
            for &u in &self.omegas {
                for &v in &self.omegas {
                    out.push((x, u, v));
                }
            }
        }
        out.extend(self.random_triples());
        out
    }

    pub fn is_empty(&self) -> bool {
        (self.xs.is_empty() || self.omegas.is_empty()) && self.random == 0
    }
}

/// One assumption: pass flag, worst excess over the bound, and the probe
/// attaining it.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub worst_excess: f64,
    pub witness: Vec<f64>,
    /// Largest observed value of the checked quantity.
    pub observed_sup: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub model: String,
    pub slack: f64,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Tracker {
    name: &'static str,
    slack: f64,
    worst: f64,
    witness: Vec<f64>,
    sup: f64,
}

impl Tracker {
    fn new(name: &'static str, slack: f64) -> Self {
        Tracker { name, slack, worst: f64::NEG_INFINITY, witness: vec![], sup: 0.0 }
    }

    /// Records `value ≤ bound`.
    fn see(&mut self, value: f64, bound: f64, probe: &[f64]) {
        let excess = if value.is_finite() { value - bound } else { f64::INFINITY };
        if value.is_finite() {
            self.sup = self.sup.max(value);
        }
        if excess > self.worst || self.witness.is_empty() {
            self.worst = excess;
            self.witness = probe.to_vec();
        }
    }

    fn finish(self) -> CheckResult {
        CheckResult {
            name: self.name.to_string(),
            passed: self.worst <= self.slack,
            worst_excess: self.worst,
            witness: self.witness,
            observed_sup: self.sup,
        }
    }
}

/// Evaluates every assumption on the probes. Failures are reported, not
/// raised.
pub fn validate_model(m: &ModelSpec, probes: &ProbeGrid) -> ValidationReport {
    let slack = match m.derivatives {
        Derivatives::Analytic => 1e-12,
        Derivatives::FiniteDifference => 1e-6,
    };
    let triples = probes.triples();
    let mut sym = Tracker::new("symmetry", slack);
    let mut bf = Tracker::new("bound_f", slack);
    let mut bdf = Tracker::new("bound_df", slack);
    let mut bd2f = Tracker::new("bound_d2f", slack);
    let mut bg = Tracker::new("bound_g", slack);
    let mut lip_w = Tracker::new("lipschitz_g_omega", slack);
    let mut lip_x = Tracker::new("lipschitz_g_x", slack);
    let mut fd = Tracker::new("derivative_consistency", 0.0);
    let h = 1e-4;
    let (cf, cg) = (m.c_f, m.c_g);
    for &(x, u, v) in &triples {
        let p = [x, u, v];
        let fx = (m.f)(x, u, v);
        sym.see((fx - (m.f)(-x, v, u)).abs(), 0.0, &p);
        bf.see(fx.abs(), cf, &p);
        let dfx = (m.df)(x, u, v);
        let d2fx = (m.d2f)(x, u, v);
        bdf.see(dfx.abs(), cf, &p);
        bd2f.see(d2fx.abs(), cf, &p);
        let gu = (m.g)(x, u);
        bg.see(gu.abs(), cg * (1.0 + u.abs().powi(m.k1 as i32)), &p);
        let k2 = m.k2 as i32;
        lip_w.see((gu - (m.g)(x, v)).abs(), cg * (u - v).abs() * (1.0 + u.abs().powi(k2) + v.abs().powi(k2)), &p);
        let y = v; // reuse the third coordinate as a second state
        lip_x.see((gu - (m.g)(y, u)).abs(), cg * (x - y).abs(), &p);
        if m.derivatives == Derivatives::Analytic {
            let fd1 = ((m.f)(x + h, u, v) - (m.f)(x - h, u, v)) / (2.0 * h);
            let fd2 = ((m.df)(x + h, u, v) - (m.df)(x - h, u, v)) / (2.0 * h);
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
            fd.see(rel(fd1, dfx).max(rel(fd2, d2fx)), 1e-6, &p);
        }
    }
    let mut checks =
        vec![sym.finish(), bf.finish(), bdf.finish(), bd2f.finish(), bg.finish(), lip_w.finish(), lip_x.finish()];
    if m.derivatives == Derivatives::Analytic {
        checks.push(fd.finish());
    }
    ValidationReport { model: m.name.clone(), slack, checks }
}

#[cfg(test)]
mod tests {
    use super::super::{builtin_model, Builtin, Constants, Geometry};
    use super::*;
    use std::sync::Arc;

    #[test]
    fn builtins_pass_default_grid() {
        let models = [
            builtin_model(Builtin::Kuramoto { k: 1.0 }).unwrap(),
            builtin_model(Builtin::Kuramoto { k: 3.5 }).unwrap(),
            builtin_model(Builtin::Daido { b: Arc::new(|w: f64| w.tanh()) }).unwrap(),
            builtin_model(Builtin::Daido { b: Arc::new(|_| 1.0) }).unwrap(),
            builtin_model(Builtin::ActiveRotator { k: 1.0, a: Arc::new(|_| 0.5) }).unwrap(),
            builtin_model(Builtin::ActiveRotator { k: 2.0, a: Arc::new(|w: f64| 0.8 * w.sin()) }).unwrap(),
        ];
        for m in &models {
            let r = validate_model(m, &ProbeGrid::default());
            assert!(r.passed(), "{}: {:?}", m.name, r.checks.iter().filter(|c| !c.passed).collect::<Vec<_>>());
        }
    }

    #[test]
    fn daido_tanh_reports_bounded_f() {
        let m = builtin_model(Builtin::Daido { b: Arc::new(|w: f64| w.tanh()) }).unwrap();
        let r = validate_model(&m, &ProbeGrid::default());
        assert!(r.check("bound_f").unwrap().observed_sup <= 1.0);
    }

    #[test]
    fn linear_kernel_counterexample_fails_with_witness() {
        let m = super::super::ModelSpec::from_kernel(
            "linear",
            Arc::new(|x, _, _| x),
            Arc::new(|_, _| 0.0),
            Constants { c_f: 1.0, c_g: 1.0, k1: 0, k2: 0 },
            Geometry::Line,
        );
        let r = validate_model(&m, &ProbeGrid::default());
        let sym = r.check("symmetry").unwrap();
        let bound = r.check("bound_f").unwrap();
        assert!(!sym.passed && !bound.passed);
        let w = &sym.witness;
        assert!(((m.f)(w[0], w[1], w[2]) - (m.f)(-w[0], w[2], w[1])).abs() > 1.0);
        assert!(bound.witness[0].abs() > 1.0);
    }

    #[test]
    fn symmetry_is_exact_on_grid_for_builtins() {
        let m = builtin_model(Builtin::Daido { b: Arc::new(|w: f64| w.tanh()) }).unwrap();
        for (x, u, v) in ProbeGrid::default().triples() {
            assert!(((m.f)(x, u, v) - (m.f)(-x, v, u)).abs() <= 1e-12);
        }
    }
}
