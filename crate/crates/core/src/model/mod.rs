//! Interaction kernel `f`, local drift `g`, their regularity constants and
//! the built-in Kuramoto-type models.

mod init;
mod validate;

pub use init::{InitConfig, InitValidation, InitialLaw};
pub use validate::{validate_model, CheckResult, ProbeGrid, ValidationReport};

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Fn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type Fn2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type Fn3 = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

pub const TWO_PI: f64 = 2.0 * PI;

/// Finite-difference step used when a model supplies only `f`.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    Line,
    /// Period 2π. States are stored unwrapped.
    Circle,
}

impl Geometry {
    pub fn wrap(self, x: f64) -> f64 {
        match self {
            Geometry::Line => x,
            Geometry::Circle => x.rem_euclid(TWO_PI),
        }
    }
}

/// `f(x, ω, ω̃) = amplitude · w(ω) · w(ω̃) · cos x`.
///
/// Sums over particles then collapse to one complex moment per step.
#[derive(Clone)]
pub struct TrigReduction {
    pub amplitude: f64,
    pub weight: Fn1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Derivatives {
    Analytic,
    FiniteDifference,
}

#[derive(Clone)]
pub struct ModelSpec {
    pub name: String,
    pub f: Fn3,
    pub df: Fn3,
    pub d2f: Fn3,
    pub g: Fn2,
    pub c_f: f64,
    pub c_g: f64,
    pub k1: u32,
    pub k2: u32,
    pub geometry: Geometry,
    pub fast: Option<TrigReduction>,
    pub derivatives: Derivatives,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        fm.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("c_f", &self.c_f)
            .field("c_g", &self.c_g)
            .field("k1", &self.k1)
            .field("k2", &self.k2)
            .field("geometry", &self.geometry)
            .field("fast", &self.fast.as_ref().map(|t| t.amplitude))
            .field("derivatives", &self.derivatives)
            .finish()
    }
}

/// Regularity constants of a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub c_f: f64,
    pub c_g: f64,
    pub k1: u32,
    pub k2: u32,
}

impl ModelSpec {
    /// Model with analytic derivatives.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        f: Fn3,
        df: Fn3,
        d2f: Fn3,
        g: Fn2,
        constants: Constants,
        geometry: Geometry,
    ) -> Self {
        ModelSpec {
            name: name.into(),
            f,
            df,
            d2f,
            g,
            c_f: constants.c_f,
            c_g: constants.c_g,
            k1: constants.k1,
            k2: constants.k2,
            geometry,
            fast: None,
            derivatives: Derivatives::Analytic,
        }
    }

    /// Model given by `f` alone; `∂f` and `∂²f` are centered differences
    /// with step [`FD_STEP`].
    pub fn from_kernel(name: impl Into<String>, f: Fn3, g: Fn2, constants: Constants, geometry: Geometry) -> Self {
        let h = FD_STEP;
        let f1 = f.clone();
        let df: Fn3 = Arc::new(move |x, u, v| (f1(x + h, u, v) - f1(x - h, u, v)) / (2.0 * h));
        let f2 = f.clone();
        let d2f: Fn3 = Arc::new(move |x, u, v| (f2(x + h, u, v) - 2.0 * f2(x, u, v) + f2(x - h, u, v)) / (h * h));
        let mut m = ModelSpec::new(name, f, df, d2f, g, constants, geometry);
        m.derivatives = Derivatives::FiniteDifference;
        m
    }

    pub fn with_fast(mut self, fast: TrigReduction) -> Self {
        self.fast = Some(fast);
        self
    }

    pub fn constants(&self) -> Constants {
        Constants { c_f: self.c_f, c_g: self.c_g, k1: self.k1, k2: self.k2 }
    }

    /// `f ≡ 0` with the given drift.
    pub fn uncoupled(name: impl Into<String>, g: Fn2, constants: Constants, geometry: Geometry) -> Self {
        let zero: Fn3 = Arc::new(|_, _, _| 0.0);
        let mut m = ModelSpec::new(name, zero.clone(), zero.clone(), zero.clone(), g, constants, geometry);
        m.fast = Some(TrigReduction { amplitude: 0.0, weight: Arc::new(|_| 1.0) });
        m.c_f = 0.0;
        m
    }

    /// Pure Brownian motion: `f ≡ 0`, `g ≡ 0`.
    pub fn brownian(geometry: Geometry) -> Self {
        ModelSpec::uncoupled("brownian", Arc::new(|_, _| 0.0), Constants { c_f: 0.0, c_g: 0.0, k1: 0, k2: 0 }, geometry)
    }

    /// `f ≡ 0`, `g(x, ω) = ω`.
    pub fn free_rotation(geometry: Geometry) -> Self {
        ModelSpec::uncoupled(
            "free_rotation",
            Arc::new(|_, w| w),
            Constants { c_f: 0.0, c_g: 1.0, k1: 1, k2: 0 },
            geometry,
        )
    }

    /// Replace the local drift, keeping `f`.
    pub fn with_drift(mut self, g: Fn2, c_g: f64, k1: u32, k2: u32) -> Self {
        self.g = g;
        self.c_g = c_g;
        self.k1 = k1;
        self.k2 = k2;
        self
    }

    /// Same model with the interaction switched off.
    pub fn without_interaction(&self) -> Self {
        let mut m =
            ModelSpec::uncoupled(format!("{}/uncoupled", self.name), self.g.clone(), self.constants(), self.geometry);
        m.c_g = self.c_g;
        m
    }

    /// `∂²f(0, ω, ω)`, the Itô correction density.
    pub fn self_curvature(&self, w: f64) -> f64 {
        (self.d2f)(0.0, w, w)
    }

    /// A priori bound on `|g(·, ω)|` from the growth constants.
    pub fn drift_bound(&self, w: f64) -> f64 {
        self.c_g * (1.0 + w.abs().powi(self.k1 as i32))
    }
}

/// Named bounded function of the disorder, for config-driven models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisorderFn {
    Constant { value: f64 },
    Tanh { scale: f64 },
    Sin { scale: f64 },
}

impl DisorderFn {
    pub fn to_fn(&self) -> Fn1 {
        match *self {
            DisorderFn::Constant { value } => Arc::new(move |_| value),
            DisorderFn::Tanh { scale } => Arc::new(move |w: f64| scale * w.tanh()),
            DisorderFn::Sin { scale } => Arc::new(move |w: f64| scale * w.sin()),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(v) = s.parse::<f64>() {
            return Ok(DisorderFn::Constant { value: v });
        }
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let scale = match arg {
            Some(a) => a.trim().parse::<f64>().map_err(|_| Error::InvalidArgument(format!("bad scale in `{s}`")))?,
            None => 1.0,
        };
        match name {
            "tanh" => Ok(DisorderFn::Tanh { scale }),
            "sin" => Ok(DisorderFn::Sin { scale }),
            "const" | "constant" => Ok(DisorderFn::Constant { value: scale }),
            _ => Err(Error::InvalidArgument(format!("unknown disorder function `{s}`"))),
        }
    }
}

#[derive(Clone)]
pub enum Builtin {
    Kuramoto {
        k: f64,
    },
    /// `f = b(ω) b(ω̃) cos x`.
    Daido {
        b: Fn1,
    },
    /// `f = −K cos x`, `g = 1 − a(ω) sin x`.
    ActiveRotator {
        k: f64,
        a: Fn1,
    },
}

/// Probe sup of `|h|`; errors if `h` is non-finite or keeps growing on the
/// outer decade `[1e5, 1e6]`.
fn probe_bounded(name: &str, h: &Fn1) -> Result<f64> {
    let mut inner: f64 = 0.0;
    let mut outer: f64 = 0.0;
    let mut probe = |w: f64, outer_decade: bool| -> Result<()> {
        let v = h(w);
        if !v.is_finite() {
            return Err(Error::UnboundedCoefficient(name.to_string()));
        }
        if outer_decade {
            outer = outer.max(v.abs());
        } else {
            inner = inner.max(v.abs());
        }
        Ok(())
    };
    probe(0.0, false)?;
    for i in 0..=3000 {
        let w = 10f64.powf(-3.0 + 9.0 * i as f64 / 3000.0);
        let outer_decade = w >= 1e5;
        probe(w, outer_decade)?;
        probe(-w, outer_decade)?;
    }
    for i in 0..=20_000 {
        probe(-50.0 + 100.0 * i as f64 / 20_000.0, false)?;
    }
    if outer > 2.0 * inner + 1.0 {
        return Err(Error::UnboundedCoefficient(name.to_string()));
    }
    Ok(inner.max(outer))
}

/// Largest difference quotient of `h` on a fine grid of `[-50, 50]`.
fn probe_lipschitz(h: &Fn1) -> f64 {
    let n = 100_000;
    let step = 100.0 / n as f64;
    let mut prev = h(-50.0);
    let mut lip: f64 = 0.0;
    for i in 1..=n {
        let cur = h(-50.0 + i as f64 * step);
        lip = lip.max((cur - prev).abs() / step);
        prev = cur;
    }
    lip
}

/// Built-in model on the circle, with trigonometric reduction attached.
pub fn builtin_model(which: Builtin) -> Result<ModelSpec> {
    match which {
        Builtin::Kuramoto { k } => {
            if !(k >= 0.0) {
                return Err(Error::InvalidArgument(format!("coupling K must be >= 0, got {k}")));
            }
            Ok(ModelSpec::new(
                format!("kuramoto(K={k})"),
                Arc::new(move |x: f64, _, _| -k * x.cos()),
                Arc::new(move |x: f64, _, _| k * x.sin()),
                Arc::new(move |x: f64, _, _| k * x.cos()),
                Arc::new(|_, w| w),
                Constants { c_f: k, c_g: 1.0, k1: 1, k2: 0 },
                Geometry::Circle,
            )
            .with_fast(TrigReduction { amplitude: -k, weight: Arc::new(|_| 1.0) }))
        }
        Builtin::Daido { b } => {
            let sup = probe_bounded("b", &b)?;
            let (b0, b1, b2) = (b.clone(), b.clone(), b.clone());
            Ok(ModelSpec::new(
                "daido",
                Arc::new(move |x: f64, u, v| b0(u) * b0(v) * x.cos()),
                Arc::new(move |x: f64, u, v| -b1(u) * b1(v) * x.sin()),
                Arc::new(move |x: f64, u, v| -b2(u) * b2(v) * x.cos()),
                Arc::new(|_, w| w),
                Constants { c_f: sup * sup, c_g: 1.0, k1: 1, k2: 0 },
                Geometry::Circle,
            )
            .with_fast(TrigReduction { amplitude: 1.0, weight: b }))
        }
        Builtin::ActiveRotator { k, a } => {
            if !(k >= 0.0) {
                return Err(Error::InvalidArgument(format!("coupling K must be >= 0, got {k}")));
            }
            let sup = probe_bounded("a", &a)?;
            let lip = probe_lipschitz(&a);
            let c_g = (1.0 + sup).max(1.1 * lip);
            let a0 = a.clone();
            Ok(ModelSpec::new(
                format!("active_rotator(K={k})"),
                Arc::new(move |x: f64, _, _| -k * x.cos()),
                Arc::new(move |x: f64, _, _| k * x.sin()),
                Arc::new(move |x: f64, _, _| k * x.cos()),
                Arc::new(move |x: f64, w| 1.0 - a0(w) * x.sin()),
                Constants { c_f: k, c_g, k1: 0, k2: 0 },
                Geometry::Circle,
            )
            .with_fast(TrigReduction { amplitude: -k, weight: Arc::new(|_| 1.0) }))
        }
    }
}

/// Config-level model selection by name and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    #[serde(rename = "K")]
    pub k: f64,
    pub a: DisorderFn,
    pub b: DisorderFn,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            name: "kuramoto".into(),
            k: 1.0,
            a: DisorderFn::Constant { value: 0.5 },
            b: DisorderFn::Constant { value: 1.0 },
        }
    }
}

impl ModelConfig {
    pub fn build(&self) -> Result<ModelSpec> {
        match self.name.as_str() {
            "kuramoto" => builtin_model(Builtin::Kuramoto { k: self.k }),
            "daido" => builtin_model(Builtin::Daido { b: self.b.to_fn() }),
            "active_rotator" => builtin_model(Builtin::ActiveRotator { k: self.k, a: self.a.to_fn() }),
            other => Err(Error::UnknownModel(other.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kuramoto_matches_formulas() {
        let m = builtin_model(Builtin::Kuramoto { k: 1.0 }).unwrap();
        assert_eq!((m.f)(0.3, 1.0, -1.0), -(0.3f64).cos());
        assert_eq!((m.g)(2.0, 0.7), 0.7);
        assert_eq!((m.c_f, m.k1, m.k2), (1.0, 1, 0));
        assert_eq!(m.geometry, Geometry::Circle);
        assert!(m.fast.is_some());
        assert_eq!(m.self_curvature(0.4), 1.0);
    }

    #[test]
    fn daido_identity_probe() {
        let m = builtin_model(Builtin::Daido { b: Arc::new(|_| 1.0) }).unwrap();
        assert_eq!((m.f)(0.0, 3.0, -2.0), 1.0);
    }

    #[test]
    fn active_rotator_x_lipschitz_constant() {
        let m = builtin_model(Builtin::ActiveRotator { k: 1.0, a: Arc::new(|_| 0.5) }).unwrap();
        assert!(((m.g)(PI / 2.0, 0.0) - 0.5).abs() < 1e-15);
        let n = 100_000;
        let mut lip: f64 = 0.0;
        for i in 0..n {
            let (x0, x1) = (TWO_PI * i as f64 / n as f64, TWO_PI * (i + 1) as f64 / n as f64);
            lip = lip.max(((m.g)(x1, 0.0) - (m.g)(x0, 0.0)).abs() / (x1 - x0));
        }
        assert!(lip <= 0.5 + 1e-9 && lip <= m.c_g);
    }

    #[test]
    fn unbounded_coefficient_is_rejected() {
        let err = builtin_model(Builtin::Daido { b: Arc::new(|w| w) }).unwrap_err();
        assert!(matches!(err, Error::UnboundedCoefficient(_)));
        let err = builtin_model(Builtin::ActiveRotator { k: 1.0, a: Arc::new(|w: f64| w.exp()) }).unwrap_err();
        assert!(matches!(err, Error::UnboundedCoefficient(_)));
    }

    #[test]
    fn unknown_model_name() {
        let cfg = ModelConfig { name: "ising".into(), ..Default::default() };
        assert!(matches!(cfg.build(), Err(Error::UnknownModel(_))));
    }

    #[test]
    fn disorder_fn_parsing() {
        assert_eq!(DisorderFn::parse("0.5").unwrap(), DisorderFn::Constant { value: 0.5 });
        assert_eq!(DisorderFn::parse("tanh").unwrap(), DisorderFn::Tanh { scale: 1.0 });
        assert_eq!(DisorderFn::parse("sin:2").unwrap(), DisorderFn::Sin { scale: 2.0 });
        assert!(DisorderFn::parse("cosh").is_err());
    }
}
