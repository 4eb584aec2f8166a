//! Initial laws `γ^ω`, sampled by inverse CDF.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{Fn1, Fn2};
use crate::rng;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

pub(crate) fn norm_cdf(z: f64) -> f64 {
    std_normal().cdf(z)
}

pub(crate) fn norm_quantile(u: f64) -> f64 {
    std_normal().inverse_cdf(u)
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Law of `x₀` given the disorder `ω`.
#[derive(Clone)]
pub enum InitialLaw {
    /// Normal with mean `offset + slope·ω`.
    Gaussian {
        offset: f64,
        slope: f64,
        std: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Point mass at `offset + slope·ω`.
    Dirac {
        offset: f64,
        slope: f64,
    },
    /// User law: quantile `(u, ω) ↦ F_ω^{-1}(u)`, optional CDF, and the
    /// growth data `(τ, C(r))` of the log-MGF bound.
    Custom {
        quantile: Fn2,
        cdf: Option<Fn2>,
        tau: u32,
        c_of_r: Fn1,
    },
}

impl fmt::Debug for InitialLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialLaw::Gaussian { offset, slope, std } => {
                write!(f, "Gaussian {{ offset: {offset}, slope: {slope}, std: {std} }}")
            }
            InitialLaw::Uniform { lo, hi } => write!(f, "Uniform {{ lo: {lo}, hi: {hi} }}"),
            InitialLaw::Dirac { offset, slope } => write!(f, "Dirac {{ offset: {offset}, slope: {slope} }}"),
            InitialLaw::Custom { tau, .. } => write!(f, "Custom {{ tau: {tau} }}"),
        }
    }
}

/// Serializable description of the built-in initial laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitConfig {
    Gaussian {
        #[serde(default)]
        offset: f64,
        #[serde(default)]
        slope: f64,
        std: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    Dirac {
        #[serde(default)]
        offset: f64,
        #[serde(default)]
        slope: f64,
    },
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig::Gaussian { offset: 0.0, slope: 0.0, std: 1.0 }
    }
}

impl InitConfig {
    pub fn build(&self) -> InitialLaw {
        match *self {
            InitConfig::Gaussian { offset, slope, std } => InitialLaw::Gaussian { offset, slope, std },
            InitConfig::Uniform { lo, hi } => InitialLaw::Uniform { lo, hi },
            InitConfig::Dirac { offset, slope } => InitialLaw::Dirac { offset, slope },
        }
    }

    /// `gaussian:OFFSET,STD[,SLOPE]`, `uniform:LO,HI`, `dirac:C[,SLOPE]`.
    pub fn parse(s: &str) -> Option<Self> {
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let nums: Vec<f64> = if args.is_empty() {
            vec![]
        } else {
            args.split(',').map(|t| t.trim().parse::<f64>()).collect::<Result<_, _>>().ok()?
        };
        match (name, nums.as_slice()) {
            ("gaussian", [o, s]) => Some(InitConfig::Gaussian { offset: *o, slope: 0.0, std: *s }),
            ("gaussian", [o, s, k]) => Some(InitConfig::Gaussian { offset: *o, slope: *k, std: *s }),
            ("uniform", [lo, hi]) => Some(InitConfig::Uniform { lo: *lo, hi: *hi }),
            ("uniform_circle", []) => Some(InitConfig::Uniform { lo: 0.0, hi: super::TWO_PI }),
            ("dirac", [c]) => Some(InitConfig::Dirac { offset: *c, slope: 0.0 }),
            ("dirac", [c, k]) => Some(InitConfig::Dirac { offset: *c, slope: *k }),
            _ => None,
        }
    }
}

/// Outcome of [`InitialLaw::validate`].
#[derive(Debug, Clone, Serialize)]
pub struct InitValidation {
    pub quantile_inverts_cdf: bool,
    pub worst_cdf_error: f64,
    pub mgf_bound_holds: bool,
    pub worst_mgf_probe: (f64, f64),
    pub feller_continuous: bool,
    pub feller_gaps: Vec<f64>,
}

impl InitValidation {
    pub fn passed(&self) -> bool {
        self.quantile_inverts_cdf && self.mgf_bound_holds && self.feller_continuous
    }
}

impl InitialLaw {
    pub fn uniform_circle() -> Self {
        InitialLaw::Uniform { lo: 0.0, hi: super::TWO_PI }
    }

    pub fn validate_params(&self) -> crate::Result<()> {
        let bad = |m: String| Err(crate::Error::InvalidLaw(m));
        match *self {
            InitialLaw::Gaussian { offset, slope, std } => {
                if !(std > 0.0) || !offset.is_finite() || !slope.is_finite() {
                    return bad(format!("gaussian initial law needs std > 0, got {std}"));
                }
            }
            InitialLaw::Uniform { lo, hi } => {
                if !(hi > lo) {
                    return bad(format!("uniform initial law needs lo < hi, got [{lo}, {hi}]"));
                }
            }
            InitialLaw::Dirac { offset, slope } => {
                if !offset.is_finite() || !slope.is_finite() {
                    return bad("dirac initial law needs finite parameters".into());
                }
            }
            InitialLaw::Custom { .. } => {}
        }
        Ok(())
    }

    /// `F_ω^{-1}(u)`; this is also the sampler.
    pub fn quantile(&self, u: f64, w: f64) -> f64 {
        match self {
            InitialLaw::Gaussian { offset, slope, std } => offset + slope * w + std * norm_quantile(u),
            InitialLaw::Uniform { lo, hi } => lo + (hi - lo) * u,
            InitialLaw::Dirac { offset, slope } => offset + slope * w,
            InitialLaw::Custom { quantile, .. } => quantile(u, w),
        }
    }

    pub fn cdf(&self, x: f64, w: f64) -> Option<f64> {
        match self {
            InitialLaw::Gaussian { offset, slope, std } => Some(norm_cdf((x - offset - slope * w) / std)),
            InitialLaw::Uniform { lo, hi } => Some(((x - lo) / (hi - lo)).clamp(0.0, 1.0)),
            InitialLaw::Dirac { offset, slope } => Some(if x >= offset + slope * w { 1.0 } else { 0.0 }),
            InitialLaw::Custom { cdf, .. } => cdf.as_ref().map(|c| c(x, w)),
        }
    }

    /// Growth exponent τ of the log-MGF bound.
    pub fn tau(&self) -> u32 {
        match self {
            InitialLaw::Gaussian { slope, .. } | InitialLaw::Dirac { slope, .. } => u32::from(*slope != 0.0),
            InitialLaw::Uniform { .. } => 0,
            InitialLaw::Custom { tau, .. } => *tau,
        }
    }

    /// `C(r)` such that `ℓ_ω(r) ≤ C(r)(1 + |ω|^τ)`.
    pub fn growth_constant(&self, r: f64) -> f64 {
        let r = r.abs();
        match self {
            InitialLaw::Gaussian { offset, slope, std } => {
                (r * offset.abs() + 0.5 * std * std * r * r + std::f64::consts::LN_2).max(r * slope.abs())
            }
            InitialLaw::Uniform { lo, hi } => r * lo.abs().max(hi.abs()),
            InitialLaw::Dirac { offset, slope } => (r * offset.abs()).max(r * slope.abs()),
            InitialLaw::Custom { c_of_r, .. } => c_of_r(r),
        }
    }

    pub fn mgf_bound(&self, r: f64, w: f64) -> f64 {
        self.growth_constant(r) * (1.0 + w.abs().powi(self.tau() as i32))
    }

    /// Exact `ℓ_ω(r) = ln E e^{r|x₀|}` when a closed form exists.
    pub fn log_mgf_abs(&self, r: f64, w: f64) -> Option<f64> {
        match *self {
            InitialLaw::Gaussian { offset, slope, std } => {
                let m = offset + slope * w;
                let s = std;
                let base = 0.5 * r * r * s * s;
                let a = r * m + base + norm_cdf(m / s + r * s).ln();
                let b = -r * m + base + norm_cdf(-m / s + r * s).ln();
                Some(log_sum_exp(a, b))
            }
            InitialLaw::Uniform { lo, hi } => {
                if r == 0.0 {
                    return Some(0.0);
                }
                // ∫ e^{r|x|} over [lo, hi], split at 0.
                let side = |p: f64, q: f64| -> f64 {
                    // ∫_p^q e^{r x} dx for 0 ≤ p ≤ q
                    ((r * q).exp() - (r * p).exp()) / r
                };
                let mut total = 0.0;
                if hi > 0.0 {
                    total += side(lo.max(0.0), hi);
                }
                if lo < 0.0 {
                    total += side((-hi).max(0.0), -lo);
                }
                Some((total / (hi - lo)).ln())
            }
            InitialLaw::Dirac { offset, slope } => Some(r * (offset + slope * w).abs()),
            InitialLaw::Custom { .. } => None,
        }
    }

    /// `ℓ_ω(r)` and its standard error: exact when available, otherwise
    /// seeded Monte Carlo over `samples` draws.
    pub fn ell(&self, r: f64, w: f64, samples: usize, seed: u64) -> (f64, f64) {
        if let Some(v) = self.log_mgf_abs(r, w) {
            return (v, 0.0);
        }
        let mut s = rng::stream(rng::derive_seed(seed, "ell", w.to_bits()), r.to_bits());
        let vals: Vec<f64> =
            (0..samples).map(|_| (r * self.quantile(rng::open_uniform(&mut s), w).abs()).exp()).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean.ln(), (var / n).sqrt() / mean)
    }

    /// Mass of `γ^ω` in each cell `[edges[c], edges[c+1])`. On the circle
    /// the law is wrapped modulo 2π. Returns cell masses and the mass that
    /// fell outside (line only).
    pub fn cell_masses(&self, edges: &[f64], w: f64, periodic: bool) -> Option<(Vec<f64>, f64)> {
        let n = edges.len() - 1;
        if let InitialLaw::Dirac { offset, slope } = *self {
            let mut x = offset + slope * w;
            if periodic {
                x = x.rem_euclid(super::TWO_PI);
            }
            let mut masses = vec![0.0; n];
            match edges.windows(2).position(|e| x >= e[0] && x < e[1]) {
                Some(c) => {
                    masses[c] = 1.0;
                    return Some((masses, 0.0));
                }
                None => return Some((masses, 1.0)),
            }
        }
        self.cdf(0.0, w)?;
        let cdf = |x: f64| self.cdf(x, w).unwrap();
        if !periodic {
            let masses: Vec<f64> = edges.windows(2).map(|e| (cdf(e[1]) - cdf(e[0])).max(0.0)).collect();
            let outside = cdf(edges[0]) + (1.0 - cdf(edges[n]));
            return Some((masses, outside));
        }
        let period = super::TWO_PI;
        // Wrap over enough periods to cover the bulk of the law.
        let lo_q = self.quantile(1e-17, w);
        let hi_q = self.quantile(1.0 - 1e-16, w);
        let k_lo = ((lo_q - edges[n]) / period).floor() as i64 - 1;
        let k_hi = ((hi_q - edges[0]) / period).ceil() as i64 + 1;
        let mut masses = vec![0.0; n];
        for k in k_lo..=k_hi {
            let shift = k as f64 * period;
            for (c, e) in edges.windows(2).enumerate() {
                masses[c] += (cdf(e[1] + shift) - cdf(e[0] + shift)).max(0.0);
            }
        }
        Some((masses, 0.0))
    }

    /// Checks the sampler, the log-MGF control on `(r, ω)` probes, and the
    /// continuity of `ω ↦ ∫φ dγ^ω` along `ω + 1/n`.
    pub fn validate(&self, omegas: &[f64], r_grid: &[f64]) -> InitValidation {
        let mut worst_cdf_error: f64 = 0.0;
        let mut inverts = true;
        let dirac = matches!(self, InitialLaw::Dirac { .. });
        for &w in omegas {
            for i in 1..100 {
                let u = i as f64 / 100.0;
                let x = self.quantile(u, w);
                if let (false, Some(c)) = (dirac, self.cdf(x, w)) {
                    let e = (c - u).abs();
                    worst_cdf_error = worst_cdf_error.max(e);
                    if e > 1e-9 {
                        inverts = false;
                    }
                }
                if !x.is_finite() {
                    inverts = false;
                }
            }
        }
        let mut mgf_ok = true;
        let mut worst = (0.0, 0.0);
        let mut worst_gap = f64::NEG_INFINITY;
        for &w in omegas {
            for &r in r_grid {
                let (ell, se) = self.ell(r, w, 100_000, 0);
                let gap = ell - 3.0 * se - self.mgf_bound(r, w);
                if gap > worst_gap {
                    worst_gap = gap;
                    worst = (r, w);
                }
                if gap > 1e-12 {
                    mgf_ok = false;
                }
            }
        }
        let tests: [fn(f64) -> f64; 3] = [f64::sin, f64::cos, f64::tanh];
        let m = 4000;
        let integral = |w: f64, phi: fn(f64) -> f64| -> f64 {
            (0..m).map(|i| phi(self.quantile((i as f64 + 0.5) / m as f64, w))).sum::<f64>() / m as f64
        };
        let mut feller_gaps = Vec::new();
        let mut feller_ok = true;
        for &w in omegas {
            for phi in tests {
                let base = integral(w, phi);
                let gaps: Vec<f64> =
                    [10.0, 100.0, 1000.0, 10000.0].iter().map(|n| (integral(w + 1.0 / n, phi) - base).abs()).collect();
                if gaps[3] > 1e-2 || gaps[3] > gaps[0] + 1e-12 {
                    feller_ok = false;
                }
                feller_gaps.push(gaps[3]);
            }
        }
        InitValidation {
            quantile_inverts_cdf: inverts,
            worst_cdf_error,
            mgf_bound_holds: mgf_ok,
            worst_mgf_probe: worst,
            feller_continuous: feller_ok,
            feller_gaps,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;
    use std::sync::Arc;

    fn ell_by_quadrature(law: &InitialLaw, r: f64, w: f64) -> f64 {
        let m = 200_000;
        let s: f64 = (0..m).map(|i| (r * law.quantile((i as f64 + 0.5) / m as f64, w).abs()).exp()).sum();
        (s / m as f64).ln()
    }

    #[test]
    fn gaussian_log_mgf_matches_density_quadrature() {
        let law = InitialLaw::Gaussian { offset: 0.3, slope: 0.5, std: 0.8 };
        for &(r, w) in &[(1.0, 0.0), (2.0, -1.0), (4.0, 2.0), (0.5, 3.0)] {
            let m = 0.3 + 0.5 * w;
            let q = quad::integrate(
                |x: f64| {
                    (r * x.abs()).exp() * (-0.5 * ((x - m) / 0.8).powi(2)).exp()
                        / (0.8 * (2.0 * std::f64::consts::PI).sqrt())
                },
                m - 40.0,
                m + 40.0,
                1e-10,
            );
            let exact = law.log_mgf_abs(r, w).unwrap();
            assert!((exact - q.value.ln()).abs() < 1e-8, "r={r} w={w}: {exact} vs {}", q.value.ln());
        }
    }

    #[test]
    fn uniform_log_mgf_matches_midpoint_rule() {
        for law in [InitialLaw::Uniform { lo: -1.0, hi: 2.0 }, InitialLaw::Uniform { lo: 0.0, hi: 6.0 }] {
            for r in [1.0, 2.0, 4.0] {
                let exact = law.log_mgf_abs(r, 0.0).unwrap();
                assert!((exact - ell_by_quadrature(&law, r, 0.0)).abs() < 1e-6);
            }
        }
        let circle = InitialLaw::uniform_circle();
        let r = 1.5;
        let tp = super::super::TWO_PI;
        let closed = (((tp * r).exp() - 1.0) / (tp * r)).ln();
        assert!((circle.log_mgf_abs(r, 0.0).unwrap() - closed).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_ell_agrees_with_exact() {
        let exact = InitialLaw::Gaussian { offset: 0.0, slope: 0.0, std: 1.0 };
        let custom = InitialLaw::Custom {
            quantile: Arc::new(|u, _| norm_quantile(u)),
            cdf: Some(Arc::new(|x, _| norm_cdf(x))),
            tau: 0,
            c_of_r: Arc::new(|r| 0.5 * r * r + std::f64::consts::LN_2),
        };
        let (mc, se) = custom.ell(1.0, 0.0, 100_000, 3);
        let e = exact.log_mgf_abs(1.0, 0.0).unwrap();
        assert!(se > 0.0 && (mc - e).abs() < 4.0 * se, "{mc} vs {e} (se {se})");
    }

    #[test]
    fn builtin_laws_validate() {
        let omegas = [-2.0, -0.5, 0.0, 1.0, 3.0];
        let rs = [1.0, 2.0, 4.0, 8.0];
        for law in [
            InitialLaw::Gaussian { offset: 0.2, slope: 0.7, std: 0.5 },
            InitialLaw::Uniform { lo: -1.0, hi: 1.0 },
            InitialLaw::uniform_circle(),
            InitialLaw::Dirac { offset: 1.0, slope: -0.5 },
        ] {
            let v = law.validate(&omegas, &rs);
            assert!(v.passed(), "{law:?}: {v:?}");
        }
    }

    #[test]
    fn wrapped_cell_masses_sum_to_one() {
        let law = InitialLaw::Gaussian { offset: 1.0, slope: 0.0, std: 3.0 };
        let n = 64;
        let edges: Vec<f64> = (0..=n).map(|i| super::super::TWO_PI * i as f64 / n as f64).collect();
        let (m, out) = law.cell_masses(&edges, 0.0, true).unwrap();
        assert_eq!(out, 0.0);
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parse_init_config() {
        assert_eq!(
            InitConfig::parse("gaussian:0,0.5"),
            Some(InitConfig::Gaussian { offset: 0.0, slope: 0.0, std: 0.5 })
        );
        assert_eq!(InitConfig::parse("uniform:0,1"), Some(InitConfig::Uniform { lo: 0.0, hi: 1.0 }));
        assert!(InitConfig::parse("cauchy:0,1").is_none());
    }
}
