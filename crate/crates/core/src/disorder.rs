//! Frozen disorder sequences, their target laws, truncation and
//! convergence diagnostics.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::empirical::dudley_distance_line;
use crate::error::{Error, Result};
use crate::model::{InitialLaw, ModelSpec};
use crate::quad::{self, Quadrature};
use crate::rng;

/// Default number of quantile atoms for continuous laws.
pub const QUANTIZATION_ATOMS: usize = 64;

/// Target law `μ` of the disorder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Law {
    Atomic {
        atoms: Vec<(f64, f64)>,
    },
    Gaussian {
        mean: f64,
        std: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// `P(+1) = alpha`, `P(−1) = 1 − alpha`.
    Binary {
        alpha: f64,
    },
    /// Push-forward of `base` by `χ_M`.
    Truncated {
        base: Box<Law>,
        m: f64,
    },
}

pub fn clamp(w: f64, m: f64) -> f64 {
    w.min(m).max(-m)
}

fn merge_atoms(mut atoms: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
    for (v, w) in atoms {
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 += w,
            _ => out.push((v, w)),
        }
    }
    out.retain(|a| a.1 > 0.0);
    out
}

impl Law {
    /// `gaussian:M,S`, `uniform:A,B`, `binary:ALPHA`, `dirac:V`,
    /// `atomic:V@W;V@W`. `name(args)` is accepted as well.
    pub fn parse(s: &str) -> Result<Law> {
        let bad = || Error::InvalidLaw(format!("cannot parse `{s}`"));
        let (name, args) = match s.strip_suffix(')').and_then(|t| t.split_once('(')) {
            Some(p) => p,
            None => s.split_once(':').unwrap_or((s, "")),
        };
        let nums =
            || -> Result<Vec<f64>> { args.split(',').map(|t| t.trim().parse::<f64>().map_err(|_| bad())).collect() };
        let law = match name {
            "gaussian" => match nums()?.as_slice() {
                [m, sd] => Law::Gaussian { mean: *m, std: *sd },
                _ => return Err(bad()),
            },
            "uniform" => match nums()?.as_slice() {
                [a, b] => Law::Uniform { lo: *a, hi: *b },
                _ => return Err(bad()),
            },
            "binary" => match nums()?.as_slice() {
                [a] => Law::Binary { alpha: *a },
                _ => return Err(bad()),
            },
            "dirac" => match nums()?.as_slice() {
                [v] => Law::Atomic { atoms: vec![(*v, 1.0)] },
                _ => return Err(bad()),
            },
            "atomic" => {
                let atoms = args
                    .split(';')
                    .map(|p| {
                        let (v, w) = p.split_once('@').ok_or_else(bad)?;
                        Ok((v.trim().parse().map_err(|_| bad())?, w.trim().parse().map_err(|_| bad())?))
                    })
                    .collect::<Result<Vec<(f64, f64)>>>()?;
                Law::Atomic { atoms }
            }
            _ => return Err(bad()),
        };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidLaw(m));
        match self {
            Law::Atomic { atoms } => {
                if atoms.is_empty() {
                    return bad("atomic law has no atoms".into());
                }
                if atoms.iter().any(|a| !a.0.is_finite() || !(a.1 >= 0.0)) {
                    return bad("atomic law needs finite points and non-negative weights".into());
                }
                let total: f64 = atoms.iter().map(|a| a.1).sum();
                if (total - 1.0).abs() > 1e-12 {
                    return bad(format!("atomic weights sum to {total}, not 1"));
                }
            }
            Law::Gaussian { mean, std } => {
                if !mean.is_finite() || !(*std > 0.0) {
                    return bad(format!("gaussian needs std > 0, got {std}"));
                }
            }
            Law::Uniform { lo, hi } => {
                if !(hi > lo) {
                    return bad(format!("uniform needs lo < hi, got [{lo}, {hi}]"));
                }
            }
            Law::Binary { alpha } => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return bad(format!("binary needs alpha in (0,1), got {alpha}"));
                }
            }
            Law::Truncated { base, m } => {
                if !(*m > 0.0) {
                    return bad(format!("truncation level must be > 0, got {m}"));
                }
                base.validate()?;
            }
        }
        Ok(())
    }

    /// Atoms when the law is finitely supported.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            Law::Atomic { atoms } => Some(merge_atoms(atoms.clone())),
            Law::Binary { alpha } => Some(vec![(-1.0, 1.0 - alpha), (1.0, *alpha)]),
            Law::Truncated { base, m } => {
                base.atoms().map(|a| merge_atoms(a.into_iter().map(|(v, w)| (clamp(v, *m), w)).collect()))
            }
            _ => None,
        }
    }

    pub fn is_atomic(&self) -> bool {
        self.atoms().is_some()
    }

    /// `F_μ^{-1}(u) = inf{v : F(v) ≥ u}`.
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            Law::Gaussian { mean, std } => Normal::new(*mean, *std).expect("validated").inverse_cdf(u),
            Law::Uniform { lo, hi } => lo + (hi - lo) * u,
            Law::Truncated { base, m } => clamp(base.quantile(u), *m),
            _ => {
                let atoms = self.atoms().expect("atomic");
                let mut acc = 0.0;
                for (v, w) in &atoms {
                    acc += w;
                    if acc >= u {
                        return *v;
                    }
                }
                atoms.last().unwrap().0
            }
        }
    }

    pub fn cdf(&self, v: f64) -> f64 {
        match self {
            Law::Gaussian { mean, std } => Normal::new(*mean, *std).expect("validated").cdf(v),
            Law::Uniform { lo, hi } => ((v - lo) / (hi - lo)).clamp(0.0, 1.0),
            Law::Truncated { base, m } => {
                if v < -m {
                    0.0
                } else if v >= *m {
                    1.0
                } else {
                    base.cdf(v)
                }
            }
            _ => self.atoms().unwrap().iter().filter(|a| a.0 <= v).map(|a| a.1).sum(),
        }
    }

    /// `∫_a^b h dμ` for laws with a density.
    fn density_integral<H: Fn(f64) -> f64>(&self, h: &H, a: f64, b: f64, tol: f64) -> Quadrature {
        match *self {
            Law::Gaussian { mean, std } => {
                let dens = |x: f64| {
                    let z = (x - mean) / std;
                    (-0.5 * z * z).exp() / (std * (2.0 * std::f64::consts::PI).sqrt())
                };
                quad::integrate(|x| h(x) * dens(x), a, b, tol)
            }
            Law::Uniform { lo, hi } => {
                let q = quad::integrate(h, a, b, tol * (hi - lo));
                Quadrature { value: q.value / (hi - lo), converged: q.converged }
            }
            _ => unreachable!("only called for laws with a density"),
        }
    }

    /// `∫h dμ`: exact for atomic laws, adaptive quadrature otherwise.
    pub fn expectation<H: Fn(f64) -> f64>(&self, h: H, tol: f64) -> Quadrature {
        self.expect_dyn(&h, tol)
    }

    fn expect_dyn(&self, h: &dyn Fn(f64) -> f64, tol: f64) -> Quadrature {
        if let Some(atoms) = self.atoms() {
            return Quadrature { value: atoms.iter().map(|(v, w)| w * h(*v)).sum(), converged: true };
        }
        match self {
            Law::Gaussian { .. } | Law::Uniform { .. } => {
                let (a, b) = self.support_hint();
                self.density_integral(&h, a, b, tol)
            }
            Law::Truncated { base, m } => match **base {
                Law::Gaussian { .. } | Law::Uniform { .. } => {
                    // Clamped mass sits at ±M; the rest keeps its density.
                    let (lo_mass, hi_mass) = (base.cdf(-m), 1.0 - base.cdf(*m));
                    let (lo_b, hi_b) = base.support_hint();
                    let (a, b) = ((-m).max(lo_b), m.min(hi_b));
                    let inner = if a < b {
                        base.density_integral(&h, a, b, tol)
                    } else {
                        Quadrature { value: 0.0, converged: true }
                    };
                    Quadrature { value: lo_mass * h(-m) + hi_mass * h(*m) + inner.value, converged: inner.converged }
                }
                _ => base.expect_dyn(&|x| h(clamp(x, *m)), tol),
            },
            _ => unreachable!("atomic laws handled above"),
        }
    }

    fn support_hint(&self) -> (f64, f64) {
        match self {
            Law::Gaussian { mean, std } => (mean - 14.0 * std, mean + 14.0 * std),
            Law::Uniform { lo, hi } => (*lo, *hi),
            Law::Truncated { m, .. } => (-m, *m),
            _ => {
                let a = self.atoms().unwrap();
                (a[0].0, a[a.len() - 1].0)
            }
        }
    }

    /// Atomic representation: the atoms themselves, or `m` quantile atoms
    /// `F^{-1}((j − ½)/m)` with weights `1/m`.
    pub fn quantize(&self, m: usize) -> Vec<(f64, f64)> {
        if let Some(a) = self.atoms() {
            return a;
        }
        merge_atoms((0..m).map(|j| (self.quantile((j as f64 + 0.5) / m as f64), 1.0 / m as f64)).collect())
    }

    pub fn truncate(&self, m: f64) -> Law {
        match self {
            Law::Atomic { atoms } => {
                Law::Atomic { atoms: merge_atoms(atoms.iter().map(|&(v, w)| (clamp(v, m), w)).collect()) }
            }
            Law::Binary { .. } if m >= 1.0 => self.clone(),
            Law::Truncated { base, m: m0 } if *m0 <= m => Law::Truncated { base: base.clone(), m: *m0 },
            Law::Truncated { base, .. } => Law::Truncated { base: base.clone(), m },
            _ => Law::Truncated { base: Box::new(self.clone()), m },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceMode {
    Iid { seed: u64 },
    Quantile,
}

impl SequenceMode {
    /// `quantile` or `iid:SEED`.
    pub fn parse(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "quantile" => Ok(SequenceMode::Quantile),
            Some(("iid", seed)) => seed
                .trim()
                .parse()
                .map(|seed| SequenceMode::Iid { seed })
                .map_err(|_| Error::InvalidArgument(format!("bad iid seed in `{s}`"))),
            _ => Err(Error::InvalidArgument(format!("disorder mode must be `quantile` or `iid:SEED`, got `{s}`"))),
        }
    }
}

/// Frozen `ω₁..ω_N` with target law and diagnostic exponents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderSequence {
    pub omegas: Vec<f64>,
    pub mu: Law,
    /// Moment exponent ι.
    pub iota: f64,
    /// Hölder exponent `p > 1` of the `ℓ` convergence.
    pub p: f64,
}

pub fn make_sequence(mu: &Law, n: usize, mode: SequenceMode) -> Result<DisorderSequence> {
    mu.validate()?;
    if n == 0 {
        return Err(Error::EmptySequence);
    }
    let omegas = match (mode, mu) {
        (SequenceMode::Quantile, Law::Binary { alpha }) => {
            let minus = ((1.0 - alpha) * n as f64 + 0.5).floor() as usize;
            (0..n).map(|i| if i < minus { -1.0 } else { 1.0 }).collect()
        }
        (SequenceMode::Quantile, _) => (0..n).map(|i| mu.quantile((i as f64 + 0.5) / n as f64)).collect(),
        (SequenceMode::Iid { seed }, _) => {
            let mut s = rng::stream(rng::derive_seed(seed, "disorder", 0), 0);
            (0..n).map(|_| mu.quantile(rng::open_uniform(&mut s))).collect()
        }
    };
    Ok(DisorderSequence { omegas, mu: mu.clone(), iota: 2.0, p: 2.0 })
}

impl DisorderSequence {
    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn with_exponents(mut self, iota: f64, p: f64) -> Self {
        self.iota = iota;
        self.p = p;
        self
    }

    /// Constant sequence with `μ = δ_ω`.
    pub fn constant(w: f64, n: usize) -> Self {
        DisorderSequence { omegas: vec![w; n], mu: Law::Atomic { atoms: vec![(w, 1.0)] }, iota: 2.0, p: 2.0 }
    }

    /// Sequence given explicitly, with its empirical law as target.
    pub fn from_values(omegas: Vec<f64>) -> Self {
        let n = omegas.len() as f64;
        let mu = Law::Atomic { atoms: merge_atoms(omegas.iter().map(|&w| (w, 1.0 / n)).collect()) };
        DisorderSequence { omegas, mu, iota: 2.0, p: 2.0 }
    }

    /// `ι > k1`, `ι > τ`, `ι ≥ k2 + 1`, `p > 1`.
    pub fn check_pairing(&self, m: &ModelSpec, init: &InitialLaw) -> Result<()> {
        let tau = f64::from(init.tau());
        let (k1, k2) = (f64::from(m.k1), f64::from(m.k2));
        if !(self.iota > k1 && self.iota > tau && self.iota >= k2 + 1.0) {
            return Err(Error::Incompatible(format!(
                "moment exponent iota = {} must exceed k1 = {k1} and tau = {tau} and be >= k2 + 1 = {}",
                self.iota,
                k2 + 1.0
            )));
        }
        if !(self.p > 1.0) {
            return Err(Error::Incompatible(format!("Hölder exponent p = {} must be > 1", self.p)));
        }
        Ok(())
    }
}

/// `χ_M` applied entrywise; target law becomes `μ_M`.
pub fn truncate(seq: &DisorderSequence, m: f64) -> DisorderSequence {
    DisorderSequence {
        omegas: seq.omegas.iter().map(|&w| clamp(w, m)).collect(),
        mu: seq.mu.truncate(m),
        iota: seq.iota,
        p: seq.p,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Gap {
    pub empirical: f64,
    pub target: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EllGap {
    pub r: f64,
    pub empirical: f64,
    pub target: f64,
    pub gap: f64,
    /// Monte-Carlo standard error of `ℓ` (0 when exact).
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub n: usize,
    pub moment: Gap,
    pub ell: Vec<EllGap>,
    pub dudley: f64,
    pub quantization_atoms: usize,
    pub quadrature_converged: bool,
}

/// Empirical vs target moments, `ℓ^p` averages and the Dudley distance to
/// the `m`-atom quantization of `μ`.
pub fn convergence_diagnostics(
    seq: &DisorderSequence,
    init: &InitialLaw,
    r_grid: &[f64],
    m: usize,
) -> Result<DiagnosticsReport> {
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    let n = seq.len() as f64;
    let iota = seq.iota;
    let emp_moment = seq.omegas.iter().map(|w| w.abs().powf(iota)).sum::<f64>() / n;
    let target = seq.mu.expectation(|w| w.abs().powf(iota), 1e-12);
    let mut converged = target.converged;
    let moment = Gap { empirical: emp_moment, target: target.value, gap: (emp_moment - target.value).abs() };
    let p = seq.p;
    let ell = r_grid
        .iter()
        .map(|&r| {
            let mut se_max: f64 = 0.0;
            let emp = seq
                .omegas
                .iter()
                .map(|&w| {
                    let (v, se) = init.ell(r, w, 100_000, 0);
                    se_max = se_max.max(se);
                    v.powf(p)
                })
                .sum::<f64>()
                / n;
            let t = seq.mu.expectation(|w| init.ell(r, w, 100_000, 0).0.powf(p), 1e-10 * emp.abs().max(1.0));
            converged &= t.converged;
            EllGap { r, empirical: emp, target: t.value, gap: (emp - t.value).abs(), stderr: se_max }
        })
        .collect();
    let quantized = seq.mu.quantize(m);
    // Counts first, so repeated values carry exactly `count / N`.
    let emp_atoms: Vec<(f64, f64)> =
        merge_atoms(seq.omegas.iter().map(|&w| (w, 1.0)).collect()).into_iter().map(|(w, c)| (w, c / n)).collect();
    let dudley = dudley_distance_line(&emp_atoms, &quantized);
    Ok(DiagnosticsReport {
        n: seq.len(),
        moment,
        ell,
        dudley,
        quantization_atoms: quantized.len(),
        quadrature_converged: converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn law_strings() {
        assert_eq!(Law::parse("gaussian:0,1").unwrap(), Law::Gaussian { mean: 0.0, std: 1.0 });
        assert_eq!(Law::parse("gaussian(0, 1)").unwrap(), Law::parse("gaussian:0,1").unwrap());
        assert_eq!(Law::parse("binary(0.3)").unwrap(), Law::Binary { alpha: 0.3 });
        assert_eq!(
            Law::parse("atomic:-1@0.25;2@0.75").unwrap(),
            Law::Atomic { atoms: vec![(-1.0, 0.25), (2.0, 0.75)] }
        );
        assert!(Law::parse("binary:1.5").is_err());
        assert!(Law::parse("cauchy:0,1").is_err());
        assert!(Law::parse("gaussian(0,1").is_err());
    }

    #[test]
    fn binary_quantile_split() {
        let s = make_sequence(&Law::Binary { alpha: 0.5 }, 4, SequenceMode::Quantile).unwrap();
        assert_eq!(s.omegas, vec![-1.0, -1.0, 1.0, 1.0]);
        let s = make_sequence(&Law::Binary { alpha: 0.3 }, 10, SequenceMode::Quantile).unwrap();
        assert_eq!(s.omegas.iter().filter(|w| **w < 0.0).count(), 7);
    }

    #[test]
    fn uniform_quantile_points() {
        let s = make_sequence(&Law::Uniform { lo: 0.0, hi: 1.0 }, 2, SequenceMode::Quantile).unwrap();
        assert_eq!(s.omegas, vec![0.25, 0.75]);
    }

    #[test]
    fn gaussian_iid_mean_within_clt_envelope() {
        let n = 10_000;
        let s = make_sequence(&Law::Gaussian { mean: 0.0, std: 1.0 }, n, SequenceMode::Iid { seed: 7 }).unwrap();
        let mean = s.omegas.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() <= 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(
            make_sequence(&Law::Binary { alpha: 0.5 }, 0, SequenceMode::Quantile),
            Err(Error::EmptySequence)
        ));
        assert!(make_sequence(&Law::Gaussian { mean: 0.0, std: -1.0 }, 3, SequenceMode::Quantile).is_err());
        assert!(make_sequence(&Law::Atomic { atoms: vec![(0.0, 0.4)] }, 3, SequenceMode::Quantile).is_err());
    }

    #[test]
    fn clamp_definition() {
        assert_eq!(clamp(3.0, 2.0), 2.0);
        assert_eq!(clamp(-5.0, 2.0), -2.0);
        assert_eq!(clamp(1.0, 2.0), 1.0);
    }

    #[test]
    fn binary_unchanged_by_wide_truncation() {
        let s = make_sequence(&Law::Binary { alpha: 0.5 }, 6, SequenceMode::Quantile).unwrap();
        assert_eq!(truncate(&s, 2.0), s);
    }

    #[test]
    fn clamped_fraction_matches_normal_tail() {
        let s = make_sequence(&Law::Gaussian { mean: 0.0, std: 1.0 }, 100, SequenceMode::Quantile).unwrap();
        let t = truncate(&s, 1.0);
        let clamped = s.omegas.iter().zip(&t.omegas).filter(|(a, b)| a != b).count() as f64 / 100.0;
        let tail = 2.0
            * (1.0 - crate::model::InitialLaw::Gaussian { offset: 0.0, slope: 0.0, std: 1.0 }.cdf(1.0, 0.0).unwrap());
        assert!((clamped - tail).abs() <= 1.0 / 100.0 + 1e-12, "{clamped} vs {tail}");
        assert!((tail - 0.3174).abs() < 1e-4);
    }

    #[test]
    fn truncated_law_expectation_accounts_for_clamped_mass() {
        let law = Law::Gaussian { mean: 0.0, std: 1.0 }.truncate(1.0);
        let e = law.expectation(|w| w * w, 1e-12);
        // E[min(Z², 1)] = P(|Z|≤1)·E[Z²; |Z|≤1]/P + P(|Z|>1)
        let n = Normal::new(0.0, 1.0).unwrap();
        let phi1 = (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let inner = (n.cdf(1.0) - n.cdf(-1.0)) - 2.0 * phi1;
        let outer = 2.0 * (1.0 - n.cdf(1.0));
        assert!((e.value - (inner + outer)).abs() < 1e-10);
    }

    #[test]
    fn moment_examples() {
        let init = InitialLaw::Gaussian { offset: 0.0, slope: 0.0, std: 1.0 };
        let s = make_sequence(&Law::Binary { alpha: 0.3 }, 50, SequenceMode::Quantile).unwrap();
        let d = convergence_diagnostics(&s, &init, &[1.0], 64).unwrap();
        assert_eq!(d.moment.empirical, 1.0);
        assert_eq!(d.moment.target, 1.0);
        let u = make_sequence(&Law::Uniform { lo: 0.0, hi: 1.0 }, 100, SequenceMode::Quantile).unwrap();
        let d = convergence_diagnostics(&u, &init, &[1.0], 64).unwrap();
        assert!((d.moment.empirical - 1.0 / 3.0).abs() <= 1e-3);
        assert!(d.moment.gap <= 1.0 / (12.0 * 100.0 * 100.0) + 1e-12);
    }

    #[test]
    fn degenerate_law_has_zero_gaps() {
        let init = InitialLaw::Gaussian { offset: 0.0, slope: 1.0, std: 0.5 };
        for n in [1, 7, 100] {
            let s = make_sequence(&Law::Atomic { atoms: vec![(0.0, 1.0)] }, n, SequenceMode::Quantile).unwrap();
            let d = convergence_diagnostics(&s, &init, &[1.0, 2.0, 4.0, 8.0], 64).unwrap();
            assert_eq!(d.moment.gap, 0.0);
            assert!(d.ell.iter().all(|e| e.gap <= 1e-12));
            assert_eq!(d.dudley, 0.0);
        }
    }

    #[test]
    fn pairing_constraints() {
        let m = crate::model::builtin_model(crate::model::Builtin::Kuramoto { k: 1.0 }).unwrap();
        let init = InitialLaw::Gaussian { offset: 0.0, slope: 1.0, std: 1.0 };
        let s = DisorderSequence::constant(0.0, 3);
        assert!(s.check_pairing(&m, &init).is_ok());
        assert!(s.clone().with_exponents(1.0, 2.0).check_pairing(&m, &init).is_err());
        assert!(s.with_exponents(2.0, 1.0).check_pairing(&m, &init).is_err());
    }
}
