//! Exact quenched Sanov objects on finite state and disorder spaces:
//! `Λ_N`, its limit `Λ`, the Legendre transform `Λ*` and the entropy rate.
//!
//! Matrices over `E × F` are stored row-major, entry `(x, u)` at
//! `x * F + u`.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rate::{relative_entropy, RateValue};
use crate::rng;

/// Iterates beyond this objective value count as divergence.
pub const LEGENDRE_CAP: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteKernel {
    pub e_size: usize,
    pub f_size: usize,
    /// `ρ^u(x)` at `u * E + x`.
    pub rho: Vec<f64>,
    pub nu: Vec<f64>,
    pub u_seq: Vec<usize>,
}

fn check_probability(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidLaw(format!("{what} has negative or non-finite entries")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidLaw(format!("{what} sums to {s}")));
    }
    Ok(())
}

impl FiniteKernel {
    pub fn new(e_size: usize, f_size: usize, rho: Vec<f64>, nu: Vec<f64>, u_seq: Vec<usize>) -> Result<Self> {
        if !(1..=8).contains(&e_size) || !(1..=8).contains(&f_size) {
            return Err(Error::InvalidArgument(format!("sizes must lie in 1..=8, got {e_size}x{f_size}")));
        }
        if rho.len() != e_size * f_size || nu.len() != f_size {
            return Err(Error::Incompatible("kernel shapes do not match the sizes".into()));
        }
        for u in 0..f_size {
            check_probability(&rho[u * e_size..(u + 1) * e_size], &format!("row {u} of rho"))?;
        }
        check_probability(&nu, "nu")?;
        if let Some(u) = u_seq.iter().find(|u| **u >= f_size) {
            return Err(Error::InvalidArgument(format!("disorder index {u} out of range")));
        }
        Ok(FiniteKernel { e_size, f_size, rho, nu, u_seq })
    }

    pub fn rho(&self, x: usize, u: usize) -> f64 {
        self.rho[u * self.e_size + x]
    }

    /// `ln Σ_x ρ^u(x) e^{φ(x, u)}`, shifted for stability.
    fn log_partition(&self, phi: &[f64], u: usize) -> f64 {
        let f = self.f_size;
        let top = (0..self.e_size).filter(|&x| self.rho(x, u) > 0.0).map(|x| phi[x * f + u]).fold(f64::MIN, f64::max);
        let s: f64 = (0..self.e_size).map(|x| self.rho(x, u) * (phi[x * f + u] - top).exp()).sum();
        top + s.ln()
    }

    fn check_matrix(&self, m: &[f64]) -> Result<()> {
        if m.len() != self.e_size * self.f_size {
            return Err(Error::Incompatible(format!(
                "expected {} entries, got {}",
                self.e_size * self.f_size,
                m.len()
            )));
        }
        Ok(())
    }

    fn reference(&self) -> Vec<f64> {
        let f = self.f_size;
        let mut r = vec![0.0; self.e_size * f];
        for x in 0..self.e_size {
            for u in 0..f {
                r[x * f + u] = self.rho(x, u) * self.nu[u];
            }
        }
        r
    }
}

/// Sequence of length `n` with `round(n ν_u)` copies of each `u`, in blocks.
pub fn proportion_sequence(nu: &[f64], n: usize) -> Vec<usize> {
    let mut seq = Vec::with_capacity(n);
    let mut acc = 0.0;
    for (u, p) in nu.iter().enumerate() {
        acc += p;
        let upto = ((acc * n as f64).round() as usize).min(n);
        seq.resize(upto.max(seq.len()), u);
    }
    seq.resize(n, nu.len().saturating_sub(1));
    seq
}

/// `(1/N) Σ_{i<N} ln Σ_x ρ^{u_i}(x) e^{φ(x, u_i)}`, grouped by disorder value.
pub fn lambda_n(phi: &[f64], k: &FiniteKernel, n: usize) -> Result<f64> {
    k.check_matrix(phi)?;
    if n == 0 || k.u_seq.len() < n {
        return Err(Error::InvalidArgument(format!("need 1 <= N <= {}, got {n}", k.u_seq.len())));
    }
    let mut counts = vec![0usize; k.f_size];
    for &u in &k.u_seq[..n] {
        counts[u] += 1;
    }
    Ok((0..k.f_size).map(|u| counts[u] as f64 / n as f64 * k.log_partition(phi, u)).sum())
}

/// `Σ_u ν_u ln Σ_x ρ^u(x) e^{φ(x, u)}`.
pub fn lambda_limit(phi: &[f64], k: &FiniteKernel) -> Result<f64> {
    k.check_matrix(phi)?;
    Ok((0..k.f_size).map(|u| k.nu[u] * k.log_partition(phi, u)).sum())
}

/// `∇Λ(φ)(x, u) = ν_u ρ^u(x) e^{φ(x,u)} / Σ_y ρ^u(y) e^{φ(y,u)}`.
pub fn gradient(phi: &[f64], k: &FiniteKernel) -> Result<Vec<f64>> {
    k.check_matrix(phi)?;
    let f = k.f_size;
    let mut g = vec![0.0; phi.len()];
    for u in 0..f {
        let z = k.log_partition(phi, u);
        for x in 0..k.e_size {
            g[x * f + u] = k.nu[u] * k.rho(x, u) * (phi[x * f + u] - z).exp();
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Legendre {
    Value { value: f64, iterations: usize, gradient_norm: f64 },
    ExceedsCap { iterations: usize },
}

impl Legendre {
    pub fn value(&self) -> Option<f64> {
        match self {
            Legendre::Value { value, .. } => Some(*value),
            Legendre::ExceedsCap { .. } => None,
        }
    }
}

/// `sup_φ ⟨λ, φ⟩ − Λ(φ)` by gradient ascent with Armijo backtracking.
pub fn legendre(k: &FiniteKernel, lambda: &[f64]) -> Result<Legendre> {
    k.check_matrix(lambda)?;
    check_probability(lambda, "lambda")?;
    let objective = |phi: &[f64]| -> f64 {
        let inner: f64 = lambda.iter().zip(phi).map(|(l, p)| l * p).sum();
        inner - lambda_limit(phi, k).unwrap_or(f64::INFINITY)
    };
    let mut phi = vec![0.0; lambda.len()];
    let mut value = objective(&phi);
    let mut step = 1.0;
    const MAX_ITER: usize = 200_000;
    for it in 0..MAX_ITER {
        let grad: Vec<f64> = lambda.iter().zip(gradient(&phi, k)?).map(|(l, g)| l - g).collect();
        let norm2: f64 = grad.iter().map(|g| g * g).sum();
        if norm2.sqrt() < 1e-11 {
            return Ok(Legendre::Value { value, iterations: it, gradient_norm: norm2.sqrt() });
        }
        loop {
            let trial: Vec<f64> = phi.iter().zip(&grad).map(|(p, g)| p + step * g).collect();
            let v = objective(&trial);
            if v >= value + 1e-4 * step * norm2 {
                phi = trial;
                value = v;
                step *= 2.0;
                break;
            }
            step *= 0.5;
            if step < 1e-300 {
                return Ok(Legendre::Value { value, iterations: it, gradient_norm: norm2.sqrt() });
            }
        }
        if value > LEGENDRE_CAP {
            return Ok(Legendre::ExceedsCap { iterations: it + 1 });
        }
    }
    let grad: Vec<f64> = lambda.iter().zip(gradient(&phi, k)?).map(|(l, g)| l - g).collect();
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    Ok(Legendre::Value { value, iterations: MAX_ITER, gradient_norm: norm })
}

/// `H(λ | ρ ⊗ ν)` when the disorder marginal of `λ` is `ν`, else `+∞`.
pub fn entropy_rate(k: &FiniteKernel, lambda: &[f64]) -> Result<RateValue> {
    k.check_matrix(lambda)?;
    let f = k.f_size;
    for u in 0..f {
        let m: f64 = (0..k.e_size).map(|x| lambda[x * f + u]).sum();
        if (m - k.nu[u]).abs() > 1e-9 {
            return Ok(RateValue::Infinite);
        }
    }
    relative_entropy(lambda, &k.reference())
}

/// Seeded random kernel with full support and a `λ` whose disorder
/// marginal is `ν`.
pub fn random_instance(e_size: usize, f_size: usize, n: usize, seed: u64) -> Result<(FiniteKernel, Vec<f64>)> {
    let mut r = rng::stream(seed, 0);
    let mut simplex = |len: usize| -> Vec<f64> {
        let v: Vec<f64> = (0..len).map(|_| 0.05 + r.gen::<f64>()).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    };
    let rho: Vec<f64> = (0..f_size).flat_map(|_| simplex(e_size)).collect();
    let nu = simplex(f_size);
    let cond: Vec<Vec<f64>> = (0..f_size).map(|_| simplex(e_size)).collect();
    let mut lambda = vec![0.0; e_size * f_size];
    for x in 0..e_size {
        for u in 0..f_size {
            lambda[x * f_size + u] = nu[u] * cond[u][x];
        }
    }
    let u_seq = proportion_sequence(&nu, n);
    Ok((FiniteKernel::new(e_size, f_size, rho, nu, u_seq)?, lambda))
}

/// Outcome of the Sanov checks on one random instance.
#[derive(Debug, Clone, Serialize)]
pub struct SanovTrial {
    pub seed: u64,
    pub legendre: Legendre,
    pub entropy: RateValue,
    pub gap: f64,
    pub identity: bool,
    pub convex: bool,
    pub derivative_error: f64,
    pub derivative: bool,
    pub passed: bool,
}

/// Largest central-difference error of `∇Λ` at `φ`.
pub fn derivative_error(phi: &[f64], k: &FiniteKernel) -> Result<f64> {
    let g = gradient(phi, k)?;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..phi.len() {
        let mut up = phi.to_vec();
        let mut dn = phi.to_vec();
        up[i] += h;
        dn[i] -= h;
        let fd = (lambda_limit(&up, k)? - lambda_limit(&dn, k)?) / (2.0 * h);
        worst = worst.max((fd - g[i]).abs());
    }
    Ok(worst)
}

/// Entropy identity, midpoint convexity and derivative checks for one
/// seeded instance.
pub fn run_trial(e_size: usize, f_size: usize, seed: u64) -> Result<SanovTrial> {
    let (k, lambda) = random_instance(e_size, f_size, 64, seed)?;
    let leg = legendre(&k, &lambda)?;
    let ent = entropy_rate(&k, &lambda)?;
    let gap = match leg {
        Legendre::Value { value, .. } => (value - ent.value()).abs(),
        Legendre::ExceedsCap { .. } => f64::INFINITY,
    };
    let mut r = rng::stream(seed, 1);
    let mut draw = || (0..e_size * f_size).map(|_| 4.0 * r.gen::<f64>() - 2.0).collect::<Vec<f64>>();
    let (a, b) = (draw(), draw());
    let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
    let convex = lambda_limit(&mid, &k)? <= 0.5 * (lambda_limit(&a, &k)? + lambda_limit(&b, &k)?) + 1e-12;
    let derivative_error = derivative_error(&a, &k)?;
    let identity = gap <= 1e-6;
    let derivative = derivative_error <= 1e-6;
    Ok(SanovTrial {
        seed,
        legendre: leg,
        entropy: ent,
        gap,
        identity,
        convex,
        derivative_error,
        derivative,
        passed: identity && convex && derivative,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform2() -> FiniteKernel {
        FiniteKernel::new(2, 2, vec![0.5, 0.5, 0.5, 0.5], vec![0.5, 0.5], vec![0, 1, 1, 0, 0, 1]).unwrap()
    }

    #[test]
    fn constants_pass_through() {
        let k = uniform2();
        assert_eq!(lambda_n(&[0.0; 4], &k, 6).unwrap(), 0.0);
        let c = lambda_n(&[1.7; 4], &k, 5).unwrap();
        assert!((c - 1.7).abs() < 1e-15);
        assert!((lambda_limit(&[-0.4; 4], &k).unwrap() + 0.4).abs() < 1e-15);
    }

    #[test]
    fn two_state_uniform_sum() {
        let k = uniform2();
        let phi: [f64; 4] = [0.3, -1.2, 2.0, 0.1];
        let n = 5;
        let direct: f64 =
            k.u_seq[..n].iter().map(|&u| (0.5 * phi[u].exp() + 0.5 * phi[2 + u].exp()).ln()).sum::<f64>() / n as f64;
        assert!((lambda_n(&phi, &k, n).unwrap() - direct).abs() < 1e-14);
    }

    #[test]
    fn proportion_exact_sequence_hits_the_limit() {
        let nu = vec![0.3, 0.7];
        let k = FiniteKernel::new(3, 2, vec![0.2, 0.3, 0.5, 0.6, 0.2, 0.2], nu.clone(), proportion_sequence(&nu, 10))
            .unwrap();
        let phi = [0.4, -0.2, 1.1, 0.0, -0.7, 0.9];
        assert_eq!(lambda_n(&phi, &k, 10).unwrap(), lambda_limit(&phi, &k).unwrap());
    }

    #[test]
    fn zero_of_the_rate() {
        let k = uniform2();
        let prod = k.reference();
        assert_eq!(entropy_rate(&k, &prod).unwrap(), RateValue::Finite(0.0));
        assert!(legendre(&k, &prod).unwrap().value().unwrap().abs() < 1e-12);
    }

    #[test]
    fn marginal_violation_diverges() {
        let k = uniform2();
        let lam = [0.4, 0.1, 0.4, 0.1];
        assert_eq!(entropy_rate(&k, &lam).unwrap(), RateValue::Infinite);
        assert!(matches!(legendre(&k, &lam).unwrap(), Legendre::ExceedsCap { .. }));
    }

    #[test]
    fn single_atom_entropy() {
        let k = FiniteKernel::new(3, 2, vec![0.2, 0.3, 0.5, 0.6, 0.2, 0.2], vec![0.0, 1.0], vec![1]).unwrap();
        let mut lam = vec![0.0; 6];
        lam[2 * 2 + 1] = 1.0;
        let h = entropy_rate(&k, &lam).unwrap().value();
        assert!((h + 0.2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn random_trials_pass() {
        for s in 0..5 {
            let t = run_trial(3, 2, s).unwrap();
            assert!(t.passed, "{t:?}");
        }
    }
}
