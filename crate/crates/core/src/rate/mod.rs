//! Girsanov functionals, relative entropies and rate functionals evaluated
//! on drift-parameterized flows.

mod flow;
mod girsanov;

pub use flow::{
    averaged_rate, flow_rate_k, kinetic_closed, quenched_rate, DriftFlow, DriftSpec, FlowRate, QuenchedRate, TestBasis,
};
pub use girsanov::{
    discrete_log_likelihood, girsanov_terms, girsanov_terms_pairwise, mc_normalization, pathwise_logdensity_check,
    GirsanovTerms, McNormalization, PathwiseReport,
};

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// Extended nonnegative value; `+∞` is a sentinel, never an overflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateValue {
    Finite(f64),
    Infinite,
}

impl RateValue {
    pub fn value(self) -> f64 {
        match self {
            RateValue::Finite(v) => v,
            RateValue::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, RateValue::Finite(_))
    }

    pub fn scale(self, w: f64) -> RateValue {
        match self {
            RateValue::Finite(v) => RateValue::Finite(w * v),
            RateValue::Infinite if w == 0.0 => RateValue::Finite(0.0),
            RateValue::Infinite => RateValue::Infinite,
        }
    }
}

impl std::ops::Add for RateValue {
    type Output = RateValue;

    fn add(self, other: RateValue) -> RateValue {
        match (self, other) {
            (RateValue::Finite(a), RateValue::Finite(b)) => RateValue::Finite(a + b),
            _ => RateValue::Infinite,
        }
    }
}

impl Serialize for RateValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            RateValue::Finite(v) => s.serialize_f64(*v),
            RateValue::Infinite => s.serialize_str("+inf"),
        }
    }
}

/// `H(ν|ν̃) = Σ ν_i ln(ν_i/ν̃_i)` over common atoms, with `0 ln 0 = 0` and
/// `+∞` when `ν` charges an atom `ν̃` does not.
pub fn relative_entropy(nu: &[f64], reference: &[f64]) -> Result<RateValue> {
    if nu.len() != reference.len() {
        return Err(Error::Incompatible(format!("supports of size {} and {}", nu.len(), reference.len())));
    }
    let mut h = 0.0;
    for (&p, &q) in nu.iter().zip(reference) {
        if p <= 0.0 {
            continue;
        }
        if q <= 0.0 {
            return Ok(RateValue::Infinite);
        }
        h += p * (p / q).ln();
    }
    Ok(RateValue::Finite(h.max(0.0)))
}

/// Relative entropy of two cell densities on the same grid.
pub fn relative_entropy_density(q: &[f64], reference: &[f64], dx: f64) -> Result<RateValue> {
    let a: Vec<f64> = q.iter().map(|v| v * dx).collect();
    let b: Vec<f64> = reference.iter().map(|v| v * dx).collect();
    relative_entropy(&a, &b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_examples() {
        assert_eq!(relative_entropy(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), RateValue::Finite(0.0));
        let h = relative_entropy(&[0.0, 1.0], &[0.5, 0.5]).unwrap().value();
        assert!((h - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(relative_entropy(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), RateValue::Infinite);
        let kl = relative_entropy(&[0.6, 0.4], &[0.5, 0.5]).unwrap().value();
        assert!((kl - (0.6 * 1.2f64.ln() + 0.4 * 0.8f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn sentinel_serializes() {
        assert_eq!(serde_json::to_string(&RateValue::Infinite).unwrap(), "\"+inf\"");
        assert_eq!(serde_json::to_string(&RateValue::Finite(0.5)).unwrap(), "0.5");
    }
}
