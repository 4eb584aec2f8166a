//! Adaptive Simpson quadrature with a convergence flag.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub converged: bool,
}

fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    ok: &mut bool,
) -> f64 {
    let (lm, flm, left) = simpson(f, a, fa, m, fm);
    let (rm, frm, right) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 {
        if delta.abs() > 15.0 * tol {
            *ok = false;
        }
        return left + right + delta / 15.0;
    }
    if delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    recurse(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1, ok)
        + recurse(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1, ok)
}

/// Integral of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Quadrature {
    if a == b {
        return Quadrature { value: 0.0, converged: true };
    }
    // Seed with a few panels so narrow features are not skipped.
    let panels = 16;
    let h = (b - a) / panels as f64;
    let mut ok = true;
    let mut value = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let hi = if p + 1 == panels { b } else { lo + h };
        let (flo, fhi) = (f(lo), f(hi));
        let (m, fm, whole) = simpson(&f, lo, flo, hi, fhi);
        value += recurse(&f, lo, flo, hi, fhi, m, fm, whole, tol / panels as f64, 40, &mut ok);
    }
    Quadrature { value, converged: ok && value.is_finite() }
}

/// Integral over consecutive intervals between sorted `breaks`.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: F, breaks: &[f64], tol: f64) -> Quadrature {
    let mut out = Quadrature { value: 0.0, converged: true };
    let pieces = breaks.len().saturating_sub(1).max(1);
    for w in breaks.windows(2) {
        let q = integrate(&f, w[0], w[1], tol / pieces as f64);
        out.value += q.value;
        out.converged &= q.converged;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_and_gaussian() {
        let q = integrate(|x| x * x, 0.0, 1.0, 1e-12);
        assert!(q.converged && (q.value - 1.0 / 3.0).abs() < 1e-12);
        let g = integrate(|x| (-0.5 * x * x).exp(), -12.0, 12.0, 1e-12);
        assert!((g.value - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn kinks_split_at_breaks() {
        let q = integrate_pieces(|x: f64| x.abs(), &[-1.0, 0.0, 2.0], 1e-12);
        assert!((q.value - 2.5).abs() < 1e-12);
    }
}
