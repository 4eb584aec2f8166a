//! Empirical measures and flows built from path ensembles, and distances
//! between atomic measures.

mod dudley;
mod mcf;

pub use dudley::{dudley_distance, dudley_distance_line, metric, wasserstein1_line, ATOM_BUDGET};

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Geometry, TWO_PI};
use crate::simulate::PathEnsemble;

/// Finitely supported probability measure on `ℝ^dim`; coordinates with a
/// period are circles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AtomicMeasure {
    pub dim: usize,
    pub periods: Vec<Option<f64>>,
    /// Row-major `len × dim`.
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl AtomicMeasure {
    pub fn new(dim: usize, periods: Vec<Option<f64>>, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || periods.len() != dim || points.len() != dim * weights.len() {
            return Err(Error::Incompatible("atomic measure shape mismatch".into()));
        }
        if points.iter().any(|p| p.is_nan()) || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidArgument("atomic measure has NaN points or negative weights".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
        }
        Ok(AtomicMeasure { dim, periods, points, weights })
    }

    /// Measure on the line from `(point, weight)` pairs.
    pub fn line(atoms: &[(f64, f64)]) -> Result<Self> {
        AtomicMeasure::new(1, vec![None], atoms.iter().map(|a| a.0).collect(), atoms.iter().map(|a| a.1).collect())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (0..self.dim).map(|d| format!("x{d}")).collect();
        header.push("weight".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.point(i).iter().map(|v| format!("{v:e}")).collect();
            row.push(format!("{:e}", self.weights[i]));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn period_of(geometry: Geometry) -> Option<f64> {
    match geometry {
        Geometry::Line => None,
        Geometry::Circle => Some(TWO_PI),
    }
}

/// Weighted atoms on `(path, ω)`; `disorder` is `None` for the global
/// measure that forgets ω.
#[derive(Debug, Clone, PartialEq)]
pub struct PathMeasure {
    pub steps: usize,
    pub dt: f64,
    /// Row-major `len × (steps + 1)`.
    pub paths: Vec<f64>,
    pub disorder: Option<Vec<f64>>,
    pub weights: Vec<f64>,
    pub geometry: Geometry,
}

impl PathMeasure {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn path(&self, i: usize) -> &[f64] {
        let w = self.steps + 1;
        &self.paths[i * w..(i + 1) * w]
    }

    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn omega(&self, i: usize) -> f64 {
        self.disorder.as_ref().map_or(0.0, |d| d[i])
    }

    /// Time-`step` marginal on `(x, ω)` (or `x` alone without disorder).
    /// Circle coordinates are reduced to `[0, 2π)`.
    pub fn slice(&self, step: usize) -> AtomicMeasure {
        let wrap = |x: f64| self.geometry.wrap(x);
        let period = period_of(self.geometry);
        match &self.disorder {
            Some(d) => {
                let mut pts = Vec::with_capacity(2 * self.len());
                for i in 0..self.len() {
                    pts.push(wrap(self.path(i)[step]));
                    pts.push(d[i]);
                }
                AtomicMeasure { dim: 2, periods: vec![period, None], points: pts, weights: self.weights.clone() }
            }
            None => AtomicMeasure {
                dim: 1,
                periods: vec![period],
                points: (0..self.len()).map(|i| wrap(self.path(i)[step])).collect(),
                weights: self.weights.clone(),
            },
        }
    }

    /// Index of grid time `t`.
    pub fn step_of(&self, t: f64) -> Result<usize> {
        let k = (t / self.dt).round();
        if k < 0.0 || k as usize > self.steps || (k * self.dt - t).abs() > 1e-9 * self.horizon().max(1.0) {
            return Err(Error::OffGrid(t));
        }
        Ok(k as usize)
    }
}

/// `(1/N) Σ δ_{(x_i, ω_i)}`; duplicates kept as separate atoms.
pub fn empirical_measure(e: &PathEnsemble) -> PathMeasure {
    let n = e.n();
    PathMeasure {
        steps: e.steps,
        dt: e.dt,
        paths: e.states.clone(),
        disorder: Some(e.disorder.omegas.clone()),
        weights: vec![1.0 / n as f64; n],
        geometry: e.geometry,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowSnapshot {
    pub t: f64,
    pub measure: AtomicMeasure,
}

/// Time slices of the empirical measure at the requested grid times.
pub fn empirical_flow(e: &PathEnsemble, times: &[f64]) -> Result<Vec<FlowSnapshot>> {
    let lm = empirical_measure(e);
    times.iter().map(|&t| Ok(FlowSnapshot { t, measure: lm.slice(lm.step_of(t)?) })).collect()
}

/// Global measure (disorder dropped) and the local measures of the `±1`
/// populations.
#[derive(Debug, Clone)]
pub struct GlobalLocal {
    pub global: PathMeasure,
    pub plus: Option<PathMeasure>,
    pub minus: Option<PathMeasure>,
    pub n_plus: usize,
    pub n_minus: usize,
    pub in_yp: bool,
}

impl GlobalLocal {
    pub fn plus(&self) -> Result<&PathMeasure> {
        self.plus.as_ref().ok_or(Error::EmptyPopulation(1))
    }

    pub fn minus(&self) -> Result<&PathMeasure> {
        self.minus.as_ref().ok_or(Error::EmptyPopulation(-1))
    }
}

pub fn global_and_local(e: &PathEnsemble, alpha: f64) -> Result<GlobalLocal> {
    let omegas = &e.disorder.omegas;
    if omegas.iter().any(|w| *w != 1.0 && *w != -1.0) {
        return Err(Error::NonBinaryDisorder);
    }
    let n = e.n();
    let width = e.steps + 1;
    let sub = |sign: f64| -> Option<PathMeasure> {
        let idx: Vec<usize> = (0..n).filter(|&i| omegas[i] == sign).collect();
        if idx.is_empty() {
            return None;
        }
        let mut paths = Vec::with_capacity(idx.len() * width);
        for &i in &idx {
            paths.extend_from_slice(e.path(i));
        }
        Some(PathMeasure {
            steps: e.steps,
            dt: e.dt,
            paths,
            disorder: None,
            weights: vec![1.0 / idx.len() as f64; idx.len()],
            geometry: e.geometry,
        })
    };
    let n_plus = omegas.iter().filter(|w| **w == 1.0).count();
    let n_minus = n - n_plus;
    let global = PathMeasure {
        steps: e.steps,
        dt: e.dt,
        paths: e.states.clone(),
        disorder: None,
        weights: vec![1.0 / n as f64; n],
        geometry: e.geometry,
    };
    let (fp, fm) = (n_plus as f64 / n as f64, n_minus as f64 / n as f64);
    Ok(GlobalLocal {
        global,
        plus: sub(1.0),
        minus: sub(-1.0),
        n_plus,
        n_minus,
        in_yp: fp >= alpha / 2.0 && fm >= (1.0 - alpha) / 2.0,
    })
}

/// `(1/N) Σ_i (sup_t |x_i − y_i| + |ω_i − ω̃_i|)`.
pub fn coupling_distance_bound(a: &PathEnsemble, b: &PathEnsemble) -> Result<f64> {
    if a.n() != b.n() || a.steps != b.steps {
        return Err(Error::Incompatible(format!("ensembles have N = {} and {}", a.n(), b.n())));
    }
    let n = a.n();
    let total: f64 = (0..n)
        .map(|i| {
            let sup = a.path(i).iter().zip(b.path(i)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            sup + (a.disorder.omegas[i] - b.disorder.omegas[i]).abs()
        })
        .sum();
    Ok(total / n as f64)
}

/// `r e^{iψ} = Σ w_j e^{i x_j}` over the first coordinate.
pub fn order_parameter(s: &FlowSnapshot) -> (f64, f64) {
    let m = &s.measure;
    let (mut re, mut im) = (0.0, 0.0);
    for i in 0..m.len() {
        let x = m.point(i)[0];
        re += m.weights[i] * x.cos();
        im += m.weights[i] * x.sin();
    }
    (re.hypot(im), im.atan2(re))
}

/// Writes `measure` atoms as CSV lines `t, x, ω, weight`.
pub fn write_flow_csv(snaps: &[FlowSnapshot], out: &mut dyn Write) -> Result<()> {
    writeln!(out, "t,x,omega,weight")?;
    for s in snaps {
        for i in 0..s.measure.len() {
            let p = s.measure.point(i);
            writeln!(out, "{:e},{:e},{:e},{:e}", s.t, p[0], p.get(1).copied().unwrap_or(0.0), s.measure.weights[i])?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(points: &[f64], weights: &[f64]) -> FlowSnapshot {
        FlowSnapshot {
            t: 0.0,
            measure: AtomicMeasure::new(1, vec![Some(TWO_PI)], points.to_vec(), weights.to_vec()).unwrap(),
        }
    }

    #[test]
    fn order_parameter_examples() {
        let (r, _) = order_parameter(&snap(&[0.7, 0.7, 0.7], &[0.2, 0.3, 0.5]));
        assert!((r - 1.0).abs() < 1e-15);
        let q = std::f64::consts::FRAC_PI_2;
        let (r, _) = order_parameter(&snap(&[0.0, q, 2.0 * q, 3.0 * q], &[0.25; 4]));
        assert!(r < 1e-12);
        let (r, psi) = order_parameter(&snap(&[0.0, q], &[0.5, 0.5]));
        assert!((r - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((psi - q / 2.0).abs() < 1e-15);
    }

    #[test]
    fn measure_validation() {
        assert!(AtomicMeasure::line(&[(0.0, 0.5)]).is_err());
        assert!(AtomicMeasure::line(&[(f64::NAN, 1.0)]).is_err());
        assert!(AtomicMeasure::line(&[(0.0, 0.5), (1.0, 0.5)]).is_ok());
    }
}
