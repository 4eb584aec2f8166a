//! Checks the growth and regularity assumptions of the built-in models on
//! a probe grid.

use std::sync::Arc;

use qmf::model::{builtin_model, validate_model, Builtin, ProbeGrid};

fn main() -> qmf::Result<()> {
    let models = [
        builtin_model(Builtin::Kuramoto { k: 1.0 })?,
        builtin_model(Builtin::Daido { b: Arc::new(|w: f64| w.tanh()) })?,
        builtin_model(Builtin::ActiveRotator { k: 0.5, a: Arc::new(|w: f64| 0.8 * w.sin()) })?,
    ];
    let probes = ProbeGrid::default();
    for m in &models {
        let report = validate_model(m, &probes);
        println!("{} passed={}", report.model, report.passed());
        for c in &report.checks {
            println!(
                "  {:<24} {} worst excess {:+.3e}",
                c.name,
                if c.passed { "ok  " } else { "FAIL" },
                c.worst_excess
            );
        }
    }
    Ok(())
}
