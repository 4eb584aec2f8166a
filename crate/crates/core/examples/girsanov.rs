//! Monte-Carlo normalization of the interacting density against
//! independent particles, and the terms of its exponent on one ensemble.

use qmf::disorder::{make_sequence, Law, SequenceMode};
use qmf::empirical::empirical_measure;
use qmf::model::{builtin_model, Builtin, InitialLaw};
use qmf::rate::{girsanov_terms, mc_normalization};
use qmf::simulate::{simulate_uncoupled, SimConfig};

fn main() -> qmf::Result<()> {
    let m = builtin_model(Builtin::Kuramoto { k: 1.0 })?;
    let seq = make_sequence(&Law::Binary { alpha: 0.5 }, 5, SequenceMode::Quantile)?;
    let init = InitialLaw::uniform_circle();
    let cfg = SimConfig::new(5, 0.5, 1e-3, 2024);

    let e = simulate_uncoupled(&m, &seq, &init, &cfg)?;
    let t = girsanov_terms(&empirical_measure(&e), &m)?;
    println!("J1={:+.4} J2={:+.4} J3={:+.4} J4={:+.4} K={:.4}", t.j1, t.j2, t.j3, t.j4, t.k);
    println!("log density {:+.4}", t.log_density(e.n(), e.horizon()));

    let r = mc_normalization(&m, &seq, &init, &cfg, 4000)?;
    println!("E[density] = {:.4} +- {:.4} (discrete {:.4})", r.estimate, r.stderr, r.discrete_estimate);
    Ok(())
}
