//! Simulates a disordered Kuramoto ensemble and prints the order parameter
//! over time.

use qmf::disorder::{make_sequence, Law, SequenceMode};
use qmf::empirical::{empirical_flow, order_parameter};
use qmf::model::{builtin_model, Builtin, InitialLaw};
use qmf::simulate::{simulate_interacting, SimConfig};

fn main() -> qmf::Result<()> {
    let m = builtin_model(Builtin::Kuramoto { k: 2.5 })?;
    let seq = make_sequence(&Law::Gaussian { mean: 0.0, std: 0.5 }, 500, SequenceMode::Quantile)?;
    let init = InitialLaw::Gaussian { offset: 0.0, slope: 0.0, std: 1.0 };
    let e = simulate_interacting(&m, &seq, &init, &SimConfig::new(500, 4.0, 1e-2, 1))?;
    let times: Vec<f64> = (0..=8).map(|i| 0.5 * i as f64).collect();
    for snap in empirical_flow(&e, &times)? {
        let (r, psi) = order_parameter(&snap);
        println!("t={:.1} r={r:.4} psi={psi:+.4}", snap.t);
    }
    Ok(())
}
