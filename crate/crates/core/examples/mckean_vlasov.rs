//! Solves the limiting McKean–Vlasov equation for binary disorder and
//! compares a particle slice against it.

use qmf::disorder::{make_sequence, Law, SequenceMode};
use qmf::empirical::{dudley_distance, empirical_measure};
use qmf::mkv::{solve_mkv, summary, MkvConfig};
use qmf::model::{builtin_model, Builtin, InitialLaw};
use qmf::simulate::{simulate_interacting, SimConfig};

fn main() -> qmf::Result<()> {
    let m = builtin_model(Builtin::Kuramoto { k: 2.0 })?;
    let init = InitialLaw::Gaussian { offset: 0.0, slope: 0.5, std: 0.8 };
    let atoms = [(-1.0, 0.5), (1.0, 0.5)];
    let flow =
        solve_mkv(&m, &init, &atoms, &MkvConfig { cells: 128, t_end: 1.0, save_every: Some(1), ..Default::default() })?;
    let s = summary(&flow);
    println!("steps {} dt {:.2e} min density {:.2e}", flow.steps, flow.dt, s.min_density);
    for i in (0..s.times.len()).step_by(s.times.len() / 5) {
        println!("t={:.3} r={:.4} masses {:?}", s.times[i], s.order_parameter[i], s.masses[i]);
    }

    let seq = make_sequence(&Law::Binary { alpha: 0.5 }, 1000, SequenceMode::Quantile)?;
    let e = simulate_interacting(&m, &seq, &init, &SimConfig::new(1000, 1.0, 1e-3, 11))?;
    let lam = empirical_measure(&e);
    let last = flow.n_times() - 1;
    let d = dudley_distance(&flow.bin(&lam.slice(e.steps))?, &flow.quantized_measure(last)?)?;
    println!("dudley(L_N(T), limit(T)) = {d:.4}");
    Ok(())
}
