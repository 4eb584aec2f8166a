//! Kinetic cost, quenched and averaged rates for a flow pushed off the
//! limit by a constant kick on one disorder atom.

use std::sync::Arc;

use qmf::mkv::{solve_mkv, MkvConfig};
use qmf::model::{builtin_model, Builtin, InitialLaw};
use qmf::rate::{averaged_rate, flow_rate_k, quenched_rate, DriftFlow, TestBasis};

fn main() -> qmf::Result<()> {
    let m = builtin_model(Builtin::Kuramoto { k: 1.0 })?;
    let init = InitialLaw::Gaussian { offset: 3.0, slope: 0.0, std: 0.6 };
    let mu = [(-1.0, 0.5), (1.0, 0.5)];
    let cfg = MkvConfig { cells: 128, t_end: 1.0, save_every: Some(1), ..Default::default() };

    let star = DriftFlow::from_mkv(&m, &solve_mkv(&m, &init, &mu, &cfg)?)?;
    println!("at the limit: quenched {:?}", quenched_rate(&star, &m, &init, &mu)?.process);

    for kick in [0.25, 0.5, 1.0] {
        let h = Arc::new(move |_t: f64, _x: f64, u: f64| if u > 0.0 { kick } else { 0.0 });
        let df = DriftFlow::self_consistent(&m, h, kick, &init, &mu, &cfg)?;
        let fr = flow_rate_k(&df, &m, 1, TestBasis::default())?;
        let q = quenched_rate(&df, &m, &init, &mu)?;
        let a = averaged_rate(&df, &m, &init, &mu)?;
        println!(
            "kick {kick}: closed {:.5} (c^2 T/2 = {:.5}) variational {:.5}  quenched {:.5} averaged {:.5}",
            fr.closed,
            0.5 * kick * kick,
            fr.variational,
            q.process.value(),
            a.value()
        );
    }
    Ok(())
}
