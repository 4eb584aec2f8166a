//! Convergence diagnostics of quantile and i.i.d. disorder sequences, and
//! the truncated law.

use qmf::disorder::{convergence_diagnostics, make_sequence, truncate, Law, SequenceMode};
use qmf::model::InitialLaw;

fn main() -> qmf::Result<()> {
    let mu = Law::parse("gaussian:0,1")?;
    let init = InitialLaw::uniform_circle();
    for mode in [SequenceMode::Quantile, SequenceMode::Iid { seed: 5 }] {
        for n in [100, 1000, 10000] {
            let seq = make_sequence(&mu, n, mode)?;
            let d = convergence_diagnostics(&seq, &init, &[1.0, 2.0], 64)?;
            println!("{mode:?} N={n:<6} moment gap {:.2e} dudley {:.4}", d.moment.gap, d.dudley);
        }
    }
    let seq = truncate(&make_sequence(&mu, 1000, SequenceMode::Quantile)?, 1.5);
    println!("truncated law {:?}", seq.mu);
    Ok(())
}
