//! Finite-space Sanov: the Legendre transform of the limiting log-moment
//! functional against the entropy rate on random instances.

use qmf::sanov::{entropy_rate, lambda_limit, lambda_n, legendre, random_instance};

fn main() -> qmf::Result<()> {
    for seed in 0..5 {
        let (k, lambda) = random_instance(3, 2, 32, seed)?;
        let leg = legendre(&k, &lambda)?;
        let ent = entropy_rate(&k, &lambda)?;
        println!("seed {seed}: legendre {:?} entropy {:.8}", leg.value(), ent.value());
    }
    let (k, _) = random_instance(2, 2, 8, 99)?;
    let phi = [0.3, -1.0, 0.7, 0.1];
    println!("Lambda_8 = {:.6}, Lambda = {:.6}", lambda_n(&phi, &k, 8)?, lambda_limit(&phi, &k)?);
    Ok(())
}
