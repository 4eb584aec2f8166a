use qmf::disorder::{make_sequence, Law, SequenceMode};
use qmf::model::{builtin_model, Builtin, InitialLaw};
use qmf::rate::mc_normalization;
use qmf::simulate::{simulate_interacting, SimConfig};

fn on_threads<T: Send>(n: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(f)
}

#[test]
fn ensemble_independent_of_pool_size() {
    let m = builtin_model(Builtin::Kuramoto { k: 1.0 }).unwrap();
    let seq = make_sequence(&Law::Gaussian { mean: 0.0, std: 1.0 }, 64, SequenceMode::Iid { seed: 3 }).unwrap();
    let cfg = SimConfig::new(64, 0.2, 1e-3, 17);
    let run = || simulate_interacting(&m, &seq, &InitialLaw::uniform_circle(), &cfg).unwrap();
    let a = on_threads(1, run);
    let b = on_threads(4, run);
    assert_eq!(a.states, b.states);
}

#[test]
fn normalization_independent_of_pool_size() {
    let m = builtin_model(Builtin::Kuramoto { k: 1.0 }).unwrap();
    let seq = make_sequence(&Law::Binary { alpha: 0.5 }, 5, SequenceMode::Quantile).unwrap();
    let cfg = SimConfig::new(5, 0.1, 1e-3, 8);
    let run = || mc_normalization(&m, &seq, &InitialLaw::uniform_circle(), &cfg, 200).unwrap();
    let a = on_threads(1, run);
    let b = on_threads(3, run);
    assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
    assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
}
