use proptest::prelude::*;

use qmf::disorder::{make_sequence, truncate, DisorderSequence, Law, SequenceMode};
use qmf::empirical::{dudley_distance, empirical_measure, global_and_local, AtomicMeasure, PathMeasure};
use qmf::model::{builtin_model, Builtin, InitialLaw};
use qmf::rate::girsanov_terms;
use qmf::sanov::{lambda_limit, random_instance};
use qmf::simulate::{simulate_interacting, SimConfig};

fn measure(points: &[f64], raw: &[f64]) -> AtomicMeasure {
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|r| r / total).collect();
    let rest: f64 = w[..w.len() - 1].iter().sum();
    *w.last_mut().unwrap() = 1.0 - rest;
    AtomicMeasure::line(&points.iter().copied().zip(w).collect::<Vec<_>>()).unwrap()
}

fn atoms() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..6).prop_flat_map(|n| (prop::collection::vec(-3.0..3.0f64, n), prop::collection::vec(0.1..1.0f64, n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dudley_is_a_metric(a in atoms(), b in atoms(), c in atoms()) {
        let (a, b, c) = (measure(&a.0, &a.1), measure(&b.0, &b.1), measure(&c.0, &c.1));
        let ab = dudley_distance(&a, &b).unwrap();
        let ba = dudley_distance(&b, &a).unwrap();
        let ac = dudley_distance(&a, &c).unwrap();
        let cb = dudley_distance(&c, &b).unwrap();
        prop_assert!(dudley_distance(&a, &a).unwrap().abs() <= 1e-9);
        prop_assert!((ab - ba).abs() <= 1e-9);
        prop_assert!((0.0..=2.0 + 1e-9).contains(&ab));
        prop_assert!(ab <= ac + cb + 1e-9, "{ab} > {ac} + {cb}");
    }

    #[test]
    fn dudley_of_two_diracs(x in -3.0..3.0f64, y in -3.0..3.0f64) {
        let d = dudley_distance(&measure(&[x], &[1.0]), &measure(&[y], &[1.0])).unwrap();
        let expected = 2.0 * (x - y).abs() / (2.0 + (x - y).abs());
        prop_assert!((d - expected).abs() <= 1e-9, "{d} vs {expected}");
    }

    #[test]
    fn truncation_is_idempotent(values in prop::collection::vec(-5.0..5.0f64, 1..40), m in 0.1..4.0f64) {
        let seq = DisorderSequence::from_values(values);
        let once = truncate(&seq, m);
        prop_assert_eq!(&truncate(&once, m), &once);
        prop_assert!(once.omegas.iter().all(|w| w.abs() <= m));
        let law = Law::Gaussian { mean: 0.3, std: 1.2 }.truncate(m);
        prop_assert_eq!(law.truncate(m), law);
    }

    #[test]
    fn lambda_is_convex(seed in 0u64..1000, t in 0.0..1.0f64, e in 1usize..5, f in 1usize..4) {
        let (k, _) = random_instance(e, f, 16, seed).unwrap();
        let mut r = qmf::rng::stream(seed, 9);
        use rand::Rng;
        let a: Vec<f64> = (0..e * f).map(|_| r.gen_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..e * f).map(|_| r.gen_range(-3.0..3.0)).collect();
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
        let lhs = lambda_limit(&mix, &k).unwrap();
        let rhs = t * lambda_limit(&a, &k).unwrap() + (1.0 - t) * lambda_limit(&b, &k).unwrap();
        prop_assert!(lhs <= rhs + 1e-12, "{lhs} > {rhs}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn girsanov_ignores_particle_order(seed in 0u64..500, shift in 1usize..6) {
        let m = builtin_model(Builtin::Kuramoto { k: 1.3 }).unwrap();
        let seq = make_sequence(&Law::Gaussian { mean: 0.0, std: 1.0 }, 7, SequenceMode::Quantile).unwrap();
        let e = simulate_interacting(&m, &seq, &InitialLaw::uniform_circle(), &SimConfig::new(7, 0.1, 0.01, seed)).unwrap();
        let mut p = e.clone();
        let n = e.n();
        for i in 0..n {
            let j = (i + shift) % n;
            p.states[i * (e.steps + 1)..(i + 1) * (e.steps + 1)].copy_from_slice(e.path(j));
            p.disorder.omegas[i] = e.disorder.omegas[j];
        }
        let a = girsanov_terms(&empirical_measure(&e), &m).unwrap();
        let b = girsanov_terms(&empirical_measure(&p), &m).unwrap();
        for (x, y) in [(a.j, b.j), (a.k, b.k), (a.j1, b.j1), (a.j4, b.j4)] {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()), "{x} vs {y}");
        }
    }

    #[test]
    fn global_measure_splits_by_population(seed in 0u64..500, alpha in 0.2..0.8f64) {
        let m = builtin_model(Builtin::Kuramoto { k: 0.8 }).unwrap();
        let seq = make_sequence(&Law::Binary { alpha }, 20, SequenceMode::Iid { seed }).unwrap();
        prop_assume!(seq.omegas.iter().any(|w| *w > 0.0) && seq.omegas.iter().any(|w| *w < 0.0));
        let e = simulate_interacting(&m, &seq, &InitialLaw::uniform_circle(), &SimConfig::new(20, 0.05, 0.01, seed)).unwrap();
        let gl = global_and_local(&e, alpha).unwrap();
        let n = e.n() as f64;
        let (fp, fm) = (gl.n_plus as f64 / n, gl.n_minus as f64 / n);
        let avg = |pm: &PathMeasure, step: usize| -> f64 {
            (0..pm.len()).map(|i| pm.weights[i] * pm.path(i)[step].cos()).sum()
        };
        for step in [0, e.steps / 2, e.steps] {
            let whole = avg(&gl.global, step);
            let parts = fp * avg(gl.plus().unwrap(), step) + fm * avg(gl.minus().unwrap(), step);
            prop_assert!((whole - parts).abs() <= 1e-12, "{whole} vs {parts}");
        }
    }
}
