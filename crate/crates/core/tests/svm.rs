mod common;

use common::{blobs, naive_decision, random_set, xor};
use mibci::svm::{self, decision, kkt_audit, predict, train, train_detailed, Gamma, SmoOptions, SvmConfig};
use mibci::Exec;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cfg(c: f64, gamma: f64) -> SvmConfig {
    SvmConfig {
        c,
        gamma: Gamma::Value(gamma),
        ..SvmConfig::default()
    }
}

#[test]
fn kkt_audit_passes_on_random_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..20 {
        let (xs, ys) = random_set(&mut rng, 12 + i, 3);
        let config = cfg(1.0 + i as f64 * 0.5, 0.5);
        let sol = train_detailed(&xs, &ys, &config, SmoOptions::default()).unwrap();
        assert!(sol.converged, "set {i} did not converge");
        let violations = kkt_audit(&sol.model, &sol.alpha, &xs, &ys, config.kkt_tol).unwrap();
        assert!(violations.is_empty(), "set {i}: {violations:?}");
        let balance: f64 = sol.model.dual_coefs.iter().sum();
        assert!(balance.abs() < 1e-8);
        sol.model.validate().unwrap();
    }
}

#[test]
fn decision_matches_direct_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (xs, ys) = random_set(&mut rng, 30, 4);
    let model = train(&xs, &ys, &cfg(2.0, 0.3)).unwrap();
    let (probe, _) = random_set(&mut rng, 50, 4);
    for x in xs.iter().chain(&probe) {
        assert!((decision(&model, x).unwrap() - naive_decision(&model, x)).abs() < 1e-12);
    }
    let batch = svm::decision_batch(&model, &probe, Exec::Sequential).unwrap();
    let par = svm::decision_batch(&model, &probe, Exec::Parallel).unwrap();
    assert_eq!(batch, par);
}

#[test]
fn xor_and_blobs_are_learned() {
    let (xs, ys) = xor();
    let model = train(&xs, &ys, &cfg(10.0, 1.0)).unwrap();
    for (x, y) in xs.iter().zip(&ys) {
        assert_eq!(predict(&model, x).unwrap(), *y);
    }

    let (xs, ys) = blobs(10, 42);
    assert_eq!(xs.len(), 20);
    let model = train(&xs, &ys, &SvmConfig::default()).unwrap();
    for (x, y) in xs.iter().zip(&ys) {
        assert_eq!(predict(&model, x).unwrap(), *y);
    }
}

#[test]
fn free_support_vectors_sit_on_the_margin() {
    let (xs, ys) = blobs(15, 3);
    let config = cfg(10.0, 0.5);
    let sol = train_detailed(&xs, &ys, &config, SmoOptions::default()).unwrap();
    let mut free = 0;
    for (i, a) in sol.alpha.iter().enumerate() {
        if *a > 0.0 && *a < config.c {
            free += 1;
            let m = ys[i].as_f64() * decision(&sol.model, &xs[i]).unwrap();
            assert!((m - 1.0).abs() <= config.kkt_tol, "margin {m}");
        }
    }
    assert!(free > 0);
}

#[test]
fn dual_objective_never_decreases() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let (xs, ys) = random_set(&mut rng, 25, 3);
        let sol = train_detailed(
            &xs,
            &ys,
            &cfg(1.0, 1.0),
            SmoOptions {
                record_objective: true,
                exec: Exec::Sequential,
            },
        )
        .unwrap();
        assert!(!sol.objective_trace.is_empty());
        for w in sol.objective_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "{} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn training_is_deterministic_and_exec_independent() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (xs, ys) = random_set(&mut rng, 40, 5);
    let opts = |exec| SmoOptions {
        record_objective: false,
        exec,
    };
    let a = train_detailed(&xs, &ys, &SvmConfig::default(), opts(Exec::Sequential)).unwrap();
    let b = train_detailed(&xs, &ys, &SvmConfig::default(), opts(Exec::Parallel)).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.alpha, b.alpha);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn flipping_labels_flips_predictions(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (xs, ys) = random_set(&mut rng, 16, 2);
        let flipped: Vec<_> = ys.iter().map(|l| l.flipped()).collect();
        // Mirror symmetry is exact only at the optimum, so solve tightly.
        let config = SvmConfig { kkt_tol: 1e-9, max_passes: 10_000, ..cfg(1.0, 1.0) };
        let m1 = train(&xs, &ys, &config).unwrap();
        let m2 = train(&xs, &flipped, &config).unwrap();
        let (probe, _) = random_set(&mut rng, 20, 2);
        for x in xs.iter().chain(&probe) {
            let (d1, d2) = (decision(&m1, x).unwrap(), decision(&m2, x).unwrap());
            prop_assert!((d1 + d2).abs() < 1e-7, "{} vs {}", d1, d2);
            // Away from the boundary the labels are exact opposites.
            if d1.abs() > 1e-7 {
                prop_assert_eq!(predict(&m1, x).unwrap(), predict(&m2, x).unwrap().flipped());
            }
        }
    }
}
