//! Acceptance suite: one PASS/FAIL line per criterion, each checked against
//! its tolerance and its wall-clock budget. Runs without the test harness so
//! the report is always printed; exits non-zero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::{axis_angle, axis_diff, brute_force_angle, naive_decision, random_set, random_spd2, step1_windows, xor};
use mibci::ahp::{criteria_matrix, evaluate_q, principal_weights, FactorScores};
use mibci::csp::{fit_group, SpatialCovariance};
use mibci::pipeline::{
    acceptance_gate, cross_validate, standard_periods, train_classifier, window_period_report, TrainConfig,
};
use mibci::realtime::{load_model, save_model, stream_to_vec, Provenance, ReplaySource, StreamOptions};
use mibci::signal::{generate_session, ChannelSet, SynthConfig, Trial};
use mibci::svm::{decision, kkt_audit, predict, train, train_detailed, Gamma, SmoOptions, SvmConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

/// Name, time budget in seconds, check.
type Criterion = (&'static str, u64, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn session(separation: f64, noise: f64, seed: u64) -> Vec<Trial> {
    generate_session(&SynthConfig {
        seed,
        separation,
        noise,
        ..Default::default()
    })
    .expect("synthetic session")
}

fn seeded(seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        ..Default::default()
    }
}

fn ahp_weights() -> Outcome {
    let w = principal_weights(&criteria_matrix()).map_err(|e| e.to_string())?;
    let want = [0.682, 0.082, 0.236];
    let ok = w.iter().zip(want).all(|(a, b)| (a - b).abs() <= 0.001);
    let detail = format!("w = ({:.5}, {:.5}, {:.5})", w[0], w[1], w[2]);
    ensure(ok, || detail.clone())?;
    Ok(detail)
}

fn q_values() -> Outcome {
    let w = principal_weights(&criteria_matrix()).map_err(|e| e.to_string())?;
    let cases = [(0.951, 1.0, 2, 0.967), (0.919, 1.0, 4, 0.827), (0.737, 0.5, 2, 0.780)];
    let mut got = Vec::new();
    for (acc, prior, n, want) in cases {
        let q = evaluate_q(&FactorScores::new(acc, prior, n), &w).map_err(|e| e.to_string())?;
        got.push(format!("{q:.4}"));
        ensure((q - want).abs() <= 0.001, || format!("Q({acc}, {prior}, {n}) = {q:.5}, want {want}"))?;
    }
    Ok(format!("Q = {}", got.join(" / ")))
}

fn csp_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let set = ChannelSet::gamma();
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let cl = random_spd2(&mut rng);
        let cr = random_spd2(&mut rng);
        let cov = |m| SpatialCovariance::from_matrix(m, set.clone()).map_err(|e| e.to_string());
        let g = fit_group(&cov(cl.clone())?, &cov(cr.clone())?, 1).map_err(|e| e.to_string())?;
        let left = axis_diff(axis_angle(g.left[(0, 0)], g.left[(0, 1)]), brute_force_angle(&cl, &cr));
        let right = axis_diff(axis_angle(g.right[(0, 0)], g.right[(0, 1)]), brute_force_angle(&cr, &cl));
        worst = worst.max(left).max(right);
        ensure(left < 1.0 && right < 1.0, || format!("pair {i}: off by {left:.3} / {right:.3} deg"))?;
    }
    Ok(format!("50 pairs, worst {worst:.3} deg"))
}

fn svm_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..20 {
        let (xs, ys) = random_set(&mut rng, 12 + i, 3);
        let config = SvmConfig {
            c: 1.0 + i as f64 * 0.5,
            gamma: Gamma::Value(0.5),
            ..SvmConfig::default()
        };
        let sol = train_detailed(&xs, &ys, &config, SmoOptions::default()).map_err(|e| e.to_string())?;
        let bad = kkt_audit(&sol.model, &sol.alpha, &xs, &ys, config.kkt_tol).map_err(|e| e.to_string())?;
        ensure(sol.converged && bad.is_empty(), || format!("set {i}: {} KKT violations", bad.len()))?;

        let (probe, _) = random_set(&mut rng, 20, 3);
        for x in xs.iter().chain(&probe) {
            let d = decision(&sol.model, x).map_err(|e| e.to_string())?;
            let n = naive_decision(&sol.model, x);
            ensure((d - n).abs() < 1e-12, || format!("set {i}: decision {d} vs direct {n}"))?;
        }
    }
    let (xs, ys) = xor();
    let config = SvmConfig {
        c: 10.0,
        gamma: Gamma::Value(1.0),
        ..SvmConfig::default()
    };
    let model = train(&xs, &ys, &config).map_err(|e| e.to_string())?;
    let correct = xs.iter().zip(&ys).filter(|(x, y)| predict(&model, x).ok() == Some(**y)).count();
    ensure(correct == 4, || format!("XOR training accuracy {correct}/4"))?;
    Ok("20 sets KKT-clean, direct sum within 1e-12, XOR 4/4".into())
}

fn end_to_end() -> Outcome {
    let strong = cross_validate(&session(0.8, 0.05, 7), &seeded(7), 4).map_err(|e| e.to_string())?;
    let gate = acceptance_gate(&strong);
    ensure(strong.overall_accuracy >= 0.93 && gate, || {
        format!("separable session accuracy {:.4}, gate {gate}", strong.overall_accuracy)
    })?;
    let none = cross_validate(&session(0.0, 0.05, 7), &seeded(7), 4).map_err(|e| e.to_string())?;
    ensure((0.35..=0.65).contains(&none.overall_accuracy), || {
        format!("label-free session accuracy {:.4} outside chance band", none.overall_accuracy)
    })?;
    Ok(format!(
        "separable {:.4} (gate passes), no separation {:.4}",
        strong.overall_accuracy, none.overall_accuracy
    ))
}

fn period_shape() -> Outcome {
    let trials = session(0.2, 0.3, 7);
    let report = window_period_report(&trials, &seeded(7), &standard_periods(), 4).map_err(|e| e.to_string())?;
    let acc = report.accuracies();
    let detail = report
        .rows
        .iter()
        .zip(&acc)
        .map(|((p, _), a)| format!("{p}={a:.4}"))
        .collect::<Vec<_>>()
        .join(" ");
    let shape = acc.len() == 4 && acc[0] < acc[1] && acc[1] < acc[2] && acc[2] > acc[3];
    ensure(report.best.to_string() == "3-7" && shape, || format!("{detail}, best {}", report.best))?;
    Ok(detail)
}

fn streaming() -> Outcome {
    let model = Arc::new(train_classifier(&session(0.8, 0.05, 7), &seeded(7)).map_err(|e| e.to_string())?);
    let src = ReplaySource::from_trials(&session(0.3, 0.2, 99), f64::INFINITY).map_err(|e| e.to_string())?;
    let frames = src.frames().to_vec();
    let (cmds, stats) = stream_to_vec(src, model.clone(), &StreamOptions::default()).map_err(|e| e.to_string())?;

    let windows = step1_windows(&frames, &model.config.channel_set, model.config.window_len);
    ensure(cmds.len() == windows.len(), || format!("{} commands for {} windows", cmds.len(), windows.len()))?;
    for (i, (cmd, w)) in cmds.iter().zip(&windows).enumerate() {
        let (label, _) = model.classify(w).map_err(|e| e.to_string())?;
        ensure(cmd.label == label, || format!("window {i}: streamed {} vs batch {label}", cmd.label))?;
    }
    let fps = stats.frames_per_second();
    ensure(fps >= 1000.0, || format!("{fps:.0} frames/s"))?;
    Ok(format!("{} labels identical, {fps:.0} frames/s", cmds.len()))
}

fn persistence() -> Outcome {
    let tc = train_classifier(&session(0.8, 0.05, 7), &seeded(7)).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("model.json");
    save_model(&tc, Provenance::new(None, 7), &path).map_err(|e| e.to_string())?;
    let loaded = load_model(&path).map_err(|e| e.to_string())?.classifier();

    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for i in 0..100 {
        let x: Vec<f64> = (0..tc.svm.feature_dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let a = decision(&tc.svm, &x).map_err(|e| e.to_string())?;
        let b = decision(&loaded.svm, &x).map_err(|e| e.to_string())?;
        ensure(a.to_bits() == b.to_bits(), || format!("feature {i}: {a:e} vs {b:e}"))?;
    }
    Ok("100 decision values bit-identical".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("ahp-weights", 1, ahp_weights),
        ("q-consistency", 1, q_values),
        ("csp-oracle", 10, csp_oracle),
        ("svm-correctness", 10, svm_correctness),
        ("end-to-end-cv", 60, end_to_end),
        ("period-shape", 120, period_shape),
        ("streaming", 30, streaming),
        ("model-persistence", 5, persistence),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let limit = Duration::from_secs(budget);
        let result = match outcome {
            Ok(detail) if elapsed < limit => Ok(detail),
            Ok(detail) => Err(format!("{detail}; over time budget")),
            Err(e) => Err(e),
        };
        let timing = format!("{:.2}s < {budget}s", elapsed.as_secs_f64());
        match result {
            Ok(detail) => println!("PASS {name:<18} {detail} [{timing}]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name:<18} {detail} [{timing}]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
