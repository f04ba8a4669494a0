//! Independent oracles and fixtures shared by the integration tests and the
//! acceptance suite. Nothing here calls into the code under test except to
//! build its inputs.

#![allow(dead_code)]

use mibci::signal::{ChannelSet, ClassLabel, SampleFrame, SignalWindow};
use mibci::svm::SvmModel;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Random symmetric positive definite 2x2 matrix with trace 1.
pub fn random_spd2(rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let m = DMatrix::from_fn(2, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
    let c = &m * m.transpose() + DMatrix::identity(2, 2) * 1e-3;
    let tr = c.trace();
    c / tr
}

/// Angle in degrees, in [0, 180), of the unit vector maximizing
/// `w C_target w^T / w (C_a + C_b) w^T`, by exhaustive 0.01-degree search.
pub fn brute_force_angle(target: &DMatrix<f64>, other: &DMatrix<f64>) -> f64 {
    let comp = target + other;
    let quad = |m: &DMatrix<f64>, c: f64, s: f64| {
        m[(0, 0)] * c * c + 2.0 * m[(0, 1)] * c * s + m[(1, 1)] * s * s
    };
    let mut best = (f64::NEG_INFINITY, 0.0);
    for step in 0..18_000 {
        let deg = step as f64 * 0.01;
        let (s, c) = deg.to_radians().sin_cos();
        let ratio = quad(target, c, s) / quad(&comp, c, s);
        if ratio > best.0 {
            best = (ratio, deg);
        }
    }
    best.1
}

/// Direction of a 2-vector as an undirected angle in [0, 180).
pub fn axis_angle(x: f64, y: f64) -> f64 {
    let a = y.atan2(x).to_degrees();
    a.rem_euclid(180.0)
}

/// Smallest difference between two undirected axis angles.
pub fn axis_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(180.0);
    d.min(180.0 - d)
}

/// Direct dual-sum decision value, written independently of the library.
pub fn naive_decision(model: &SvmModel, x: &[f64]) -> f64 {
    let mut f = model.bias;
    for (sv, coef) in model.support_vectors.iter().zip(&model.dual_coefs) {
        let mut d2 = 0.0;
        for (a, b) in sv.iter().zip(x) {
            d2 += (a - b) * (a - b);
        }
        f += coef * (-model.gamma * d2).exp();
    }
    f
}

/// Two Gaussian blobs at (+-2, +-2) with unit spread, `n` points per class.
pub fn blobs(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<ClassLabel>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (centre, label) in [(2.0, ClassLabel::Left), (-2.0, ClassLabel::Right)] {
        for _ in 0..n {
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            xs.push(vec![centre + 0.5 * dx, centre + 0.5 * dy]);
            ys.push(label);
        }
    }
    (xs, ys)
}

pub fn xor() -> (Vec<Vec<f64>>, Vec<ClassLabel>) {
    use ClassLabel::*;
    (
        vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]],
        vec![Left, Left, Right, Right],
    )
}

/// Small random labelled set of `n` points in `d` dimensions, both classes
/// present, labels random (so typically not separable).
pub fn random_set(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<ClassLabel>) {
    let xs: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let mut ys: Vec<ClassLabel> = (0..n)
        .map(|_| if rng.gen_bool(0.5) { ClassLabel::Left } else { ClassLabel::Right })
        .collect();
    ys[0] = ClassLabel::Left;
    ys[1] = ClassLabel::Right;
    (xs, ys)
}

/// Trailing windows of `k` frames every frame, built directly from frame
/// values (not through the library's window helpers).
pub fn step1_windows(frames: &[SampleFrame], set: &ChannelSet, k: usize) -> Vec<SignalWindow> {
    let chans = set.channels();
    (0..=frames.len().saturating_sub(k))
        .filter(|&s| s + k <= frames.len())
        .map(|s| {
            let m = DMatrix::from_fn(chans.len(), k, |r, c| frames[s + c].values[chans[r].index()]);
            SignalWindow::from_matrix(m, set.clone()).unwrap()
        })
        .collect()
}
