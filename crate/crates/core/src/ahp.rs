//! Analytic hierarchy model for channel selection.
//!
//! Three factors are weighed: classification accuracy `c1`, prior knowledge
//! about the band `c2` (0.5 when alpha channels are involved, else 1) and
//! the reciprocal channel count `c3 = 1/N`. Weights are the normalized
//! principal eigenvector of a reciprocal pairwise-comparison matrix, and
//! each factor is divided by its range maximum (1, 1, 0.5) before weighting.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{Band, ChannelSet};

/// Range maxima of (accuracy, prior knowledge, reciprocal channel count).
pub const FACTOR_MAXIMA: [f64; 3] = [1.0, 1.0, 0.5];

/// Saaty random consistency index for n = 1..=10.
const RANDOM_INDEX: [f64; 10] = [0.0, 0.0, 0.58, 0.90, 1.12, 1.24, 1.32, 1.41, 1.45, 1.49];

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum AhpError {
    #[error("not a reciprocal comparison matrix: {0}")]
    NotReciprocal(String),
    #[error("power iteration did not converge in {0} iterations")]
    IterationLimit(usize),
    #[error("factor out of range: {0}")]
    Domain(String),
    #[error("no candidate channel sets")]
    Empty,
    #[error("matrix size {0} not supported (random index known for n <= 10)")]
    Size(usize),
}

/// Positive reciprocal matrix: `a_ii = 1`, `a_ij = 1 / a_ji`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl ComparisonMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, AhpError> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(AhpError::NotReciprocal("matrix must be square and non-empty".into()));
        }
        let entries: Vec<f64> = rows.into_iter().flatten().collect();
        let m = ComparisonMatrix { n, entries };
        for i in 0..n {
            if m.get(i, i) != 1.0 {
                return Err(AhpError::NotReciprocal(format!("a_{i}{i} = {}", m.get(i, i))));
            }
            for j in 0..n {
                let a = m.get(i, j);
                if !(a > 0.0 && a.is_finite()) {
                    return Err(AhpError::NotReciprocal(format!("a_{i}{j} = {a}")));
                }
                if (a * m.get(j, i) - 1.0).abs() > 1e-12 {
                    return Err(AhpError::NotReciprocal(format!(
                        "a_{i}{j} = {a} but a_{j}{i} = {}",
                        m.get(j, i)
                    )));
                }
            }
        }
        Ok(m)
    }

    /// Builds the full matrix from the upper-triangle judgments
    /// `a_ij` for `i < j`, given row by row.
    pub fn from_upper(n: usize, upper: &[f64]) -> Result<Self, AhpError> {
        if upper.len() != n * (n.saturating_sub(1)) / 2 {
            return Err(AhpError::NotReciprocal(format!(
                "{} judgments for a {n}x{n} matrix",
                upper.len()
            )));
        }
        let mut rows = vec![vec![1.0; n]; n];
        let pairs = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
        for ((i, j), &a) in pairs.zip(upper) {
            rows[i][j] = a;
            rows[j][i] = 1.0 / a;
        }
        Self::new(rows)
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    fn mul(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }
}

/// Criteria in order (accuracy, prior knowledge, channel count): accuracy is
/// 8x as important as prior knowledge and 3x as important as channel count;
/// prior knowledge is a third as important as channel count.
pub fn criteria_matrix() -> ComparisonMatrix {
    ComparisonMatrix::from_upper(3, &[8.0, 3.0, 1.0 / 3.0]).expect("static matrix")
}

/// Sum-to-one principal eigenvector by power iteration, stopping when the
/// largest relative component change drops below 1e-10.
pub fn principal_weights(a: &ComparisonMatrix) -> Result<Vec<f64>, AhpError> {
    let n = a.size();
    let mut w = vec![1.0 / n as f64; n];
    for _ in 0..POWER_MAX_ITER {
        let mut next = a.mul(&w);
        let sum: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= sum);
        let change = next
            .iter()
            .zip(&w)
            .map(|(x, y)| ((x - y) / y).abs())
            .fold(0.0, f64::max);
        w = next;
        if change < POWER_TOL {
            return Ok(w);
        }
    }
    Err(AhpError::IterationLimit(POWER_MAX_ITER))
}

/// Rayleigh-style estimate `mean_i (A w)_i / w_i`.
pub fn lambda_max(a: &ComparisonMatrix, w: &[f64]) -> f64 {
    let aw = a.mul(w);
    aw.iter().zip(w).map(|(x, y)| x / y).sum::<f64>() / a.size() as f64
}

/// `((lambda_max - n) / (n - 1)) / RI(n)`; 0 for n < 3. Diagnostic only.
pub fn consistency_ratio(a: &ComparisonMatrix) -> Result<f64, AhpError> {
    let n = a.size();
    if n > RANDOM_INDEX.len() {
        return Err(AhpError::Size(n));
    }
    if n < 3 {
        return Ok(0.0);
    }
    let w = principal_weights(a)?;
    let ci = (lambda_max(a, &w) - n as f64) / (n as f64 - 1.0);
    Ok(ci / RANDOM_INDEX[n - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorScores {
    /// Classification accuracy in `[0, 1]`.
    pub c1: f64,
    /// Prior knowledge: 0.5 with alpha channels, 1.0 otherwise.
    pub c2: f64,
    /// `1 / N`.
    pub c3: f64,
}

impl FactorScores {
    pub fn new(accuracy: f64, prior: f64, channel_count: usize) -> Self {
        FactorScores {
            c1: accuracy,
            c2: prior,
            c3: 1.0 / channel_count as f64,
        }
    }

    pub fn for_channel_set(accuracy: f64, set: &ChannelSet) -> Self {
        Self::new(accuracy, prior_knowledge(set), set.len())
    }
}

/// 0.5 when any alpha channel is used, else 1.0.
pub fn prior_knowledge(set: &ChannelSet) -> f64 {
    if set.contains_band(Band::Alpha) {
        0.5
    } else {
        1.0
    }
}

/// `Q = sum_k w_k * c_k / max_k`.
pub fn evaluate_q(scores: &FactorScores, weights: &[f64]) -> Result<f64, AhpError> {
    if !(0.0..=1.0).contains(&scores.c1) {
        return Err(AhpError::Domain(format!("accuracy {} outside [0, 1]", scores.c1)));
    }
    if weights.len() != 3 {
        return Err(AhpError::Domain(format!("expected 3 weights, got {}", weights.len())));
    }
    let c = [scores.c1, scores.c2, scores.c3];
    Ok(weights
        .iter()
        .zip(c.iter().zip(FACTOR_MAXIMA))
        .map(|(w, (c, max))| w * c / max)
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelEvaluation {
    pub channel_set: ChannelSet,
    pub scores: FactorScores,
    pub q: f64,
}

impl ChannelEvaluation {
    pub fn new(channel_set: ChannelSet, accuracy: f64, weights: &[f64]) -> Result<Self, AhpError> {
        let scores = FactorScores::for_channel_set(accuracy, &channel_set);
        let q = evaluate_q(&scores, weights)?;
        Ok(ChannelEvaluation {
            channel_set,
            scores,
            q,
        })
    }
}

/// Highest Q; ties go to fewer channels, then the earlier channel set.
pub fn select_channels(evals: &[ChannelEvaluation]) -> Result<&ChannelEvaluation, AhpError> {
    evals
        .iter()
        .min_by(|a, b| {
            b.q.total_cmp(&a.q)
                .then(a.channel_set.len().cmp(&b.channel_set.len()))
                .then_with(|| a.channel_set.cmp(&b.channel_set))
        })
        .ok_or(AhpError::Empty)
}

/// Orders evaluations best-first under the [`select_channels`] rule.
pub fn rank(evals: &mut [ChannelEvaluation]) {
    evals.sort_by(|a, b| match b.q.total_cmp(&a.q) {
        Ordering::Equal => a
            .channel_set
            .len()
            .cmp(&b.channel_set.len())
            .then_with(|| a.channel_set.cmp(&b.channel_set)),
        o => o,
    });
}
