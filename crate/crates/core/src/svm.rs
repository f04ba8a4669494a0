//! Binary RBF-kernel support vector machine trained with SMO.
//!
//! The solver works on the dual
//!
//! ```text
//! min  1/2 a^T Q a - e^T a,   Q_ij = y_i y_j K(x_i, x_j)
//! s.t. 0 <= a_i <= C,  sum a_i y_i = 0
//! ```
//!
//! picking the maximal violating pair each step (first index wins ties, so
//! training is deterministic) until `max_{I_up} -y G - min_{I_low} -y G`
//! drops to `kkt_tol`. At that point every training point satisfies the KKT
//! conditions to within `kkt_tol`, which [`kkt_audit`] checks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::signal::ClassLabel;

/// Lower bound on the curvature of a pair update.
const MIN_CURVATURE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum SvmError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// RBF width: explicit, or resolved from the training features.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Gamma {
    /// `1 / (d * mean per-coordinate variance)`.
    #[default]
    Auto,
    Value(f64),
}

impl fmt::Display for Gamma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gamma::Auto => f.write_str("auto"),
            Gamma::Value(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for Gamma {
    type Err = SvmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().eq_ignore_ascii_case("auto") {
            return Ok(Gamma::Auto);
        }
        s.trim()
            .parse::<f64>()
            .map(Gamma::Value)
            .map_err(|_| SvmError::Config(format!("gamma must be \"auto\" or a number, got {s:?}")))
    }
}

impl Serialize for Gamma {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Gamma::Auto => s.serialize_str("auto"),
            Gamma::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Gamma {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Gamma::Value(v)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    /// Box constraint.
    pub c: f64,
    pub gamma: Gamma,
    pub kkt_tol: f64,
    /// Iteration budget, in sweeps: at most `max_passes * n` pair updates.
    pub max_passes: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            gamma: Gamma::Auto,
            kkt_tol: 1e-3,
            max_passes: 100,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<(), SvmError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(SvmError::Config(format!("C must be positive, got {}", self.c)));
        }
        if let Gamma::Value(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(SvmError::Config(format!("gamma must be positive, got {g}")));
            }
        }
        if self.kkt_tol.is_nan() || self.kkt_tol <= 0.0 {
            return Err(SvmError::Config("kkt_tol must be positive".into()));
        }
        if self.max_passes == 0 {
            return Err(SvmError::Config("max_passes must be positive".into()));
        }
        Ok(())
    }
}

/// Trained classifier: only vectors with a positive multiplier are kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i`, one per support vector.
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    /// Resolved RBF width.
    pub gamma: f64,
    pub config: SvmConfig,
    pub feature_dim: usize,
}

impl SvmModel {
    /// Re-checks the stored multipliers and shapes.
    pub fn validate(&self) -> Result<(), SvmError> {
        let bad = |m: String| Err(SvmError::InvalidModel(m));
        self.config.validate()?;
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma {} is not positive", self.gamma));
        }
        if !self.bias.is_finite() {
            return bad("bias is not finite".into());
        }
        if self.support_vectors.len() != self.dual_coefs.len() {
            return bad(format!(
                "{} support vectors but {} coefficients",
                self.support_vectors.len(),
                self.dual_coefs.len()
            ));
        }
        let c = self.config.c;
        for (i, (sv, &coef)) in self.support_vectors.iter().zip(&self.dual_coefs).enumerate() {
            if sv.len() != self.feature_dim {
                return bad(format!("support vector {i} has dimension {}", sv.len()));
            }
            if sv.iter().any(|v| !v.is_finite()) {
                return bad(format!("support vector {i} is not finite"));
            }
            let alpha = coef.abs();
            if alpha.is_nan() || alpha <= 0.0 || alpha > c * (1.0 + 1e-12) {
                return bad(format!("multiplier {alpha} of support vector {i} outside (0, C]"));
            }
        }
        let balance: f64 = self.dual_coefs.iter().sum();
        if balance.abs() > 1e-8 {
            return bad(format!("sum of alpha_i y_i is {balance:e}, expected 0"));
        }
        Ok(())
    }

    pub fn support_count(&self) -> usize {
        self.support_vectors.len()
    }
}

/// `exp(-gamma * |x - y|^2)`.
pub fn rbf(x: &[f64], y: &[f64], gamma: f64) -> Result<f64, SvmError> {
    if x.len() != y.len() {
        return Err(SvmError::Shape(format!(
            "kernel arguments have dimensions {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(rbf_unchecked(x, y, gamma))
}

#[inline]
fn rbf_unchecked(x: &[f64], y: &[f64], gamma: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

/// Resolves [`Gamma::Auto`] against training features.
pub fn resolve_gamma<F: AsRef<[f64]>>(gamma: Gamma, features: &[F]) -> f64 {
    match gamma {
        Gamma::Value(g) => g,
        Gamma::Auto => {
            let n = features.len() as f64;
            let d = features.first().map_or(0, |f| f.as_ref().len());
            if d == 0 || n == 0.0 {
                return 1.0;
            }
            let mut mean_var = 0.0;
            for j in 0..d {
                let mean = features.iter().map(|f| f.as_ref()[j]).sum::<f64>() / n;
                let var = features
                    .iter()
                    .map(|f| (f.as_ref()[j] - mean).powi(2))
                    .sum::<f64>()
                    / n;
                mean_var += var;
            }
            mean_var /= d as f64;
            if mean_var > 0.0 {
                1.0 / (d as f64 * mean_var)
            } else {
                1.0
            }
        }
    }
}

/// Full SMO output, including the multiplier of every training point.
#[derive(Debug, Clone)]
pub struct SmoSolution {
    pub model: SvmModel,
    /// `alpha_i` per training point, in input order.
    pub alpha: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Dual objective `sum a - 1/2 a^T Q a` after each accepted update, when
    /// requested.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SmoOptions {
    pub record_objective: bool,
    pub exec: Exec,
}

pub fn train<F: AsRef<[f64]> + Sync>(
    features: &[F],
    labels: &[ClassLabel],
    cfg: &SvmConfig,
) -> Result<SvmModel, SvmError> {
    train_detailed(features, labels, cfg, SmoOptions::default()).map(|s| s.model)
}

fn check_inputs<F: AsRef<[f64]>>(
    features: &[F],
    labels: &[ClassLabel],
) -> Result<usize, SvmError> {
    if features.len() != labels.len() {
        return Err(SvmError::Shape(format!(
            "{} features but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let left = labels.iter().filter(|&&l| l == ClassLabel::Left).count();
    if left == 0 || left == labels.len() {
        return Err(SvmError::DegenerateLabels(format!(
            "need both classes, got {left} left and {} right",
            labels.len() - left
        )));
    }
    let d = features[0].as_ref().len();
    for (i, f) in features.iter().enumerate() {
        let f = f.as_ref();
        if f.len() != d {
            return Err(SvmError::Shape(format!(
                "feature {i} has dimension {}, expected {d}",
                f.len()
            )));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(SvmError::Numeric(format!("feature {i} is not finite")));
        }
    }
    Ok(d)
}

pub fn train_detailed<F: AsRef<[f64]> + Sync>(
    features: &[F],
    labels: &[ClassLabel],
    cfg: &SvmConfig,
    opts: SmoOptions,
) -> Result<SmoSolution, SvmError> {
    cfg.validate()?;
    let d = check_inputs(features, labels)?;
    let n = features.len();
    let gamma = resolve_gamma(cfg.gamma, features);
    let c = cfg.c;
    let y: Vec<f64> = labels.iter().map(|l| l.as_f64()).collect();

    // Row-major kernel matrix.
    let kernel: Vec<f64> = opts
        .exec
        .map_range(n, |i| {
            let xi = features[i].as_ref();
            features
                .iter()
                .map(|xj| rbf_unchecked(xi, xj.as_ref(), gamma))
                .collect::<Vec<f64>>()
        })
        .concat();
    let k = |i: usize, j: usize| kernel[i * n + j];

    let mut alpha = vec![0.0; n];
    // Gradient of 1/2 a^T Q a - e^T a.
    let mut grad = vec![-1.0; n];
    let in_up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let in_low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);

    let max_iter = cfg.max_passes.saturating_mul(n);
    let mut iterations = 0;
    let mut converged = false;
    let mut objective_trace = Vec::new();

    while iterations < max_iter {
        let mut up: Option<(usize, f64)> = None;
        let mut low: Option<(usize, f64)> = None;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t]) && up.is_none_or(|(_, best)| v > best) {
                up = Some((t, v));
            }
            if in_low(alpha[t], y[t]) && low.is_none_or(|(_, best)| v < best) {
                low = Some((t, v));
            }
        }
        let (Some((i, vi)), Some((j, vj))) = (up, low) else {
            converged = true;
            break;
        };
        if vi - vj <= cfg.kkt_tol {
            converged = true;
            break;
        }

        let eta = (k(i, i) + k(j, j) - 2.0 * k(i, j)).max(MIN_CURVATURE);
        let (ai, aj) = (alpha[i], alpha[j]);
        let (lo, hi) = if y[i] != y[j] {
            ((aj - ai).max(0.0), (c + aj - ai).min(c))
        } else {
            ((ai + aj - c).max(0.0), (ai + aj).min(c))
        };
        // E_i - E_j = v_j - v_i.
        let aj_new = (aj + y[j] * (vj - vi) / eta).clamp(lo, hi);
        let ai_new = ai + y[i] * y[j] * (aj - aj_new);
        alpha[i] = ai_new;
        alpha[j] = aj_new;
        // Snap to the box so membership tests stay exact.
        for t in [i, j] {
            if alpha[t] < c * 1e-14 {
                alpha[t] = 0.0;
            } else if alpha[t] > c * (1.0 - 1e-14) {
                alpha[t] = c;
            }
        }
        let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k(t, i) * di + y[j] * k(t, j) * dj);
        }
        iterations += 1;
        if opts.record_objective {
            objective_trace.push(dual_objective(&alpha, &grad));
        }
    }
    if !converged {
        log::warn!("SMO stopped after {iterations} updates without reaching kkt_tol");
    }

    let bias = compute_bias(&alpha, &y, &grad, c);
    let mut support_vectors = Vec::new();
    let mut dual_coefs = Vec::new();
    for t in 0..n {
        if alpha[t] > 0.0 {
            support_vectors.push(features[t].as_ref().to_vec());
            dual_coefs.push(alpha[t] * y[t]);
        }
    }
    let model = SvmModel {
        support_vectors,
        dual_coefs,
        bias,
        gamma,
        config: *cfg,
        feature_dim: d,
    };
    Ok(SmoSolution {
        model,
        alpha,
        iterations,
        converged,
        objective_trace,
    })
}

/// `sum a - 1/2 a^T Q a`, using `Q a = grad + 1`.
fn dual_objective(alpha: &[f64], grad: &[f64]) -> f64 {
    alpha
        .iter()
        .zip(grad)
        .map(|(a, g)| a - 0.5 * a * (g + 1.0))
        .sum()
}

/// Mean of `-y G` over free multipliers, or the midpoint of the feasible
/// interval when every multiplier sits at a bound.
fn compute_bias(alpha: &[f64], y: &[f64], grad: &[f64], c: f64) -> f64 {
    let mut free_sum = 0.0;
    let mut free_n = 0usize;
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    for t in 0..alpha.len() {
        let v = -y[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            free_sum += v;
            free_n += 1;
        } else {
            // Points only in I_low bound b from above, points only in I_up
            // from below.
            let at_upper = alpha[t] >= c;
            if (y[t] > 0.0) == at_upper {
                ub = ub.min(v);
            } else {
                lb = lb.max(v);
            }
        }
    }
    if free_n > 0 {
        free_sum / free_n as f64
    } else if ub.is_finite() && lb.is_finite() {
        0.5 * (ub + lb)
    } else if ub.is_finite() {
        ub
    } else {
        lb
    }
}

/// `f(x) = sum_i coef_i K(sv_i, x) + b`.
pub fn decision(model: &SvmModel, x: &[f64]) -> Result<f64, SvmError> {
    if x.len() != model.feature_dim {
        return Err(SvmError::Shape(format!(
            "feature has dimension {}, model expects {}",
            x.len(),
            model.feature_dim
        )));
    }
    let sum: f64 = model
        .support_vectors
        .iter()
        .zip(&model.dual_coefs)
        .map(|(sv, coef)| coef * rbf_unchecked(sv, x, model.gamma))
        .sum();
    Ok(sum + model.bias)
}

/// Sign of [`decision`]; exactly zero maps to `Left` (+1).
pub fn predict(model: &SvmModel, x: &[f64]) -> Result<ClassLabel, SvmError> {
    decision(model, x).map(ClassLabel::from_decision)
}

pub fn decision_batch<F: AsRef<[f64]> + Sync>(
    model: &SvmModel,
    xs: &[F],
    exec: Exec,
) -> Result<Vec<f64>, SvmError> {
    exec.map(xs, |x| decision(model, x.as_ref()))
        .into_iter()
        .collect()
}

/// One failed KKT condition.
#[derive(Debug, Clone, PartialEq)]
pub struct KktViolation {
    pub index: usize,
    pub alpha: f64,
    /// `y_i f(x_i)`
    pub margin: f64,
}

/// Checks `a=0 => y f >= 1-tol`, `0<a<C => |y f - 1| <= tol`,
/// `a=C => y f <= 1+tol` for every training point.
pub fn kkt_audit<F: AsRef<[f64]>>(
    model: &SvmModel,
    alpha: &[f64],
    features: &[F],
    labels: &[ClassLabel],
    tol: f64,
) -> Result<Vec<KktViolation>, SvmError> {
    let c = model.config.c;
    let mut out = Vec::new();
    for (t, (x, label)) in features.iter().zip(labels).enumerate() {
        let margin = label.as_f64() * decision(model, x.as_ref())?;
        let a = alpha[t];
        let ok = if a <= 0.0 {
            margin >= 1.0 - tol
        } else if a >= c {
            margin <= 1.0 + tol
        } else {
            (margin - 1.0).abs() <= tol
        };
        if !ok {
            out.push(KktViolation {
                index: t,
                alpha: a,
                margin,
            });
        }
    }
    Ok(out)
}
