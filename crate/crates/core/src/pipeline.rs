//! Training and evaluation protocol.
//!
//! A classifier is trained per subject: each trial is cut to the effective
//! period (default ordinal seconds 3-7), CSP filters are fit on the
//! per-trial segment covariances, the segments are cut into K-frame windows
//! and every window becomes one SVM example carrying its trial's label.
//!
//! Cross-validation folds by trial, so windows of one trial never sit on both
//! sides of a split.

use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ahp::{self, AhpError, ChannelEvaluation};
use crate::csp::{self, CspConfig, CspError, FeatureVector, SpatialFilterSet};
use crate::exec::Exec;
use crate::signal::{extract_window, ChannelSet, ClassLabel, Period, SignalError, SignalWindow, Trial};
use crate::svm::{self, SvmConfig, SvmError, SvmModel};

/// Accuracy a subject's classifier must exceed to be accepted.
pub const ACCEPTANCE_THRESHOLD: f64 = 0.80;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Csp(#[from] CspError),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Ahp(#[from] AhpError),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("fold error: {0}")]
    Fold(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub channel_set: ChannelSet,
    pub period: Period,
    /// K, frames per classifier window.
    pub window_len: usize,
    /// Frames between consecutive training/evaluation windows.
    pub window_step: usize,
    pub csp: CspConfig,
    pub svm: SvmConfig,
    /// Seeds fold assignment and random splits.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            channel_set: ChannelSet::gamma(),
            period: Period::default(),
            window_len: 5,
            window_step: 5,
            csp: CspConfig::default(),
            svm: SvmConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.window_len == 0 || self.window_step == 0 {
            return bad("window length and step must be positive".into());
        }
        if self.window_len > self.period.frame_count() {
            return bad(format!(
                "window of {} frames does not fit period {} ({} frames)",
                self.window_len,
                self.period,
                self.period.frame_count()
            ));
        }
        if self.csp.groups == 0 || self.csp.filters_per_class == 0 {
            return bad("CSP groups and filters per class must be positive".into());
        }
        if 2 * self.csp.filters_per_class > self.channel_set.len() {
            return bad(format!(
                "{} filters per class need at least {} channels",
                self.csp.filters_per_class,
                2 * self.csp.filters_per_class
            ));
        }
        self.svm.validate()?;
        Ok(())
    }
}

/// CSP filters plus the SVM trained on their features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub filters: SpatialFilterSet,
    pub svm: SvmModel,
    pub config: TrainConfig,
    pub training_accuracy: f64,
}

impl TrainedClassifier {
    pub fn features(&self, w: &SignalWindow) -> Result<FeatureVector, PipelineError> {
        Ok(csp::extract_features(&self.filters, w)?)
    }

    /// Label and raw decision value for one K-frame window.
    pub fn classify(&self, w: &SignalWindow) -> Result<(ClassLabel, f64), PipelineError> {
        let f = self.features(w)?;
        let d = svm::decision(&self.svm, f.values())?;
        Ok((ClassLabel::from_decision(d), d))
    }

    /// Cross-checks components against each other.
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.config.validate()?;
        self.filters.validate()?;
        self.svm.validate()?;
        if self.filters.channel_set != self.config.channel_set {
            return Err(PipelineError::Config(
                "filter channel set differs from training config".into(),
            ));
        }
        let dim = self.filters.feature_dim(self.config.window_len);
        if self.svm.feature_dim != dim {
            return Err(PipelineError::Config(format!(
                "SVM expects {} features, CSP produces {dim}",
                self.svm.feature_dim
            )));
        }
        if !(0.0..=1.0).contains(&self.training_accuracy) {
            return Err(PipelineError::Config("training accuracy outside [0, 1]".into()));
        }
        Ok(())
    }
}

/// `(subject_id, trial_index)`.
pub type TrialKey = (String, u32);

fn segments(trials: &[Trial], cfg: &TrainConfig) -> Result<Vec<(SignalWindow, ClassLabel)>, PipelineError> {
    trials
        .iter()
        .map(|t| Ok((extract_window(t, cfg.period, &cfg.channel_set)?, t.label)))
        .collect()
}

fn window_features(
    filters: &SpatialFilterSet,
    segment: &SignalWindow,
    cfg: &TrainConfig,
) -> Result<Vec<FeatureVector>, PipelineError> {
    segment
        .slide(cfg.window_len, cfg.window_step)
        .map(|w| Ok(csp::extract_features(filters, &w)?))
        .collect()
}

pub fn train_classifier(trials: &[Trial], cfg: &TrainConfig) -> Result<TrainedClassifier, PipelineError> {
    train_classifier_with(trials, cfg, Exec::default())
}

pub fn train_classifier_with(
    trials: &[Trial],
    cfg: &TrainConfig,
    exec: Exec,
) -> Result<TrainedClassifier, PipelineError> {
    cfg.validate()?;
    let segs = segments(trials, cfg)?;
    let filters = csp::fit_averaged(&segs, &cfg.csp)?;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (seg, label) in &segs {
        for f in window_features(&filters, seg, cfg)? {
            features.push(f.into_values());
            labels.push(*label);
        }
    }
    let solution = svm::train_detailed(
        &features,
        &labels,
        &cfg.svm,
        svm::SmoOptions {
            record_objective: false,
            exec,
        },
    )?;
    let decisions = svm::decision_batch(&solution.model, &features, exec)?;
    let correct = decisions
        .iter()
        .zip(&labels)
        .filter(|(d, l)| ClassLabel::from_decision(**d) == **l)
        .count();
    Ok(TrainedClassifier {
        filters,
        svm: solution.model,
        config: cfg.clone(),
        training_accuracy: correct as f64 / labels.len() as f64,
    })
}

/// Window-level confusion counts, keyed by true class then prediction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub left_as_left: usize,
    pub left_as_right: usize,
    pub right_as_left: usize,
    pub right_as_right: usize,
}

impl Confusion {
    pub fn record(&mut self, truth: ClassLabel, predicted: ClassLabel) {
        match (truth, predicted) {
            (ClassLabel::Left, ClassLabel::Left) => self.left_as_left += 1,
            (ClassLabel::Left, ClassLabel::Right) => self.left_as_right += 1,
            (ClassLabel::Right, ClassLabel::Left) => self.right_as_left += 1,
            (ClassLabel::Right, ClassLabel::Right) => self.right_as_right += 1,
        }
    }

    pub fn merge(&mut self, other: &Confusion) {
        self.left_as_left += other.left_as_left;
        self.left_as_right += other.left_as_right;
        self.right_as_left += other.right_as_left;
        self.right_as_right += other.right_as_right;
    }

    pub fn total(&self) -> usize {
        self.left_as_left + self.left_as_right + self.right_as_left + self.right_as_right
    }

    pub fn correct(&self) -> usize {
        self.left_as_left + self.right_as_right
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.correct(), self.total())
    }

    /// Recall of left-hand windows.
    pub fn left_accuracy(&self) -> f64 {
        ratio(self.left_as_left, self.left_as_left + self.left_as_right)
    }

    /// Recall of right-hand windows.
    pub fn right_accuracy(&self) -> f64 {
        ratio(self.right_as_right, self.right_as_left + self.right_as_right)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub train_trials: Vec<TrialKey>,
    pub test_trials: Vec<TrialKey>,
    pub confusion: Confusion,
    pub training_accuracy: f64,
}

impl FoldResult {
    pub fn accuracy(&self) -> f64 {
        self.confusion.accuracy()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub left_accuracy: f64,
    pub right_accuracy: f64,
    pub overall_accuracy: f64,
    pub fold_accuracies: Vec<f64>,
    pub confusion: Confusion,
    pub folds: Vec<FoldResult>,
}

impl EvaluationReport {
    pub fn from_folds(folds: Vec<FoldResult>) -> Self {
        let mut confusion = Confusion::default();
        for f in &folds {
            confusion.merge(&f.confusion);
        }
        EvaluationReport {
            left_accuracy: confusion.left_accuracy(),
            right_accuracy: confusion.right_accuracy(),
            overall_accuracy: confusion.accuracy(),
            fold_accuracies: folds.iter().map(FoldResult::accuracy).collect(),
            confusion,
            folds,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "fold,left,right,all,windows")?;
        for (i, f) in self.folds.iter().enumerate() {
            let c = &f.confusion;
            writeln!(
                w,
                "{},{},{},{},{}",
                i + 1,
                c.left_accuracy(),
                c.right_accuracy(),
                c.accuracy(),
                c.total()
            )?;
        }
        writeln!(
            w,
            "all,{},{},{},{}",
            self.left_accuracy,
            self.right_accuracy,
            self.overall_accuracy,
            self.confusion.total()
        )
    }
}

impl fmt::Display for EvaluationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<8}{:>9}{:>9}{:>9}{:>9}", "fold", "left", "right", "all", "windows")?;
        let pct = |v: f64| format!("{:.1}%", 100.0 * v);
        for (i, fold) in self.folds.iter().enumerate() {
            let c = &fold.confusion;
            writeln!(
                f,
                "{:<8}{:>9}{:>9}{:>9}{:>9}",
                i + 1,
                pct(c.left_accuracy()),
                pct(c.right_accuracy()),
                pct(c.accuracy()),
                c.total()
            )?;
        }
        write!(
            f,
            "{:<8}{:>9}{:>9}{:>9}{:>9}",
            "average",
            pct(self.left_accuracy),
            pct(self.right_accuracy),
            pct(self.overall_accuracy),
            self.confusion.total()
        )
    }
}

/// Per-window evaluation of a trained classifier on held-out trials.
pub fn evaluate(
    classifier: &TrainedClassifier,
    trials: &[Trial],
    exec: Exec,
) -> Result<Confusion, PipelineError> {
    let cfg = &classifier.config;
    let per_trial = exec.map(trials, |t| -> Result<Confusion, PipelineError> {
        let seg = extract_window(t, cfg.period, &cfg.channel_set)?;
        let mut c = Confusion::default();
        for f in window_features(&classifier.filters, &seg, cfg)? {
            let d = svm::decision(&classifier.svm, f.values())?;
            c.record(t.label, ClassLabel::from_decision(d));
        }
        Ok(c)
    });
    let mut total = Confusion::default();
    for c in per_trial {
        total.merge(&c?);
    }
    Ok(total)
}

/// Single held-out evaluation as a one-fold report.
pub fn evaluate_report(
    classifier: &TrainedClassifier,
    trials: &[Trial],
) -> Result<EvaluationReport, PipelineError> {
    let confusion = evaluate(classifier, trials, Exec::default())?;
    Ok(EvaluationReport::from_folds(vec![FoldResult {
        train_trials: Vec::new(),
        test_trials: trials.iter().map(Trial::key).collect(),
        confusion,
        training_accuracy: classifier.training_accuracy,
    }]))
}

/// Strict: true iff overall accuracy is over 80%.
pub fn acceptance_gate(report: &EvaluationReport) -> bool {
    report.overall_accuracy > ACCEPTANCE_THRESHOLD
}

fn class_indices(trials: &[Trial], label: ClassLabel) -> Vec<usize> {
    (0..trials.len()).filter(|&i| trials[i].label == label).collect()
}

/// Random 30/10 split of a 40-trial session, 15+15 / 5+5 by class.
pub fn split_30_10(trials: &[Trial], seed: u64) -> Result<(Vec<Trial>, Vec<Trial>), PipelineError> {
    let left = class_indices(trials, ClassLabel::Left);
    let right = class_indices(trials, ClassLabel::Right);
    if trials.len() != 40 || left.len() != 20 {
        return Err(PipelineError::Protocol(format!(
            "30/10 split needs 40 trials (20 per class), got {} ({} left, {} right)",
            trials.len(),
            left.len(),
            right.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_test = vec![false; trials.len()];
    for mut idx in [left, right] {
        idx.shuffle(&mut rng);
        for &i in &idx[15..] {
            is_test[i] = true;
        }
    }
    let (test, train): (Vec<_>, Vec<_>) = trials
        .iter()
        .cloned()
        .zip(is_test)
        .partition(|(_, t)| *t);
    Ok((
        train.into_iter().map(|(t, _)| t).collect(),
        test.into_iter().map(|(t, _)| t).collect(),
    ))
}

/// Stratified fold assignment: each class is shuffled under `seed` and dealt
/// round-robin. Returns the trial indices of each fold.
pub fn stratified_folds(trials: &[Trial], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, PipelineError> {
    if k < 2 {
        return Err(PipelineError::Fold(format!("need at least 2 folds, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    for label in [ClassLabel::Left, ClassLabel::Right] {
        let mut idx = class_indices(trials, label);
        if idx.len() < k {
            return Err(PipelineError::Fold(format!(
                "{k} folds need at least {k} {label} trials, have {}",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for (i, t) in idx.into_iter().enumerate() {
            folds[i % k].push(t);
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

pub fn cross_validate(trials: &[Trial], cfg: &TrainConfig, k: usize) -> Result<EvaluationReport, PipelineError> {
    cross_validate_with(trials, cfg, k, Exec::default())
}

pub fn cross_validate_with(
    trials: &[Trial],
    cfg: &TrainConfig,
    k: usize,
    exec: Exec,
) -> Result<EvaluationReport, PipelineError> {
    cfg.validate()?;
    let folds = stratified_folds(trials, k, cfg.seed)?;
    let results = exec.map(&folds, |test_idx| -> Result<FoldResult, PipelineError> {
        let mut in_test = vec![false; trials.len()];
        test_idx.iter().for_each(|&i| in_test[i] = true);
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (t, &held_out) in trials.iter().zip(&in_test) {
            if held_out { &mut test } else { &mut train }.push(t.clone());
        }
        // Inner work stays sequential; the folds themselves are the parallel unit.
        let classifier = train_classifier_with(&train, cfg, Exec::Sequential)?;
        let confusion = evaluate(&classifier, &test, Exec::Sequential)?;
        Ok(FoldResult {
            train_trials: train.iter().map(Trial::key).collect(),
            test_trials: test.iter().map(Trial::key).collect(),
            confusion,
            training_accuracy: classifier.training_accuracy,
        })
    });
    Ok(EvaluationReport::from_folds(results.into_iter().collect::<Result<_, _>>()?))
}

/// The four effective periods compared by default.
pub fn standard_periods() -> Vec<Period> {
    ["1-5", "2-6", "3-7", "4-8"]
        .iter()
        .map(|p| p.parse().expect("static period"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodReport {
    pub rows: Vec<(Period, EvaluationReport)>,
    /// First period with the highest overall accuracy.
    pub best: Period,
}

impl PeriodReport {
    pub fn accuracies(&self) -> Vec<f64> {
        self.rows.iter().map(|(_, r)| r.overall_accuracy).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "period,accuracy")?;
        for (p, r) in &self.rows {
            writeln!(w, "{p},{}", r.overall_accuracy)?;
        }
        Ok(())
    }
}

impl fmt::Display for PeriodReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<16}", "period")?;
        for (p, _) in &self.rows {
            write!(f, "{:>9}", format!("{p}s"))?;
        }
        write!(f, "\n{:<16}", "accuracy rate")?;
        for (_, r) in &self.rows {
            write!(f, "{:>9}", format!("{:.1}%", 100.0 * r.overall_accuracy))?;
        }
        write!(f, "\nbest period: {}s", self.best)
    }
}

/// Cross-validated accuracy for each candidate period.
pub fn window_period_report(
    trials: &[Trial],
    cfg: &TrainConfig,
    periods: &[Period],
    k: usize,
) -> Result<PeriodReport, PipelineError> {
    window_period_report_with(trials, cfg, periods, k, Exec::default())
}

pub fn window_period_report_with(
    trials: &[Trial],
    cfg: &TrainConfig,
    periods: &[Period],
    k: usize,
    exec: Exec,
) -> Result<PeriodReport, PipelineError> {
    if periods.is_empty() {
        return Err(PipelineError::Config("no periods to compare".into()));
    }
    let reports = exec.map(periods, |&p| {
        let cfg = TrainConfig {
            period: p,
            ..cfg.clone()
        };
        cross_validate_with(trials, &cfg, k, exec)
    });
    let rows: Vec<(Period, EvaluationReport)> = periods
        .iter()
        .copied()
        .zip(reports.into_iter().collect::<Result<Vec<_>, _>>()?)
        .collect();
    let best = rows
        .iter()
        .fold(None::<&(Period, EvaluationReport)>, |best, row| match best {
            Some(b) if b.1.overall_accuracy >= row.1.overall_accuracy => Some(b),
            _ => Some(row),
        })
        .map(|r| r.0)
        .expect("non-empty");
    Ok(PeriodReport { rows, best })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelReport {
    pub weights: Vec<f64>,
    pub consistency_ratio: f64,
    /// In candidate order.
    pub evaluations: Vec<ChannelEvaluation>,
    pub winner: ChannelSet,
}

impl ChannelReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "channels,n,c1,c2,c3,q")?;
        for e in &self.evaluations {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                e.channel_set,
                e.channel_set.len(),
                e.scores.c1,
                e.scores.c2,
                e.scores.c3,
                e.q
            )?;
        }
        Ok(())
    }
}

impl fmt::Display for ChannelReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = &self.weights;
        writeln!(
            f,
            "weights: accuracy {:.3}, prior knowledge {:.3}, channel count {:.3} (CR {:.4})",
            w[0], w[1], w[2], self.consistency_ratio
        )?;
        let names: Vec<String> = self.evaluations.iter().map(|e| e.channel_set.to_string()).collect();
        let width = names.iter().map(String::len).max().unwrap_or(0).max(8) + 2;
        writeln!(f, "{:<width$}{:>2}{:>9}{:>6}{:>7}{:>8}", "channels", "N", "c1", "c2", "c3", "Q")?;
        for (e, name) in self.evaluations.iter().zip(&names) {
            writeln!(
                f,
                "{:<width$}{:>2}{:>9}{:>6}{:>7}{:>8.3}",
                name,
                e.channel_set.len(),
                format!("{:.1}%", 100.0 * e.scores.c1),
                e.scores.c2,
                format!("{:.3}", e.scores.c3),
                e.q
            )?;
        }
        write!(f, "selected: {}", self.winner)
    }
}

/// Cross-validated accuracy per candidate channel set, scored and ranked
/// with the analytic hierarchy weights.
pub fn channel_selection_report(
    trials: &[Trial],
    cfg: &TrainConfig,
    candidates: &[ChannelSet],
    k: usize,
) -> Result<ChannelReport, PipelineError> {
    channel_selection_report_with(trials, cfg, candidates, k, Exec::default())
}

pub fn channel_selection_report_with(
    trials: &[Trial],
    cfg: &TrainConfig,
    candidates: &[ChannelSet],
    k: usize,
    exec: Exec,
) -> Result<ChannelReport, PipelineError> {
    if candidates.is_empty() {
        return Err(AhpError::Empty.into());
    }
    let matrix = ahp::criteria_matrix();
    let weights = ahp::principal_weights(&matrix)?;
    let consistency_ratio = ahp::consistency_ratio(&matrix)?;
    let reports = exec.map(candidates, |set| {
        let cfg = TrainConfig {
            channel_set: set.clone(),
            ..cfg.clone()
        };
        cross_validate_with(trials, &cfg, k, exec)
    });
    let mut evaluations = Vec::with_capacity(candidates.len());
    for (set, report) in candidates.iter().zip(reports) {
        evaluations.push(ChannelEvaluation::new(set.clone(), report?.overall_accuracy, &weights)?);
    }
    let winner = ahp::select_channels(&evaluations)?.channel_set.clone();
    Ok(ChannelReport {
        weights,
        consistency_ratio,
        evaluations,
        winner,
    })
}
