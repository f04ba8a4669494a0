//! Motor-imagery brain-computer-interface pipeline.
//!
//! Two-class (left/right hand imagery) classification of frontal band-power
//! streams: common spatial pattern (CSP) filters feed an RBF-kernel SVM, an
//! analytic hierarchy model picks the channel set, and a streaming classifier
//! turns a 10 Hz frame feed into left/right commands.
//!
//! Modules, bottom-up:
//!
//! - [`signal`]: channel and trial types, session CSV I/O, the synthetic
//!   session generator, and window extraction.
//! - [`csp`]: covariance estimation, CSP filter fitting (single group and
//!   group-averaged) and projection features.
//! - [`svm`]: RBF kernel, SMO training, decision and prediction.
//! - [`ahp`]: pairwise comparison matrix, priority weights and the Q score
//!   used for channel selection.
//! - [`pipeline`]: training, splits, k-fold cross-validation and the
//!   period/channel reports.
//! - [`realtime`]: sliding-window stream classification, sources and the
//!   model file.
//!
//! With the `parallel` feature (on by default) fold, period and channel
//! sweeps, kernel matrices and batch prediction run on rayon. Every such
//! entry point has a `*_with(.., Exec)` form so the sequential path stays
//! available at runtime.

pub mod ahp;
pub mod csp;
pub mod exec;
pub mod pipeline;
pub mod realtime;
pub mod signal;
pub mod svm;

pub use exec::Exec;
