//! Common spatial patterns.
//!
//! Filters come from the simultaneous diagonalization of the two class
//! covariances: whiten the composite `C_L + C_R`, eigendecompose the whitened
//! left covariance and keep the eigenvectors with the largest (left) and
//! smallest (right) eigenvalues. [`fit_averaged`] repeats this over round-robin
//! trial groups and averages the sign-canonical filters.
//!
//! Features are the raw projections `H_L = W_L X`, `H_R = W_R X` of a
//! window, concatenated row-major: `2 * l * K` values.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{ChannelSet, ClassLabel, SignalWindow};

/// Two eigenvalues closer than this are treated as a tie.
const TIE_TOL: f64 = 1e-9;
/// Composite eigenvalues below `SINGULAR_TOL * max` count as zero.
const SINGULAR_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum CspError {
    #[error("degenerate signal: window has zero power")]
    ZeroPower,
    #[error(
        "singular composite covariance (smallest eigenvalue {min:e}, largest {max:e}); \
         record more or longer trials, or add channels that carry independent signal"
    )]
    Singular { min: f64, max: f64 },
    #[error("grouping error: {0}")]
    Grouping(String),
    #[error("shape error: {0}")]
    Shape(String),
}

/// Whether windows are mean-removed per channel before the second moment is
/// taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    /// Trace-normalized `X X^T` of the raw band powers.
    #[default]
    Raw,
    /// Trace-normalized `X X^T` after removing each channel's window mean.
    Centered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Concatenated projections, `2 l K` values.
    #[default]
    Projection,
    /// Log-variance of each projected row, `2 l` values.
    LogVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CspConfig {
    /// `l`
    pub filters_per_class: usize,
    /// `G`
    pub groups: usize,
    pub centering: Centering,
    pub features: FeatureMode,
}

impl Default for CspConfig {
    fn default() -> Self {
        CspConfig {
            filters_per_class: 1,
            groups: 5,
            centering: Centering::Raw,
            features: FeatureMode::Projection,
        }
    }
}

/// Symmetric, positive semidefinite, unit-trace N x N matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialCovariance {
    matrix: DMatrix<f64>,
    channel_set: ChannelSet,
}

impl SpatialCovariance {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn channel_set(&self) -> &ChannelSet {
        &self.channel_set
    }

    /// Elementwise mean; all inputs must share a channel set.
    pub fn mean<'a>(
        covs: impl IntoIterator<Item = &'a SpatialCovariance>,
    ) -> Result<SpatialCovariance, CspError> {
        let mut iter = covs.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| CspError::Grouping("no covariances to average".into()))?;
        let mut sum = first.matrix.clone();
        let mut n = 1.0;
        for c in iter {
            if c.channel_set != first.channel_set {
                return Err(CspError::Shape("channel sets differ".into()));
            }
            sum += &c.matrix;
            n += 1.0;
        }
        Ok(SpatialCovariance {
            matrix: sum / n,
            channel_set: first.channel_set.clone(),
        })
    }

    pub fn from_matrix(
        matrix: DMatrix<f64>,
        channel_set: ChannelSet,
    ) -> Result<SpatialCovariance, CspError> {
        if matrix.nrows() != channel_set.len() || !matrix.is_square() {
            return Err(CspError::Shape(format!(
                "{}x{} matrix for {} channels",
                matrix.nrows(),
                matrix.ncols(),
                channel_set.len()
            )));
        }
        let tr = matrix.trace();
        if tr <= 0.0 || !tr.is_finite() {
            return Err(CspError::ZeroPower);
        }
        let sym = (&matrix + matrix.transpose()) * (0.5 / tr);
        Ok(SpatialCovariance {
            matrix: sym,
            channel_set,
        })
    }
}

/// `C = X X^T / trace(X X^T)` with each channel mean-removed over the window.
pub fn covariance(w: &SignalWindow) -> Result<SpatialCovariance, CspError> {
    covariance_with(w, Centering::Centered)
}

pub fn covariance_with(
    w: &SignalWindow,
    centering: Centering,
) -> Result<SpatialCovariance, CspError> {
    if w.frames() < 2 {
        return Err(CspError::Shape(format!(
            "covariance needs at least 2 frames, got {}",
            w.frames()
        )));
    }
    let mut x = w.data().clone();
    if centering == Centering::Centered {
        for mut row in x.row_iter_mut() {
            let m = row.mean();
            row.add_scalar_mut(-m);
        }
    }
    let xxt = &x * x.transpose();
    let tr = xxt.trace();
    if tr <= 0.0 || !tr.is_finite() {
        return Err(CspError::ZeroPower);
    }
    // X X^T is symmetric up to rounding; force exact symmetry.
    let c = (&xxt + xxt.transpose()) * (0.5 / tr);
    Ok(SpatialCovariance {
        matrix: c,
        channel_set: w.channel_set().clone(),
    })
}

/// Filters of one group, plus the intermediate quantities of the fit.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupFilters {
    /// `l x N`, unit rows, most left-discriminative first.
    pub left: DMatrix<f64>,
    /// `l x N`, unit rows, most right-discriminative first.
    pub right: DMatrix<f64>,
    /// Whitened left-class eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// All N filters (rows of `B^T P`), in eigenvalue order, unnormalized.
    pub projections: DMatrix<f64>,
    /// `P = Lambda^{-1/2} U^T`.
    pub whitening: DMatrix<f64>,
    /// Some eigenvalues tie; their order follows eigenvector index order.
    pub degenerate: bool,
}

/// Unit norm, then flip so the first largest-magnitude entry is positive.
pub(crate) fn canonicalize_row(row: &mut [f64]) {
    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        row.iter_mut().for_each(|v| *v /= norm);
    }
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if v.abs() > row[best].abs() {
            best = i;
        }
    }
    if row[best] < 0.0 {
        row.iter_mut().for_each(|v| *v = -*v);
    }
}

fn canonicalize_rows(m: &mut DMatrix<f64>) {
    for r in 0..m.nrows() {
        let mut row: Vec<f64> = m.row(r).iter().copied().collect();
        canonicalize_row(&mut row);
        for (c, v) in row.into_iter().enumerate() {
            m[(r, c)] = v;
        }
    }
}

fn symmetric(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Standard two-class CSP on a pair of class covariances.
pub fn fit_group(
    cov_left: &SpatialCovariance,
    cov_right: &SpatialCovariance,
    filters_per_class: usize,
) -> Result<GroupFilters, CspError> {
    if cov_left.channel_set != cov_right.channel_set {
        return Err(CspError::Shape("class covariances use different channel sets".into()));
    }
    let n = cov_left.matrix.nrows();
    let l = filters_per_class;
    if l == 0 || 2 * l > n {
        return Err(CspError::Shape(format!(
            "{l} filters per class needs at least {} channels, have {n}",
            2 * l.max(1)
        )));
    }

    let composite = symmetric(&(&cov_left.matrix + &cov_right.matrix));
    let eig = SymmetricEigen::new(composite);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if max.is_nan() || max <= 0.0 || min <= SINGULAR_TOL * max {
        return Err(CspError::Singular { min, max });
    }
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()));
    let whitening = inv_sqrt * eig.eigenvectors.transpose();

    let whitened_left = symmetric(&(&whitening * &cov_left.matrix * whitening.transpose()));
    let eig2 = SymmetricEigen::new(whitened_left);
    let mut order: Vec<usize> = (0..n).collect();
    // Stable: tied eigenvalues keep ascending index order.
    order.sort_by(|&a, &b| eig2.eigenvalues[b].total_cmp(&eig2.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig2.eigenvalues[i]).collect();
    let degenerate = eigenvalues.windows(2).any(|w| (w[0] - w[1]).abs() < TIE_TOL);

    let all = eig2.eigenvectors.transpose() * &whitening;
    let projections = DMatrix::from_fn(n, n, |r, c| all[(order[r], c)]);
    let mut left = DMatrix::from_fn(l, n, |r, c| projections[(r, c)]);
    let mut right = DMatrix::from_fn(l, n, |r, c| projections[(n - 1 - r, c)]);
    canonicalize_rows(&mut left);
    canonicalize_rows(&mut right);

    Ok(GroupFilters {
        left,
        right,
        eigenvalues,
        projections,
        whitening,
        degenerate,
    })
}

/// Trained filters `W_L`, `W_R` (group-averaged when `group_count > 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialFilterSet {
    #[serde(with = "rows")]
    pub left: DMatrix<f64>,
    #[serde(with = "rows")]
    pub right: DMatrix<f64>,
    pub filters_per_class: usize,
    pub channel_set: ChannelSet,
    pub group_count: usize,
    pub centering: Centering,
    pub features: FeatureMode,
    /// Whitened left-class eigenvalues of every group, descending.
    pub group_eigenvalues: Vec<Vec<f64>>,
    pub degenerate: bool,
}

impl SpatialFilterSet {
    /// Checks shapes, unit rows and sign canonicalization.
    pub fn validate(&self) -> Result<(), CspError> {
        let n = self.channel_set.len();
        let l = self.filters_per_class;
        for (name, m) in [("left", &self.left), ("right", &self.right)] {
            if m.nrows() != l || m.ncols() != n {
                return Err(CspError::Shape(format!(
                    "{name} filters are {}x{}, expected {l}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            for row in m.row_iter() {
                let v: Vec<f64> = row.iter().copied().collect();
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(CspError::Shape(format!("{name} filter is not finite")));
                }
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > 1e-9 {
                    return Err(CspError::Shape(format!("{name} filter norm {norm}")));
                }
                let mut canon = v.clone();
                canonicalize_row(&mut canon);
                if canon.iter().zip(&v).any(|(a, b)| (a - b).abs() > 1e-12) {
                    return Err(CspError::Shape(format!("{name} filter is not sign-canonical")));
                }
            }
        }
        Ok(())
    }

    /// Feature dimension for windows of `k` frames.
    pub fn feature_dim(&self, k: usize) -> usize {
        match self.features {
            FeatureMode::Projection => 2 * self.filters_per_class * k,
            FeatureMode::LogVariance => 2 * self.filters_per_class,
        }
    }
}

/// Projection features of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
    window_len: usize,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, window_len: usize) -> Self {
        FeatureVector { values, window_len }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// K of the source window.
    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// Round-robin group-averaged CSP over labeled windows (usually one
/// period segment per trial). `groups == 1` is exactly [`fit_group`] on
/// the class-mean covariances.
pub fn fit_averaged(
    trials: &[(SignalWindow, ClassLabel)],
    cfg: &CspConfig,
) -> Result<SpatialFilterSet, CspError> {
    let g = cfg.groups;
    if g == 0 {
        return Err(CspError::Grouping("group count must be at least 1".into()));
    }
    let channel_set = trials
        .first()
        .map(|(w, _)| w.channel_set().clone())
        .ok_or_else(|| CspError::Grouping("no trials".into()))?;

    let mut left = Vec::new();
    let mut right = Vec::new();
    for (w, label) in trials {
        if *w.channel_set() != channel_set {
            return Err(CspError::Shape("trial windows use different channel sets".into()));
        }
        let c = covariance_with(w, cfg.centering)?;
        match label {
            ClassLabel::Left => left.push(c),
            ClassLabel::Right => right.push(c),
        }
    }
    if left.len() < g || right.len() < g {
        return Err(CspError::Grouping(format!(
            "{g} groups need at least {g} trials per class, have {} left and {} right",
            left.len(),
            right.len()
        )));
    }

    let mut fits = Vec::with_capacity(g);
    for group in 0..g {
        let mean_l = SpatialCovariance::mean(left.iter().skip(group).step_by(g))?;
        let mean_r = SpatialCovariance::mean(right.iter().skip(group).step_by(g))?;
        fits.push(fit_group(&mean_l, &mean_r, cfg.filters_per_class)?);
    }

    let (w_left, w_right) = if g == 1 {
        (fits[0].left.clone(), fits[0].right.clone())
    } else {
        let average = |pick: fn(&GroupFilters) -> &DMatrix<f64>| {
            let mut sum = pick(&fits[0]).clone();
            for f in &fits[1..] {
                sum += pick(f);
            }
            sum /= g as f64;
            canonicalize_rows(&mut sum);
            sum
        };
        (average(|f| &f.left), average(|f| &f.right))
    };

    Ok(SpatialFilterSet {
        left: w_left,
        right: w_right,
        filters_per_class: cfg.filters_per_class,
        channel_set,
        group_count: g,
        centering: cfg.centering,
        features: cfg.features,
        degenerate: fits.iter().any(|f| f.degenerate),
        group_eigenvalues: fits.into_iter().map(|f| f.eigenvalues).collect(),
    })
}

/// `H_L = W_L X`, `H_R = W_R X`, concatenated row-major (or their row
/// log-variances under [`FeatureMode::LogVariance`]).
pub fn extract_features(
    filters: &SpatialFilterSet,
    w: &SignalWindow,
) -> Result<FeatureVector, CspError> {
    if *w.channel_set() != filters.channel_set {
        return Err(CspError::Shape(format!(
            "window channels {} do not match filter channels {}",
            w.channel_set(),
            filters.channel_set
        )));
    }
    let x = w.data();
    let k = x.ncols();
    let h_left = &filters.left * x;
    let h_right = &filters.right * x;
    let values = match filters.features {
        FeatureMode::Projection => {
            let mut v = Vec::with_capacity(2 * h_left.nrows() * k);
            for h in [&h_left, &h_right] {
                for row in h.row_iter() {
                    v.extend(row.iter());
                }
            }
            v
        }
        FeatureMode::LogVariance => {
            if k < 2 {
                return Err(CspError::Shape("log-variance needs at least 2 frames".into()));
            }
            h_left
                .row_iter()
                .chain(h_right.row_iter())
                .map(|row| row.variance().max(f64::MIN_POSITIVE).ln())
                .collect()
        }
    };
    Ok(FeatureVector::new(values, k))
}

/// Serializes a matrix as a list of rows.
mod rows {
    use nalgebra::DMatrix;
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn gamma_window(rows: &[&[f64]]) -> SignalWindow {
        let k = rows[0].len();
        let m = DMatrix::from_fn(rows.len(), k, |r, c| rows[r][c]);
        let set = if rows.len() == 2 {
            ChannelSet::gamma()
        } else {
            "gamma+beta".parse().unwrap()
        };
        SignalWindow::from_matrix(m, set).unwrap()
    }

    fn cov2(m: [[f64; 2]; 2]) -> SpatialCovariance {
        SpatialCovariance::from_matrix(
            DMatrix::from_fn(2, 2, |r, c| m[r][c]),
            ChannelSet::gamma(),
        )
        .unwrap()
    }

    #[test]
    fn uncorrelated_equal_variance() {
        let w = gamma_window(&[&[1.0, -1.0, 1.0, -1.0], &[1.0, 1.0, -1.0, -1.0]]);
        let c = covariance(&w).unwrap();
        assert_abs_diff_eq!(c.matrix()[(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(c.matrix()[(1, 1)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(c.matrix()[(0, 1)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn dominant_channel() {
        let w = gamma_window(&[&[1.0, -1.0, 1.0, -1.0], &[0.001, -0.001, 0.001, -0.001]]);
        let c = covariance(&w).unwrap();
        // 4 / (4 + 4e-6) and 4e-6 / (4 + 4e-6); off-diagonal 4e-3 / (4 + 4e-6).
        assert_abs_diff_eq!(c.matrix()[(0, 0)], 1.0 / 1.000001, epsilon = 1e-12);
        assert_abs_diff_eq!(c.matrix()[(1, 1)], 1e-6 / 1.000001, epsilon = 1e-15);
        assert_abs_diff_eq!(c.matrix().trace(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_power_window() {
        let w = gamma_window(&[&[3.0, 3.0, 3.0], &[1.0, 1.0, 1.0]]);
        assert!(matches!(covariance(&w), Err(CspError::ZeroPower)));
        assert!(covariance_with(&w, Centering::Raw).is_ok());
        let w = gamma_window(&[&[1.0], &[2.0]]);
        assert!(matches!(covariance(&w), Err(CspError::Shape(_))));
    }

    #[test]
    fn diagonal_case_selects_axes() {
        let f = fit_group(&cov2([[0.8, 0.0], [0.0, 0.2]]), &cov2([[0.2, 0.0], [0.0, 0.8]]), 1)
            .unwrap();
        assert_abs_diff_eq!(f.left[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.left[(0, 1)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.right[(0, 0)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.right[(0, 1)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.eigenvalues[0], 0.8, epsilon = 1e-12);
        assert!(!f.degenerate);
    }

    #[test]
    fn identical_classes_are_degenerate() {
        let c = cov2([[0.6, 0.1], [0.1, 0.4]]);
        let f = fit_group(&c, &c, 1).unwrap();
        assert!(f.degenerate);
        for v in &f.eigenvalues {
            assert_abs_diff_eq!(*v, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn singular_composite() {
        let c = cov2([[0.5, 0.5], [0.5, 0.5]]);
        let err = fit_group(&c, &c, 1).unwrap_err();
        assert!(matches!(err, CspError::Singular { .. }));
        assert!(err.to_string().contains("more or longer trials"));
    }

    #[test]
    fn too_many_filters() {
        let c = cov2([[0.5, 0.0], [0.0, 0.5]]);
        assert!(matches!(fit_group(&c, &c, 2), Err(CspError::Shape(_))));
    }

    #[test]
    fn whitening_and_complementarity() {
        let cl = cov2([[0.7, 0.2], [0.2, 0.3]]);
        let cr = cov2([[0.35, -0.1], [-0.1, 0.65]]);
        let f = fit_group(&cl, &cr, 1).unwrap();
        let comp = cl.matrix() + cr.matrix();
        let white = &f.whitening * &comp * f.whitening.transpose();
        assert!((white - DMatrix::identity(2, 2)).abs().max() < 1e-9);
        for (i, row) in f.projections.row_iter().enumerate() {
            let w = row.transpose();
            let denom = (w.transpose() * &comp * &w)[(0, 0)];
            let a = (w.transpose() * cl.matrix() * &w)[(0, 0)] / denom;
            let b = (w.transpose() * cr.matrix() * &w)[(0, 0)] / denom;
            assert_abs_diff_eq!(a + b, 1.0, epsilon = 1e-9);
            assert_abs_diff_eq!(a, f.eigenvalues[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn selector_filter_features() {
        let set = SpatialFilterSet {
            left: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            right: DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            filters_per_class: 1,
            channel_set: ChannelSet::gamma(),
            group_count: 1,
            centering: Centering::Raw,
            features: FeatureMode::Projection,
            group_eigenvalues: vec![],
            degenerate: false,
        };
        set.validate().unwrap();
        let w = gamma_window(&[&[1.0, 2.0, 3.0, 4.0, 5.0], &[6.0, 7.0, 8.0, 9.0, 10.0]]);
        let f = extract_features(&set, &w).unwrap();
        assert_eq!(f.values(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]);
        assert_eq!(f.len(), set.feature_dim(5));
        let zero = gamma_window(&[&[0.0; 5], &[0.0; 5]]);
        assert!(extract_features(&set, &zero).unwrap().values().iter().all(|&v| v == 0.0));
        let other = SignalWindow::from_matrix(DMatrix::zeros(2, 5), "beta".parse().unwrap())
            .unwrap();
        assert!(matches!(extract_features(&set, &other), Err(CspError::Shape(_))));
    }

    #[test]
    fn canonical_sign() {
        let mut r = vec![0.3, -0.8, 0.8];
        canonicalize_row(&mut r);
        assert!(r[1] > 0.0 && r[2] < 0.0);
        let n: f64 = r.iter().map(|v| v * v).sum();
        assert_abs_diff_eq!(n, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn grouping_errors() {
        let w = gamma_window(&[&[1.0, 2.0, 1.5], &[2.0, 1.0, 1.0]]);
        let trials = vec![(w.clone(), ClassLabel::Left), (w, ClassLabel::Right)];
        let cfg = CspConfig {
            groups: 2,
            ..Default::default()
        };
        assert!(matches!(fit_averaged(&trials, &cfg), Err(CspError::Grouping(_))));
        let cfg = CspConfig {
            groups: 0,
            ..Default::default()
        };
        assert!(matches!(fit_averaged(&trials, &cfg), Err(CspError::Grouping(_))));
    }

    #[test]
    fn serde_rows_round_trip() {
        let c = cov2([[0.7, 0.2], [0.2, 0.3]]);
        let cr = cov2([[0.3, -0.2], [-0.2, 0.7]]);
        let trials_cfg = CspConfig {
            groups: 1,
            ..Default::default()
        };
        let f = fit_group(&c, &cr, 1).unwrap();
        let set = SpatialFilterSet {
            left: f.left,
            right: f.right,
            filters_per_class: 1,
            channel_set: ChannelSet::gamma(),
            group_count: 1,
            centering: trials_cfg.centering,
            features: trials_cfg.features,
            group_eigenvalues: vec![f.eigenvalues],
            degenerate: false,
        };
        let text = serde_json::to_string(&set).unwrap();
        let back: SpatialFilterSet = serde_json::from_str(&text).unwrap();
        assert_eq!(back, set);
    }

    proptest! {
        #[test]
        fn features_are_linear(
            xs in proptest::collection::vec(-5.0f64..5.0, 10),
            ys in proptest::collection::vec(-5.0f64..5.0, 10),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            theta in 0.0f64..std::f64::consts::PI,
        ) {
            let set = SpatialFilterSet {
                left: DMatrix::from_row_slice(1, 2, &[theta.cos(), theta.sin()]),
                right: DMatrix::from_row_slice(1, 2, &[-theta.sin(), theta.cos()]),
                filters_per_class: 1,
                channel_set: ChannelSet::gamma(),
                group_count: 1,
                centering: Centering::Raw,
                features: FeatureMode::Projection,
                group_eigenvalues: vec![],
                degenerate: false,
            };
            let x = DMatrix::from_row_slice(2, 5, &xs);
            let y = DMatrix::from_row_slice(2, 5, &ys);
            let win = |m: DMatrix<f64>| SignalWindow::from_matrix(m, ChannelSet::gamma()).unwrap();
            let fx = extract_features(&set, &win(x.clone())).unwrap();
            let fy = extract_features(&set, &win(y.clone())).unwrap();
            let fxy = extract_features(&set, &win(&x * a + &y * b)).unwrap();
            for i in 0..10 {
                let expect = a * fx.values()[i] + b * fy.values()[i];
                prop_assert!((fxy.values()[i] - expect).abs() < 1e-9);
            }
        }

        #[test]
        fn covariance_is_scale_invariant(
            xs in proptest::collection::vec(0.1f64..5.0, 12),
            scale in 0.01f64..100.0,
        ) {
            let m = DMatrix::from_row_slice(2, 6, &xs);
            let w1 = SignalWindow::from_matrix(m.clone(), ChannelSet::gamma()).unwrap();
            let w2 = SignalWindow::from_matrix(m * scale, ChannelSet::gamma()).unwrap();
            for mode in [Centering::Raw, Centering::Centered] {
                if let (Ok(a), Ok(b)) = (covariance_with(&w1, mode), covariance_with(&w2, mode)) {
                    prop_assert!((a.matrix() - b.matrix()).abs().max() < 1e-12);
                    prop_assert!((a.matrix().trace() - 1.0).abs() < 1e-9);
                    prop_assert!((a.matrix() - a.matrix().transpose()).abs().max() <= 1e-12);
                }
            }
        }
    }
}
