//! Channel-by-frame windows.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{ChannelSet, SampleFrame, SignalError, Trial};

/// Ordinal-second range `a-b` of a trial: the a-th through b-th whole
/// seconds, i.e. frame indices `[10(a-1), 10b)`. "3-7" covers frames 20..70.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Period {
    first: u32,
    last: u32,
}

impl Period {
    pub const FRAMES_PER_SECOND: usize = 10;

    pub fn new(first: u32, last: u32) -> Result<Self, SignalError> {
        if first < 1 || last < first {
            return Err(SignalError::Range(format!("invalid period {first}-{last}")));
        }
        Ok(Period { first, last })
    }

    pub fn first(&self) -> u32 {
        self.first
    }

    pub fn last(&self) -> u32 {
        self.last
    }

    pub fn seconds(&self) -> u32 {
        self.last - self.first + 1
    }

    pub fn frame_range(&self) -> std::ops::Range<usize> {
        let f = Self::FRAMES_PER_SECOND;
        (self.first as usize - 1) * f..self.last as usize * f
    }

    pub fn frame_count(&self) -> usize {
        self.seconds() as usize * Self::FRAMES_PER_SECOND
    }
}

impl Default for Period {
    fn default() -> Self {
        Period { first: 3, last: 7 }
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.first, self.last)
    }
}

impl FromStr for Period {
    type Err = SignalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().trim_end_matches('s');
        let (a, b) = s
            .split_once('-')
            .ok_or_else(|| SignalError::Range(format!("period {s:?} is not of the form a-b")))?;
        let parse = |x: &str| {
            x.trim()
                .parse::<u32>()
                .map_err(|_| SignalError::Range(format!("bad period bound {x:?}")))
        };
        Period::new(parse(a)?, parse(b)?)
    }
}

impl TryFrom<String> for Period {
    type Error = SignalError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Period> for String {
    fn from(p: Period) -> String {
        p.to_string()
    }
}

/// N channels (rows, in channel-set order) by K frames (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct SignalWindow {
    data: DMatrix<f64>,
    channel_set: ChannelSet,
}

impl SignalWindow {
    pub fn from_frames(frames: &[SampleFrame], channel_set: &ChannelSet) -> Self {
        let chans = channel_set.channels();
        let data = DMatrix::from_fn(chans.len(), frames.len(), |r, c| frames[c].get(chans[r]));
        SignalWindow {
            data,
            channel_set: channel_set.clone(),
        }
    }

    pub fn from_matrix(data: DMatrix<f64>, channel_set: ChannelSet) -> Result<Self, SignalError> {
        if data.nrows() != channel_set.len() {
            return Err(SignalError::ChannelSet(format!(
                "{} rows for {} channels",
                data.nrows(),
                channel_set.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(SignalError::InvalidTrial("non-finite window entry".into()));
        }
        Ok(SignalWindow { data, channel_set })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn channel_set(&self) -> &ChannelSet {
        &self.channel_set
    }

    pub fn channels(&self) -> usize {
        self.data.nrows()
    }

    /// K
    pub fn frames(&self) -> usize {
        self.data.ncols()
    }

    /// Columns `start..start + len` as a new window.
    pub fn columns(&self, start: usize, len: usize) -> SignalWindow {
        SignalWindow {
            data: self.data.columns(start, len).into_owned(),
            channel_set: self.channel_set.clone(),
        }
    }

    /// Sub-windows of `k` columns whose last columns are `k-1`, `k-1+step`, ...
    pub fn slide(&self, k: usize, step: usize) -> impl Iterator<Item = SignalWindow> + '_ {
        window_starts(self.frames(), k, step).map(move |s| self.columns(s, k))
    }
}

fn window_starts(len: usize, k: usize, step: usize) -> impl Iterator<Item = usize> {
    assert!(k >= 1 && step >= 1, "window length and step must be positive");
    let count = if len >= k { (len - k) / step + 1 } else { 0 };
    (0..count).map(move |i| i * step)
}

/// Cuts `period` out of `trial`, keeping only the rows of `channel_set`.
pub fn extract_window(
    trial: &Trial,
    period: Period,
    channel_set: &ChannelSet,
) -> Result<SignalWindow, SignalError> {
    let range = period.frame_range();
    if range.end > trial.len() {
        return Err(SignalError::Range(format!(
            "period {period} needs {} frames, trial {}/{} has {}",
            range.end,
            trial.subject_id,
            trial.trial_index,
            trial.len()
        )));
    }
    Ok(SignalWindow::from_frames(&trial.frames()[range], channel_set))
}

/// Trailing windows of `k` frames every `step` frames;
/// `floor((len - k) / step) + 1` of them when `len >= k`, none otherwise.
pub fn slide_windows(
    frames: &[SampleFrame],
    channel_set: &ChannelSet,
    k: usize,
    step: usize,
) -> Vec<SignalWindow> {
    window_starts(frames.len(), k, step)
        .map(|s| SignalWindow::from_frames(&frames[s..s + k], channel_set))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{generate_session, SynthConfig};
    use proptest::prelude::*;

    fn trial() -> Trial {
        static TRIAL: std::sync::OnceLock<Trial> = std::sync::OnceLock::new();
        TRIAL
            .get_or_init(|| generate_session(&SynthConfig::default()).unwrap().remove(0))
            .clone()
    }

    #[test]
    fn full_trial_window() {
        let w = extract_window(&trial(), "1-10".parse().unwrap(), &ChannelSet::gamma()).unwrap();
        assert_eq!((w.channels(), w.frames()), (2, 100));
    }

    #[test]
    fn ordinal_second_convention() {
        let tr = trial();
        let w = extract_window(&tr, "3-7".parse().unwrap(), &ChannelSet::gamma()).unwrap();
        assert_eq!(w.frames(), 50);
        assert_eq!(w.data()[(0, 0)], tr.frames()[20].values[0]);
        assert_eq!(w.data()[(1, 49)], tr.frames()[69].values[1]);
        let w = extract_window(&tr, "1-5".parse().unwrap(), &ChannelSet::gamma()).unwrap();
        assert_eq!(w.frames(), 50);
        assert_eq!(w.data()[(0, 0)], tr.frames()[0].values[0]);
        assert_eq!(w.data()[(0, 49)], tr.frames()[49].values[0]);
    }

    #[test]
    fn period_outside_trial() {
        let p = Period::new(8, 11).unwrap();
        assert!(matches!(
            extract_window(&trial(), p, &ChannelSet::gamma()),
            Err(SignalError::Range(_))
        ));
        assert!("0-3".parse::<Period>().is_err());
        assert!("5-3".parse::<Period>().is_err());
        assert_eq!("3-7s".parse::<Period>().unwrap(), Period::default());
    }

    #[test]
    fn slide_counts() {
        let frames = trial().frames().to_vec();
        let g = ChannelSet::gamma();
        assert_eq!(slide_windows(&frames, &g, 5, 1).len(), 96);
        assert_eq!(slide_windows(&frames[..5], &g, 5, 1).len(), 1);
        assert_eq!(slide_windows(&frames[..4], &g, 5, 1).len(), 0);
        let ws = slide_windows(&frames, &g, 5, 5);
        assert_eq!(ws.len(), 20);
        assert_eq!(ws[1].data()[(0, 4)], frames[9].values[0]);
    }

    #[test]
    fn slide_matches_column_slide() {
        let tr = trial();
        let g = ChannelSet::gamma();
        let full = SignalWindow::from_frames(tr.frames(), &g);
        let a: Vec<_> = full.slide(5, 3).collect();
        let b = slide_windows(tr.frames(), &g, 5, 3);
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn period_width_is_ten_per_second(a in 1u32..=10, span in 0u32..10) {
            let b = (a + span).min(10);
            let p = Period::new(a, b).unwrap();
            let w = extract_window(&trial(), p, &ChannelSet::gamma()).unwrap();
            prop_assert_eq!(w.frames(), 10 * (b - a + 1) as usize);
        }

        #[test]
        fn slide_count_formula(len in 0usize..200, k in 1usize..20, step in 1usize..10) {
            let expected = if len >= k { (len - k) / step + 1 } else { 0 };
            prop_assert_eq!(window_starts(len, k, step).count(), expected);
            for s in window_starts(len, k, step) {
                prop_assert!(s + k <= len);
            }
        }
    }
}
