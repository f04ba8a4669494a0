//! Channels, frames, trials and windows.
//!
//! Every frame carries all six band-power channels (gamma/beta/alpha at F7
//! and F8); channel selection happens when a [`SignalWindow`] is cut.

mod session;
mod synth;
mod window;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use session::{load_session, parse_session, write_session, CSV_HEADER};
pub use synth::{generate_session, Envelope, FrameSynth, PresentationOrder, SynthConfig};
pub use window::{extract_window, slide_windows, Period, SignalWindow};

/// Frame period of the band-power feed (10 Hz).
pub const FRAME_PERIOD: f64 = 0.1;
/// Allowed deviation from [`FRAME_PERIOD`] between consecutive frames.
pub const SPACING_TOL: f64 = 1e-6;
/// Frames in a standard 10-second trial.
pub const STANDARD_TRIAL_FRAMES: usize = 100;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid trial: {0}")]
    InvalidTrial(String),
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("invalid channel set: {0}")]
    ChannelSet(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Gamma,
    Beta,
    Alpha,
}

impl Band {
    pub const ALL: [Band; 3] = [Band::Gamma, Band::Beta, Band::Alpha];

    pub fn name(self) -> &'static str {
        match self {
            Band::Gamma => "gamma",
            Band::Beta => "beta",
            Band::Alpha => "alpha",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for Band {
    type Err = SignalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gamma" => Ok(Band::Gamma),
            "beta" => Ok(Band::Beta),
            "alpha" => Ok(Band::Alpha),
            other => Err(SignalError::ChannelSet(format!("unknown band {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Electrode {
    F7,
    F8,
}

impl Electrode {
    pub fn opposite(self) -> Electrode {
        match self {
            Electrode::F7 => Electrode::F8,
            Electrode::F8 => Electrode::F7,
        }
    }
}

/// One band-power channel. The derived ordering is the canonical channel
/// order: band (gamma, beta, alpha), then electrode (F7, F8).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChannelId {
    pub band: Band,
    pub electrode: Electrode,
}

impl ChannelId {
    pub const COUNT: usize = 6;

    pub const ALL: [ChannelId; 6] = [
        ChannelId::new(Band::Gamma, Electrode::F7),
        ChannelId::new(Band::Gamma, Electrode::F8),
        ChannelId::new(Band::Beta, Electrode::F7),
        ChannelId::new(Band::Beta, Electrode::F8),
        ChannelId::new(Band::Alpha, Electrode::F7),
        ChannelId::new(Band::Alpha, Electrode::F8),
    ];

    pub const fn new(band: Band, electrode: Electrode) -> Self {
        ChannelId { band, electrode }
    }

    /// Position in [`ChannelId::ALL`] and in [`SampleFrame::values`].
    pub fn index(self) -> usize {
        self.band as usize * 2 + self.electrode as usize
    }

    /// Session CSV column name, e.g. `gamma_f7`.
    pub fn column_name(self) -> &'static str {
        const NAMES: [&str; 6] = [
            "gamma_f7", "gamma_f8", "beta_f7", "beta_f8", "alpha_f7", "alpha_f8",
        ];
        NAMES[self.index()]
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column_name())
    }
}

impl FromStr for ChannelId {
    type Err = SignalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        ChannelId::ALL
            .into_iter()
            .find(|c| c.column_name() == s)
            .ok_or_else(|| SignalError::ChannelSet(format!("unknown channel {s:?}")))
    }
}

/// Non-empty, duplicate-free, canonically ordered set of channels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<ChannelId>", into = "Vec<ChannelId>")]
pub struct ChannelSet {
    channels: Vec<ChannelId>,
}

impl ChannelSet {
    pub fn new(mut channels: Vec<ChannelId>) -> Result<Self, SignalError> {
        if channels.is_empty() {
            return Err(SignalError::ChannelSet("empty channel set".into()));
        }
        channels.sort();
        if channels.windows(2).any(|w| w[0] == w[1]) {
            return Err(SignalError::ChannelSet("duplicate channel".into()));
        }
        Ok(ChannelSet { channels })
    }

    /// Both electrodes of every listed band.
    pub fn bands(bands: &[Band]) -> Result<Self, SignalError> {
        Self::new(
            bands
                .iter()
                .flat_map(|&b| [ChannelId::new(b, Electrode::F7), ChannelId::new(b, Electrode::F8)])
                .collect(),
        )
    }

    pub fn gamma() -> Self {
        Self::bands(&[Band::Gamma]).expect("static set")
    }

    /// The four candidate sets compared for channel selection:
    /// gamma, beta, alpha and gamma+beta.
    pub fn standard_candidates() -> Vec<ChannelSet> {
        [
            &[Band::Gamma][..],
            &[Band::Beta],
            &[Band::Alpha],
            &[Band::Gamma, Band::Beta],
        ]
        .iter()
        .map(|b| Self::bands(b).expect("static set"))
        .collect()
    }

    pub fn channels(&self) -> &[ChannelId] {
        &self.channels
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, ch: ChannelId) -> bool {
        self.channels.binary_search(&ch).is_ok()
    }

    pub fn contains_band(&self, band: Band) -> bool {
        self.channels.iter().any(|c| c.band == band)
    }
}

impl TryFrom<Vec<ChannelId>> for ChannelSet {
    type Error = SignalError;

    fn try_from(v: Vec<ChannelId>) -> Result<Self, Self::Error> {
        ChannelSet::new(v)
    }
}

impl From<ChannelSet> for Vec<ChannelId> {
    fn from(s: ChannelSet) -> Self {
        s.channels
    }
}

impl fmt::Display for ChannelSet {
    /// Whole bands print as `gamma+beta`; anything else as a comma list of
    /// channel names.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bands: Vec<Band> = Band::ALL
            .into_iter()
            .filter(|&b| self.contains_band(b))
            .collect();
        if self.len() == bands.len() * 2 {
            let names: Vec<&str> = bands.iter().map(|b| b.name()).collect();
            f.write_str(&names.join("+"))
        } else {
            let names: Vec<&str> = self.channels.iter().map(|c| c.column_name()).collect();
            f.write_str(&names.join(","))
        }
    }
}

impl FromStr for ChannelSet {
    type Err = SignalError;

    /// Accepts `gamma`, `gamma+beta` or `gamma_f7,beta_f8`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut channels = Vec::new();
        for part in s.split(['+', ',']).map(str::trim).filter(|p| !p.is_empty()) {
            if let Ok(band) = part.parse::<Band>() {
                channels.push(ChannelId::new(band, Electrode::F7));
                channels.push(ChannelId::new(band, Electrode::F8));
            } else {
                channels.push(part.parse()?);
            }
        }
        ChannelSet::new(channels)
    }
}

/// Class of a trial or prediction: +1 = left-hand imagery, -1 = right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum ClassLabel {
    Left,
    Right,
}

impl ClassLabel {
    pub fn value(self) -> i8 {
        match self {
            ClassLabel::Left => 1,
            ClassLabel::Right => -1,
        }
    }

    pub fn as_f64(self) -> f64 {
        self.value() as f64
    }

    pub fn from_value(v: i64) -> Option<Self> {
        match v {
            1 => Some(ClassLabel::Left),
            -1 => Some(ClassLabel::Right),
            _ => None,
        }
    }

    /// Sign rule; a decision of exactly zero maps to `Left`.
    pub fn from_decision(d: f64) -> Self {
        if d >= 0.0 {
            ClassLabel::Left
        } else {
            ClassLabel::Right
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            ClassLabel::Left => ClassLabel::Right,
            ClassLabel::Right => ClassLabel::Left,
        }
    }
}

impl TryFrom<i8> for ClassLabel {
    type Error = String;

    fn try_from(v: i8) -> Result<Self, Self::Error> {
        ClassLabel::from_value(v as i64).ok_or_else(|| format!("label must be 1 or -1, got {v}"))
    }
}

impl From<ClassLabel> for i8 {
    fn from(l: ClassLabel) -> i8 {
        l.value()
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassLabel::Left => "left",
            ClassLabel::Right => "right",
        })
    }
}

impl FromStr for ClassLabel {
    type Err = SignalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" | "1" | "+1" => Ok(ClassLabel::Left),
            "right" | "-1" => Ok(ClassLabel::Right),
            other => Err(SignalError::InvalidTrial(format!("unknown class {other:?}"))),
        }
    }
}

/// One 10 Hz row: band power for all six channels, indexed by
/// [`ChannelId::index`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleFrame {
    pub t: f64,
    pub values: [f64; ChannelId::COUNT],
}

impl SampleFrame {
    pub fn new(t: f64, values: [f64; ChannelId::COUNT]) -> Result<Self, SignalError> {
        if !t.is_finite() {
            return Err(SignalError::InvalidTrial(format!("non-finite timestamp {t}")));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(SignalError::InvalidTrial(format!(
                "channel {} has invalid band power {v}",
                ChannelId::ALL[i]
            )));
        }
        Ok(SampleFrame { t, values })
    }

    pub fn get(&self, ch: ChannelId) -> f64 {
        self.values[ch.index()]
    }
}

/// A labeled recording of consecutive 10 Hz frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub subject_id: String,
    pub trial_index: u32,
    pub label: ClassLabel,
    frames: Vec<SampleFrame>,
}

impl Trial {
    /// Checks ordering and the 0.1 s frame spacing.
    pub fn new(
        subject_id: impl Into<String>,
        trial_index: u32,
        label: ClassLabel,
        frames: Vec<SampleFrame>,
    ) -> Result<Self, SignalError> {
        if let Some(i) = spacing_violation(&frames) {
            return Err(SignalError::InvalidTrial(format!(
                "frame {} at t={} does not follow t={} by {FRAME_PERIOD} s",
                i,
                frames[i].t,
                frames[i - 1].t
            )));
        }
        Ok(Trial {
            subject_id: subject_id.into(),
            trial_index,
            label,
            frames,
        })
    }

    pub fn frames(&self) -> &[SampleFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn is_standard(&self) -> bool {
        self.frames.len() == STANDARD_TRIAL_FRAMES
    }

    /// `(subject_id, trial_index)`.
    pub fn key(&self) -> (String, u32) {
        (self.subject_id.clone(), self.trial_index)
    }
}

/// Index of the first frame whose spacing from its predecessor is off.
pub(crate) fn spacing_violation(frames: &[SampleFrame]) -> Option<usize> {
    frames
        .windows(2)
        .position(|w| ((w[1].t - w[0].t) - FRAME_PERIOD).abs() > SPACING_TOL)
        .map(|i| i + 1)
}
