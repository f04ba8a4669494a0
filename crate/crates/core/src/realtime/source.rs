//! Frame sources: recorded session replay, live synthetic generator, and a
//! line-based network inlet.

use std::fmt;
use std::io::{BufRead, BufReader};
use std::net::{TcpListener, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicI8, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use crate::signal::{
    load_session, ChannelId, ChannelSet, ClassLabel, Envelope, FrameSynth, SampleFrame, SignalError,
    SynthConfig, Trial, FRAME_PERIOD,
};

use super::RealtimeError;

pub trait FrameSource: Send {
    /// `None` ends the stream.
    fn next_frame(&mut self) -> Option<Result<SampleFrame, SignalError>>;

    /// Live sources favour freshness: a lagging consumer loses old frames.
    fn is_live(&self) -> bool;

    fn channels(&self) -> ChannelSet {
        all_channels()
    }

    fn describe(&self) -> String;
}

impl FrameSource for Box<dyn FrameSource> {
    fn next_frame(&mut self) -> Option<Result<SampleFrame, SignalError>> {
        (**self).next_frame()
    }

    fn is_live(&self) -> bool {
        (**self).is_live()
    }

    fn channels(&self) -> ChannelSet {
        (**self).channels()
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

fn all_channels() -> ChannelSet {
    ChannelSet::new(ChannelId::ALL.to_vec()).expect("all channels form a valid set")
}

/// Sleeps until frame `index` is due at `speed` times real time.
#[derive(Debug, Clone)]
struct Pacer {
    speed: f64,
    start: Option<Instant>,
}

impl Pacer {
    fn new(speed: f64) -> Result<Self, RealtimeError> {
        if speed.is_nan() || speed <= 0.0 {
            return Err(RealtimeError::Config(format!("speed must be positive, got {speed}")));
        }
        Ok(Pacer { speed, start: None })
    }

    fn wait(&mut self, index: u64) {
        if self.speed.is_infinite() {
            return;
        }
        let start = *self.start.get_or_insert_with(Instant::now);
        let due = start + Duration::from_secs_f64(index as f64 * FRAME_PERIOD / self.speed);
        let now = Instant::now();
        if due > now {
            thread::sleep(due - now);
        }
    }
}

/// Replays recorded trials back to back. Frames are re-stamped on one
/// continuous clock (`index * 0.1 s`), so trial boundaries are not gaps and
/// windows run across them.
#[derive(Debug, Clone)]
pub struct ReplaySource {
    frames: Vec<SampleFrame>,
    pos: usize,
    pacer: Pacer,
    label: String,
}

impl ReplaySource {
    /// `speed` is a multiple of real time; `f64::INFINITY` replays unpaced.
    pub fn from_trials(trials: &[Trial], speed: f64) -> Result<Self, RealtimeError> {
        let frames = trials
            .iter()
            .flat_map(|t| t.frames().iter().copied())
            .enumerate()
            .map(|(i, f)| SampleFrame {
                t: i as f64 / 10.0,
                ..f
            })
            .collect();
        Ok(ReplaySource {
            frames,
            pos: 0,
            pacer: Pacer::new(speed)?,
            label: format!("replay of {} trials", trials.len()),
        })
    }

    pub fn open(path: impl AsRef<Path>, speed: f64) -> Result<Self, RealtimeError> {
        let trials = load_session(path.as_ref())?;
        let mut src = Self::from_trials(&trials, speed)?;
        src.label = format!("replay:{}", path.as_ref().display());
        Ok(src)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// The re-stamped frames, in emission order.
    pub fn frames(&self) -> &[SampleFrame] {
        &self.frames
    }
}

impl FrameSource for ReplaySource {
    fn next_frame(&mut self) -> Option<Result<SampleFrame, SignalError>> {
        let f = *self.frames.get(self.pos)?;
        self.pacer.wait(self.pos as u64);
        self.pos += 1;
        Some(Ok(f))
    }

    fn is_live(&self) -> bool {
        false
    }

    fn describe(&self) -> String {
        self.label.clone()
    }
}

/// Class the live synthetic generator currently imagines; shared between
/// the source and whoever steers it.
#[derive(Debug, Clone)]
pub struct ClassToggle(Arc<AtomicI8>);

impl ClassToggle {
    pub fn new(label: ClassLabel) -> Self {
        ClassToggle(Arc::new(AtomicI8::new(label.value())))
    }

    pub fn set(&self, label: ClassLabel) {
        self.0.store(label.value(), Ordering::SeqCst);
    }

    pub fn get(&self) -> ClassLabel {
        ClassLabel::from_value(self.0.load(Ordering::SeqCst) as i64).unwrap_or(ClassLabel::Left)
    }
}

impl Default for ClassToggle {
    fn default() -> Self {
        Self::new(ClassLabel::Left)
    }
}

/// Endless synthetic feed whose class follows a [`ClassToggle`]. The
/// envelope is evaluated on trial-relative time, so a raised-cosine
/// envelope repeats every trial length and a constant one holds steady.
pub struct SyntheticSource {
    synth: FrameSynth,
    toggle: ClassToggle,
    index: u64,
    limit: Option<u64>,
    pacer: Pacer,
}

impl SyntheticSource {
    /// Paced at real time; see [`with_speed`](Self::with_speed).
    pub fn new(cfg: SynthConfig, toggle: ClassToggle) -> Result<Self, RealtimeError> {
        Ok(SyntheticSource {
            synth: FrameSynth::new(cfg)?,
            toggle,
            index: 0,
            limit: None,
            pacer: Pacer::new(1.0)?,
        })
    }

    /// Defaults for steering: full separation strength at all times.
    pub fn live_config() -> SynthConfig {
        SynthConfig {
            envelope: Envelope::Constant { level: 1.0 },
            ..SynthConfig::default()
        }
    }

    pub fn with_speed(mut self, speed: f64) -> Result<Self, RealtimeError> {
        self.pacer = Pacer::new(speed)?;
        Ok(self)
    }

    /// Ends the stream after `n` frames.
    pub fn with_limit(mut self, n: u64) -> Self {
        self.limit = Some(n);
        self
    }

    pub fn toggle(&self) -> ClassToggle {
        self.toggle.clone()
    }
}

impl FrameSource for SyntheticSource {
    fn next_frame(&mut self) -> Option<Result<SampleFrame, SignalError>> {
        if self.limit.is_some_and(|n| self.index >= n) {
            return None;
        }
        self.pacer.wait(self.index);
        let cfg = self.synth.config();
        let per_trial = cfg.frames_per_trial as u64;
        let s = cfg.envelope.at((self.index % per_trial) as f64 / 10.0);
        let t = self.index as f64 / 10.0;
        let label = self.toggle.get();
        let frame = self.synth.frame_at(t, s, label);
        self.index += 1;
        Some(Ok(frame))
    }

    fn is_live(&self) -> bool {
        true
    }

    fn describe(&self) -> String {
        format!("synthetic (seed {})", self.synth.config().seed)
    }
}

/// Line-based CSV inlet, one frame per line: `t,<value>,...`.
///
/// An optional first line `t,<column>,...` names the channels carried
/// (e.g. `t,gamma_f7,gamma_f8`); without it all six channels are expected in
/// `gamma_f7,gamma_f8,beta_f7,beta_f8,alpha_f7,alpha_f8` order. Channels the
/// inlet does not carry read as 0 and are excluded from [`channels`](FrameSource::channels).
pub struct ListenerSource {
    reader: Box<dyn BufRead + Send>,
    columns: Option<Vec<ChannelId>>,
    /// A data line read while looking for the header.
    pending: Option<String>,
    line: u64,
    label: String,
}

impl ListenerSource {
    pub fn from_reader(reader: impl BufRead + Send + 'static) -> Self {
        ListenerSource {
            reader: Box::new(reader),
            columns: None,
            pending: None,
            line: 0,
            label: "listener".into(),
        }
    }

    /// Waits for one inlet connection on `addr`.
    pub fn accept(addr: impl ToSocketAddrs) -> Result<Self, RealtimeError> {
        let listener = TcpListener::bind(addr)?;
        let local = listener.local_addr()?;
        log::info!("waiting for an inlet connection on {local}");
        let (stream, peer) = listener.accept()?;
        let mut src = Self::from_reader(BufReader::new(stream));
        src.label = format!("listener:{local} (from {peer})");
        Ok(src)
    }

    /// Reads the optional header so [`channels`](FrameSource::channels) is
    /// known before streaming starts.
    pub fn with_header(mut self) -> Result<Self, RealtimeError> {
        self.read_header()?;
        Ok(self)
    }

    fn read_header(&mut self) -> Result<(), SignalError> {
        let mut columns = ChannelId::ALL.to_vec();
        if let Some(first) = self.next_line() {
            if first.starts_with('t') {
                columns = self.parse_header(&first)?;
            } else {
                self.pending = Some(first);
            }
        }
        self.columns = Some(columns);
        Ok(())
    }

    /// Next non-blank line; `None` once the inlet closes or breaks.
    fn next_line(&mut self) -> Option<String> {
        if let Some(l) = self.pending.take() {
            return Some(l);
        }
        let mut line = String::new();
        loop {
            line.clear();
            match self.reader.read_line(&mut line) {
                Ok(0) | Err(_) => return None,
                Ok(_) => {}
            }
            self.line += 1;
            if !line.trim().is_empty() {
                return Some(line.trim().to_string());
            }
        }
    }

    fn parse_header(&self, line: &str) -> Result<Vec<ChannelId>, SignalError> {
        let mut fields = line.split(',').map(str::trim);
        if fields.next() != Some("t") {
            return Err(self.error("header must start with `t`"));
        }
        let cols = fields
            .map(|f| {
                f.parse::<ChannelId>()
                    .map_err(|_| self.error(&format!("unknown channel column `{f}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        ChannelSet::new(cols.clone()).map_err(|e| self.error(&e.to_string()))?;
        Ok(cols)
    }

    fn error(&self, message: &str) -> SignalError {
        SignalError::Parse {
            line: self.line,
            message: message.to_string(),
        }
    }

    fn parse_frame(&self, line: &str, columns: &[ChannelId]) -> Result<SampleFrame, SignalError> {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != columns.len() + 1 {
            return Err(self.error(&format!(
                "expected {} fields, found {}",
                columns.len() + 1,
                fields.len()
            )));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| self.error(&format!("`{s}` is not a number")))
        };
        let t = num(fields[0])?;
        let mut values = [0.0; ChannelId::COUNT];
        for (ch, f) in columns.iter().zip(&fields[1..]) {
            values[ch.index()] = num(f)?;
        }
        SampleFrame::new(t, values).map_err(|e| self.error(&e.to_string()))
    }
}

impl FrameSource for ListenerSource {
    fn next_frame(&mut self) -> Option<Result<SampleFrame, SignalError>> {
        if self.columns.is_none() {
            if let Err(e) = self.read_header() {
                return Some(Err(e));
            }
        }
        let line = self.next_line()?;
        let columns = self.columns.as_deref().expect("header read above");
        Some(self.parse_frame(&line, columns))
    }

    fn is_live(&self) -> bool {
        true
    }

    fn channels(&self) -> ChannelSet {
        match &self.columns {
            Some(c) => ChannelSet::new(c.clone()).unwrap_or_else(|_| all_channels()),
            None => all_channels(),
        }
    }

    fn describe(&self) -> String {
        self.label.clone()
    }
}

/// Textual source description: `replay:<file>`, `synthetic`, `listener:<addr>`.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceSpec {
    Replay { path: PathBuf, speed: f64 },
    Synthetic { config: SynthConfig },
    Listener { addr: String },
}

impl SourceSpec {
    pub fn with_speed(self, speed: f64) -> Self {
        match self {
            SourceSpec::Replay { path, .. } => SourceSpec::Replay { path, speed },
            other => other,
        }
    }

    /// Opens the source; a synthetic source follows `toggle`.
    pub fn open(&self, toggle: &ClassToggle) -> Result<Box<dyn FrameSource>, RealtimeError> {
        Ok(match self {
            SourceSpec::Replay { path, speed } => Box::new(ReplaySource::open(path, *speed)?),
            SourceSpec::Synthetic { config } => {
                Box::new(SyntheticSource::new(config.clone(), toggle.clone())?)
            }
            SourceSpec::Listener { addr } => Box::new(ListenerSource::accept(addr.as_str())?.with_header()?),
        })
    }
}

impl FromStr for SourceSpec {
    type Err = RealtimeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        match (kind, arg) {
            ("replay", Some(p)) if !p.is_empty() => Ok(SourceSpec::Replay {
                path: PathBuf::from(p),
                speed: 1.0,
            }),
            ("synthetic", None) => Ok(SourceSpec::Synthetic {
                config: SyntheticSource::live_config(),
            }),
            ("listener", Some(a)) if !a.is_empty() => Ok(SourceSpec::Listener { addr: a.to_string() }),
            _ => Err(RealtimeError::Config(format!(
                "unknown source `{s}` (expected replay:<file>, synthetic or listener:<addr>)"
            ))),
        }
    }
}

impl fmt::Display for SourceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceSpec::Replay { path, .. } => write!(f, "replay:{}", path.display()),
            SourceSpec::Synthetic { .. } => f.write_str("synthetic"),
            SourceSpec::Listener { addr } => write!(f, "listener:{addr}"),
        }
    }
}
