//! Streaming classification.
//!
//! A source produces 10 Hz frames on its own thread; the classifier keeps
//! the trailing K frames and, once warm, emits one [`Command`] per frame.
//! Producer and consumer meet in a bounded queue. Live sources drop the
//! oldest queued frame when the consumer lags; replay sources block instead,
//! so a replay is classified completely.

mod model;
mod source;

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use crossbeam::channel::{self, TrySendError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{PipelineError, TrainedClassifier};
use crate::signal::{ClassLabel, SampleFrame, SignalError, SignalWindow, FRAME_PERIOD};

pub use model::{load_model, save_model, ModelError, ModelFile, Provenance, MODEL_FORMAT_VERSION};
pub use source::{
    ClassToggle, FrameSource, ListenerSource, ReplaySource, SourceSpec, SyntheticSource,
};

/// Frames further apart than this reset the window.
pub const GAP_THRESHOLD: f64 = 3.0 * FRAME_PERIOD;

#[derive(Debug, Error)]
pub enum RealtimeError {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("model uses channels {model} but the source only provides {source_channels}")]
    ChannelMismatch { model: String, source_channels: String },
    #[error("invalid stream option: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub label: ClassLabel,
    pub decision_value: f64,
    pub t: DateTime<Utc>,
    /// Index (from 0) of the frame that completed the window.
    pub frame_index: u64,
}

/// Sliding K-frame window over a frame feed.
#[derive(Debug, Clone)]
pub struct StreamClassifier {
    model: Arc<TrainedClassifier>,
    ring: VecDeque<SampleFrame>,
    last_t: Option<f64>,
    gap_resets: u64,
    smoothing: Option<Majority>,
}

#[derive(Debug, Clone)]
struct Majority {
    n: usize,
    recent: VecDeque<ClassLabel>,
}

impl Majority {
    /// Ties go to Left, like a zero decision value.
    fn push(&mut self, label: ClassLabel) -> ClassLabel {
        if self.recent.len() == self.n {
            self.recent.pop_front();
        }
        self.recent.push_back(label);
        let sum: i64 = self.recent.iter().map(|l| l.value() as i64).sum();
        ClassLabel::from_decision(sum as f64)
    }
}

impl StreamClassifier {
    pub fn new(model: Arc<TrainedClassifier>) -> Self {
        let k = model.config.window_len;
        StreamClassifier {
            model,
            ring: VecDeque::with_capacity(k),
            last_t: None,
            gap_resets: 0,
            smoothing: None,
        }
    }

    /// Majority vote over the last `n` raw labels. The decision value stays raw.
    pub fn with_smoothing(mut self, n: usize) -> Self {
        self.smoothing = (n > 1).then(|| Majority {
            n,
            recent: VecDeque::with_capacity(n),
        });
        self
    }

    pub fn window_len(&self) -> usize {
        self.model.config.window_len
    }

    pub fn gap_resets(&self) -> u64 {
        self.gap_resets
    }

    /// Feeds one frame; returns a command once K consecutive frames are held.
    pub fn push(&mut self, frame: SampleFrame, frame_index: u64) -> Result<Option<Command>, RealtimeError> {
        if let Some(prev) = self.last_t {
            let dt = frame.t - prev;
            if !(0.0..=GAP_THRESHOLD + 1e-9).contains(&dt) {
                log::warn!("frame gap of {dt:.3} s before frame {frame_index}; window reset");
                self.ring.clear();
                if let Some(m) = &mut self.smoothing {
                    m.recent.clear();
                }
                self.gap_resets += 1;
            }
        }
        self.last_t = Some(frame.t);
        let k = self.window_len();
        if self.ring.len() == k {
            self.ring.pop_front();
        }
        self.ring.push_back(frame);
        if self.ring.len() < k {
            return Ok(None);
        }
        let frames: Vec<SampleFrame> = self.ring.iter().copied().collect();
        let window = SignalWindow::from_frames(&frames, &self.model.config.channel_set);
        let (raw, decision_value) = self.model.classify(&window)?;
        let label = match &mut self.smoothing {
            Some(m) => m.push(raw),
            None => raw,
        };
        Ok(Some(Command {
            label,
            decision_value,
            t: Utc::now(),
            frame_index,
        }))
    }
}

#[derive(Debug, Clone)]
pub struct StreamOptions {
    pub queue_capacity: usize,
    /// Majority-of-n label smoothing; `None` (default) emits raw labels.
    pub smoothing: Option<usize>,
    /// Overrides the source's own policy when set.
    pub drop_oldest: Option<bool>,
}

impl Default for StreamOptions {
    fn default() -> Self {
        StreamOptions {
            queue_capacity: 64,
            smoothing: None,
            drop_oldest: None,
        }
    }
}

/// Shared switches for a running stream.
#[derive(Debug, Clone, Default)]
pub struct StreamControl {
    stop: Arc<AtomicBool>,
    paused: Arc<AtomicBool>,
}

impl StreamControl {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }

    pub fn is_stopped(&self) -> bool {
        self.stop.load(Ordering::SeqCst)
    }

    pub fn pause(&self) {
        self.paused.store(true, Ordering::SeqCst);
    }

    pub fn resume(&self) {
        self.paused.store(false, Ordering::SeqCst);
    }

    pub fn is_paused(&self) -> bool {
        self.paused.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StreamStats {
    pub frames_received: u64,
    /// Frames discarded from a full queue (live sources only).
    pub frames_dropped: u64,
    pub commands: u64,
    pub gap_resets: u64,
    pub elapsed: Duration,
}

impl StreamStats {
    pub fn frames_per_second(&self) -> f64 {
        let s = self.elapsed.as_secs_f64();
        if s > 0.0 {
            self.frames_received as f64 / s
        } else {
            0.0
        }
    }
}

/// Whether the sink wants more commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

/// Runs `source` on a producer thread and classifies on the calling thread,
/// handing each command to `sink`. Returns when the source ends, `control`
/// is stopped, or the sink asks to stop.
pub fn stream_classify<S, F>(
    mut source: S,
    model: Arc<TrainedClassifier>,
    opts: &StreamOptions,
    control: &StreamControl,
    mut sink: F,
) -> Result<StreamStats, RealtimeError>
where
    S: FrameSource + 'static,
    F: FnMut(Command) -> Flow,
{
    if opts.queue_capacity == 0 {
        return Err(RealtimeError::Config("queue capacity must be positive".into()));
    }
    check_channels(&source, &model)?;
    let drop_oldest = opts.drop_oldest.unwrap_or_else(|| source.is_live());
    let mut classifier = StreamClassifier::new(model);
    if let Some(n) = opts.smoothing {
        classifier = classifier.with_smoothing(n);
    }

    let (tx, rx) = channel::bounded::<Result<(u64, SampleFrame), SignalError>>(opts.queue_capacity);
    let dropped = Arc::new(AtomicU64::new(0));
    let done = Arc::new(AtomicBool::new(false));
    let producer = {
        // Only a drop-oldest producer holds a receiver (to evict with); a
        // blocking one must not, or it could keep a full queue alive forever.
        let evict = drop_oldest.then(|| rx.clone());
        let control = control.clone();
        let dropped = dropped.clone();
        let done = done.clone();
        thread::spawn(move || {
            let mut index = 0u64;
            while !control.is_stopped() && !done.load(Ordering::SeqCst) {
                if control.is_paused() {
                    thread::sleep(Duration::from_millis(10));
                    continue;
                }
                let item = match source.next_frame() {
                    None => break,
                    Some(Ok(f)) => Ok((index, f)),
                    Some(Err(e)) => Err(e),
                };
                index += 1;
                let failed = item.is_err();
                let mut item = item;
                match &evict {
                    None => {
                        if tx.send(item).is_err() {
                            return;
                        }
                    }
                    Some(evict) => loop {
                        match tx.try_send(item) {
                            Ok(()) => break,
                            Err(TrySendError::Disconnected(_)) => return,
                            Err(TrySendError::Full(back)) => {
                                if evict.try_recv().is_ok() {
                                    dropped.fetch_add(1, Ordering::Relaxed);
                                }
                                item = back;
                            }
                        }
                    },
                }
                if failed {
                    return;
                }
            }
        })
    };

    let start = Instant::now();
    let mut stats = StreamStats::default();
    let mut result = Ok(());
    for item in rx.iter() {
        let (index, frame) = match item {
            Ok(v) => v,
            Err(e) => {
                result = Err(e.into());
                break;
            }
        };
        stats.frames_received += 1;
        match classifier.push(frame, index) {
            Ok(Some(cmd)) => {
                stats.commands += 1;
                if sink(cmd) == Flow::Stop {
                    break;
                }
            }
            Ok(None) => {}
            Err(e) => {
                result = Err(e);
                break;
            }
        }
        if control.is_stopped() {
            break;
        }
    }
    stats.elapsed = start.elapsed();
    // Unblock and retire the producer before reporting.
    done.store(true, Ordering::SeqCst);
    drop(rx);
    let _ = producer.join();
    stats.frames_dropped = dropped.load(Ordering::Relaxed);
    stats.gap_resets = classifier.gap_resets();
    result.map(|()| stats)
}

/// Errors unless the source carries every channel the model reads.
pub fn check_channels<S: FrameSource + ?Sized>(source: &S, model: &TrainedClassifier) -> Result<(), RealtimeError> {
    let available = source.channels();
    let wanted = &model.config.channel_set;
    if wanted.channels().iter().all(|c| available.contains(*c)) {
        Ok(())
    } else {
        Err(RealtimeError::ChannelMismatch {
            model: wanted.to_string(),
            source_channels: available.to_string(),
        })
    }
}

/// Collects every command of a finite source.
pub fn stream_to_vec<S: FrameSource + 'static>(
    source: S,
    model: Arc<TrainedClassifier>,
    opts: &StreamOptions,
) -> Result<(Vec<Command>, StreamStats), RealtimeError> {
    let mut out = Vec::new();
    let stats = stream_classify(source, model, opts, &StreamControl::new(), |c| {
        out.push(c);
        Flow::Continue
    })?;
    Ok((out, stats))
}
