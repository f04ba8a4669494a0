//! Session CSV reading and writing.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{spacing_violation, ChannelId, ClassLabel, SampleFrame, SignalError, Trial};

pub const CSV_HEADER: [&str; 10] = [
    "subject_id",
    "trial_index",
    "label",
    "t",
    "gamma_f7",
    "gamma_f8",
    "beta_f7",
    "beta_f8",
    "alpha_f7",
    "alpha_f8",
];

pub fn load_session(path: impl AsRef<Path>) -> Result<Vec<Trial>, SignalError> {
    parse_session(File::open(path)?)
}

struct Columns {
    subject: usize,
    trial: usize,
    label: usize,
    t: usize,
    channels: [usize; ChannelId::COUNT],
}

impl Columns {
    fn from_header(header: &csv::StringRecord) -> Result<Self, SignalError> {
        let find = |name: &str| {
            header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| SignalError::Parse {
                    line: 1,
                    message: format!("missing column {name:?}"),
                })
        };
        let mut channels = [0; ChannelId::COUNT];
        for ch in ChannelId::ALL {
            channels[ch.index()] = find(ch.column_name())?;
        }
        Ok(Columns {
            subject: find("subject_id")?,
            trial: find("trial_index")?,
            label: find("label")?,
            t: find("t")?,
            channels,
        })
    }
}

struct Pending {
    subject_id: String,
    trial_index: u32,
    label: ClassLabel,
    frames: Vec<SampleFrame>,
}

/// Parses session rows; consecutive rows with the same
/// `(subject_id, trial_index)` form one trial. Errors carry the 1-based
/// line number of the offending row.
pub fn parse_session<R: Read>(reader: R) -> Result<Vec<Trial>, SignalError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| csv_error(e, 1))?.clone();
    let cols = Columns::from_header(&header)?;

    let mut trials = Vec::new();
    let mut seen: HashSet<(String, u32)> = HashSet::new();
    let mut pending: Option<Pending> = None;

    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            csv_error(e, line)
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let err = |message: String| SignalError::Parse { line, message };
        let field = |i: usize| record.get(i).unwrap_or("").trim();

        let subject_id = field(cols.subject).to_string();
        let trial_index: u32 = field(cols.trial)
            .parse()
            .map_err(|_| err(format!("bad trial_index {:?}", field(cols.trial))))?;
        let label = field(cols.label)
            .parse::<i64>()
            .ok()
            .and_then(ClassLabel::from_value)
            .ok_or_else(|| err(format!("label must be 1 or -1, got {:?}", field(cols.label))))?;
        let t: f64 = field(cols.t)
            .parse()
            .map_err(|_| err(format!("bad t {:?}", field(cols.t))))?;
        let mut values = [0.0; ChannelId::COUNT];
        for ch in ChannelId::ALL {
            let raw = field(cols.channels[ch.index()]);
            values[ch.index()] = raw
                .parse()
                .map_err(|_| err(format!("bad value {raw:?} in column {}", ch.column_name())))?;
        }
        let frame = SampleFrame::new(t, values).map_err(|e| err(e.to_string()))?;

        let same_trial = pending
            .as_ref()
            .is_some_and(|p| p.subject_id == subject_id && p.trial_index == trial_index);
        if same_trial {
            let p = pending.as_mut().expect("checked");
            if p.label != label {
                return Err(err(format!(
                    "label changes within trial {subject_id}/{trial_index}"
                )));
            }
            let prev = p.frames.last().expect("non-empty").t;
            if t <= prev {
                return Err(err(format!("non-monotone timestamp {t} after {prev}")));
            }
            p.frames.push(frame);
            if spacing_violation(&p.frames[p.frames.len() - 2..]).is_some() {
                return Err(err(format!("frame spacing {} s is not 0.1 s", t - prev)));
            }
        } else {
            if let Some(p) = pending.take() {
                trials.push(finish(p)?);
            }
            if !seen.insert((subject_id.clone(), trial_index)) {
                return Err(err(format!(
                    "trial {subject_id}/{trial_index} appears in two separate blocks"
                )));
            }
            pending = Some(Pending {
                subject_id,
                trial_index,
                label,
                frames: vec![frame],
            });
        }
    }
    if let Some(p) = pending.take() {
        trials.push(finish(p)?);
    }
    Ok(trials)
}

fn finish(p: Pending) -> Result<Trial, SignalError> {
    Trial::new(p.subject_id, p.trial_index, p.label, p.frames)
}

fn csv_error(e: csv::Error, line: u64) -> SignalError {
    SignalError::Parse {
        line,
        message: e.to_string(),
    }
}

/// Writes trials in the session CSV layout (`t` with one decimal, band
/// powers in shortest round-trip form).
pub fn write_session<W: Write>(writer: W, trials: &[Trial]) -> Result<(), SignalError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let io = |e: csv::Error| SignalError::Io(std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(io)?;
    for trial in trials {
        for frame in trial.frames() {
            let mut row = vec![
                trial.subject_id.clone(),
                trial.trial_index.to_string(),
                trial.label.value().to_string(),
                format!("{:.1}", frame.t),
            ];
            row.extend(frame.values.iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}
