use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mibci::ahp::{self, FactorScores};
use mibci::csp::{Centering, CspConfig, FeatureMode};
use mibci::pipeline::{
    self, acceptance_gate, channel_selection_report, cross_validate, evaluate_report, split_30_10,
    train_classifier, window_period_report, TrainConfig,
};
use mibci::realtime::{
    load_model, save_model, stream_classify, ClassToggle, Flow, ListenerSource, Provenance, ReplaySource,
    SourceSpec, StreamControl, StreamOptions, SyntheticSource,
};
use mibci::signal::{
    generate_session, load_session, parse_session, write_session, ChannelSet, ClassLabel, Period,
    PresentationOrder, SynthConfig, Trial,
};
use mibci::svm::{Gamma, SvmConfig};

#[derive(Parser)]
#[command(name = "mibci", version, about = "Two-class motor-imagery classifier: CSP features, RBF SVM, AHP channel selection")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a deterministic synthetic session CSV.
    Generate(GenerateArgs),
    /// Train a classifier on a session and save the model file.
    Train(TrainArgs),
    /// Evaluate a saved model on a session.
    Eval(EvalArgs),
    /// k-fold cross-validation by trial.
    Cv(CvArgs),
    /// Cross-validated accuracy per effective period.
    Periods(PeriodsArgs),
    /// Score candidate channel sets and pick one.
    Channels(ChannelsArgs),
    /// Criteria weights and consistency; optionally score one channel set.
    Ahp(AhpArgs),
    /// Classify a frame stream and print one command per frame.
    Stream(StreamArgs),
    /// Serve commands and telemetry to WebSocket clients.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Order {
    A,
    B,
}

#[derive(Args)]
struct GenerateArgs {
    /// Output CSV path ("-" for stdout).
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "S01")]
    subject: String,
    /// Class separation strength (0 = no class signal).
    #[arg(long, default_value_t = 0.5)]
    separation: f64,
    /// Log-normal noise level.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 20)]
    trials_per_class: usize,
    /// A = left-hand trials first, B = right-hand first.
    #[arg(long, value_enum, default_value = "a")]
    order: Order,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Channel set, e.g. "gamma", "gamma+beta" or "gamma_f7,beta_f8".
    #[arg(long, default_value = "gamma")]
    channels: ChannelSet,
    /// Effective period in ordinal seconds, e.g. "3-7".
    #[arg(long, default_value = "3-7")]
    period: Period,
    /// Frames per classifier window.
    #[arg(long, default_value_t = 5)]
    window: usize,
    /// Frames between training windows.
    #[arg(long, default_value_t = 5)]
    step: usize,
    /// CSP filter groups to average over.
    #[arg(long, default_value_t = 5)]
    groups: usize,
    /// CSP filters per class.
    #[arg(long, default_value_t = 1)]
    filters: usize,
    /// Remove the per-window mean before covariance.
    #[arg(long)]
    centered: bool,
    /// Use log-variance features instead of raw projections.
    #[arg(long)]
    log_variance: bool,
    /// SVM box constraint.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// RBF gamma: a number or "auto".
    #[arg(long, default_value = "auto")]
    gamma: Gamma,
    /// Seed for folds and splits.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ModelArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            channel_set: self.channels.clone(),
            period: self.period,
            window_len: self.window,
            window_step: self.step,
            csp: CspConfig {
                filters_per_class: self.filters,
                groups: self.groups,
                centering: if self.centered { Centering::Centered } else { Centering::Raw },
                features: if self.log_variance { FeatureMode::LogVariance } else { FeatureMode::Projection },
            },
            svm: SvmConfig {
                c: self.c,
                gamma: self.gamma,
                ..SvmConfig::default()
            },
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, short)]
    session: PathBuf,
    /// Model file to write.
    #[arg(long, short)]
    out: PathBuf,
    /// Train on a random 30 trials and report the held-out 10 (40-trial sessions).
    #[arg(long)]
    holdout: bool,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, short)]
    model: PathBuf,
    #[arg(long, short)]
    session: PathBuf,
    /// Also write the report as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct CvArgs {
    #[arg(long, short)]
    session: PathBuf,
    #[arg(long, short = 'k', default_value_t = 4)]
    folds: usize,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct PeriodsArgs {
    #[arg(long, short)]
    session: PathBuf,
    /// Comma-separated periods.
    #[arg(long, value_delimiter = ',', default_value = "1-5,2-6,3-7,4-8")]
    periods: Vec<Period>,
    #[arg(long, short = 'k', default_value_t = 4)]
    folds: usize,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct ChannelsArgs {
    #[arg(long, short)]
    session: PathBuf,
    /// Semicolon-separated candidate sets (default: gamma;beta;alpha;gamma+beta).
    #[arg(long, value_delimiter = ';')]
    candidates: Vec<ChannelSet>,
    #[arg(long, short = 'k', default_value_t = 4)]
    folds: usize,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct AhpArgs {
    /// Also cross-validate the standard candidate sets on this session and print their Q report.
    #[arg(long, short)]
    session: Option<PathBuf>,
    #[arg(long, short = 'k', default_value_t = 4)]
    folds: usize,
    #[command(flatten)]
    model: ModelArgs,
    /// Score a channel set: accuracy in [0,1] ...
    #[arg(long, requires = "set")]
    accuracy: Option<f64>,
    /// ... and the set itself.
    #[arg(long)]
    set: Option<ChannelSet>,
}

#[derive(Args)]
struct StreamArgs {
    #[arg(long, short)]
    model: PathBuf,
    /// replay:<file>, synthetic or listener:<addr>.
    #[arg(long, default_value = "synthetic")]
    source: SourceSpec,
    /// Multiple of real time, or "max".
    #[arg(long, default_value = "1", value_parser = parse_speed)]
    speed: f64,
    /// Stop after this many frames (required for endless sources unless interrupted).
    #[arg(long)]
    frames: Option<u64>,
    /// Class the synthetic source imagines.
    #[arg(long, default_value = "left")]
    class: ClassLabel,
    /// Majority vote over the last n labels.
    #[arg(long)]
    smooth: Option<usize>,
    /// Print commands as JSON lines.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, short)]
    model: PathBuf,
    #[arg(long, short, default_value_t = 8765)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    bind: std::net::IpAddr,
    #[arg(long, default_value = "synthetic")]
    source: SourceSpec,
    /// Replay speed (multiple of real time, or "max").
    #[arg(long, default_value = "1", value_parser = parse_speed)]
    speed: f64,
}

fn parse_speed(s: &str) -> Result<f64, String> {
    if s == "max" {
        return Ok(f64::INFINITY);
    }
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 => Ok(v),
        _ => Err(format!("`{s}` is not a positive number or \"max\"")),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::Generate(a) => generate(a),
        Cmd::Train(a) => train(a),
        Cmd::Eval(a) => eval(a),
        Cmd::Cv(a) => {
            let trials = session(&a.session)?;
            let report = cross_validate(&trials, &a.model.config(), a.folds)?;
            println!("{report}");
            println!("{}", gate_line(&report));
            write_csv(a.csv.as_deref(), |w| report.write_csv(w))
        }
        Cmd::Periods(a) => {
            let trials = session(&a.session)?;
            let report = window_period_report(&trials, &a.model.config(), &a.periods, a.folds)?;
            println!("{report}");
            write_csv(a.csv.as_deref(), |w| report.write_csv(w))
        }
        Cmd::Channels(a) => {
            let trials = session(&a.session)?;
            let candidates = if a.candidates.is_empty() {
                ChannelSet::standard_candidates()
            } else {
                a.candidates
            };
            let report = channel_selection_report(&trials, &a.model.config(), &candidates, a.folds)?;
            println!("{report}");
            write_csv(a.csv.as_deref(), |w| report.write_csv(w))
        }
        Cmd::Ahp(a) => ahp_cmd(a),
        Cmd::Stream(a) => stream(a),
        Cmd::Serve(a) => serve(a),
    }
}

fn session(path: &Path) -> Result<Vec<Trial>> {
    load_session(path).with_context(|| format!("reading session {}", path.display()))
}

fn write_csv(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<()> {
    if let Some(p) = path {
        let mut w = BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?);
        f(&mut w)?;
        w.flush()?;
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn gate_line(report: &pipeline::EvaluationReport) -> String {
    format!(
        "acceptance gate (> {:.0}%): {}",
        100.0 * pipeline::ACCEPTANCE_THRESHOLD,
        if acceptance_gate(report) { "pass" } else { "fail" }
    )
}

fn generate(a: GenerateArgs) -> Result<()> {
    let cfg = SynthConfig {
        seed: a.seed,
        subject_id: a.subject,
        separation: a.separation,
        noise: a.noise,
        trials_per_class: a.trials_per_class,
        order: match a.order {
            Order::A => PresentationOrder::A,
            Order::B => PresentationOrder::B,
        },
        ..SynthConfig::default()
    };
    let trials = generate_session(&cfg)?;
    if a.out.as_os_str() == "-" {
        write_session(io::stdout().lock(), &trials)?;
    } else {
        write_session(BufWriter::new(File::create(&a.out)?), &trials)?;
        eprintln!("wrote {} trials to {}", trials.len(), a.out.display());
    }
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let bytes = fs::read(&a.session).with_context(|| format!("reading session {}", a.session.display()))?;
    let trials = parse_session(bytes.as_slice()).with_context(|| format!("parsing {}", a.session.display()))?;
    let cfg = a.model.config();
    let (train_set, test_set) = if a.holdout {
        let (tr, te) = split_30_10(&trials, cfg.seed)?;
        (tr, Some(te))
    } else {
        (trials, None)
    };
    let classifier = train_classifier(&train_set, &cfg)?;
    println!(
        "trained on {} trials ({} channels {}, period {}s, K={}): {} support vectors, training accuracy {:.1}%",
        train_set.len(),
        cfg.channel_set.len(),
        cfg.channel_set,
        cfg.period,
        cfg.window_len,
        classifier.svm.support_count(),
        100.0 * classifier.training_accuracy
    );
    if let Some(test) = test_set {
        let report = evaluate_report(&classifier, &test)?;
        println!("held-out {} trials:\n{report}", test.len());
        println!("{}", gate_line(&report));
    }
    save_model(&classifier, Provenance::new(Some(&bytes), cfg.seed), &a.out)?;
    eprintln!("wrote model to {}", a.out.display());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let model = load_model(&a.model).with_context(|| format!("loading model {}", a.model.display()))?;
    let trials = session(&a.session)?;
    let report = evaluate_report(&model.classifier(), &trials)?;
    println!("{report}");
    println!("{}", gate_line(&report));
    write_csv(a.csv.as_deref(), |w| report.write_csv(w))
}

fn ahp_cmd(a: AhpArgs) -> Result<()> {
    let m = ahp::criteria_matrix();
    let w = ahp::principal_weights(&m)?;
    println!("criteria: accuracy, prior knowledge, channel count");
    println!("weights: {:.5} {:.5} {:.5}", w[0], w[1], w[2]);
    println!("lambda_max: {:.7}", ahp::lambda_max(&m, &w));
    println!("consistency ratio: {:.7}", ahp::consistency_ratio(&m)?);
    if let (Some(acc), Some(set)) = (a.accuracy, a.set) {
        let scores = FactorScores::for_channel_set(acc, &set);
        println!(
            "{set}: c1={:.3} c2={} c3={:.3} Q={:.5}",
            scores.c1,
            scores.c2,
            scores.c3,
            ahp::evaluate_q(&scores, &w)?
        );
    }
    if let Some(path) = a.session {
        let trials = session(&path)?;
        let report =
            channel_selection_report(&trials, &a.model.config(), &ChannelSet::standard_candidates(), a.folds)?;
        println!("{report}");
    }
    Ok(())
}

fn stream(a: StreamArgs) -> Result<()> {
    let file = load_model(&a.model).with_context(|| format!("loading model {}", a.model.display()))?;
    let model = Arc::new(file.classifier());
    let opts = StreamOptions {
        smoothing: a.smooth,
        ..StreamOptions::default()
    };
    let control = StreamControl::new();
    let limit = a.frames;
    let json = a.json;
    let mut out = BufWriter::new(io::stdout().lock());
    let mut failed: Option<io::Error> = None;
    let sink = |c: mibci::realtime::Command| {
        let line = if json {
            serde_json::json!({
                "label": c.label,
                "decision": c.decision_value,
                "frame": c.frame_index,
                "t": c.t,
            })
            .to_string()
        } else {
            format!("{:>7} {:>5} {:+.6}", c.frame_index, c.label, c.decision_value)
        };
        if let Err(e) = writeln!(out, "{line}") {
            failed = Some(e);
            return Flow::Stop;
        }
        Flow::Continue
    };
    let stats = match a.source {
        SourceSpec::Replay { path, .. } => {
            let src = ReplaySource::open(&path, a.speed)?;
            stream_classify(src, model, &opts, &control, sink)?
        }
        SourceSpec::Synthetic { config } => {
            let src = SyntheticSource::new(config, ClassToggle::new(a.class))?.with_speed(a.speed)?;
            let src = match limit {
                Some(n) => src.with_limit(n),
                None => src,
            };
            stream_classify(src, model, &opts, &control, sink)?
        }
        SourceSpec::Listener { addr } => {
            let src = ListenerSource::accept(addr.as_str())?.with_header()?;
            stream_classify(src, model, &opts, &control, sink)?
        }
    };
    if let Some(e) = failed {
        if e.kind() != io::ErrorKind::BrokenPipe {
            bail!(e);
        }
    }
    out.flush().ok();
    eprintln!(
        "{} frames, {} commands, {} dropped, {} gap resets in {:.3} s ({:.0} frames/s)",
        stats.frames_received,
        stats.commands,
        stats.frames_dropped,
        stats.gap_resets,
        stats.elapsed.as_secs_f64(),
        stats.frames_per_second()
    );
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let file = load_model(&a.model).with_context(|| format!("loading model {}", a.model.display()))?;
    let model = Arc::new(file.classifier());
    let source = a.source.with_speed(a.speed);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let handle = mibci_service::start(model, source, SocketAddr::new(a.bind, a.port)).await?;
        eprintln!("serving on ws://{}/ (Ctrl-C to stop)", handle.addr);
        tokio::signal::ctrl_c().await?;
        handle.shutdown().await?;
        Ok(())
    })
}
