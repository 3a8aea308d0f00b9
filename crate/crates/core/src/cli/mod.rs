//! Command-line front end. [`run`] parses arguments, executes one
//! subcommand and returns the process exit code.

mod bench;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::data::{load_class_folders, split, synth_dataset, LabeledDataset, PreparedDataset};
use crate::detect::{process_stream, FrameSource, LocatorSpec, StreamOptions};
use crate::error::{Error, Result};
use crate::model::{load_weights, save_weights, Model, ModelConfig};
use crate::monitor::{
    parse_timestamp, report, AlertPolicy, AlertSink, Clock, Monitor, RecordLog, RecordSink, Window,
};
use crate::train::{
    cached_backbone, emit_history, evaluate, sweep, train, HistoryFormat, Hyperparams, Optimizer, PretrainRecipe,
    SweepResult, TrainingHistory,
};

pub use bench::{bench_forward, BenchReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "maskwatch", version, about = "Face-mask classifier training and monitoring")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a classifier and write weights, history and metrics
    Train(TrainArgs),
    /// Evaluate saved weights on a dataset
    Eval(EvalArgs),
    /// Train once per learning rate and tabulate validation metrics
    Sweep(SweepArgs),
    /// Classify faces in a frame stream and log one record per frame
    Detect(DetectArgs),
    /// Detect plus alerting, or report over an existing record log
    Monitor(MonitorArgs),
    /// Render a history CSV as SVG (or normalize it as CSV)
    Plot(PlotArgs),
    /// Time naive and gemm forward passes layer by layer
    Bench(BenchArgs),
}

#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
pub struct DataArgs {
    /// Dataset folder with with_mask/ and without_mask/ subfolders of PPM images
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Generate this many synthetic faces per class instead
    #[arg(long)]
    pub synth: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Input resolution (multiple of 32)
    #[arg(long, default_value_t = 224)]
    pub resolution: usize,
    /// Width multiplier
    #[arg(long, default_value_t = 1.0)]
    pub width: f32,
    /// Dropout rate before the classifier
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Args, Debug, Clone)]
pub struct FitArgs {
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long = "batch", default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    pub optimizer: OptimizerArg,
    /// Train only the classification head
    #[arg(long)]
    pub freeze_backbone: bool,
    /// Starting backbone: `shapes` (pretrained on synthetic shapes), `scratch`, or a weights file
    #[arg(long, default_value = "shapes")]
    pub backbone: String,
    /// Where pretrained backbones are cached
    #[arg(long, default_value = ".maskwatch-cache")]
    pub cache_dir: PathBuf,
    /// Fraction of each class used for training
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory
    #[arg(long, default_value = "maskwatch-out")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    All,
    Train,
    Val,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    /// Weights file to evaluate
    #[arg(long)]
    pub weights: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Which part of the seeded split to evaluate
    #[arg(long, value_enum, default_value_t = SplitArg::All)]
    pub split: SplitArg,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "maskwatch-out")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Learning rates, comma separated
    #[arg(long, value_delimiter = ',', default_values_t = crate::train::default_learning_rates())]
    pub lr: Vec<f32>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Concurrent training runs
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value = "maskwatch-out")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
#[group(multiple = false)]
pub struct FrameArgs {
    /// Directory of frame_NNNNNN.ppm files
    #[arg(long)]
    pub frames: Option<PathBuf>,
    /// RVID raw stream file
    #[arg(long)]
    pub raw: Option<PathBuf>,
}

impl FrameArgs {
    fn source(&self) -> Option<FrameSource> {
        match (&self.frames, &self.raw) {
            (Some(d), _) => Some(FrameSource::Directory(d.clone())),
            (_, Some(f)) => Some(FrameSource::Raw(f.clone())),
            _ => None,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct StreamArgs {
    /// Weights file of a two-class model
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[command(flatten)]
    pub frames: FrameArgs,
    /// Face locator: whole, center:F or sidecar:PATH
    #[arg(long, default_value = "whole")]
    pub locator: String,
    /// Write annotated frames here
    #[arg(long)]
    pub annotate_out: Option<PathBuf>,
    /// Record log (appended); defaults to OUT/records.jsonl
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, default_value = "cam0")]
    pub source_id: String,
    /// Freeze every timestamp at this ISO-8601 instant
    #[arg(long)]
    pub fixed_time: Option<String>,
    /// Frames classified concurrently
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value = "maskwatch-out")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct DetectArgs {
    #[command(flatten)]
    pub stream: StreamArgs,
}

#[derive(Args, Debug, Clone)]
pub struct MonitorArgs {
    #[command(flatten)]
    pub stream: StreamArgs,
    /// Lowest WithoutMask confidence that counts as a violation
    #[arg(long, default_value_t = 0.8)]
    pub min_confidence: f32,
    /// Consecutive violating frames before an alert
    #[arg(long, default_value_t = 3)]
    pub consecutive: u32,
    /// Frames after an alert during which no new alert fires
    #[arg(long, default_value_t = 30)]
    pub cooldown: u64,
    /// Alert sink: stdout, file:PATH or http://URL (repeatable)
    #[arg(long)]
    pub sink: Vec<String>,
    /// Print a report over the record log for START..END (either side may be empty)
    #[arg(long)]
    pub report: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct PlotArgs {
    /// History CSV written by `train`
    #[arg(long)]
    pub history: PathBuf,
    #[arg(long, value_enum, default_value_t = PlotFormat::Svg)]
    pub format: PlotFormat,
    /// Output file; defaults to the history path with the format's extension
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PlotFormat {
    Csv,
    Svg,
}

#[derive(Args, Debug, Clone)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 224)]
    pub resolution: usize,
    #[arg(long, default_value_t = 1.0)]
    pub width: f32,
    #[arg(long, default_value_t = 1)]
    pub batch: usize,
    /// Timed passes per path; the median is reported
    #[arg(long, default_value_t = 5)]
    pub repeat: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parses `args` (program name first), runs the command, returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Exit code for an error: 2 usage, 3 input or data, 4 numeric failure.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Divergence { .. } | Error::NonFinite { .. } => EXIT_NUMERIC,
        Error::InvalidArgument(_) => EXIT_USAGE,
        Error::File { source, .. } => match exit_code(source) {
            EXIT_USAGE => EXIT_DATA,
            code => code,
        },
        _ => EXIT_DATA,
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Detect(a) => cmd_detect(&a),
        Command::Monitor(a) => cmd_monitor(&a),
        Command::Plot(a) => cmd_plot(&a),
        Command::Bench(a) => cmd_bench(&a),
    }
}

/// Fully resolved settings of one run, echoed before it starts.
#[derive(Clone, Debug, Default)]
pub struct RunConfig {
    pub entries: Vec<(String, String)>,
}

impl RunConfig {
    fn new(subcommand: &str) -> Self {
        let mut c = Self::default();
        c.set("subcommand", subcommand);
        c
    }

    fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    fn opt<T: std::fmt::Display>(&mut self, key: &str, value: Option<T>) -> &mut Self {
        self.set(key, value.map_or_else(|| "none".to_string(), |v| v.to_string()))
    }

    pub fn render(&self) -> String {
        self.entries.iter().fold(String::new(), |mut s, (k, v)| {
            let _ = writeln!(s, "{k} = {v}");
            s
        })
    }

    /// Prints the config and writes it to `out/run_config.txt`.
    fn echo(&self, out: &Path) -> Result<()> {
        let text = self.render();
        print!("{text}");
        create_dir(out)?;
        let path = out.join("run_config.txt");
        std::fs::write(&path, text).map_err(|e| Error::from(e).in_file(path))
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::from(e).in_file(path))
}

fn describe_data(c: &mut RunConfig, data: &DataArgs) {
    c.opt("data", data.data.as_ref().map(|p| p.display().to_string()))
        .opt("synth_per_class", data.synth);
}

fn describe_model(c: &mut RunConfig, m: &ModelArgs) {
    c.set("resolution", m.resolution).set("width", m.width).set("dropout", m.dropout);
}

fn describe_fit(c: &mut RunConfig, f: &FitArgs) {
    c.set("epochs", f.epochs)
        .set("batch", f.batch_size)
        .set("optimizer", format!("{:?}", f.optimizer).to_lowercase())
        .set("freeze_backbone", f.freeze_backbone)
        .set("backbone", &f.backbone);
    if f.backbone == "shapes" {
        let r = PretrainRecipe::default();
        c.set("pretrain_per_class", r.per_class)
            .set("pretrain_epochs", r.epochs)
            .set("pretrain_lr", format!("{:e}", r.learning_rate))
            .set("pretrain_seed", r.seed)
            .set("cache_dir", f.cache_dir.display());
    }
    c.set("train_fraction", f.train_fraction);
}

fn model_config(m: &ModelArgs) -> Result<ModelConfig> {
    let config = ModelConfig {
        input_resolution: m.resolution,
        width_multiplier: m.width,
        num_classes: 2,
        dropout_rate: m.dropout,
    };
    config.validate()?;
    Ok(config)
}

fn load_dataset(data: &DataArgs, resolution: usize, seed: u64) -> Result<LabeledDataset> {
    match (&data.data, data.synth) {
        (Some(dir), _) => load_class_folders(dir),
        (None, Some(n)) => Ok(synth_dataset(n, resolution, seed)),
        (None, None) => Err(Error::InvalidArgument("one of --data or --synth is required".into())),
    }
}

fn prepared_split(
    data: &DataArgs,
    resolution: usize,
    fraction: f64,
    seed: u64,
) -> Result<(PreparedDataset, PreparedDataset)> {
    let dataset = load_dataset(data, resolution, seed)?;
    log::info!("dataset: {}", dataset.describe_counts());
    let (tr, va) = split(&dataset, fraction, seed)?;
    Ok((PreparedDataset::new(&tr, resolution), PreparedDataset::new(&va, resolution)))
}

fn hyperparams(fit: &FitArgs, lr: f32, seed: u64) -> Hyperparams {
    Hyperparams {
        learning_rate: lr,
        epochs: fit.epochs,
        batch_size: fit.batch_size,
        optimizer: match fit.optimizer {
            OptimizerArg::Adam => Optimizer::default(),
            OptimizerArg::Sgd => Optimizer::Sgd,
        },
        seed,
        freeze_backbone: fit.freeze_backbone,
    }
}

/// The untrained starting point for a run: a fresh network, a pretrained
/// backbone with a new head, or a backbone from a weights file.
pub fn initial_model(config: ModelConfig, fit: &FitArgs, seed: u64) -> Result<Model> {
    let backbone = match fit.backbone.as_str() {
        "scratch" => return Model::new(config, seed),
        "shapes" => cached_backbone(config, &PretrainRecipe::default(), &fit.cache_dir)?.0,
        path => load_weights(Path::new(path))?,
    };
    if backbone.config.input_resolution != config.input_resolution
        || backbone.config.width_multiplier != config.width_multiplier
    {
        return Err(Error::InvalidArgument(format!(
            "backbone is {} px / width {}, run asks for {} px / width {}",
            backbone.config.input_resolution,
            backbone.config.width_multiplier,
            config.input_resolution,
            config.width_multiplier
        )));
    }
    let backbone = Model {
        config: ModelConfig {
            dropout_rate: config.dropout_rate,
            ..backbone.config
        },
        ..backbone
    };
    backbone.attach_head(config.num_classes, fit.freeze_backbone, seed)
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let mut c = RunConfig::new("train");
    describe_data(&mut c, &a.data);
    describe_model(&mut c, &a.model);
    c.set("lr", format!("{:e}", a.lr));
    describe_fit(&mut c, &a.fit);
    c.set("seed", a.seed).set("out", a.out.display());
    c.echo(&a.out)?;

    let config = model_config(&a.model)?;
    let hp = hyperparams(&a.fit, a.lr, a.seed);
    hp.validate()?;
    let (tr, va) = prepared_split(&a.data, config.input_resolution, a.fit.train_fraction, a.seed)?;
    let model = initial_model(config, &a.fit, a.seed)?;
    let (model, history) = train(model, &tr, &va, &hp)?;
    let metrics = evaluate(&model, &va)?;

    let weights = a.out.join("model.mnv2w");
    save_weights(&weights, &model)?;
    emit_history(&history, HistoryFormat::Csv, &a.out.join("history.csv"))?;
    emit_history(&history, HistoryFormat::Svg, &a.out.join("history.svg"))?;
    let summary = metrics_summary(&metrics, &history);
    write_file(&a.out.join("metrics.txt"), &summary)?;
    print!("{summary}");
    println!("weights written to {}", weights.display());
    Ok(())
}

fn metrics_summary(m: &crate::train::Metrics, history: &TrainingHistory) -> String {
    let rate = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
    let mut s = String::new();
    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        let _ = writeln!(s, "train_loss {:.4} -> {:.4}", first.train_loss, last.train_loss);
        let _ = writeln!(s, "val_accuracy {:.4} -> {:.4}", first.val_accuracy, last.val_accuracy);
    }
    let _ = writeln!(s, "val_accuracy {:.4}", m.accuracy());
    let _ = writeln!(s, "val_precision {}", rate(m.precision()));
    let _ = writeln!(s, "val_recall {}", rate(m.recall()));
    let _ = writeln!(s, "val_loss {:.4}", m.loss);
    let _ = writeln!(s, "confusion TP {} FP {} TN {} FN {}", m.tp, m.fp, m.tn, m.fn_);
    s
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let mut c = RunConfig::new("eval");
    c.set("weights", a.weights.display());
    describe_data(&mut c, &a.data);
    c.set("split", format!("{:?}", a.split).to_lowercase())
        .set("train_fraction", a.train_fraction)
        .set("seed", a.seed)
        .set("out", a.out.display());
    c.echo(&a.out)?;

    let model = load_weights(&a.weights)?;
    let r = model.config.input_resolution;
    let dataset = load_dataset(&a.data, r, a.seed)?;
    let subset = match a.split {
        SplitArg::All => dataset,
        SplitArg::Train => split(&dataset, a.train_fraction, a.seed)?.0,
        SplitArg::Val => split(&dataset, a.train_fraction, a.seed)?.1,
    };
    let m = evaluate(&model, &PreparedDataset::new(&subset, r))?;
    let text = format!(
        "items {}\naccuracy {:.4}\nprecision {}\nrecall {}\nloss {:.4}\nconfusion TP {} FP {} TN {} FN {}\n",
        m.total(),
        m.accuracy(),
        m.precision().map_or_else(|| "n/a".into(), |v| format!("{v:.4}")),
        m.recall().map_or_else(|| "n/a".into(), |v| format!("{v:.4}")),
        m.loss,
        m.tp,
        m.fp,
        m.tn,
        m.fn_
    );
    write_file(&a.out.join("eval.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let mut c = RunConfig::new("sweep");
    describe_data(&mut c, &a.data);
    describe_model(&mut c, &a.model);
    let lrs: Vec<String> = a.lr.iter().map(|lr| format!("{lr:e}")).collect();
    c.set("lr", lrs.join(","));
    describe_fit(&mut c, &a.fit);
    c.set("seed", a.seed).set("jobs", a.jobs).set("out", a.out.display());
    c.echo(&a.out)?;

    let config = model_config(&a.model)?;
    let configs: Vec<Hyperparams> = a.lr.iter().map(|&lr| hyperparams(&a.fit, lr, a.seed)).collect();
    for hp in &configs {
        hp.validate()?;
    }
    let (tr, va) = prepared_split(&a.data, config.input_resolution, a.fit.train_fraction, a.seed)?;
    let base = initial_model(config, &a.fit, a.seed)?;
    let result: SweepResult = sweep(&base, &tr, &va, &configs, a.jobs)?;
    write_file(&a.out.join("sweep.csv"), &result.to_csv())?;
    let table = result.to_table();
    write_file(&a.out.join("sweep.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn clock(fixed_time: &Option<String>) -> Result<Clock> {
    fixed_time
        .as_deref()
        .map_or(Ok(Clock::System), |t| parse_timestamp(t).map(Clock::Fixed))
}

fn describe_stream(c: &mut RunConfig, s: &StreamArgs) {
    c.opt("weights", s.weights.as_ref().map(|p| p.display().to_string()))
        .opt("frames", s.frames.source())
        .set("locator", &s.locator)
        .opt("annotate_out", s.annotate_out.as_ref().map(|p| p.display().to_string()))
        .set("log", stream_log(s).display())
        .set("source_id", &s.source_id)
        .opt("fixed_time", s.fixed_time.as_ref())
        .set("jobs", s.jobs)
        .set("out", s.out.display());
}

fn stream_log(s: &StreamArgs) -> PathBuf {
    s.log.clone().unwrap_or_else(|| s.out.join("records.jsonl"))
}

/// Runs detection over the configured stream, feeding `extra` sinks after the log.
fn run_stream(s: &StreamArgs, extra: Option<&mut dyn RecordSink>) -> Result<()> {
    let source = s
        .frames
        .source()
        .ok_or_else(|| Error::InvalidArgument("one of --frames or --raw is required".into()))?;
    let weights = s
        .weights
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("--weights is required to process frames".into()))?;
    let locator: LocatorSpec = s.locator.parse()?;
    let model = load_weights(weights)?;
    let options = StreamOptions {
        source_id: s.source_id.clone(),
        clock: clock(&s.fixed_time)?,
        annotate_out: s.annotate_out.clone(),
        jobs: s.jobs,
    };
    let log_path = stream_log(s);
    if let Some(parent) = log_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let mut log = RecordLog::open(&log_path)?;
    let summary = match extra {
        Some(sink) => process_stream(&source, &model, &locator, &options, &mut [&mut log, sink])?,
        None => process_stream(&source, &model, &locator, &options, &mut [&mut log])?,
    };
    println!(
        "frames {}  detections {}  log {}",
        summary.frames,
        summary.detections,
        log_path.display()
    );
    Ok(())
}

fn cmd_detect(a: &DetectArgs) -> Result<()> {
    let mut c = RunConfig::new("detect");
    describe_stream(&mut c, &a.stream);
    c.echo(&a.stream.out)?;
    run_stream(&a.stream, None)
}

fn cmd_monitor(a: &MonitorArgs) -> Result<()> {
    let policy = AlertPolicy {
        min_confidence: a.min_confidence,
        consecutive_frames: a.consecutive,
        cooldown_frames: a.cooldown,
    };
    let mut c = RunConfig::new("monitor");
    describe_stream(&mut c, &a.stream);
    c.set("min_confidence", policy.min_confidence)
        .set("consecutive", policy.consecutive_frames)
        .set("cooldown", policy.cooldown_frames)
        .set("sinks", if a.sink.is_empty() { "none".to_string() } else { a.sink.join(",") })
        .opt("report", a.report.as_ref());
    c.echo(&a.stream.out)?;

    policy.validate()?;
    let sinks = a.sink.iter().map(|s| s.parse()).collect::<Result<Vec<AlertSink>>>()?;
    let window: Option<Window> = a.report.as_deref().map(str::parse).transpose()?;
    let has_stream = a.stream.frames.source().is_some();
    if !has_stream && window.is_none() {
        return Err(Error::InvalidArgument("give --frames/--raw to monitor a stream, or --report".into()));
    }
    if has_stream {
        let mut monitor = Monitor::new(policy, sinks)?;
        run_stream(&a.stream, Some(&mut monitor))?;
        println!("alerts {}", monitor.alerts().len());
        for (alert, statuses) in monitor.alerts() {
            println!(
                "alert frame {} source {} streak {} max_conf {:.4}",
                alert.frame_index, alert.source_id, alert.streak, alert.max_confidence
            );
            for s in statuses {
                println!("  {s}");
            }
        }
    }
    if let Some(window) = window {
        println!("{}", report(&stream_log(&a.stream), window, &policy)?);
    }
    Ok(())
}

fn cmd_plot(a: &PlotArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.history).map_err(|e| Error::from(e).in_file(&a.history))?;
    let history = TrainingHistory::from_csv(&text).map_err(|e| e.in_file(&a.history))?;
    let (format, ext) = match a.format {
        PlotFormat::Csv => (HistoryFormat::Csv, "csv"),
        PlotFormat::Svg => (HistoryFormat::Svg, "svg"),
    };
    let output = a.output.clone().unwrap_or_else(|| a.history.with_extension(ext));
    emit_history(&history, format, &output)?;
    println!("wrote {}", output.display());
    Ok(())
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let mut c = RunConfig::new("bench");
    c.set("resolution", a.resolution)
        .set("width", a.width)
        .set("batch", a.batch)
        .set("repeat", a.repeat)
        .set("seed", a.seed);
    print!("{}", c.render());
    let config = ModelConfig {
        input_resolution: a.resolution,
        width_multiplier: a.width,
        ..ModelConfig::default()
    };
    config.validate()?;
    println!("{}", bench_forward(config, a.batch, a.repeat, a.seed)?.table());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn train_without_data_is_a_usage_error() {
        let err = Cli::try_parse_from(["maskwatch", "train"]).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_USAGE);
        assert!(Cli::try_parse_from(["maskwatch", "train", "--synth", "3", "--data", "x"]).is_err());
    }

    #[test]
    fn defaults_match_the_training_recipe() {
        let Command::Train(a) = Cli::try_parse_from(["maskwatch", "train", "--synth", "3"]).unwrap().command else {
            panic!()
        };
        assert_eq!(a.lr, 1e-4);
        assert_eq!(a.fit.epochs, 20);
        assert_eq!(a.fit.batch_size, 32);
        let Command::Sweep(s) = Cli::try_parse_from(["maskwatch", "sweep", "--synth", "3"]).unwrap().command else {
            panic!()
        };
        assert_eq!(s.lr, [1e-4, 1e-3, 1e-2]);
        let Command::Sweep(s) = Cli::try_parse_from(["maskwatch", "sweep", "--synth", "3", "--lr", "1e-4,0.5"])
            .unwrap()
            .command
        else {
            panic!()
        };
        assert_eq!(s.lr, [1e-4, 0.5]);
    }

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(exit_code(&Error::InvalidArgument("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::Dataset("x".into())), EXIT_DATA);
        assert_eq!(exit_code(&Error::Divergence { epoch: 1, batch: 1, loss: f32::NAN }), EXIT_NUMERIC);
        let io = Error::Io(std::io::Error::from(std::io::ErrorKind::NotFound)).in_file("w.mnv2w");
        assert_eq!(exit_code(&io), EXIT_DATA);
        assert_eq!(exit_code(&Error::InvalidArgument("x".into()).in_file("f")), EXIT_DATA);
    }

    #[test]
    fn run_config_renders_key_value_lines() {
        let mut c = RunConfig::new("train");
        c.set("lr", "1e-4").opt::<usize>("synth_per_class", None);
        assert_eq!(c.render(), "subcommand = train\nlr = 1e-4\nsynth_per_class = none\n");
    }
}
