mod commands;
mod records;
mod split;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use split::Split;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, configuration or input files: exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Failure while running: exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

/// Liquid-level sensing from WiFi channel-state traces.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a labeled dataset of traces and a manifest.
    Simulate(SimulateArgs),
    /// Extract the resonance frequency of each trace.
    Process(ProcessArgs),
    /// Fit a level model from a manifest.
    Train(TrainArgs),
    /// Apply a model to resonance estimates.
    Predict(PredictArgs),
    /// Score predictions against manifest ground truth.
    Evaluate(EvaluateArgs),
    /// Export the spectrogram of a trace's vibration component as CSV.
    Spectrogram(SpectrogramArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TraceFileFormat {
    Binary,
    Jsonl,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Simulation config (scene, curve, levels, sweeps); defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for traces and manifest.json.
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sweeps per level.
    #[arg(long)]
    pub sweeps: Option<usize>,
    /// Complex noise standard deviation.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Frames per second.
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long, value_enum)]
    pub format: Option<TraceFileFormat>,
}

/// Overrides applied on top of the pipeline config file.
#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Pipeline config JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// High-pass cutoff, Hz.
    #[arg(long)]
    pub cutoff: Option<f64>,
    #[arg(long)]
    pub filter_order: Option<usize>,
    /// STFT window length, samples.
    #[arg(long)]
    pub window: Option<usize>,
    /// STFT overlap, samples.
    #[arg(long)]
    pub overlap: Option<usize>,
    #[arg(long)]
    pub fft_len: Option<usize>,
    #[arg(long)]
    pub threshold_divisor: Option<f64>,
    /// Hz.
    #[arg(long)]
    pub verification_window: Option<f64>,
    #[arg(long)]
    pub min_peak_to_median: Option<f64>,
    /// Seconds.
    #[arg(long)]
    pub edge_trim: Option<f64>,
    /// Fixed antenna pair, e.g. `0,2`.
    #[arg(long, value_parser = parse_pair)]
    pub pair: Option<(usize, usize)>,
    /// Skip spectral subtraction.
    #[arg(long)]
    pub no_baseline: bool,
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected L,S, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(a)?, parse(b)?))
}

#[derive(Debug, Args)]
pub struct ProcessArgs {
    /// Trace files (.csit binary or .jsonl).
    #[arg(required = true)]
    pub traces: Vec<PathBuf>,
    /// No-vibration recording of the same scene for spectral subtraction.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Write the JSON records here.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Continuous,
    Discrete,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Defaults to interleaved-levels (continuous) or half-per-class (discrete).
    #[arg(long, value_enum)]
    pub split: Option<Split>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Records from `process`; traces are processed on the fly when omitted.
    #[arg(long)]
    pub estimates: Option<PathBuf>,
    /// Model output path.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Write a manifest of the held-out entries here.
    #[arg(long)]
    pub holdout: Option<PathBuf>,
    /// Use clamped end slopes instead of natural end conditions.
    #[arg(long)]
    pub clamped: bool,
    /// Cost values searched by cross-validation.
    #[arg(long, value_delimiter = ',')]
    pub c_grid: Option<Vec<f64>>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Records from `process`.
    #[arg(long)]
    pub estimates: PathBuf,
    /// Only predict entries listed in this manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Fail unless the model is of this kind.
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    /// Ground truth; every entry is scored.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Fail unless the predictions are of this kind.
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SpectrogramArgs {
    pub trace: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Process(a) => commands::process(&a),
        Command::Train(a) => commands::train(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Spectrogram(a) => commands::spectrogram(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
