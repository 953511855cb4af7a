//! `flowdub` command-line driver.

mod commands;
mod config;
mod error;
mod output;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{RunConfig, Schedule};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "flowdub", version, about = "Flow-matching dubbing toolkit")]
struct Cli {
    /// Master seed for every random draw of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON run configuration; explicit flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a mixture dataset or a dubbing instance.
    Datagen(DatagenArgs),
    /// Train a flow-matching vector field.
    Train(TrainArgs),
    /// Draw samples from a trained model, optionally with guidance.
    Sample(SampleArgs),
    /// Align lip frames to phonemes and report contrastive losses.
    Align(AlignArgs),
    /// MCD-DTW metrics between two mel or cepstral sequences.
    Metrics(MetricsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    Mixture2d,
    DubSmall,
    DubFullDims,
}

#[derive(Debug, Args)]
pub struct DatagenArgs {
    #[arg(long, value_enum)]
    pub preset: Preset,
    /// Number of mixture draws.
    #[arg(long)]
    pub count: Option<usize>,
    /// Lip-frame noise level for dubbing instances.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub phonemes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// `samples.fdt` from a mixture preset or `instance.json` from a dub preset.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_enum)]
    pub schedule: Option<Schedule>,
    /// Hidden layer widths, e.g. `128,128`.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub sigma_min: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// `model.json` written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Instance to condition on; required for models trained on one.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Comma-separated guidance scales, e.g. `0,0.2,0.4,0.6,0.8`.
    #[arg(long, value_delimiter = ',')]
    pub alpha_sweep: Option<Vec<f64>>,
    #[arg(long)]
    pub euler_steps: Option<usize>,
    /// Number of draws for unconditional models.
    #[arg(long)]
    pub count: Option<usize>,
    /// Also write `sample_unguided.fdt`, integrated on the conditional
    /// stream alone.
    #[arg(long)]
    pub unguided: bool,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    /// Instance JSON; its durations supply the contrastive positives.
    #[arg(long, conflicts_with_all = ["z_m", "z_p"])]
    pub instance: Option<PathBuf>,
    #[arg(long, requires = "z_p")]
    pub z_m: Option<PathBuf>,
    #[arg(long, requires = "z_m")]
    pub z_p: Option<PathBuf>,
    /// Ground-truth durations for the positives when reading raw tensors.
    #[arg(long, value_delimiter = ',', conflicts_with = "instance")]
    pub durations: Option<Vec<usize>>,
    #[arg(long, allow_negative_numbers = true)]
    pub tau: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    pub reference: PathBuf,
    pub other: PathBuf,
    /// Number of cepstral coefficients.
    #[arg(long)]
    pub k: Option<usize>,
    /// Inputs are mel spectrograms; extract cepstra first.
    #[arg(long)]
    pub from_mel: bool,
    /// With `--from-mel`: inputs are power mels rather than log mels.
    #[arg(long, requires = "from_mel")]
    pub power: bool,
}

fn configure_threads() -> CliResult<()> {
    let threads = match std::env::var("FLOWDUB_THREADS") {
        Err(_) => 1,
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| CliError::usage(format!("FLOWDUB_THREADS must be a positive integer, got {v:?}")))?,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::usage(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = output::OutDir::create(&cli.out)?;
    match cli.command {
        Command::Datagen(a) => commands::datagen::run(a, cfg, &out),
        Command::Train(a) => commands::train::run(a, cfg, &out),
        Command::Sample(a) => commands::sample::run(a, cfg, &out),
        Command::Align(a) => commands::align::run(a, cfg, &out),
        Command::Metrics(a) => commands::metrics::run(a, cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::usage(e.render().to_string().trim_end());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::from(err.code as u8)
        }
    }
}
