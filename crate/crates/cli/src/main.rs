mod commands;
mod run_config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};
use mmbat::harness::HarnessError;
use mmbat::radar::{MotionKind, RadarError};

#[derive(Debug, Parser)]
#[command(
    name = "mmbat",
    version,
    about = "Radar body reconstruction: simulate, train, evaluate, inspect"
)]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: current directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write simulated radar sequences with ground truth.
    Simulate(SimulateArgs),
    /// Train the network on dataset files.
    Train(TrainArgs),
    /// Evaluate a checkpoint on dataset files.
    Eval(EvalArgs),
    /// Summarize a dataset file.
    Inspect(InspectArgs),
}

fn parse_kind(s: &str) -> Result<MotionKind, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| {
        format!(
            "expected one of {}",
            MotionKind::ALL.map(|k| k.as_str()).join(", ")
        )
    })
}

#[derive(Debug, clap::Args)]
struct SimulateArgs {
    #[arg(long, value_parser = parse_kind)]
    kind: Option<MotionKind>,
    #[arg(long, conflicts_with = "frames")]
    seconds: Option<f64>,
    /// Sequence length in frames, instead of `--seconds`.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    frames: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    sequences: Option<u64>,
    /// Mean clutter points per frame.
    #[arg(long)]
    clutter: Option<f64>,
    /// Ghost reflection probability.
    #[arg(long)]
    ghosts: Option<f64>,
    /// Position jitter sigma, meters.
    #[arg(long)]
    jitter: Option<f64>,
}

#[derive(Debug, clap::Args)]
struct TrainArgs {
    /// Dataset files or directories of `.mmrd` files.
    #[arg(long, num_args = 1..)]
    data: Vec<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    batch_size: Option<u64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    max_steps: Option<u64>,
}

#[derive(Debug, clap::Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, num_args = 1..)]
    data: Vec<PathBuf>,
    /// Crop with the ground-truth translations instead of the tracked ones.
    #[arg(long)]
    oracle_crop: bool,
    /// Also write per-frame predictions as JSON lines.
    #[arg(long)]
    dump_frames: bool,
    /// Evaluate even if the configuration differs from the checkpoint's.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, clap::Args)]
struct InspectArgs {
    path: PathBuf,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration; exit code 2.
    Usage(String),
    /// Bad flags with the usage text of a subcommand.
    UsageOf(&'static str, String),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::UsageOf(..) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(_) | HarnessError::Net(mmbat::net::NetError::Config(_)) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<RadarError> for CliError {
    fn from(e: RadarError) -> Self {
        match e {
            RadarError::Config(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Usage(m) | CliError::Runtime(m) => eprintln!("error: {m}"),
                CliError::UsageOf(sub, m) => {
                    eprintln!("error: {m}\n");
                    let mut cmd = Cli::command();
                    cmd.build();
                    if let Some(c) = cmd.find_subcommand_mut(sub) {
                        eprintln!("{}", c.render_usage());
                    }
                }
            }
            ExitCode::from(e.exit_code())
        }
    }
}
