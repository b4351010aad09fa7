//! `tsgg`: dataset synthesis, training, inference, simulation, evaluation and
//! the partial-correlation baseline from the command line.

mod commands;
mod config;
mod formats;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::RunConfig;
use formats::SeriesFormat;

#[derive(Debug, Error)]
#[error("{msg}")]
pub struct CliError {
    code: u8,
    msg: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError { code: 2, msg: msg.into() }
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError { code: 1, msg: msg.into() }
    }
}

impl From<tsgg_core::Error> for CliError {
    fn from(e: tsgg_core::Error) -> Self {
        let code = if e.is_validation() { 2 } else { 1 };
        CliError { code, msg: e.to_string() }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tsgg", version, about = "Time-series to graph generation with adversarial training")]
struct Cli {
    /// Seed for every random draw of the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON run configuration supplying defaults; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize BA graphs with FCM-simulated series.
    GenData(GenDataArgs),
    /// Train generator and discriminator on a dataset file.
    Train(TrainArgs),
    /// Predict graphs for time series with a trained checkpoint.
    Infer(InferArgs),
    /// Roll out FCM dynamics on a graph.
    Simulate(SimulateArgs),
    /// Score predicted graphs against ground truth.
    Eval(EvalArgs),
    /// Partial-correlation network estimates.
    Baseline(BaselineArgs),
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long)]
    t_len: Option<usize>,
    /// Probability of the extra edge between existing nodes.
    #[arg(long)]
    p_edge: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Train on the first N pairs only.
    #[arg(long)]
    split: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    lr_g: Option<f64>,
    #[arg(long)]
    lr_d: Option<f64>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Continue from this checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Loss log CSV (default: `<out>` with a `.loss.csv` suffix).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SeriesInput {
    /// Time-series file.
    #[arg(long)]
    ts: Option<PathBuf>,
    /// Input layout (guessed from the extension by default).
    #[arg(long, value_enum)]
    format: Option<SeriesFormat>,
    /// Ignore the first N series of the input.
    #[arg(long)]
    skip: Option<usize>,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[command(flatten)]
    input: SeriesInput,
    /// Noise for the generator: `zeros` or `sample`.
    #[arg(long)]
    z_mode: Option<String>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Graph document (graph set, dataset or bare matrix).
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Which graph of the document to use.
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Number of time points, including the initial state.
    #[arg(long)]
    steps: Option<usize>,
    /// `uniform` (U[0,1] per node), `half`, or a comma-separated vector.
    #[arg(long, default_value = "uniform")]
    init: String,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Ground truth: graph document, or DREAM3 gold standard with
    /// `--truth-format dream3`.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value = "graph")]
    truth_format: String,
    /// Ignore the first N truth graphs.
    #[arg(long)]
    skip: Option<usize>,
    /// Comma-separated subset of him, qjsd, hamming, im.
    #[arg(long)]
    metrics: Option<String>,
    #[arg(long)]
    xi: Option<f64>,
    /// Compare absolute predicted weights.
    #[arg(long)]
    abs: bool,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    #[command(flatten)]
    input: SeriesInput,
    #[arg(long)]
    ridge: Option<f64>,
}

fn setup_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("TSGG_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| CliError::usage(format!("TSGG_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::runtime(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    setup_threads()?;
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli.out.clone();
    match cli.command {
        Command::GenData(a) => commands::gen_data(cfg, a, out),
        Command::Train(a) => commands::train(cfg, a, out),
        Command::Infer(a) => commands::infer(cfg, a, out),
        Command::Simulate(a) => commands::simulate(cfg, a, out),
        Command::Eval(a) => commands::eval(cfg, a, out),
        Command::Baseline(a) => commands::baseline(cfg, a, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
