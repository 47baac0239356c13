//! The `xpatch` command-line interface.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{parse_ini, Resolved, RunConfig, KEYS};

#[derive(Debug, Parser)]
#[command(name = "xpatch", version, about = "EMA-decomposed dual-stream patch forecasting")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split one column into EMA or SMA trend and seasonal parts.
    Decompose(DecomposeArgs),
    /// Train a model and write its checkpoint, history and test report.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test split of a dataset.
    Eval(EvalArgs),
    /// Forecast the steps following the last rows of a CSV.
    Forecast(ForecastArgs),
    /// Chunked ADF stationarity table of a column and its EMA components.
    Adf(AdfArgs),
    /// Plot a test window against the checkpoint's prediction as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DecomposeArgs {
    /// Input CSV (header row; a leading `date` column is skipped).
    #[arg(long)]
    pub input: PathBuf,
    /// Column to decompose [default: last column].
    #[arg(long)]
    pub column: Option<String>,
    /// Smoothing method: ema or sma.
    #[arg(long, default_value = "ema")]
    pub method: String,
    /// EMA smoothing factor in (0, 1].
    #[arg(long, default_value_t = crate::decompose::DEFAULT_ALPHA)]
    pub alpha: f64,
    /// SMA kernel size (odd).
    #[arg(long, default_value_t = 25)]
    pub kernel: usize,
    /// Output CSV [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also render the decomposition as SVG.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

/// Dataset selection shared by the dataset-reading subcommands.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Dataset preset name (etth1, etth2, ettm1, ettm2, weather, traffic,
    /// electricity, exchange, solar, ili).
    #[arg(long)]
    pub dataset: Option<String>,
    /// Dataset CSV path; overrides the preset's file location.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Directory holding preset files [default: $XPATCH_DATA_DIR or ./data].
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Config file of `key = value` lines; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Lookback length L (multiple of 4) [default: preset, else 96].
    #[arg(long)]
    pub lookback: Option<usize>,
    /// Forecast horizon T [default: preset's first horizon, else 96].
    #[arg(long)]
    pub horizon: Option<usize>,
    /// EMA smoothing factor [default: 0.3].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Patch length P [default: 16].
    #[arg(long)]
    pub patch_len: Option<usize>,
    /// Patch stride S [default: 8].
    #[arg(long)]
    pub stride: Option<usize>,
    /// Stream routing: original, reversed, linear_only, nonlinear_only.
    #[arg(long)]
    pub routing: Option<String>,
    /// Windows per batch [default: 32].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Maximum epochs [default: 100].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Early-stopping patience in epochs [default: 10].
    #[arg(long)]
    pub patience: Option<usize>,
    /// Cap on optimizer steps.
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Loss: mse, mae, card or arctan [default: arctan].
    #[arg(long)]
    pub loss: Option<String>,
    /// Arctangent loss scale m [default: 1].
    #[arg(long)]
    pub arctan_m: Option<f64>,
    /// Initial learning rate [default: 1e-4].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Schedule: standard, patch_tst, cosine_warmup, sigmoid [default: sigmoid].
    #[arg(long)]
    pub schedule: Option<String>,
    /// Sigmoid schedule growth rate k [default: 0.5].
    #[arg(long)]
    pub lr_k: Option<f64>,
    /// Sigmoid schedule smoothing rate s [default: 10].
    #[arg(long)]
    pub lr_s: Option<f64>,
    /// Warm-up coefficient w [default: 10].
    #[arg(long)]
    pub lr_w: Option<f64>,
    /// Random seed [default: $XPATCH_SEED, else 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for checkpoint, history, config and report.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Checkpoint stem (without .json/.bin).
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Measure errors in raw units instead of standardized space.
    #[arg(long)]
    pub raw_scale: bool,
    /// Report CSV [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-horizon-step metrics CSV.
    #[arg(long)]
    pub per_horizon: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ForecastArgs {
    /// Checkpoint stem (without .json/.bin).
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// CSV whose last L rows form the lookback window.
    #[arg(long)]
    pub input: PathBuf,
    /// Forecast CSV [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AdfArgs {
    /// Input CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Column to test [default: last column].
    #[arg(long)]
    pub column: Option<String>,
    /// Chunk length.
    #[arg(long, default_value_t = crate::adf::DEFAULT_CHUNK_LEN)]
    pub chunk_len: usize,
    /// EMA smoothing factor of the decomposition.
    #[arg(long, default_value_t = crate::decompose::DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Fixed lag order [default: floor(12·(n/100)^(1/4))].
    #[arg(long)]
    pub max_lags: Option<usize>,
    /// Table CSV [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PlotArgs {
    /// Checkpoint stem (without .json/.bin).
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Variable to plot [default: last column].
    #[arg(long)]
    pub channel: Option<String>,
    /// Index of the test window.
    #[arg(long, default_value_t = 0)]
    pub window: usize,
    /// Output SVG.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match commands::dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
