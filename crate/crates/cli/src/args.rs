//! Command-line definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "snmnn",
    version,
    about = "Simulate, train, predict, fuse and evaluate SN-MNN position estimators"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a simulated flight log, or the whole fixture suite.
    Simulate(SimulateArgs),
    /// Train a network on flight logs and write the model file.
    Train(TrainArgs),
    /// One-step predictions of a model along a log.
    Predict(PredictArgs),
    /// Replay a log through the EKF with a pseudo-GPS source.
    Fuse(FuseArgs),
    /// Held-out RMSE of a model on flight logs.
    Evaluate(EvaluateArgs),
    /// Convert a point between ENU, ECEF and geodetic coordinates.
    Convert(ConvertArgs),
    /// Strip a train or fuse report down to a plain table for plotting.
    Plotdata(PlotdataArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat key=value config file; flags override its entries.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads for independent runs.
    #[arg(long, value_name = "N")]
    pub jobs: Option<usize>,
}

/// Named fixture sets in the fixture directory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    /// hover, square, circle, random-a, random-b
    Train,
    /// Fast flights far from the origin.
    Stress,
    /// Noiseless held-out flights for fusion replays.
    Replay,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Log files or directories of `.csv` logs.
    #[arg(long, value_name = "PATH", num_args = 1.., conflicts_with = "suite")]
    pub data: Vec<PathBuf>,
    /// Fixture set to use when no `--data` is given.
    #[arg(long, value_enum, default_value = "train")]
    pub suite: Suite,
    /// Directory holding the fixtures.
    #[arg(
        long,
        value_name = "DIR",
        env = "SNMNN_FIXTURE_DIR",
        default_value = "fixtures"
    )]
    pub fixtures: PathBuf,
    /// Seed of the 3:2 train/test split.
    #[arg(long)]
    pub split_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Write every fixture set to the fixture directory instead of one flight.
    #[arg(long, conflicts_with_all = ["out", "plan"])]
    pub suite: bool,
    #[arg(
        long,
        value_name = "DIR",
        env = "SNMNN_FIXTURE_DIR",
        default_value = "fixtures"
    )]
    pub fixtures: PathBuf,
    /// hover, square, circle or random.
    #[arg(long)]
    pub plan: Option<String>,
    /// Flight duration, s.
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Circle radius, m.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Square side or random-waypoint extent, m.
    #[arg(long)]
    pub side: Option<f64>,
    /// Cruise speed, m/s.
    #[arg(long)]
    pub speed: Option<f64>,
    /// Per-axis position noise, m.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long, value_name = "FILE", required_unless_present = "suite")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    /// Lipschitz bound of the whole network.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Weight initialization seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Hidden layer width.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Train without renormalizing the weights.
    #[arg(long)]
    pub no_spectral_norm: bool,
    /// Model file to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Loss table to write.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub log: PathBuf,
    /// Feed the network its own predictions instead of the logged positions.
    #[arg(long)]
    pub free_running: bool,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[command(flatten)]
    pub common: Common,
    /// Model file, `oracle` (exact logged position) or `noise` (logged position plus white noise).
    #[arg(long, value_name = "FILE|oracle|noise")]
    pub model: String,
    #[arg(long, value_name = "FILE")]
    pub log: PathBuf,
    /// prediction or fused.
    #[arg(long)]
    pub feedback: Option<String>,
    /// Measurement standard deviation given to the filter, m.
    #[arg(long)]
    pub sigma_gps: Option<f64>,
    #[arg(long)]
    pub q_accel: Option<f64>,
    #[arg(long)]
    pub gps_every: Option<usize>,
    /// Gate on the Mahalanobis distance; 0 disables gating.
    #[arg(long)]
    pub gate_sigma: Option<f64>,
    /// Origin as `lat_deg,lon_deg,alt_m`.
    #[arg(long, allow_hyphen_values = true)]
    pub origin: Option<String>,
    /// Standard deviation of the `noise` source, m.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// First seed of the `noise` source.
    #[arg(long)]
    pub noise_seed: Option<u64>,
    /// Number of consecutive noise seeds to run.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Report CSV to write.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvalSet {
    Train,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    /// Model file or `oracle`.
    #[arg(long, value_name = "FILE|oracle")]
    pub model: String,
    /// Which side of the split to evaluate on.
    #[arg(long = "set", value_enum, default_value = "test")]
    pub set: EvalSet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Frame {
    /// East, north, up in m, relative to `--origin`.
    Enu,
    /// Earth-centred, earth-fixed x, y, z in m.
    Ecef,
    /// Latitude and longitude in degrees, ellipsoidal altitude in m.
    Geodetic,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long, value_enum)]
    pub from: Frame,
    #[arg(long, value_enum)]
    pub to: Frame,
    /// ENU origin as `lat_deg,lon_deg,alt_m`.
    #[arg(long, allow_hyphen_values = true, default_value = "0,0,0")]
    pub origin: String,
    /// The three coordinates of the point.
    #[arg(num_args = 3, value_names = ["A", "B", "C"], allow_negative_numbers = true, required = true)]
    pub point: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct PlotdataArgs {
    /// Loss table from `train --report` or report from `fuse --out`.
    #[arg(value_name = "REPORT")]
    pub input: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}
