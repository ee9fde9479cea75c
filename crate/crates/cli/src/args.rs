use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::criteria::Profile;

#[derive(Debug, Parser)]
#[command(
    name = "levywave",
    version,
    about = "Killed and branching Levy processes: rate functions, QSDs, phases and waves"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON model document; standard Brownian motion when omitted.
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Master seed. There is no clock-based default.
    #[arg(long, required = true)]
    pub seed: u64,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "levywave-out")]
    pub out: PathBuf,
    /// Replace existing output files.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate Gamma and its dual, and invert Gamma at given rates.
    Gamma(GammaArgs),
    /// Extinction / survival scan over an (r, c) grid.
    Phase(PhaseArgs),
    /// Quasi-stationary density from the ladder formula, with a check.
    Qsd(QsdArgs),
    /// Conditioned laws from a point along a time schedule.
    Yaglom(YaglomArgs),
    /// F-KPP front from a step and its speed.
    Front(FrontArgs),
    /// Travelling wave from Galton-Watson level counts.
    Tw(TwArgs),
    /// Run the acceptance criteria.
    Check(CheckArgs),
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Gamma(a) => &a.common,
            Command::Phase(a) => &a.common,
            Command::Qsd(a) => &a.common,
            Command::Yaglom(a) => &a.common,
            Command::Front(a) => &a.common,
            Command::Tw(a) => &a.common,
            Command::Check(a) => &a.common,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Gamma(_) => "gamma",
            Command::Phase(_) => "phase",
            Command::Qsd(_) => "qsd",
            Command::Yaglom(_) => "yaglom",
            Command::Front(_) => "front",
            Command::Tw(_) => "tw",
            Command::Check(_) => "check",
        }
    }

    /// Command parameters as JSON, for the config hash.
    pub fn params(&self) -> serde_json::Value {
        let v = match self {
            Command::Gamma(a) => serde_json::to_value(a),
            Command::Phase(a) => serde_json::to_value(a),
            Command::Qsd(a) => serde_json::to_value(a),
            Command::Yaglom(a) => serde_json::to_value(a),
            Command::Front(a) => serde_json::to_value(a),
            Command::Tw(a) => serde_json::to_value(a),
            Command::Check(a) => serde_json::to_value(a),
        };
        v.expect("arguments serialise")
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GammaArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
    /// Points alpha at which Gamma and the dual conjugate are tabulated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true,
          default_values_t = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0])]
    pub alphas: Vec<f64>,
    /// Rates r for which Gamma^{-1}(r) is reported.
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0])]
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PhaseArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 1.5, 2.0, 2.5])]
    pub cs: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.3, 0.8, 1.5, 2.5, 4.0])]
    pub rs: Vec<f64>,
    /// Starting point of the first particle.
    #[arg(long, default_value_t = 4.0)]
    pub x0: f64,
    #[arg(long, default_value_t = 400)]
    pub n_runs: usize,
    /// Population size counted as survival.
    #[arg(long, default_value_t = 10_000)]
    pub cap: usize,
    #[arg(long, default_value_t = 100.0)]
    pub t_max: f64,
    #[arg(long, default_value_t = 0.25)]
    pub dt: f64,
    /// Cells with |r - Gamma(c)| at most this are reported but not scored.
    #[arg(long, default_value_t = 0.05)]
    pub band: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct QsdArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
    #[arg(long)]
    pub c: f64,
    #[arg(long)]
    pub r: f64,
    /// Right end of the density grid (default 20 / theta).
    #[arg(long)]
    pub grid_top: Option<f64>,
    #[arg(long, default_value_t = 2000)]
    pub grid_points: usize,
    /// Paths for the ladder renewal function.
    #[arg(long, default_value_t = 10_000)]
    pub n_paths: usize,
    #[arg(long, default_value_t = 1.0)]
    pub dt: f64,
    #[arg(long, default_value_t = 1e4)]
    pub horizon: f64,
    /// Time at which quasi-stationarity is checked; 0 skips the check.
    #[arg(long, default_value_t = 4.0)]
    pub verify_t: f64,
    #[arg(long, default_value_t = 100_000)]
    pub verify_paths: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct YaglomArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
    #[arg(long)]
    pub c: f64,
    #[arg(long, default_value_t = 1.0)]
    pub x0: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [5.0, 10.0, 15.0])]
    pub schedule: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub n_paths: usize,
    /// Sample without the Esscher tilt at the critical theta.
    #[arg(long)]
    pub no_tilt: bool,
    #[arg(long, default_value_t = 1.0)]
    pub dt: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FrontArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
    #[arg(long)]
    pub r: f64,
    #[arg(long, default_value_t = -100.0, allow_hyphen_values = true)]
    pub x_min: f64,
    #[arg(long, default_value_t = 300.0)]
    pub x_max: f64,
    #[arg(long, default_value_t = 0.1)]
    pub dx: f64,
    #[arg(long, default_value_t = 40.0)]
    pub t_end: f64,
    /// Time step (default 0.9 of the stability bound).
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub record_every: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TwArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
    #[arg(long, default_value_t = 1.0)]
    pub r: f64,
    /// Wave speed (default Gamma^{-1}(r)).
    #[arg(long)]
    pub c: Option<f64>,
    /// Value of the wave at 0.
    #[arg(long, default_value_t = 0.5)]
    pub s: f64,
    #[arg(long, default_value_t = 0.2)]
    pub dx: f64,
    #[arg(long, default_value_t = 20)]
    pub n_levels: usize,
    #[arg(long, default_value_t = 20_000)]
    pub n_runs: usize,
    #[arg(long, default_value_t = 100_000)]
    pub cap: usize,
    #[arg(long, default_value_t = 200.0)]
    pub t_max: f64,
    #[arg(long, default_value_t = 0.5)]
    pub dt: f64,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true,
          default_values_t = [-1.0, -0.5, 0.0, 0.5, 1.0])]
    pub probes: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub mckean_t: f64,
    #[arg(long, default_value_t = 20_000)]
    pub mckean_runs: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CheckArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
    #[arg(long, value_enum, default_value_t = Profile::Full)]
    pub profile: Profile,
    /// Subset of criteria to run (default all).
    #[arg(long, value_delimiter = ',')]
    pub criteria: Vec<u8>,
}
