//! `shipstab`: reproducible stability and bifurcation experiments.
//!
//! Every command writes CSV files and a JSON manifest into `--out`. Exit
//! codes: 0 success, 1 configuration or usage error, 2 solver failure.

mod commands;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use shipstab::continuation::FreeParam;
use shipstab::ControlLaw;

#[derive(Debug, Clone, Parser)]
#[command(
    name = "shipstab",
    version,
    about = "Stability and bifurcation analysis of a thruster-controlled ship"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Parameter overrides, one `section.key = value` per line
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Output directory (created if missing)
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,

    /// Worker threads for sweeps (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,

    /// Yaw feedback law
    #[arg(long, global = true, default_value = "sin", value_parser = parse_law)]
    pub law: ControlLaw,

    /// Fixed-step RK4 integration instead of adaptive steps (bit-reproducible)
    #[arg(long, global = true)]
    pub fixed_step: bool,

    /// Step size for --fixed-step
    #[arg(long, global = true, value_name = "H", default_value_t = 0.05)]
    pub step: f64,

    /// Propeller diameter override
    #[arg(long = "Dp", global = true, value_name = "M")]
    pub dp: Option<f64>,

    /// Thruster position override (fraction of Lpp)
    #[arg(
        long = "xT",
        global = true,
        value_name = "X",
        allow_hyphen_values = true
    )]
    pub x_t: Option<f64>,

    /// Write a gnuplot script next to every CSV
    #[arg(long, global = true)]
    pub plot: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Straight-motion surge speed u0
    Equilibrium {
        /// Also tabulate u0 over propeller diameters FROM:TO:N
        #[arg(long, value_name = "FROM:TO:N")]
        dp_sweep: Option<Grid>,
    },
    /// Stability boundary eps_psi(eps_r)
    Boundary {
        /// Comma-separated eps_r values
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            conflicts_with = "range"
        )]
        eps_r: Vec<f64>,
        /// eps_r grid FROM:TO:N (default: 0 to the zero crossing, 201 points)
        #[arg(long, value_name = "FROM:TO:N")]
        range: Option<Grid>,
    },
    /// Verdict raster over a gain grid
    Map {
        #[arg(long, value_name = "FROM:TO:N", default_value = "0:200:101")]
        eps_r: Grid,
        #[arg(long, value_name = "FROM:TO:N", default_value = "0:80:81")]
        eps_psi: Grid,
    },
    /// Thruster-position case analysis (uses --xT)
    #[command(name = "classify-xT")]
    ClassifyXt {
        /// Also tabulate thresholds over x_T FROM:TO:N
        #[arg(long, value_name = "FROM:TO:N", allow_hyphen_values = true)]
        sweep: Option<Grid>,
    },
    /// Hopf criticality Sigma along the boundary
    Sigma {
        /// eps_r grid FROM:TO:N (default: integers from 1 to the zero crossing)
        #[arg(long, value_name = "FROM:TO:N")]
        range: Option<Grid>,
    },
    /// Pitchfork reduction at eps_psi = 0 and its equilibrium branches
    Pitchfork {
        /// eps_r interval FROM:TO for the branches (default: 0.75 to 1.05 of eps_r1)
        #[arg(long, value_name = "FROM:TO")]
        interval: Option<Interval>,
        #[arg(long, default_value_t = 0.05)]
        ds: f64,
        #[arg(long, default_value_t = 0.5)]
        ds_max: f64,
    },
    /// Time simulation with a motion report
    Simulate(SimArgs),
    /// Earth-fixed track of a simulation or of constant body velocities
    Track {
        #[command(flatten)]
        sim: SimArgs,
        /// Constant body velocities U,V (m/s) and yaw rate R (deg/s)
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            value_name = "U,V,R"
        )]
        constant: Option<Vec<f64>>,
    },
    /// Branch continuation of periodic orbits
    Continue(ContinueArgs),
    /// Re-run the command recorded in a manifest
    Replay { manifest: PathBuf },
}

#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    #[arg(long, default_value_t = 10.6)]
    pub eps_r: f64,
    #[arg(long, default_value_t = 30.0)]
    pub eps_psi: f64,
    #[arg(long, default_value_t = 2000.0)]
    pub t_end: f64,
    /// Start from (u0, d, d, d) in (u, v, r, psi)
    #[arg(
        long,
        value_name = "D",
        default_value_t = 0.1,
        allow_hyphen_values = true
    )]
    pub perturb: f64,
    /// Start state U,V,R,PSI with R in deg/s and PSI in degrees (overrides --perturb)
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        value_name = "U,V,R,PSI"
    )]
    pub state: Option<Vec<f64>>,
    /// Adaptive tolerance
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args)]
pub struct ContinueArgs {
    /// Continuation parameter
    #[arg(long, default_value = "eps_psi", value_parser = parse_free)]
    pub free: FreeParam,
    /// Fixed eps_r (or start value when --free eps_r)
    #[arg(long, default_value_t = 10.6)]
    pub eps_r: f64,
    /// Fixed eps_psi when --free eps_r
    #[arg(long)]
    pub eps_psi: Option<f64>,
    /// Start from the Hopf point, a circling family or the Hopf locus
    #[arg(long, default_value = "hopf")]
    pub start: Start,
    /// Parameter value at which to stop
    #[arg(long, allow_hyphen_values = true)]
    pub target: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub ds: f64,
    #[arg(long, default_value_t = 1.0)]
    pub ds_max: f64,
    #[arg(long, default_value_t = 2000)]
    pub max_points: usize,
    /// Integration tolerance inside the shooting solver
    #[arg(long, default_value_t = 1e-11)]
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Start {
    Hopf,
    NuPlus,
    NuMinus,
    Locus,
}

impl FromStr for Start {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "hopf" => Ok(Start::Hopf),
            "nu+" | "nu-plus" => Ok(Start::NuPlus),
            "nu-" | "nu-minus" => Ok(Start::NuMinus),
            "locus" => Ok(Start::Locus),
            _ => Err(format!("unknown start `{s}` (expected hopf|nu+|nu-|locus)")),
        }
    }
}

/// `FROM:TO:N`, N >= 1 points including both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub from: f64,
    pub to: f64,
    pub n: usize,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.from];
        }
        let step = (self.to - self.from) / (self.n - 1) as f64;
        (0..self.n).map(|i| self.from + step * i as f64).collect()
    }
}

impl FromStr for Grid {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, n] = parts[..] else {
            return Err(format!("expected FROM:TO:N, got `{s}`"));
        };
        let num = |x: &str| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| format!("`{x}` is not a number"))
        };
        let n: usize = n
            .trim()
            .parse()
            .map_err(|_| format!("`{n}` is not a count"))?;
        if n == 0 {
            return Err("grid needs at least one point".into());
        }
        Ok(Grid {
            from: num(a)?,
            to: num(b)?,
            n,
        })
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.from, self.to, self.n)
    }
}

/// `FROM:TO`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub from: f64,
    pub to: f64,
}

impl FromStr for Interval {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| format!("expected FROM:TO, got `{s}`"))?;
        let num = |x: &str| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| format!("`{x}` is not a number"))
        };
        Ok(Interval {
            from: num(a)?,
            to: num(b)?,
        })
    }
}

fn parse_law(s: &str) -> Result<ControlLaw, String> {
    s.parse()
}

fn parse_free(s: &str) -> Result<FreeParam, String> {
    s.parse()
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Solver(shipstab::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Solver(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Solver(e) => write!(f, "solver failure: {e}"),
        }
    }
}

impl From<shipstab::Error> for CliError {
    fn from(e: shipstab::Error) -> Self {
        use shipstab::Error as E;
        match e {
            E::Config { .. }
            | E::InvalidParameter { .. }
            | E::InvalidTolerance(_)
            | E::SingularMassMatrix(_) => CliError::Usage(e.to_string()),
            e => CliError::Solver(e),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(format!("i/o error: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Usage(format!("csv error: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(format!("json error: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
