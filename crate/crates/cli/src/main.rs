mod commands;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tclflex::fleet::DeviceKind;
use tclflex::ingest::IngestError;
use tclflex::ModelError;

const SCHEMAS: &str = "\
Input schemas (CSV, UTC ISO-8601 timestamps, `#` lines are comments):
  temperature   timestamp_utc,temp_c                       hourly, no gaps, °C
  prices        timestamp_utc,ru_cap,rd_cap,ru_mil,rd_mil  hourly, $/MW, >= 0
  signal        t_seconds,value                            uniform step; a leading
                `# normalized=true` restricts values to [-1, 1], otherwise
                `# unit=kw|mw|gw` (default kW)
Fleet config (TOML): households_total, mileage_multiplier, accuracy,
  [[class]] kind, saturation_rate, ranges, participation, fixed_ambient, capital_cost
  [[city]] name, households, temps (file under --temps, default <name>.csv)

Exit codes: 0 success, 2 input validation failure, 3 numerical failure.";

#[derive(Parser, Debug)]
#[command(name = "tclflex", version, about = "Regulation potential of thermostatically controlled load fleets", after_help = SCHEMAS)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Fleet configuration (TOML); built-in defaults when omitted
    #[arg(long, global = true, value_name = "PATH")]
    pub fleet: Option<PathBuf>,
    /// Directory of hourly temperature files, one per city
    #[arg(long, global = true, value_name = "DIR")]
    pub temps: Option<PathBuf>,
    /// Hourly regulation price file
    #[arg(long, global = true, value_name = "PATH")]
    pub prices: Option<PathBuf>,
    /// Regulation signal file
    #[arg(long, global = true, value_name = "PATH")]
    pub signal: Option<PathBuf>,
    /// Seed for every random draw
    #[arg(long, global = true, default_value_t = 2013)]
    pub seed: u64,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Check inputs and exit without computing
    #[arg(long, global = true)]
    pub validate_only: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Hourly regulation capacity per device class, with peak/minimum summary
    Capacity,
    /// Track a regulation signal with a simulated population
    Track(TrackArgs),
    /// Capacity and mileage revenue per class and per unit
    Revenue(RevenueArgs),
    /// Largest energy excursion of a normalized signal over an (alpha, amplitude) grid
    EnergyRequirement(EnergyArgs),
    /// Cost per kW and kWh of TCL flexibility next to storage technologies
    Compare(CompareArgs),
    /// Validate every supplied input
    Validate,
    /// Write synthetic temperature, price and signal fixtures under <out>/fixtures/synthetic
    Synth,
}

fn parse_kind(s: &str) -> Result<DeviceKind, String> {
    DeviceKind::parse(s).ok_or_else(|| {
        let names: Vec<_> = DeviceKind::ALL.iter().map(|k| k.name()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

#[derive(Args, Debug, Clone)]
pub struct TrackArgs {
    /// Device class of the population
    #[arg(long, default_value = "ac", value_parser = parse_kind)]
    pub class: DeviceKind,
    /// Number of simulated units
    #[arg(long, default_value_t = 1000)]
    pub units: usize,
    /// Ambient temperature, °C (default: class fixed ambient, else 32)
    #[arg(long)]
    pub ambient: Option<f64>,
    /// Peak of a normalized signal in kW (default: --amplitude-fraction of min(n-, n+))
    #[arg(long)]
    pub amplitude_kw: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub amplitude_fraction: f64,
    /// Use only the first HOURS of the signal
    #[arg(long)]
    pub hours: Option<f64>,
    /// Draw each unit's parameters from the class ranges
    #[arg(long)]
    pub heterogeneous: bool,
    /// Communication delay in control steps
    #[arg(long, default_value_t = 0)]
    pub delay_steps: usize,
    /// Minimum time between commands to the same unit, s
    #[arg(long)]
    pub min_dwell: Option<f64>,
    /// Std of a Gaussian thermal disturbance, °C/h
    #[arg(long, default_value_t = 0.0)]
    pub disturbance_std: f64,
}

#[derive(Args, Debug, Clone)]
pub struct RevenueArgs {
    /// Tracking accuracy applied to mileage (default from fleet config)
    #[arg(long)]
    pub accuracy: Option<f64>,
    /// Awarded mileage per unit of capacity (default from fleet config)
    #[arg(long)]
    pub mileage_multiplier: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct EnergyArgs {
    /// Dissipation rates, 1/h
    #[arg(long, value_delimiter = ',', default_value = "0.02,0.25")]
    pub alphas: Vec<f64>,
    /// Signal amplitudes, MW
    #[arg(long, value_delimiter = ',', default_value = "600")]
    pub amplitudes: Vec<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct CompareArgs {
    /// Storage technology table (TOML); built-in table when omitted
    #[arg(long, value_name = "PATH")]
    pub technologies: Option<PathBuf>,
}

#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Numerical(String),
    Io(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Io(_) => 1,
        }
    }

    pub fn io(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "invalid input: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
            Failure::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NonFinite(_) => Failure::Numerical(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        Failure::Validation(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let c = &cli.common;
    let result = match &cli.command {
        Command::Capacity => commands::capacity(c),
        Command::Track(a) => commands::track(c, a),
        Command::Revenue(a) => commands::revenue(c, a),
        Command::EnergyRequirement(a) => commands::energy_requirement(c, a),
        Command::Compare(a) => commands::compare(c, a),
        Command::Validate => commands::validate(c),
        Command::Synth => commands::synth(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tclflex: {e}");
            ExitCode::from(e.code())
        }
    }
}
