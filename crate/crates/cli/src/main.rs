//! `airborne`: run scenarios, reproduction-number sweeps, onset experiments,
//! sensitivity analyses and the Green's function self-check.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use airborne::dynamics::Variant;
use airborne::integrator::DEFAULT_SAMPLES;
use airborne::reproduction::{Grid, DEFAULT_BETA_GRID};
use airborne::sensitivity::DEFAULT_SAMPLES as DEFAULT_LHS_SAMPLES;
use clap::{ArgGroup, Parser, Subcommand};

use commands::{OnsetCase, R0Methods};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Check(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Check(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage error",
            CliError::Config(_) => "config error",
            CliError::Numerical(_) => "numerical failure",
            CliError::Check(_) => "check failed",
            CliError::Io(_) => "i/o error",
        }
    }
}

#[derive(Parser)]
#[command(name = "airborne", version, about = "Reduced multiscale model of airborne viral transmission")]
struct Cli {
    /// Worker threads for sweeps and sampling (default: available processors).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

const DEFAULT_SWEEP_D0: &str = "0.002,0.02,0.2,2";
const DEFAULT_ONSET_D0: &str = "0.001,0.1,0.2,2";

#[derive(Subcommand)]
enum Command {
    /// Integrate a scenario and write the sampled trajectory.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of evenly spaced output times, endpoints included.
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: usize,
    },
    /// Within-host reproduction number of a single-host scenario.
    #[command(group(ArgGroup::new("method").args(["expansion", "ngm", "all"])))]
    R0 {
        #[arg(long)]
        config: PathBuf,
        /// Override the scenario's model variant.
        #[arg(long)]
        variant: Option<Variant>,
        /// Two-term expansion only (default).
        #[arg(long)]
        expansion: bool,
        /// Next-generation-matrix spectral radius only.
        #[arg(long)]
        ngm: bool,
        /// Both.
        #[arg(long)]
        all: bool,
        /// Also write r0.json and a manifest here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// R1 and R0 over a (beta1, beta2) grid, one CSV per D0.
    SweepR0 {
        /// Single-host reference scenario (default: reference host at the centre).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BETA_GRID)]
        grid_b1: Grid,
        #[arg(long, default_value_t = DEFAULT_BETA_GRID)]
        grid_b2: Grid,
        #[arg(long, value_delimiter = ',', default_value = DEFAULT_SWEEP_D0)]
        d0_list: Vec<f64>,
    },
    /// Infection onset times and delay between two hosts.
    Onset {
        /// Two-host scenario; required for `--case custom`.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated cases: I, II, III or custom.
        #[arg(long, value_delimiter = ',', default_value = "I,II,III")]
        case: Vec<OnsetCase>,
        #[arg(long, default_value_t = airborne::integrator::DEFAULT_ONSET_THRESHOLD)]
        threshold: f64,
        #[arg(long, value_delimiter = ',', default_value = DEFAULT_ONSET_D0)]
        d0_list: Vec<f64>,
    },
    /// Latin hypercube sample and partial rank correlations.
    Sensitivity {
        /// Ranges file (default: every applicable rate over x0.5 to x2).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_LHS_SAMPLES)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "multiscale")]
        model: Variant,
    },
    /// Numerical checks of the unit-disk Neumann Green's function.
    GreensCheck {
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
        points: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write greens_check.json and a manifest here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn check_d0_list(list: &[f64]) -> Result<(), CliError> {
    if list.is_empty() {
        return Err(CliError::Usage("--d0-list is empty".to_string()));
    }
    match list.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
        Some(d) => Err(CliError::Usage(format!("--d0-list entries must be positive, got {d}"))),
        None => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Usage("--workers must be at least 1".to_string()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate { config, out, samples } => {
            if samples < 2 {
                return Err(CliError::Usage("--samples must be at least 2".to_string()));
            }
            commands::simulate(&config, &out, samples)
        }
        Command::R0 {
            config,
            variant,
            expansion: _,
            ngm,
            all,
            out,
        } => {
            let methods = if all {
                R0Methods::All
            } else if ngm {
                R0Methods::Ngm
            } else {
                R0Methods::Expansion
            };
            commands::r0(&config, variant, methods, out.as_deref())
        }
        Command::SweepR0 {
            config,
            out,
            grid_b1,
            grid_b2,
            d0_list,
        } => {
            check_d0_list(&d0_list)?;
            commands::sweep(config.as_deref(), &out, grid_b1, grid_b2, &d0_list)
        }
        Command::Onset {
            config,
            out,
            case,
            threshold,
            d0_list,
        } => {
            check_d0_list(&d0_list)?;
            commands::onset(config.as_deref(), &out, &case, threshold, &d0_list)
        }
        Command::Sensitivity {
            config,
            out,
            n,
            seed,
            model,
        } => commands::sensitivity(config.as_deref(), &out, n, seed, model),
        Command::GreensCheck { points, seed, out } => {
            let points = usize::try_from(points).map_err(|e| CliError::Usage(e.to_string()))?;
            commands::greens_check(points, seed, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("airborne: {}: {e}", e.kind());
            ExitCode::from(e.exit_code())
        }
    }
}
