use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod equilibrate;
mod out;
mod spin;
mod sweep;
mod validate;

pub use out::{Failure, OutDir};

#[derive(Parser)]
#[command(name = "ilf", version, about = "Multilayer Penning-trap ion crystals: equilibria, modes and spin couplings")]
struct Cli {
    /// Worker threads (the ILF_JOBS environment variable takes precedence).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Omit timestamps from figures so reruns are byte-identical.
    #[arg(long, global = true)]
    reproducible: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Find the ground-state crystal for a trap configuration.
    Equilibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Master seed; random (and printed) when omitted.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Normal modes, branch metrics and special modes of a crystal.
    Modes {
        #[arg(long)]
        crystal: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Mode to draw in the amplitude/phase view (defaults to the breathing or c.m. mode).
        #[arg(long)]
        mode: Option<usize>,
        /// Temperature for the axial spread and Lamb-Dicke table, K.
        #[arg(long, requires = "wavelength_nm")]
        temperature_k: Option<f64>,
        /// Laser wavelength, nm, required with --temperature-k.
        #[arg(long)]
        wavelength_nm: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        theta_deg: f64,
    },
    /// Ising coupling matrices for an ODF drive.
    Couplings {
        #[arg(long)]
        crystal: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Spin-precession (tipping) curves.
    Tipping {
        #[arg(long)]
        crystal: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Interlayer phases in degrees; each overrides the configured beam angle.
        #[arg(long, value_delimiter = ',')]
        phis: Vec<f64>,
        /// Tipping angles sampled over [0, 180] degrees.
        #[arg(long, default_value_t = 181)]
        points: usize,
    },
    /// Flip-flop exchange couplings under a transverse field.
    Exchange {
        #[arg(long)]
        crystal: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        phis: Vec<f64>,
    },
    /// Parameter scans with one aggregate table.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        param: SweepParam,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        points: usize,
        /// Crystal file, required for the drive-strength scan.
        #[arg(long)]
        crystal: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Built-in consistency checks on a crystal file.
    Validate {
        #[arg(long)]
        crystal: PathBuf,
        /// Optional ODF config, enables the exchange Hermiticity check.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    /// Quartic trap coefficient.
    C4,
    /// Rotating-wall frequency, Hz.
    OmegaR,
    /// Second-tone strength F1^2/F0^2 for both detuning signs.
    F1Ratio,
}

fn configure_threads(jobs: Option<usize>) -> Result<(), Failure> {
    let env = std::env::var("ILF_JOBS").ok();
    let jobs = match env {
        Some(v) => Some(v.trim().parse::<usize>().map_err(|_| Failure::usage(format!("ILF_JOBS is not a count: {v}")))?),
        None => jobs,
    };
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Failure::usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage(format!("cannot size the worker pool: {e}")))?;
    }
    Ok(())
}

/// Seed used when neither the flag nor the config names one.
pub fn pick_seed_random() -> u64 {
    rand::random()
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads(cli.jobs)?;
    let repro = cli.reproducible;
    match cli.command {
        Command::Equilibrate { config, out, seed } => equilibrate::run(&config, &out, seed, repro),
        Command::Modes { crystal, out, mode, temperature_k, wavelength_nm, theta_deg } => {
            let thermal = spin::Thermal { temperature: temperature_k, wavelength: wavelength_nm.unwrap_or(f64::NAN) * 1e-9, theta: theta_deg.to_radians() };
            spin::modes(&crystal, &out, mode, &thermal, repro)
        }
        Command::Couplings { crystal, config, out } => spin::couplings(&crystal, &config, &out, repro),
        Command::Tipping { crystal, config, out, phis, points } => spin::tipping(&crystal, &config, &out, &phis, points, repro),
        Command::Exchange { crystal, config, out, phis } => spin::exchange(&crystal, &config, &out, &phis, repro),
        Command::Sweep { config, out, param, from, to, points, crystal, seed } => {
            sweep::run(&config, &out, param, (from, to, points), crystal.as_deref(), seed, repro)
        }
        Command::Validate { crystal, config } => validate::run(&crystal, config.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::new()
        .filter_level(log::LevelFilter::Warn)
        .parse_env("ILF_LOG")
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
