mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    Precondition(String),
    Io(String),
    Format(String),
    Mismatch(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Precondition(_) => 2,
            CliError::Io(_) | CliError::Format(_) => 3,
            CliError::Mismatch(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Precondition(m) => write!(f, "precondition violated: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Format(m) => write!(f, "format error: {m}"),
            CliError::Mismatch(m) => write!(f, "mismatch: {m}"),
        }
    }
}

impl From<mflab::Error> for CliError {
    fn from(e: mflab::Error) -> Self {
        match e {
            mflab::Error::Precondition(m) => CliError::Precondition(m),
            mflab::Error::Io(e) => CliError::Io(e.to_string()),
            mflab::Error::Format(m) => CliError::Format(m),
            mflab::Error::Mismatch(m) => CliError::Mismatch(m),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "mflab", version, about = "Wavelet-leader multifractal experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by commands that build or analyse fields.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Construction as inline JSON, e.g. '{"construction":"two-exponent","alpha":0.5,"beta":1,"eta":0.5}'.
    #[arg(long)]
    pub construction: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed range `a..b`, `a..=b` or list `a,b,c`.
    #[arg(long, value_parser = config::parse_seeds)]
    pub seeds: Option<config::SeedList>,
    #[arg(long)]
    pub jmax: Option<u32>,
    #[arg(long = "scale-window", value_parser = config::parse_window)]
    pub scale_window: Option<(u32, u32)>,
    /// Comma-separated, strictly decreasing.
    #[arg(long = "eps-schedule", value_delimiter = ',')]
    pub eps_schedule: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Legendre,
    Largedev,
    /// Increasing hull of the large-deviation spectrum.
    Hull,
    /// Concave hull of the large-deviation spectrum.
    Concave,
    Holder,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum FileFormat {
    Binary,
    Csv,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build coefficient files, one per seed.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "binary")]
        format: FileFormat,
    },
    /// Compute wavelet leaders of a coefficient file.
    Leaders {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Estimate a spectrum; several inputs are pooled at the count level.
    Spectrum {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "largedev")]
        which: Which,
        /// Points for `--which holder`, comma-separated.
        #[arg(long, value_delimiter = ',')]
        points: Option<Vec<f64>>,
        /// h-grid `lo:hi:n`.
        #[arg(long, value_parser = config::parse_grid)]
        grid: Option<(f64, f64, usize)>,
        #[command(flatten)]
        common: Common,
    },
    /// Pointwise Holder estimates.
    Holder {
        input: PathBuf,
        #[arg(long, required = true, value_delimiter = ',')]
        points: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Closed-form spectra of a construction.
    Oracle {
        /// h-grid `lo:hi:n`.
        #[arg(long, value_parser = config::parse_grid, conflicts_with = "like")]
        grid: Option<(f64, f64, usize)>,
        /// Reuse the grid of a spectrum CSV.
        #[arg(long)]
        like: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Compare an estimated spectrum with an oracle; prints a JSON verdict.
    Compare {
        estimate: PathBuf,
        /// Oracle CSV; without it the oracle is computed from the construction.
        #[arg(long)]
        against: Option<PathBuf>,
        /// Reference kind: oracleD, oracleRho or oracleL.
        #[arg(long, default_value = "oracleD")]
        reference: String,
        #[arg(long, default_value_t = 0.1)]
        tol: f64,
        #[arg(long)]
        support_tol: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Admissible sequences and the generic-regularity witness.
    Genspace {
        #[command(subcommand)]
        command: GenspaceCommand,
    },
}

#[derive(Subcommand, Debug)]
pub enum GenspaceCommand {
    /// Slowly oscillating sequence.
    Oscillate {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long = "seq-jmax")]
        seq_jmax: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-range Boyd indices of a sequence file.
    Boyd { sequence: PathBuf },
    /// Norm sup_j sup_k sigma_j |c_jk| of a coefficient file.
    Norm { sequence: PathBuf, field: PathBuf },
    /// Random point of the unit ball.
    Ball {
        sequence: PathBuf,
        #[arg(long)]
        jmax: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Projection onto the lattice C_N.
    Project {
        sequence: PathBuf,
        field: PathBuf,
        #[arg(long, default_value_t = 2)]
        n: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Two-sided bound C^-1 <= sigma_j |e| <= C.
    Suite { sequence: PathBuf, field: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mflab: {e}");
            ExitCode::from(e.code())
        }
    }
}
