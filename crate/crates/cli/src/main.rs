//! `fairtrade` command-line entry point.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fairtrade::Error;

#[derive(Debug, Parser)]
#[command(
    name = "fairtrade",
    version,
    about = "Fair truthful mechanisms for Bayesian bilateral trade"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Fairness tolerance
    #[arg(long, global = true, default_value_t = 1e-8)]
    pub tol: f64,
    /// Worker threads for bound programs, frontier sweeps and `reproduce`
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Output CSV path; extra tables go next to it with a `_<table>` suffix
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for randomized runs
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LpObjective {
    Gft,
    Seller,
    Buyer,
    Nsw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fairness {
    Ks,
    Equitable,
    InterimKs,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Program {
    Reg,
    Mhr,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a mechanism: fpm:<p>, lambda_rom:<λ>, rom, som, bom, or a JSON descriptor
    Evaluate {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        mech: String,
    },
    /// KS-fair fixed price for a zero-value seller
    KsfairPrice {
        #[arg(long)]
        instance: PathBuf,
    },
    /// Mix a base mechanism with an offer mechanism onto the KS line
    Reduce {
        #[arg(long)]
        instance: PathBuf,
        /// rom, som, bom or fpm:<p>
        #[arg(long)]
        base: String,
    },
    /// Optimize over all truthful mechanisms of a finite instance
    Lp {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = LpObjective::Gft)]
        objective: LpObjective,
        #[arg(long, value_enum, default_value_t = Fairness::None)]
        fair: Fairness,
        /// Also sweep the utility frontier at this many buyer floors
        #[arg(long)]
        frontier: Option<usize>,
    },
    /// Evaluate a minimax bound program over its cell partition
    Bounds {
        #[arg(value_enum)]
        program: Program,
        /// Grid points per variable
        #[arg(long, default_value_t = 100)]
        grid: usize,
        /// Local refinement around each cell's grid minimum
        #[arg(long)]
        refine: bool,
        /// JSON array of cells; defaults to the built-in partition
        #[arg(long)]
        cells: Option<PathBuf>,
        /// Re-choose alpha per cell (regular program)
        #[arg(long)]
        adaptive_alpha: bool,
        /// Lattice size `R,H` for the MHR program
        #[arg(long, default_value = "8,4")]
        lattice: String,
    },
    /// Revenue curve and fixed-price ratio tables of a named example
    Curves {
        /// irregular, regular, regular25, mhr or equitable, optionally with `:K` (e.g. irregular:e25)
        #[arg(long)]
        example: String,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
    /// Run the acceptance criteria and print a pass/fail table
    Reproduce {
        /// Include the 500-point regular program
        #[arg(long)]
        long: bool,
        /// Comma-separated criterion ids
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Infeasible(_)
        | Error::Unbounded
        | Error::DegenerateBenchmark { .. }
        | Error::NoCrossing(_)
        | Error::NoFairPrice
        | Error::BadFiller
        | Error::SingularPoint(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
