//! Command-line driver for solves, iteration tables, scaling sweeps and the
//! invariant checks.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use patchmg::harness::{
    run_checks, run_iteration_table, run_scaling, run_solve, write_csv, DomainChoice, ExperimentConfig,
    ScalingMode,
};
use patchmg::multigrid::CycleKind;
use patchmg::parallel::Backend;
use patchmg::{Error, Result};

#[derive(Parser)]
#[command(name = "patchmg", version, about = "Multi-patch isogeometric multigrid for the Poisson problem")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve once and write one CSV row.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 2)]
        levels: usize,
        #[arg(long, default_value_t = 2)]
        degree: usize,
        #[arg(long, default_value_t = 1)]
        ranks: usize,
    },
    /// One solve per (level, degree) pair.
    IterationTable {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3])]
        levels: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [2, 3, 4])]
        degrees: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        ranks: usize,
    },
    /// Strong or weak scaling over a list of rank counts.
    Scaling {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 2)]
        levels: usize,
        #[arg(long, default_value_t = 2)]
        degree: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 4])]
        ranks: Vec<usize>,
        #[arg(long, value_enum, default_value_t = Mode::Strong)]
        mode: Mode,
    },
    /// Run the invariant suite.
    Check {
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Cycle {
    V,
    W,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Strong,
    Weak,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Loopback,
    Inproc,
}

#[derive(Args)]
struct Common {
    /// fichera, lshape, unit_grid:KX,KY[,KZ] or file:PATH
    #[arg(long, default_value = "fichera")]
    domain: String,
    #[arg(long, default_value_t = 1)]
    split: usize,
    #[arg(long, value_enum, default_value_t = Cycle::V)]
    cycle: Cycle,
    #[arg(long, default_value_t = 1)]
    nu: usize,
    #[arg(long, default_value_t = 0.25)]
    tau: f64,
    #[arg(long, default_value_t = 0.2)]
    sigma_scale: f64,
    /// Damp the coarse-grid correction by tau as well.
    #[arg(long)]
    damp_coarse: bool,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iterations: usize,
    /// Defaults to loopback for one rank and inproc otherwise.
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output CSV file; standard output if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self, levels: usize, degree: usize, ranks: usize) -> Result<ExperimentConfig> {
        let backend = match self.backend {
            Some(BackendArg::Loopback) => Backend::Loopback,
            Some(BackendArg::Inproc) => Backend::InProc,
            None if ranks == 1 => Backend::Loopback,
            None => Backend::InProc,
        };
        let config = ExperimentConfig {
            domain: self.domain.parse::<DomainChoice>()?,
            split: self.split,
            levels,
            degree,
            cycle: match self.cycle {
                Cycle::V => CycleKind::V,
                Cycle::W => CycleKind::W,
            },
            nu: self.nu,
            tau: self.tau,
            sigma_scale: self.sigma_scale,
            damp_coarse: self.damp_coarse,
            tol: self.tol,
            max_iterations: self.max_iterations,
            ranks,
            backend,
            seed: self.seed,
        };
        config.validate()?;
        Ok(config)
    }

    fn output(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(path) => Box::new(BufWriter::new(File::create(path)?)),
            None => Box::new(io::stdout().lock()),
        })
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Solve {
            common,
            levels,
            degree,
            ranks,
        } => {
            let row = run_solve(&common.config(levels, degree, ranks)?)?;
            write_csv(&[row], common.output()?)?;
        }
        Command::IterationTable {
            common,
            levels,
            degrees,
            ranks,
        } => {
            let first = (levels.first().copied().unwrap_or(1), degrees.first().copied().unwrap_or(2));
            for &l in &levels {
                for &p in &degrees {
                    common.config(l, p, ranks)?;
                }
            }
            let rows = run_iteration_table(&common.config(first.0, first.1, ranks)?, &levels, &degrees)?;
            write_csv(&rows, common.output()?)?;
        }
        Command::Scaling {
            common,
            levels,
            degree,
            ranks,
            mode,
        } => {
            let r0 = ranks.first().copied().unwrap_or(1);
            let mode = match mode {
                Mode::Strong => ScalingMode::Strong,
                Mode::Weak => ScalingMode::Weak,
            };
            let rows = run_scaling(&common.config(levels, degree, r0)?, &ranks, mode)?;
            write_csv(&rows, common.output()?)?;
        }
        Command::Check { seed } => {
            let outcomes = run_checks(seed);
            let mut all = true;
            for c in &outcomes {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                all &= c.passed;
            }
            return Ok(all);
        }
    }
    Ok(true)
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) | Error::Parse(_) => 2,
        Error::Divergence { .. } => 3,
        Error::Transport(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
