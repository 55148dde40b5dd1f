//! The `tg` command line: steady solves, time stepping, topology
//! optimization, assembly benchmarks and a verification suite, all driven by
//! one TOML config plus `section.key=value` overrides.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod setup;

use std::path::PathBuf;

use clap::{Parser, ValueEnum};

pub use config::RunConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Solve,
    Timestep,
    Topopt,
    Bench,
    Verify,
}

#[derive(Debug, Parser)]
#[command(name = "tg", version, about = "Map-Reduce Galerkin assembly and solvers")]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    /// TOML config file; every key has a default.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for random data, overriding the config `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Scale every stiffness matrix in `verify` by 1 + 1e-3 so the suite must fail.
    #[arg(long)]
    pub perturb: bool,
    /// `section.key=value` overrides applied after the config file.
    pub overrides: Vec<String>,
}

pub fn run(args: &Args) -> CliResult<()> {
    let cfg = config::load_config(args.config.as_deref(), &args.overrides)?;
    let out = args.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    output::ensure_dir(&out)?;
    match args.command {
        Command::Solve => commands::solve::cmd_solve(&cfg, &out).map(|_| ()),
        Command::Timestep => commands::timestep::cmd_timestep(&cfg, &out, seed).map(|_| ()),
        Command::Topopt => commands::topopt::cmd_topopt(&cfg, &out).map(|_| ()),
        Command::Bench => commands::bench::cmd_bench(&cfg.bench, &out, seed).map(|_| ()),
        Command::Verify => commands::verify::cmd_verify(&out, args.perturb).map(|_| ()),
    }
}
