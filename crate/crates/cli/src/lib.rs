//! Batch driver: reads a JSON run configuration, runs one verification
//! suite of `vh-core` and writes JSON and CSV reports.
//!
//! Exit codes: 0 pass, 1 verification failure, 2 configuration error,
//! 3 numerical-integrity error.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{RunConfig, Setup, SymbolSpec};
pub use error::{CliError, CliResult};
pub use output::CommandOutput;

#[derive(Debug, Parser)]
#[command(name = "vh", version, about = "Variable-exponent Hardy space verification suites")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommandKind {
    Norm,
    Decompose,
    Paraproduct,
    VerifyCzo,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Lebesgue and Hardy norms, their ratios and the Calderón reconstruction.
    Norm(RunArgs),
    /// Atomic decomposition of every corpus member, with atom validation.
    Decompose(RunArgs),
    /// Paraproduct identities, Carleson and kernel bounds, boundedness ratios.
    Paraproduct(RunArgs),
    /// Almost-orthogonality table, T1 hypotheses and the Hardy harness.
    VerifyCzo(RunArgs),
}

#[derive(Clone, Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; falls back to `output_dir` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `grid.level`.
    #[arg(long)]
    pub grid_level: Option<u32>,
    /// Overrides `corpus.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Command {
    pub fn split(&self) -> (CommandKind, &RunArgs) {
        match self {
            Self::Norm(a) => (CommandKind::Norm, a),
            Self::Decompose(a) => (CommandKind::Decompose, a),
            Self::Paraproduct(a) => (CommandKind::Paraproduct, a),
            Self::VerifyCzo(a) => (CommandKind::VerifyCzo, a),
        }
    }
}

/// Runs one command on an already resolved config, without writing anything.
pub fn execute(kind: CommandKind, config: RunConfig) -> CliResult<CommandOutput> {
    let setup = Setup::new(config)?;
    match kind {
        CommandKind::Norm => commands::norm::run(&setup),
        CommandKind::Decompose => commands::decompose::run(&setup),
        CommandKind::Paraproduct => commands::paraproduct::run(&setup),
        CommandKind::VerifyCzo => commands::czo::run(&setup),
    }
}

/// Loads, resolves, runs and writes; returns the output for inspection.
pub fn run(kind: CommandKind, args: &RunArgs) -> CliResult<CommandOutput> {
    let config = RunConfig::load(&args.config)?.resolve(args.grid_level, args.seed);
    let out = args
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| CliError::Invalid("no output directory: pass --out or set output_dir".into()))?;
    let result = execute(kind, config)?;
    result.write(&out)?;
    Ok(result)
}

/// Process exit code for a finished run.
pub fn exit_code(result: &CliResult<CommandOutput>) -> i32 {
    match result {
        Ok(o) if o.pass => 0,
        Ok(_) => 1,
        Err(e) => e.exit_code(),
    }
}
