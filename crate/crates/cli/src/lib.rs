//! Command-line front end for the `sgl-core` clustering library.
//!
//! Every command writes line-delimited JSON records to standard output and a
//! short human-readable summary to standard error.

pub mod archive;
pub mod commands;
pub mod ingest;

use std::io::Write;

use anyhow::Result;
use clap::{Parser, Subcommand};

pub use commands::{BenchArgs, BenchRow, EvalArgs, FitArgs, GenerateArgs, PredictArgs, Record, SweepArgs};
pub use ingest::{Format, Input};

#[derive(Debug, Parser)]
#[command(name = "sgl", version, about = "Anchor-graph clustering with a structured bipartite graph")]
pub struct Cli {
    /// Worker threads for the solver (results do not depend on this).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and save it to a directory.
    Fit(FitArgs),
    /// Label new points from a saved model's anchors.
    Predict(PredictArgs),
    /// Score predicted labels against true labels.
    Eval(EvalArgs),
    /// Grid over alpha, beta and the anchor count.
    Sweep(SweepArgs),
    /// Time fits on synthetic data of growing size.
    Bench(BenchArgs),
    /// Write a synthetic labeled dataset.
    Generate(GenerateArgs),
}

/// Runs a parsed command, writing records to `out`.
pub fn run(cli: Cli, out: &mut (dyn Write + Send)) -> Result<()> {
    match cli.threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(t).build()?;
            pool.install(|| dispatch(cli.command, out))
        }
        None => dispatch(cli.command, out),
    }
}

fn dispatch(command: Command, out: &mut (dyn Write + Send)) -> Result<()> {
    match command {
        Command::Fit(a) => commands::fit(&a, out),
        Command::Predict(a) => commands::predict(&a, out),
        Command::Eval(a) => commands::eval(&a, out),
        Command::Sweep(a) => commands::sweep(&a, out),
        Command::Bench(a) => commands::bench(&a, out),
        Command::Generate(a) => commands::generate(&a, out),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_args<I, T>(args: I, out: &mut (dyn Write + Send)) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run(Cli::try_parse_from(args)?, out)
}
