//! `ivsel` command-line tool: simulation studies, selection-adjusted fits and
//! Mendelian-randomization estimates from CSV data.

pub mod commands;
pub mod io;
pub mod manifest;
pub mod plot;
pub mod report;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CliError, FitArgs, GenerateArgs, MrArgs, SimulateArgs};

#[derive(Debug, Parser)]
#[command(name = "ivsel", version, about = "Selection-adjusted estimation for data missing not at random")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a Monte-Carlo study (or sweep) from a scenario config.
    Simulate(SimulateArgs),
    /// Fit a selection-adjusted regression to a CSV dataset.
    Fit(FitArgs),
    /// Mendelian-randomization estimate from individual data or summary statistics.
    Mr(MrArgs),
    /// Write one simulated dataset as CSV.
    Generate(GenerateArgs),
    /// List bundled scenarios, or print one.
    Scenarios {
        name: Option<String>,
    },
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(v).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn print_paths(paths: &[std::path::PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(a) => print_paths(&commands::simulate(a)?),
        Command::Fit(a) => {
            let (out, written) = commands::fit_with_manifest(a)?;
            if a.out.is_none() {
                print_json(&out)?;
            }
            print_paths(&written);
        }
        Command::Mr(a) => {
            let (out, written) = commands::mr(a)?;
            if a.out.is_none() {
                print_json(&out)?;
            }
            print_paths(&written);
        }
        Command::Generate(a) => print_paths(&commands::generate(a)?),
        Command::Scenarios { name: None } => {
            for n in ivsel_core::sim::bundled::names() {
                println!("{n}");
            }
        }
        Command::Scenarios { name: Some(n) } => match ivsel_core::sim::bundled::text(n) {
            Some(t) => print!("{t}"),
            None => return Err(CliError::Usage(format!("no bundled scenario `{n}`"))),
        },
    }
    Ok(())
}

/// Parses `args` and runs the command: exit 0 on success, 2 on usage or config errors,
/// 3 on runtime failures.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
