use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use relaxctl::commands::{cmd_continuity, cmd_invariant, cmd_quantize, cmd_topology};
use relaxctl::config::{Experiment, Overrides};
use relaxctl::error::{exit, CliError};
use relaxctl::report::RunReport;

/// Experiments on relaxed stationary policies for controlled Markov chains.
///
/// Exit codes: 0 all verdicts PASS, 1 some verdict FAIL, 2 configuration or
/// input file error, 3 solver error, 4 output write error.
#[derive(Debug, Parser)]
#[command(name = "relaxctl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV tables and report.txt.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the test-family truncation depth.
    #[arg(long)]
    depth: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Invariant and occupation measures of the configured policy.
    Invariant(Common),
    /// Young and Borkar verdict agreement on policy sequences.
    Topology(Common),
    /// Continuity of invariant measures along policy sequences.
    Continuity(Common),
    /// Quantization sweep and derandomization ladder.
    Quantize(Common),
}

fn run(cli: Cli) -> Result<RunReport, CliError> {
    let (common, command): (&Common, fn(&Experiment) -> Result<RunReport, CliError>) = match &cli.command {
        Command::Invariant(c) => (c, cmd_invariant),
        Command::Topology(c) => (c, cmd_topology),
        Command::Continuity(c) => (c, cmd_continuity),
        Command::Quantize(c) => (c, cmd_quantize),
    };
    let overrides = Overrides { seed: common.seed, depth: common.depth, output: common.out.clone() };
    let exp = Experiment::load(&common.config, &overrides)?;
    let report = command(&exp)?;
    let path = report.write(&exp.output)?;
    print!("{}", report.render(&exp.output));
    eprintln!("report written to {}", path.display());
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(report) if report.pass() => exit::PASS,
        Ok(_) => exit::FAIL,
        Err(e) => {
            eprintln!("relaxctl: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
