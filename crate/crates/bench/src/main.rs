//! `bench`: runs planning benchmarks over a scenario's query cycle, exports
//! plot-ready artifacts for single results, and compares gradient modes of the
//! path post-processor.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dualarm_core::par::Exec;
use dualarm_core::pipeline::Mode;
use dualarm_core::report::{self, ResultFile, RunOptions};
use dualarm_core::scenario::Scenario;

#[derive(Parser)]
#[command(name = "bench", version, about = "Dual-arm motion planning benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliMode {
    Centralized,
    Decoupled,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario's query cycle and write per-query and aggregate tables.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum)]
        mode: CliMode,
        #[arg(long, default_value_t = 1)]
        cycles: usize,
        #[arg(long, value_enum, default_value = "on")]
        plpp: Switch,
        #[arg(long, default_value_t = 1)]
        retries: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Run retry instances and per-arm planners one after another.
        #[arg(long)]
        sequential: bool,
    },
    /// Write diagrams, profiles and traces for one result file.
    Export {
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time the post-processor with analytic and forward-difference gradients.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scenario to draw problems from; the bundled desk by default.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> dualarm_core::Result<()> {
    match command {
        Command::Run { scenario, mode, cycles, plpp, retries, seed, out, sequential } => {
            let scenario = Scenario::load(&scenario)?;
            let options = RunOptions {
                mode: match mode {
                    CliMode::Centralized => Mode::Centralized,
                    CliMode::Decoupled => Mode::Decoupled,
                },
                cycles,
                use_plpp: matches!(plpp, Switch::On),
                retries,
                seed,
            };
            let exec = if sequential { Exec::Sequential } else { Exec::Parallel };
            let output = report::run(&scenario, &options, exec)?;
            report::write_run(&out, &scenario, &output)?;
            print!("{}", output.report.table_text());
            println!("results written to {}", out.display());
        }
        Command::Export { result, out } => {
            let file = ResultFile::load(&result)?;
            for path in report::export_artifacts(&file, &out)? {
                println!("{}", path.display());
            }
        }
        Command::Gradcheck { trials, seed, scenario } => {
            let scenario = match scenario {
                Some(path) => Scenario::load(path)?,
                None => Scenario::desk(),
            };
            let bench = report::gradient_bench(&scenario, seed, trials)?;
            print!("{}", bench.summary());
        }
    }
    Ok(())
}
