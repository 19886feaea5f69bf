use std::path::PathBuf;

use clap::{Parser, Subcommand};
use stabfield_cli::{run, Command, RunArgs};

#[derive(Parser)]
#[command(name = "stabfield", version, about = "Monte Carlo experiments for stabilizing functionals")]
struct Cli {
    #[command(subcommand)]
    action: Action,
}

#[derive(Subcommand)]
enum Action {
    /// Run one experiment and write report.json, <command>.csv and config.echo.
    Run {
        #[arg(value_enum)]
        command: Command,
        /// TOML configuration file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dotted override, e.g. `process.tau=2`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads (0 = all cores).
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Shorthand for `specinfo.cells`.
        #[arg(long)]
        cells: Option<usize>,
        /// Shorthand for `specinfo.max_occupancy`.
        #[arg(long)]
        max_occupancy: Option<usize>,
    },
}

fn main() {
    let Cli { action: Action::Run { command, config, overrides, out, workers, seed, cells, max_occupancy } } =
        Cli::parse();
    let args = RunArgs { command, config, overrides, out, workers, seed, cells, max_occupancy };
    std::process::exit(run(&args));
}
