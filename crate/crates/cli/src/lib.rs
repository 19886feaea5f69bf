//! Batch experiment runner for the `stabfield` library.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::path::{Path, PathBuf};

use serde_json::json;

pub use commands::Command;
pub use config::ExperimentConfig;
pub use error::CliError;

/// Arguments of one `run` invocation.
#[derive(Debug, Clone)]
pub struct RunArgs {
    pub command: Command,
    pub config: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub out: PathBuf,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub cells: Option<usize>,
    pub max_occupancy: Option<usize>,
}

impl RunArgs {
    pub fn new(command: Command, out: impl Into<PathBuf>) -> Self {
        Self {
            command,
            config: None,
            overrides: Vec::new(),
            out: out.into(),
            workers: None,
            seed: None,
            cells: None,
            max_occupancy: None,
        }
    }

    /// Config-file overrides followed by the shorthand flags.
    fn all_overrides(&self) -> Vec<String> {
        let mut o = self.overrides.clone();
        if let Some(w) = self.workers {
            o.push(format!("estimation.workers={w}"));
        }
        if let Some(s) = self.seed {
            o.push(format!("estimation.seed={s}"));
        }
        if let Some(c) = self.cells {
            o.push(format!("specinfo.cells={c}"));
        }
        if let Some(k) = self.max_occupancy {
            o.push(format!("specinfo.max_occupancy={k}"));
        }
        o
    }
}

/// Runs the command and writes its artifacts; returns the process exit code.
pub fn run(args: &RunArgs) -> i32 {
    match run_inner(args) {
        Ok(()) => 0,
        Err(e) => {
            let code = e.exit_code();
            let report = json!({
                "command": args.command.name(),
                "status": "error",
                "error": {"code": e.code(), "exit_code": code, "message": e.to_string()},
            });
            let written = std::fs::create_dir_all(&args.out)
                .map_err(|io| CliError::io(&args.out, io))
                .and_then(|_| report::to_json(&report))
                .and_then(|bytes| report::write_file(&args.out, "report.json", &bytes));
            if let Err(w) = written {
                eprintln!("error: {w}");
            }
            eprintln!("error [{}]: {e}", e.code());
            code
        }
    }
}

fn load_config(args: &RunArgs) -> Result<(ExperimentConfig, Vec<u8>), CliError> {
    let text = match &args.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?,
        None => String::new(),
    };
    let cfg = ExperimentConfig::from_toml_with_overrides(&text, &args.all_overrides())?;
    cfg.validate()?;
    let echo = cfg.echo()?.into_bytes();
    Ok((cfg, echo))
}

fn run_inner(args: &RunArgs) -> Result<(), CliError> {
    let (cfg, echo) = load_config(args)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.estimation.workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    let output = pool.install(|| commands::execute(args.command, &cfg))?;
    let echo_text = String::from_utf8(echo.clone()).expect("toml is utf-8");
    let report = json!({
        "command": args.command.name(),
        "status": "ok",
        "config": serde_json::to_value(&cfg).expect("config serializes"),
        "config_echo": echo_text,
        "input_hash": report::content_hash(&echo),
        "results": output.results,
    });
    emit(&args.out, args.command.name(), &report, &output.table, &echo, &output.files)
}

/// Writes `report.json`, `<command>.csv`, `config.echo` and any extra files.
pub fn emit(
    out: &Path,
    command: &str,
    report: &serde_json::Value,
    table: &report::Table,
    echo: &[u8],
    extra: &[(String, Vec<u8>)],
) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    report::write_file(out, "report.json", &report::to_json(report)?)?;
    report::write_file(out, &format!("{command}.csv"), &table.to_bytes()?)?;
    report::write_file(out, "config.echo", echo)?;
    for (name, bytes) in extra {
        report::write_file(out, name, bytes)?;
    }
    Ok(())
}
