//! `snowcount` command-line front end.
//!
//! Exit codes: 0 on success, 1 on a runtime error, 2 on an invalid
//! configuration, 3 when a command ran but one of its checks failed.
//! Errors are written to standard error as a JSON document.

mod commands;
mod config;
mod report;

use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;

use commands::{Body, Outcome};
use config::{ConfigFile, Overrides, RunConfig};

/// Explicit Weyl-remainder bounds for Neumann eigenvalue counting on snowflake domains.
#[derive(Parser)]
#[command(name = "snowcount", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Polygonal approximation of K(p) or R(p).
    Snowflake,
    /// Whitney cube cover and slice report.
    Whitney,
    /// Well-covered certificate of the inner tube at one scale.
    Cover,
    /// Constants ledger.
    Constants,
    /// Two-sided bounds on the counting function over a t sweep.
    Bounds,
    /// Eigensolver validation and element eigenvalue checks.
    Verify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Snowflake => "snowflake",
            Command::Whitney => "whitney",
            Command::Cover => "cover",
            Command::Constants => "constants",
            Command::Bounds => "bounds",
            Command::Verify => "verify",
        }
    }
}

fn fail(kind: &str, message: &str, violations: &[String], code: u8) -> ExitCode {
    let doc = report::error_json(kind, message, violations);
    eprintln!("{}", serde_json::to_string_pretty(&doc).expect("error document serialises"));
    ExitCode::from(code)
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("SNOWCOUNT_THREADS") else { return Ok(()) };
    let n: usize = raw.trim().parse().map_err(|_| format!("SNOWCOUNT_THREADS: expected a positive integer, got `{raw}`"))?;
    if n == 0 {
        return Err("SNOWCOUNT_THREADS: expected a positive integer, got 0".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| format!("SNOWCOUNT_THREADS: {e}"))
}

fn write_output(cfg: &RunConfig, bytes: &[u8]) -> std::io::Result<()> {
    match &cfg.out {
        Some(path) => std::fs::write(path, bytes),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", &e.kind().to_string(), &[e.to_string().trim().to_string()], 2),
    };
    let mut violations = Vec::new();
    if let Err(v) = configure_threads() {
        violations.push(v);
    }
    let file = match &cli.overrides.config {
        Some(path) => ConfigFile::load(path).unwrap_or_else(|v| {
            violations.extend(v);
            ConfigFile::default()
        }),
        None => ConfigFile::default(),
    };
    let (cfg, bad) = RunConfig::resolve(file, &cli.overrides);
    violations.extend(bad);
    violations.extend(cfg.check_for(cli.command.name()));
    if !violations.is_empty() {
        return fail("config", "invalid configuration", &violations, 2);
    }
    let run = match cli.command {
        Command::Snowflake => commands::snowflake(&cfg),
        Command::Whitney => commands::whitney(&cfg),
        Command::Cover => commands::cover(&cfg),
        Command::Constants => commands::constants(&cfg),
        Command::Bounds => commands::bounds(&cfg),
        Command::Verify => commands::verify(&cfg),
    };
    let Outcome { body, passed } = match run {
        Ok(o) => o,
        Err(e) => return fail(e.kind(), &e.to_string(), &[], 1),
    };
    let bytes = match body {
        Body::Csv(b) => b,
        Body::Json(result) => {
            let config: Value = serde_json::to_value(&cfg).expect("config serialises");
            let doc = report::envelope(cli.command.name(), config, result);
            let mut s = serde_json::to_string_pretty(&doc).expect("report serialises");
            s.push('\n');
            s.into_bytes()
        }
    };
    if let Err(e) = write_output(&cfg, &bytes) {
        return fail("io", &e.to_string(), &[], 1);
    }
    if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    }
}
