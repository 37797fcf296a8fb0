//! `spinsync` command-line interface.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use commands::Run;
use config::{FieldError, Source};
use serde::Serialize;
use serde_json::{json, Value};
use spinsync::diagnostics::Engine;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

/// Version tag of the CSV layouts; bumped whenever a column changes.
const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "spinsync", version, about = "Driven-dissipative collective-spin simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single mean-field trajectory.
    Meanfield(Args),
    /// Single master-equation evolution.
    Quantum(Args),
    /// Liouvillian spectrum, gap, or gap over system sizes.
    Spectrum(Args),
    /// Phase map over drive strength and detuning.
    Sweep(Args),
    /// Finite-size-scaling data generation and collapse fit.
    Fss(Args),
    /// Phase label of a single point.
    Classify(Args),
}

#[derive(clap::Args)]
struct Args {
    /// TOML or JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads for sweeps.
    #[arg(long)]
    workers: Option<usize>,
    /// Engine override.
    #[arg(long)]
    engine: Option<Engine>,
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    status: &'static str,
    kind: &'a str,
    message: String,
    errors: Vec<FieldError>,
}

fn fail(kind: &str, message: String, errors: Vec<FieldError>) -> ExitCode {
    let rec = ErrorRecord {
        status: "error",
        kind,
        message,
        errors,
    };
    eprintln!("{}", serde_json::to_string(&rec).expect("error record"));
    ExitCode::from(if kind == "runtime" { 1 } else { 2 })
}

#[derive(Serialize)]
struct OutputEntry {
    file: &'static str,
    format: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    columns: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    schema_version: Option<u32>,
}

/// Written next to the outputs of every run.
#[derive(Serialize)]
struct Manifest<'a> {
    subcommand: &'a str,
    config_file: String,
    config_sha256: &'a str,
    versions: BTreeMap<&'static str, &'static str>,
    seeds: &'a BTreeMap<&'static str, u64>,
    /// Config after defaults and flag overrides.
    resolved_config: &'a Value,
    outputs: Vec<OutputEntry>,
    status: &'static str,
    wall_time_s: f64,
}

fn write_outputs(
    out: &Path,
    subcommand: &str,
    src: &Source,
    run: &Run,
    wall_time_s: f64,
) -> std::io::Result<()> {
    std::fs::create_dir_all(out)?;
    let mut outputs = Vec::new();
    for f in &run.files {
        std::fs::write(out.join(f.name), &f.body)?;
        let csv = f.name.ends_with(".csv");
        outputs.push(OutputEntry {
            file: f.name,
            format: if csv { "csv" } else { "json" },
            columns: csv.then(|| f.body.lines().next().unwrap_or("").split(',').map(String::from).collect()),
            schema_version: csv.then_some(CSV_SCHEMA_VERSION),
        });
    }
    let manifest = Manifest {
        subcommand,
        config_file: src.path.display().to_string(),
        config_sha256: &src.sha256,
        versions: BTreeMap::from([("spinsync", spinsync::VERSION), ("spinsync-cli", env!("CARGO_PKG_VERSION"))]),
        seeds: &run.seeds,
        resolved_config: &run.resolved,
        outputs,
        status: if run.failure.is_some() { "failed" } else { "ok" },
        wall_time_s,
    };
    let mut body = serde_json::to_string_pretty(&manifest).expect("manifest");
    body.push('\n');
    std::fs::write(out.join("manifest.json"), body)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.kind().to_string(), vec![]),
    };
    let (name, args) = match &cli.command {
        Command::Meanfield(a) => ("meanfield", a),
        Command::Quantum(a) => ("quantum", a),
        Command::Spectrum(a) => ("spectrum", a),
        Command::Sweep(a) => ("sweep", a),
        Command::Fss(a) => ("fss", a),
        Command::Classify(a) => ("classify", a),
    };
    let src = match config::load(&args.config) {
        Ok(s) => s,
        Err(errors) => return fail("config", "cannot read config".into(), errors),
    };
    if args.workers == Some(0) {
        return fail("config", "invalid flags".into(), vec![FieldError {
            field: "--workers".into(),
            reason: "must be at least 1".into(),
        }]);
    }
    let engine_fixed = matches!(cli.command, Command::Meanfield(_) | Command::Quantum(_) | Command::Spectrum(_));
    if engine_fixed && args.engine.is_some() {
        return fail("config", "invalid flags".into(), vec![FieldError {
            field: "--engine".into(),
            reason: format!("not accepted by `{name}`"),
        }]);
    }

    let start = Instant::now();
    let result = match &cli.command {
        Command::Meanfield(_) => config::MeanFieldConfig::read(&src).map(|c| commands::meanfield(&c)),
        Command::Quantum(_) => config::QuantumConfig::read(&src).map(|c| commands::quantum(&c)),
        Command::Spectrum(_) => config::SpectrumConfig::read(&src).map(|c| commands::spectrum(&c)),
        Command::Sweep(_) => config::SweepConfig::read(&src, args.engine, args.workers).map(|c| commands::sweep(&c)),
        Command::Fss(_) => config::FssConfig::read(&src, args.engine, args.workers).map(|c| commands::fss(&c)),
        Command::Classify(_) => config::ClassifyConfig::read(&src, args.engine).map(|c| commands::classify(&c)),
    };
    let run = match result {
        Err(errors) => return fail("config", format!("{} invalid field(s)", errors.len()), errors),
        Ok(Err(e)) => return fail("runtime", e.to_string(), vec![]),
        Ok(Ok(run)) => run,
    };
    let wall = start.elapsed().as_secs_f64();
    if let Err(e) = write_outputs(&args.out, name, &src, &run, wall) {
        return fail("runtime", format!("writing {}: {e}", args.out.display()), vec![]);
    }
    match &run.failure {
        Some(e) => fail("runtime", e.to_string(), vec![]),
        None => {
            println!("{}", json!({ "status": "ok", "out": args.out.display().to_string() }));
            ExitCode::SUCCESS
        }
    }
}
