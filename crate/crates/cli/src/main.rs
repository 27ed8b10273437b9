//! `pohozaev`: run one experiment from a TOML config and write a JSON report.
//!
//! Exit status is 0 when every check passes, 1 when a check fails or the
//! computation errors, and 2 for unreadable or invalid input.

mod config;
mod experiments;

use anyhow::Context;
use clap::Parser;
use config::RunConfig;
use experiments::{Check, ExperimentError};
use serde::Serialize;
use serde_json::Value;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Debug, Parser)]
#[command(
    name = "pohozaev",
    version,
    about = "Anisotropic Pohozaev identity experiments"
)]
struct Args {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Directory for the report and tables.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Finest resolution, replacing the config's list.
    #[arg(long)]
    resolution: Option<usize>,
    /// Seed for sampled checks, replacing the config's value.
    #[arg(long)]
    seed: Option<u64>,
    /// Sequential evaluation and no timing fields, for byte-identical reports.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Serialize)]
struct Report<'a> {
    version: u32,
    experiment: &'static str,
    seed: u64,
    deterministic: bool,
    resolutions: &'a [usize],
    passed: bool,
    checks: &'a [Check],
    result: &'a Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    elapsed_seconds: Option<String>,
}

enum Failure {
    Input(anyhow::Error),
    Run(anyhow::Error),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(args: &Args) -> Result<bool, Failure> {
    let mut cfg = RunConfig::from_path(&args.config).map_err(|e| Failure::Input(e.into()))?;
    if let Some(n) = args.resolution {
        cfg.override_resolution(n)
            .map_err(|e| Failure::Input(e.into()))?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.deterministic {
        finsler_pohozaev::parallel::set_enabled(false);
    }
    log::info!("running {} at {:?}", cfg.experiment.name(), cfg.resolutions);

    let start = Instant::now();
    let outcome = experiments::run(&cfg).map_err(|e| match e {
        ExperimentError::Config(c) => Failure::Input(c.into()),
        ExperimentError::Failed(m) => Failure::Run(anyhow::anyhow!(m)),
    })?;
    let elapsed = start.elapsed().as_secs_f64();

    let passed = outcome.checks.iter().all(|c| c.passed);
    let report = Report {
        version: config::CONFIG_VERSION,
        experiment: cfg.experiment.name(),
        seed: cfg.seed,
        deterministic: args.deterministic,
        resolutions: &cfg.resolutions,
        passed,
        checks: &outcome.checks,
        result: &outcome.result,
        elapsed_seconds: (!args.deterministic)
            .then(|| finsler_pohozaev::report::format_sig17(elapsed)),
    };
    write_outputs(args, &cfg, &outcome, &report).map_err(Failure::Input)?;

    for line in &outcome.stdout {
        println!("{line}");
    }
    for c in outcome.checks.iter().filter(|c| !c.passed) {
        eprintln!(
            "check failed: {} = {} (needs {} {})",
            c.name,
            c.value,
            c.comparison.symbol(),
            c.threshold
        );
    }
    Ok(passed)
}

fn write_outputs(
    args: &Args,
    cfg: &RunConfig,
    outcome: &experiments::Outcome,
    report: &Report,
) -> anyhow::Result<()> {
    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    let path = args.out.join(&cfg.output.report);
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;

    if let Some(table) = &outcome.convergence {
        let path = args.out.join(&cfg.output.convergence);
        table.write_csv(create(&path)?)?;
    }
    let field_name = match (&cfg.output.field, cfg.experiment) {
        (Some(name), _) => Some(name.as_str()),
        (None, config::Experiment::Solve) => Some("field.csv"),
        _ => None,
    };
    if let (Some(name), Some(field)) = (field_name, &outcome.field) {
        field.write_csv(create(&args.out.join(name))?)?;
    }
    Ok(())
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("cannot write {}", path.display()))
}
