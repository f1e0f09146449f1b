use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use super::config::{preset, ExperimentConfig, PRESETS};
use super::{
    aggregate_seeds, analyse_trace, read_seed_traces, read_trace, report_options, resolve_stepsize,
    run_experiment, write_outcome, SeedAggregate,
};
use crate::engine::{AlgorithmRegistry, RecordLevel, StepsizeArg};
use crate::error::{Error, Result};
use crate::metrics::Measures;
use crate::network::validate_schedule;

#[derive(Debug, Parser)]
#[command(name = "odgt", version, about = "Online distributed gradient tracking with an aggregative variable")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an algorithm and write its trace.
    Run(RunArgs),
    /// Check a config's communication schedule.
    Validate(ValidateArgs),
    /// Compute regret and variation measures from a trace.
    Metrics(MetricsArgs),
    /// Print a preset config as TOML.
    Preset { name: String },
    /// List algorithms and presets.
    List,
}

#[derive(Debug, Args)]
pub struct Source {
    /// TOML config, or a run's manifest.json.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
}

impl Source {
    fn load(&self) -> Result<ExperimentConfig> {
        match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path),
            (None, Some(name)) => preset(name).map_err(|e| Error::Config(e.to_string())),
            (None, None) => Err(Error::Config("give --config or --preset".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RecordArg {
    Full,
    Summary,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub source: Source,
    /// Overrides `run.seed` and disables the seed fan-out.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated seeds to fan a stochastic run out over.
    #[arg(long, value_delimiter = ',', conflicts_with = "seed")]
    pub seeds: Option<Vec<u64>>,
    /// Number of rounds `T`.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub algorithm: Option<String>,
    /// `diminishing`, `constant` (tuned) or `constant:ALPHA`.
    #[arg(long)]
    pub stepsize: Option<StepsizeArg>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub record: Option<RecordArg>,
    /// Run on a schedule that fails validation, with a warning.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub source: Source,
    /// Window start times to probe.
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// A trace file, or with `--expect-over-seeds` a directory of `seed-*` runs.
    #[arg(long)]
    pub trace: PathBuf,
    /// Comma-separated subset of `regret,pathvar,gradvar,residuals`.
    #[arg(long, default_value = "regret,pathvar,gradvar,residuals")]
    pub measures: Measures,
    #[arg(long)]
    pub expect_over_seeds: bool,
    /// Defaults to the trace's directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Exit status for an error: 2 config or trace, 3 invalid schedule,
/// 4 non-finite iterate, 1 anything else.
pub fn exit_code(error: &Error) -> u8 {
    match error {
        Error::ScheduleInvalid(_) => 3,
        Error::NonFinite { .. } => 4,
        Error::Io(_) => 1,
        _ => 2,
    }
}

pub fn main_with_args(args: impl IntoIterator<Item = std::ffi::OsString>) -> ExitCode {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn execute(command: Command) -> Result<u8> {
    match command {
        Command::Run(args) => cmd_run(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Metrics(args) => cmd_metrics(args),
        Command::Preset { name } => {
            print!("{}", preset(&name)?.to_toml_string()?);
            Ok(0)
        }
        Command::List => {
            let registry = AlgorithmRegistry::with_builtins();
            println!("algorithms:");
            for name in registry.names() {
                println!("  {name:<18} {}", registry.get(name)?.description());
            }
            println!("presets:");
            for name in PRESETS {
                println!("  {name}");
            }
            Ok(0)
        }
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Trace(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

fn write_aggregate(dir: &Path, aggregate: &SeedAggregate) -> Result<()> {
    write_json(&dir.join("aggregate.json"), aggregate)?;
    let mut w = csv::Writer::from_path(dir.join("aggregate.csv")).map_err(|e| Error::Trace(e.to_string()))?;
    let e = &aggregate.expectation;
    let csv_err = |e: csv::Error| Error::Trace(e.to_string());
    w.write_record(["t", "mean", "stderr"]).map_err(csv_err)?;
    for (k, (m, s)) in e.mean_over_t.iter().zip(&e.stderr_over_t).enumerate() {
        w.write_record([(k + 1).to_string(), m.to_string(), s.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<u8> {
    let registry = AlgorithmRegistry::with_builtins();
    let mut config = args.source.load()?;
    if let Some(seed) = args.seed {
        config.run.seed = seed;
    }
    if let Some(steps) = args.steps {
        config.run.horizon = steps;
    }
    if let Some(name) = &args.algorithm {
        config.run.algorithm = registry.get(name)?.name().to_string();
    }
    if let Some(record) = args.record {
        config.run.record_level = match record {
            RecordArg::Full => RecordLevel::Full,
            RecordArg::Summary => RecordLevel::Summary,
        };
    }
    if args.lenient {
        config.run.strict = false;
    }
    if let Some(out) = &args.out {
        config.output.dir = Some(out.clone());
    }
    config.check()?;
    if let Some(arg) = args.stepsize {
        let spec = config.build_problem()?;
        resolve_stepsize(&mut config, &spec, arg)?;
    }
    let dir = config.output_dir();
    let algorithm = registry.get(&config.run.algorithm)?;

    let seeds = args.seeds.clone().unwrap_or_else(|| config.metrics.seeds.clone());
    let fan_out = args.seed.is_none() && algorithm.is_stochastic() && !seeds.is_empty();
    if !fan_out {
        let outcome = run_experiment(&registry, &config)?;
        let written = write_outcome(&dir, &outcome)?;
        report_run(&outcome.trace, &written);
        return Ok(0);
    }

    let outcomes = seeds
        .par_iter()
        .map(|&seed| {
            let mut c = config.clone();
            c.run.seed = seed;
            c.output.dir = Some(dir.join(format!("seed-{seed}")));
            let outcome = run_experiment(&registry, &c)?;
            let written = write_outcome(&c.output_dir(), &outcome)?;
            Ok((outcome, written))
        })
        .collect::<Result<Vec<_>>>()?;
    for (outcome, written) in &outcomes {
        report_run(&outcome.trace, written);
    }
    let traces: Vec<_> = outcomes.iter().map(|(o, _)| o.trace.clone()).collect();
    let aggregate = aggregate_seeds(&outcomes[0].0.manifest, &traces)?;
    write_aggregate(&dir, &aggregate)?;
    println!(
        "E[R_T/T] ≈ {:.6e} ± {:.2e} over {} seeds",
        aggregate.expectation.mean_over_t.last().copied().unwrap_or(0.0),
        aggregate.expectation.stderr_over_t.last().copied().unwrap_or(0.0),
        seeds.len()
    );
    Ok(0)
}

fn report_run(trace: &crate::engine::RunTrace, written: &[PathBuf]) {
    let last = trace.final_record();
    println!(
        "{} seed={} T={} alpha_T={:.4e} f_T={:.6e} y_residual={:.3e}",
        trace.algorithm, trace.seed, trace.horizon, last.alpha, last.loss, last.y_residual
    );
    for w in &trace.warnings {
        eprintln!("warning: {w}");
    }
    for p in written {
        println!("  wrote {}", p.display());
    }
}

fn cmd_validate(args: ValidateArgs) -> Result<u8> {
    let config = args.source.load()?;
    let schedule = config.build_schedule()?;
    let window = args
        .window
        .or(config.run.validation_window)
        .or(schedule.period())
        .unwrap_or(100);
    let report = validate_schedule(schedule.as_ref(), window);
    print!("{report}");
    std::io::stdout().flush()?;
    Ok(if report.passed() { 0 } else { 3 })
}

fn cmd_metrics(args: MetricsArgs) -> Result<u8> {
    if args.expect_over_seeds {
        let (manifest, traces) = read_seed_traces(&args.trace)?;
        let out = args.out.unwrap_or_else(|| args.trace.clone());
        std::fs::create_dir_all(&out)?;
        let aggregate = aggregate_seeds(&manifest, &traces)?;
        write_aggregate(&out, &aggregate)?;
        println!("wrote {}", out.join("aggregate.json").display());
        return Ok(0);
    }
    let (manifest, trace) = read_trace(&args.trace)?;
    let report = analyse_trace(&manifest, &trace, &report_options(&manifest, args.measures))?;
    let out = args.out.unwrap_or_else(|| {
        args.trace
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."))
    });
    std::fs::create_dir_all(&out)?;
    write_json(&out.join("report.json"), &report)?;
    if let Some(avg) = &report.regret_over_t {
        let mut w = csv::Writer::from_path(out.join("regret.csv")).map_err(|e| Error::Trace(e.to_string()))?;
        let csv_err = |e: csv::Error| Error::Trace(e.to_string());
        w.write_record(["t", "value"]).map_err(csv_err)?;
        for (k, v) in avg.iter().enumerate() {
            w.write_record([(k + 1).to_string(), v.to_string()]).map_err(csv_err)?;
        }
        w.flush()?;
    }
    if let Some(total) = report.regret_total {
        println!("R_T = {total:.6e}");
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!("wrote {}", out.join("report.json").display());
    Ok(0)
}
