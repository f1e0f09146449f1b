//! Experiment plumbing: configs, presets, trace files and the command line.

pub mod cli;
pub mod config;
pub mod nash;
pub mod trace_io;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{run_with, AlgorithmRegistry, RunTrace, StepsizeArg, StepsizeSchedule};
use crate::error::{Error, Result};
use crate::metrics::{
    expected_regret, gradient_variation, path_variation, regret_report, solve_optima, trace_regret,
    ExpectedRegret, PathWeights, RegretReport, ReportOptions,
};
use crate::network::GraphSchedule;
use crate::problem::ProblemSpec;

pub use config::{ExperimentConfig, OutputConfig, ProblemConfig, Scale, ScheduleConfig, TraceFormat};
pub use nash::{best_response, best_response_iteration, BestResponseConfig, NashResult};
pub use trace_io::{read_trace, write_trace, Manifest};

/// The tuned constant stepsize `√((1 + V^p_{T,1}) / (T + V^g_{T,1}))` for a
/// problem, with optima from the config's solver.
pub fn tuned_stepsize(spec: &ProblemSpec, config: &ExperimentConfig) -> Result<StepsizeSchedule> {
    let horizon = config.run.horizon;
    let optima = solve_optima(spec, 1, horizon.max(1), &config.metrics.solver, config.run.parallel)?;
    let points: Vec<Vec<f64>> = optima.into_iter().map(|o| o.x).collect();
    let vp = path_variation(&points, PathWeights::Unit);
    let vg = gradient_variation(
        spec,
        horizon,
        &StepsizeSchedule::Diminishing,
        &config.metrics.grad_variation,
    )
    .unit_square;
    StepsizeSchedule::tuned_constant(vp, vg, horizon.max(1))
}

/// Applies a command-line stepsize to `config`, tuning it when asked.
pub fn resolve_stepsize(config: &mut ExperimentConfig, spec: &ProblemSpec, arg: StepsizeArg) -> Result<()> {
    config.run.stepsize = match arg {
        StepsizeArg::Schedule(s) => s,
        StepsizeArg::TunedConstant => tuned_stepsize(spec, config)?,
    };
    Ok(())
}

/// A finished run with everything needed to write or analyse it.
pub struct RunOutcome {
    pub spec: ProblemSpec,
    pub schedule: Box<dyn GraphSchedule>,
    pub trace: RunTrace,
    pub manifest: Manifest,
}

pub fn run_experiment(registry: &AlgorithmRegistry, config: &ExperimentConfig) -> Result<RunOutcome> {
    config.check()?;
    let spec = config.build_problem()?;
    let schedule = config.build_schedule()?;
    let trace = run_with(registry, &spec, schedule.as_ref(), &config.run)?;
    let manifest = Manifest::new(config, &spec, schedule.as_ref(), &trace);
    Ok(RunOutcome {
        spec,
        schedule,
        trace,
        manifest,
    })
}

/// Writes `manifest.json` and one trace file per configured format into `dir`.
pub fn write_outcome(dir: &Path, outcome: &RunOutcome) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let manifest = serde_json::to_string_pretty(&outcome.manifest).map_err(|e| Error::Trace(e.to_string()))?;
    std::fs::write(dir.join("manifest.json"), manifest)?;
    let mut written = Vec::new();
    for &format in &outcome.manifest.config.output.formats {
        let path = dir.join(trace_io::file_name(format));
        write_trace(&path, &outcome.manifest, &outcome.trace)?;
        written.push(path);
    }
    Ok(written)
}

/// Report options for a trace described by `manifest`.
pub fn report_options(manifest: &Manifest, measures: crate::metrics::Measures) -> ReportOptions {
    let m = &manifest.config.metrics;
    ReportOptions {
        measures,
        solver: m.solver,
        grad_estimator: m.grad_variation,
        network: manifest
            .run
            .validation
            .as_ref()
            .map(|_| (manifest.schedule.declared_a, manifest.schedule.declared_q)),
        parallel: manifest.config.run.parallel,
    }
}

/// Rebuilds the problem behind a trace and computes its report.
pub fn analyse_trace(manifest: &Manifest, trace: &RunTrace, options: &ReportOptions) -> Result<RegretReport> {
    let mut config = manifest.config.clone();
    config.run.horizon = trace.horizon;
    let spec = config.build_problem()?;
    regret_report(&spec, trace, options)
}

/// Mean and standard error of `R_t/t` over per-seed traces of one problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedAggregate {
    pub algorithm: String,
    pub horizon: usize,
    /// Per-seed `R_T/T`.
    pub final_average: Vec<f64>,
    pub expectation: ExpectedRegret,
}

pub fn aggregate_seeds(manifest: &Manifest, traces: &[RunTrace]) -> Result<SeedAggregate> {
    let first = traces
        .first()
        .ok_or_else(|| Error::InvalidArgument("no traces to aggregate".into()))?;
    if traces.iter().any(|t| t.horizon != first.horizon || t.algorithm != first.algorithm) {
        return Err(Error::Trace("seed traces differ in horizon or algorithm".into()));
    }
    let mut config = manifest.config.clone();
    config.run.horizon = first.horizon;
    let spec = config.build_problem()?;
    let optima = solve_optima(&spec, 1, first.horizon + 1, &config.metrics.solver, config.run.parallel)?;
    let series = traces
        .par_iter()
        .map(|t| trace_regret(t, &optima))
        .collect::<Result<Vec<_>>>()?;
    let seeds: Vec<u64> = traces.iter().map(|t| t.seed).collect();
    Ok(SeedAggregate {
        algorithm: first.algorithm.clone(),
        horizon: first.horizon,
        final_average: series
            .iter()
            .map(|s| s.average.last().copied().unwrap_or(0.0))
            .collect(),
        expectation: expected_regret(&seeds, &series)?,
    })
}

/// Reads every `seed-*/trace.*` under `dir`, in seed order.
pub fn read_seed_traces(dir: &Path) -> Result<(Manifest, Vec<RunTrace>)> {
    let mut entries: Vec<(u64, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(seed) = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("seed-"))
            .and_then(|s| s.parse().ok())
        else {
            continue;
        };
        let trace = [TraceFormat::Jsonl, TraceFormat::Csv]
            .into_iter()
            .map(|f| path.join(trace_io::file_name(f)))
            .find(|p| p.exists())
            .ok_or_else(|| Error::Trace(format!("{} holds no trace file", path.display())))?;
        entries.push((seed, trace));
    }
    if entries.is_empty() {
        return Err(Error::Trace(format!("{} has no seed-* directories", dir.display())));
    }
    entries.sort();
    let mut manifest = None;
    let mut traces = Vec::with_capacity(entries.len());
    for (_, path) in entries {
        let (m, t) = read_trace(&path)?;
        manifest.get_or_insert(m);
        traces.push(t);
    }
    Ok((manifest.expect("at least one trace"), traces))
}
