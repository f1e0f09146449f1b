//! Run traces on disk.
//!
//! JSONL: the first line is `{"manifest": …}`, then one record per line.
//! CSV: `# manifest: …` comment line, a header row, one row per record. Full
//! records flatten to `x_i_k`, `nu_i_k`, `y_i_k` and `g2_i_k` columns.
//! Floats are written in shortest round-trip form, so both formats are
//! lossless.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, TraceFormat};
use crate::engine::{RecordLevel, RunTrace, StepsizeSchedule, TraceRecord};
use crate::error::{Error, Result};
use crate::network::{GraphSchedule, ScheduleAudit, ValidationReport};
use crate::problem::{DeclaredConstants, NoiseModel, ProblemSpec};

pub const LIBRARY: &str = "odgt";

/// Trace metadata without the records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub algorithm: String,
    pub agents: usize,
    pub horizon: usize,
    pub seed: u64,
    pub stepsize: StepsizeSchedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseModel>,
    pub record_level: RecordLevel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationReport>,
    #[serde(default)]
    pub warnings: Vec<String>,
    pub average_x: Vec<Vec<f64>>,
}

/// Everything needed to reproduce and interpret a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub library: String,
    pub version: String,
    /// Resolved config: overrides applied, tuned stepsizes filled in.
    pub config: ExperimentConfig,
    pub dims: Vec<usize>,
    pub agg_dim: usize,
    pub constants: DeclaredConstants,
    pub schedule: ScheduleAudit,
    pub run: RunMeta,
}

impl Manifest {
    pub fn new(config: &ExperimentConfig, spec: &ProblemSpec, schedule: &dyn GraphSchedule, trace: &RunTrace) -> Self {
        Self {
            library: LIBRARY.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: config.clone(),
            dims: spec.dims().to_vec(),
            agg_dim: spec.agg_dim(),
            constants: spec.constants(),
            schedule: schedule.audit(),
            run: RunMeta {
                algorithm: trace.algorithm.clone(),
                agents: trace.agents,
                horizon: trace.horizon,
                seed: trace.seed,
                stepsize: trace.stepsize,
                noise: trace.noise,
                record_level: trace.record_level,
                validation: trace.validation.clone(),
                warnings: trace.warnings.clone(),
                average_x: trace.average_x.clone(),
            },
        }
    }

    fn into_trace(self, records: Vec<TraceRecord>) -> Result<(Manifest, RunTrace)> {
        if records.len() != self.run.horizon + 1 {
            return Err(Error::Trace(format!(
                "manifest announces {} rounds but the file holds {} records",
                self.run.horizon + 1,
                records.len()
            )));
        }
        let m = &self.run;
        let trace = RunTrace {
            algorithm: m.algorithm.clone(),
            agents: m.agents,
            horizon: m.horizon,
            seed: m.seed,
            stepsize: m.stepsize,
            noise: m.noise,
            record_level: m.record_level,
            validation: m.validation.clone(),
            warnings: m.warnings.clone(),
            average_x: m.average_x.clone(),
            records,
        };
        Ok((self, trace))
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    manifest: Manifest,
}

pub fn format_of(path: &Path) -> Result<TraceFormat> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => Ok(TraceFormat::Csv),
        Some("jsonl") => Ok(TraceFormat::Jsonl),
        _ => Err(Error::Trace(format!(
            "{}: expected a .csv or .jsonl trace",
            path.display()
        ))),
    }
}

pub fn file_name(format: TraceFormat) -> &'static str {
    match format {
        TraceFormat::Csv => "trace.csv",
        TraceFormat::Jsonl => "trace.jsonl",
    }
}

pub fn write_trace(path: &Path, manifest: &Manifest, trace: &RunTrace) -> Result<()> {
    match format_of(path)? {
        TraceFormat::Jsonl => write_jsonl(path, manifest, trace),
        TraceFormat::Csv => write_csv(path, manifest, trace),
    }
}

/// Reads a trace, choosing the format from the extension.
pub fn read_trace(path: &Path) -> Result<(Manifest, RunTrace)> {
    match format_of(path)? {
        TraceFormat::Jsonl => read_jsonl(path),
        TraceFormat::Csv => read_csv(path),
    }
}

fn corrupt(path: &Path, line: usize, what: impl std::fmt::Display) -> Error {
    Error::Trace(format!("{}:{line}: {what}", path.display()))
}

fn write_jsonl(path: &Path, manifest: &Manifest, trace: &RunTrace) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = Header {
        manifest: manifest.clone(),
    };
    serde_json::to_writer(&mut w, &header).map_err(|e| Error::Trace(e.to_string()))?;
    writeln!(w)?;
    for r in &trace.records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::Trace(e.to_string()))?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn read_jsonl(path: &Path) -> Result<(Manifest, RunTrace)> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| corrupt(path, 1, "empty file"))?;
    let header: Header = serde_json::from_str(&first?).map_err(|e| corrupt(path, 1, e))?;
    let mut records = Vec::new();
    for (k, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| corrupt(path, k + 1, e))?);
    }
    header.manifest.into_trace(records)
}

const SUMMARY_COLUMNS: [&str; 8] = [
    "t",
    "alpha",
    "loss",
    "nu_residual",
    "y_residual",
    "nu_tracking",
    "y_tracking",
    "y_max_norm",
];

/// Column groups of a full record: name and per-agent block widths.
fn state_groups(manifest: &Manifest) -> [(&'static str, Vec<usize>); 4] {
    let agg = vec![manifest.agg_dim; manifest.dims.len()];
    [
        ("x", manifest.dims.clone()),
        ("nu", agg.clone()),
        ("y", agg.clone()),
        ("g2", agg),
    ]
}

fn csv_header(manifest: &Manifest) -> Vec<String> {
    let mut cols: Vec<String> = SUMMARY_COLUMNS.iter().map(|s| s.to_string()).collect();
    if manifest.run.record_level == RecordLevel::Full {
        for (name, widths) in state_groups(manifest) {
            for (i, &w) in widths.iter().enumerate() {
                cols.extend((0..w).map(|k| format!("{name}_{i}_{k}")));
            }
        }
    }
    cols
}

fn write_csv(path: &Path, manifest: &Manifest, trace: &RunTrace) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    let json = serde_json::to_string(manifest).map_err(|e| Error::Trace(e.to_string()))?;
    writeln!(file, "# manifest: {json}")?;
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| Error::Trace(e.to_string());
    w.write_record(csv_header(manifest)).map_err(csv_err)?;
    let full = manifest.run.record_level == RecordLevel::Full;
    for r in &trace.records {
        let mut row = vec![r.t.to_string()];
        row.extend(
            [r.alpha, r.loss, r.nu_residual, r.y_residual, r.nu_tracking, r.y_tracking, r.y_max_norm]
                .iter()
                .map(f64::to_string),
        );
        if full {
            for blocks in [&r.x, &r.nu, &r.y, &r.g2] {
                let blocks = blocks
                    .as_ref()
                    .ok_or_else(|| Error::Trace(format!("record {} has no states in a full trace", r.t)))?;
                row.extend(blocks.iter().flatten().map(f64::to_string));
            }
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn read_csv(path: &Path) -> Result<(Manifest, RunTrace)> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let json = first
        .trim_end()
        .strip_prefix("# manifest: ")
        .ok_or_else(|| corrupt(path, 1, "missing `# manifest:` line"))?;
    let manifest: Manifest = serde_json::from_str(json).map_err(|e| corrupt(path, 1, e))?;

    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r
        .headers()
        .map_err(|e| corrupt(path, 2, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != csv_header(&manifest) {
        return Err(corrupt(path, 2, "header does not match the manifest"));
    }
    let full = manifest.run.record_level == RecordLevel::Full;
    let groups = state_groups(&manifest);
    let mut records = Vec::new();
    for (k, row) in r.records().enumerate() {
        let line = k + 3;
        let row = row.map_err(|e| corrupt(path, line, e))?;
        if row.len() != header.len() {
            return Err(corrupt(path, line, "wrong number of fields"));
        }
        let t: usize = row[0].parse().map_err(|e| corrupt(path, line, e))?;
        let nums: Vec<f64> = row
            .iter()
            .skip(1)
            .map(|s| s.parse::<f64>().map_err(|e| corrupt(path, line, e)))
            .collect::<Result<_>>()?;
        let mut rest = &nums[7..];
        let mut take_blocks = |widths: &[usize]| {
            let mut out = Vec::with_capacity(widths.len());
            for &w in widths {
                let (head, tail) = rest.split_at(w);
                out.push(head.to_vec());
                rest = tail;
            }
            out
        };
        let mut states: [Option<Vec<Vec<f64>>>; 4] = Default::default();
        if full {
            for (slot, (_, widths)) in states.iter_mut().zip(&groups) {
                *slot = Some(take_blocks(widths));
            }
        }
        let [x, nu, y, g2] = states;
        records.push(TraceRecord {
            t,
            alpha: nums[0],
            loss: nums[1],
            nu_residual: nums[2],
            y_residual: nums[3],
            nu_tracking: nums[4],
            y_tracking: nums[5],
            y_max_norm: nums[6],
            x,
            nu,
            y,
            g2,
        });
    }
    manifest.into_trace(records)
}
