use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{RecordLevel, RunConfig, StepsizeSchedule};
use crate::error::{Error, Result};
use crate::geometry::DEFAULT_CAP;
use crate::metrics::{GradVariationEstimator, Measures, SolverConfig};
use crate::network::{
    make_q_cyclic_schedule, CyclicSchedule, GeneratedSchedule, GraphSchedule, StaticSchedule,
    WeightedDigraph,
};
use crate::problem::{
    make_example1, make_quadratic_synthetic, make_target_surrounding, reference_intruder_path,
    reference_target_path, NoiseModel, ProblemSpec, Smoothing,
};

/// One experiment: problem, network, run parameters, metrics and output.
/// Every section and field has a default; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub schedule: ScheduleConfig,
    pub run: RunConfig,
    pub metrics: MetricsConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    Example1 {},
    QuadraticSynthetic {
        #[serde(default = "default_agents")]
        agents: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_drift")]
        drift_rate: f64,
    },
    TargetSurrounding {
        #[serde(default = "default_agents")]
        agents: usize,
        #[serde(default)]
        smoothing: Smoothing,
        #[serde(default = "default_cap")]
        cap: f64,
    },
}

fn default_agents() -> usize {
    10
}
fn default_drift() -> f64 {
    1.0
}
fn default_cap() -> f64 {
    DEFAULT_CAP
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig::Example1 {}
    }
}

impl ProblemConfig {
    pub fn agents(&self) -> usize {
        match self {
            ProblemConfig::Example1 {} => 2,
            ProblemConfig::QuadraticSynthetic { agents, .. } | ProblemConfig::TargetSurrounding { agents, .. } => {
                *agents
            }
        }
    }

    pub fn build(&self, horizon: usize) -> Result<ProblemSpec> {
        match *self {
            ProblemConfig::Example1 {} => Ok(make_example1(horizon)),
            ProblemConfig::QuadraticSynthetic {
                agents,
                seed,
                drift_rate,
            } => {
                if agents == 0 || !(drift_rate >= 0.0 && drift_rate.is_finite()) {
                    return Err(Error::Config(format!(
                        "quadratic_synthetic needs agents ≥ 1 and a finite drift_rate ≥ 0, got {agents} and {drift_rate}"
                    )));
                }
                Ok(make_quadratic_synthetic(agents, seed, drift_rate, horizon))
            }
            ProblemConfig::TargetSurrounding {
                agents,
                smoothing,
                cap,
            } => make_target_surrounding(
                agents,
                reference_target_path(),
                vec![reference_intruder_path(); agents],
                smoothing,
                cap,
                horizon,
            )
            .map_err(|e| Error::Config(e.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleConfig {
    /// Every entry `1/N`.
    Complete {},
    Static {
        matrix: Vec<Vec<f64>>,
        #[serde(default)]
        a: Option<f64>,
        #[serde(default)]
        q: Option<usize>,
    },
    Cyclic {
        matrices: Vec<Vec<Vec<f64>>>,
        #[serde(default)]
        a: Option<f64>,
        #[serde(default)]
        q: Option<usize>,
    },
    /// Ring plus chords split over `q` rounds, Metropolis weights.
    QCyclic {
        #[serde(default = "default_q")]
        q: usize,
        #[serde(default)]
        seed: u64,
    },
    /// Fresh random connected graph every round.
    Generated {
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_edge_prob")]
        edge_prob: f64,
    },
}

fn default_q() -> usize {
    1
}
fn default_edge_prob() -> f64 {
    0.1
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig::Complete {}
    }
}

impl ScheduleConfig {
    pub fn build(&self, agents: usize) -> Result<Box<dyn GraphSchedule>> {
        let sized = |g: &WeightedDigraph| {
            if g.agents() == agents {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "schedule matrix is {0}×{0} but the problem has {agents} agents",
                    g.agents()
                )))
            }
        };
        let schedule: Box<dyn GraphSchedule> = match self {
            ScheduleConfig::Complete {} => Box::new(StaticSchedule::new(
                WeightedDigraph::complete_uniform(agents),
                None,
                None,
            )?),
            ScheduleConfig::Static { matrix, a, q } => {
                let g = WeightedDigraph::from_rows(matrix)?;
                sized(&g)?;
                Box::new(StaticSchedule::new(g, *a, *q)?)
            }
            ScheduleConfig::Cyclic { matrices, a, q } => {
                let graphs = matrices
                    .iter()
                    .map(|m| WeightedDigraph::from_rows(m))
                    .collect::<Result<Vec<_>>>()?;
                for g in &graphs {
                    sized(g)?;
                }
                Box::new(CyclicSchedule::new(graphs, *a, *q)?)
            }
            ScheduleConfig::QCyclic { q, seed } => Box::new(make_q_cyclic_schedule(agents, *q, *seed)?),
            ScheduleConfig::Generated { seed, edge_prob } => {
                Box::new(GeneratedSchedule::new(agents, *seed, *edge_prob)?)
            }
        };
        Ok(schedule)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub measures: Measures,
    /// Seeds of the stochastic fan-out used for expectation estimates.
    pub seeds: Vec<u64>,
    pub solver: SolverConfig,
    pub grad_variation: GradVariationEstimator,
}


#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceFormat {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Falls back to `$ODGT_OUT_DIR`, then `odgt-out`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    pub formats: Vec<TraceFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            formats: vec![TraceFormat::Csv, TraceFormat::Jsonl],
        }
    }
}

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "ODGT_OUT_DIR";

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.check()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a TOML config, or the resolved config inside a run manifest
    /// (`.json`).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            let manifest: super::trace_io::Manifest =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            manifest.config.check()?;
            return Ok(manifest.config);
        }
        Self::from_toml_str(&text)
    }

    pub fn check(&self) -> Result<()> {
        self.run
            .stepsize
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.problem.agents() == 0 {
            return Err(Error::Config("problem needs at least one agent".into()));
        }
        if self.output.formats.is_empty() {
            return Err(Error::Config("output.formats is empty".into()));
        }
        Ok(())
    }

    pub fn build_problem(&self) -> Result<ProblemSpec> {
        self.problem.build(self.run.horizon)
    }

    pub fn build_schedule(&self) -> Result<Box<dyn GraphSchedule>> {
        self.schedule.build(self.problem.agents())
    }

    /// `output.dir`, else `$ODGT_OUT_DIR`, else `./odgt-out`.
    pub fn output_dir(&self) -> PathBuf {
        self.output
            .dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("odgt-out"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// `N = 50`, `Q = 4`.
    Paper,
    /// `N = 10`, `T = 3000`.
    Desk,
}

/// Target surrounding with Huber-smoothed losses and gradient noise
/// `σ₁² = σ₂² = 0.1` for the stochastic variant.
pub fn experiment_target_surrounding(scale: Scale) -> ExperimentConfig {
    let (agents, q) = match scale {
        Scale::Paper => (50, 4),
        Scale::Desk => (10, 4),
    };
    ExperimentConfig {
        problem: ProblemConfig::TargetSurrounding {
            agents,
            smoothing: Smoothing::default(),
            cap: DEFAULT_CAP,
        },
        schedule: ScheduleConfig::QCyclic { q, seed: 1 },
        run: RunConfig {
            horizon: 3000,
            noise: NoiseModel::from_variances(0.1, 0.1),
            ..RunConfig::default()
        },
        metrics: MetricsConfig {
            seeds: (1..=10).collect(),
            ..MetricsConfig::default()
        },
        output: OutputConfig::default(),
    }
}

pub fn experiment_example1() -> ExperimentConfig {
    ExperimentConfig {
        problem: ProblemConfig::Example1 {},
        schedule: ScheduleConfig::Complete {},
        run: RunConfig {
            horizon: 10_000,
            ..RunConfig::default()
        },
        ..ExperimentConfig::default()
    }
}

pub fn experiment_quadratic_synthetic(agents: usize, seed: u64, drift_rate: f64) -> ExperimentConfig {
    ExperimentConfig {
        problem: ProblemConfig::QuadraticSynthetic {
            agents,
            seed,
            drift_rate,
        },
        schedule: ScheduleConfig::QCyclic { q: 2, seed },
        run: RunConfig {
            horizon: 5000,
            record_level: RecordLevel::Summary,
            stepsize: StepsizeSchedule::Diminishing,
            ..RunConfig::default()
        },
        ..ExperimentConfig::default()
    }
}

/// Named presets for `odgt preset`.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    match name.trim().to_ascii_lowercase().replace('-', "_").as_str() {
        "example1" => Ok(experiment_example1()),
        "quadratic_synthetic" => Ok(experiment_quadratic_synthetic(10, 1, 1.0)),
        "target_surrounding" | "target_surrounding_desk" => Ok(experiment_target_surrounding(Scale::Desk)),
        "target_surrounding_paper" => Ok(experiment_target_surrounding(Scale::Paper)),
        _ => Err(Error::UnknownName {
            kind: "preset",
            name: name.to_string(),
        }),
    }
}

pub const PRESETS: [&str; 4] = [
    "example1",
    "quadratic_synthetic",
    "target_surrounding_desk",
    "target_surrounding_paper",
];
