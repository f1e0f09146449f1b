use serde::{Deserialize, Serialize};

use super::registry::{AlgorithmRegistry, StepContext};
use super::{max_abs_diff, InitialPoint, StepsizeSchedule, SwarmState};
use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::network::{validate_schedule, GraphSchedule, ValidationReport};
use crate::problem::{NoiseModel, ProblemSpec};

/// Windows probed before a run when the schedule has no period.
const DEFAULT_VALIDATION_WINDOW: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordLevel {
    /// Every agent's `x`, `ν`, `y` and `∇₂f` draw, every round.
    Full,
    /// Losses, stepsizes and residual norms only.
    #[default]
    Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub algorithm: String,
    pub stepsize: StepsizeSchedule,
    pub seed: u64,
    /// Number of rounds `T`.
    pub horizon: usize,
    /// Gradient noise; read by stochastic algorithms only.
    pub noise: NoiseModel,
    pub record_level: RecordLevel,
    /// Refuse to run on a schedule that fails validation.
    pub strict: bool,
    /// Update agents on the rayon pool. Results do not depend on it.
    pub parallel: bool,
    pub initial: InitialPoint,
    /// Window starts probed by the pre-run schedule check.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation_window: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithm: "odgt".into(),
            stepsize: StepsizeSchedule::Diminishing,
            seed: 0,
            horizon: 1000,
            noise: NoiseModel::default(),
            record_level: RecordLevel::Summary,
            strict: true,
            parallel: false,
            initial: InitialPoint::Zeros,
            validation_window: None,
        }
    }
}

/// One round of a run. Residuals:
/// `nu_residual = ‖ν − 1⊗ν̄‖`, `y_residual = ‖y − 1⊗ȳ‖`,
/// `nu_tracking = max|ν̄ − ν(x)|`, `y_tracking = max|ȳ − mean ∇₂f|`, where the
/// `∇₂f` values are the ones fed to the tracking update (noisy draws in
/// stochastic mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub alpha: f64,
    pub loss: f64,
    pub nu_residual: f64,
    pub y_residual: f64,
    pub nu_tracking: f64,
    pub y_tracking: f64,
    /// `maxᵢ ‖y_{i,t}‖`.
    pub y_max_norm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g2: Option<Vec<Vec<f64>>>,
}

impl TraceRecord {
    fn from_state(spec: &ProblemSpec, state: &SwarmState, alpha: f64, level: RecordLevel) -> Self {
        let exact_nu = spec.aggregate_blocks(&state.x);
        let full = level == RecordLevel::Full;
        Self {
            t: state.t,
            alpha,
            loss: spec.global_loss_blocks(state.t, &state.x),
            nu_residual: state.nu_residual(),
            y_residual: state.y_residual(),
            nu_tracking: max_abs_diff(&linalg::block_mean(&state.nu), &exact_nu),
            y_tracking: max_abs_diff(&linalg::block_mean(&state.y), &linalg::block_mean(&state.g2)),
            y_max_norm: state.y.iter().map(|v| linalg::norm(v)).fold(0.0, f64::max),
            x: full.then(|| state.x.clone()),
            nu: full.then(|| state.nu.clone()),
            y: full.then(|| state.y.clone()),
            g2: full.then(|| state.g2.clone()),
        }
    }

    pub fn has_states(&self) -> bool {
        self.x.is_some() && self.nu.is_some() && self.y.is_some()
    }
}

/// Output of [`run`]: one record per round `0..=T` plus run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub algorithm: String,
    pub agents: usize,
    pub horizon: usize,
    pub seed: u64,
    pub stepsize: StepsizeSchedule,
    /// Present for stochastic algorithms. Draw `(round, agent, slot)` is keyed
    /// by `(seed, round, agent, slot)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseModel>,
    pub record_level: RecordLevel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationReport>,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// `x̄_T = (1/T) Σ_{t=1..T} x_t`; the initial point when `T = 0`.
    pub average_x: Vec<Vec<f64>>,
    pub records: Vec<TraceRecord>,
}

impl RunTrace {
    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    pub fn final_record(&self) -> &TraceRecord {
        self.records.last().expect("a trace always holds the initial record")
    }
}

/// Runs `config.algorithm` from the built-in registry.
pub fn run(spec: &ProblemSpec, schedule: &dyn GraphSchedule, config: &RunConfig) -> Result<RunTrace> {
    run_with(&AlgorithmRegistry::with_builtins(), spec, schedule, config)
}

pub fn run_with(
    registry: &AlgorithmRegistry,
    spec: &ProblemSpec,
    schedule: &dyn GraphSchedule,
    config: &RunConfig,
) -> Result<RunTrace> {
    let algorithm = registry.get(&config.algorithm)?;
    config.stepsize.validate()?;
    check_dim(spec.agents(), schedule.agents(), "schedule agents")?;
    if config.horizon > spec.horizon() {
        return Err(Error::InvalidArgument(format!(
            "run horizon {} exceeds the problem horizon {}",
            config.horizon,
            spec.horizon()
        )));
    }

    let mut warnings = Vec::new();
    let validation = if algorithm.uses_network() {
        let window = config
            .validation_window
            .or(schedule.period())
            .unwrap_or(DEFAULT_VALIDATION_WINDOW);
        let report = validate_schedule(schedule, window);
        if !report.passed() {
            let first = report.first_violation().map(|v| v.detail.clone()).unwrap_or_default();
            if config.strict {
                return Err(Error::ScheduleInvalid(first));
            }
            log::warn!("running on an invalid schedule: {first}");
            warnings.push(format!("schedule validation failed: {first}"));
        }
        Some(report)
    } else {
        None
    };
    if !algorithm.is_stochastic() && !config.noise.is_zero() {
        warnings.push(format!("noise ignored by deterministic algorithm {}", algorithm.name()));
    }

    let ctx = StepContext {
        seed: config.seed,
        noise: config.noise,
        parallel: config.parallel,
    };
    let mut state = algorithm.init(spec, &config.initial, &ctx)?;
    check_finite(&state)?;
    let mut records = Vec::with_capacity(config.horizon + 1);
    records.push(TraceRecord::from_state(spec, &state, config.stepsize.at(0), config.record_level));
    check_loss(spec, &state, &records[0])?;
    let mut sum_x: Vec<Vec<f64>> = state.x.iter().map(|b| vec![0.0; b.len()]).collect();

    for t in 0..config.horizon {
        let graph = schedule.graph_at(t);
        state = algorithm.step(spec, &graph, &state, config.stepsize.at(t), &ctx)?;
        check_finite(&state)?;
        for (acc, x) in sum_x.iter_mut().zip(&state.x) {
            for (a, v) in acc.iter_mut().zip(x) {
                *a += v;
            }
        }
        let record = TraceRecord::from_state(spec, &state, config.stepsize.at(t + 1), config.record_level);
        check_loss(spec, &state, &record)?;
        records.push(record);
    }

    let average_x = if config.horizon == 0 {
        state.x.clone()
    } else {
        let inv = 1.0 / config.horizon as f64;
        sum_x.iter().map(|b| linalg::scale(b, inv)).collect()
    };
    Ok(RunTrace {
        algorithm: algorithm.name().to_string(),
        agents: spec.agents(),
        horizon: config.horizon,
        seed: config.seed,
        stepsize: config.stepsize,
        noise: algorithm.is_stochastic().then_some(config.noise),
        record_level: config.record_level,
        validation,
        warnings,
        average_x,
        records,
    })
}

fn check_finite(state: &SwarmState) -> Result<()> {
    match state.first_non_finite() {
        None => Ok(()),
        Some((agent, quantity)) => {
            log::error!("non-finite {quantity} at round {}, agent {agent}", state.t);
            Err(Error::NonFinite {
                round: state.t,
                agent,
                quantity,
            })
        }
    }
}

fn check_loss(spec: &ProblemSpec, state: &SwarmState, record: &TraceRecord) -> Result<()> {
    if record.loss.is_finite() {
        return Ok(());
    }
    let nu = spec.aggregate_blocks(&state.x);
    let agent = (0..spec.agents())
        .find(|&i| !spec.losses().value(i, state.t, &state.x[i], &nu).is_finite())
        .unwrap_or(0);
    log::error!("non-finite loss at round {}, agent {agent}", state.t);
    Err(Error::NonFinite {
        round: state.t,
        agent,
        quantity: "loss",
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{make_q_cyclic_schedule, StaticSchedule, WeightedDigraph};
    use crate::problem::{make_example1, make_quadratic_synthetic};

    fn example1_run(horizon: usize, algorithm: &str) -> RunTrace {
        let spec = make_example1(horizon);
        let sched = StaticSchedule::new(WeightedDigraph::complete_uniform(2), None, None).unwrap();
        let config = RunConfig {
            algorithm: algorithm.into(),
            horizon,
            record_level: RecordLevel::Full,
            ..RunConfig::default()
        };
        run(&spec, &sched, &config).unwrap()
    }

    #[test]
    fn zero_rounds_keep_only_the_initial_record() {
        let trace = example1_run(0, "odgt");
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.records[0].t, 0);
        assert_eq!(trace.average_x, vec![vec![0.0], vec![0.0]]);
    }

    #[test]
    fn records_cover_every_round() {
        let trace = example1_run(25, "odgt");
        assert_eq!(trace.records.len(), 26);
        assert!(trace.records.iter().enumerate().all(|(k, r)| r.t == k));
        assert_eq!(trace.records[1].x.as_ref().unwrap(), &vec![vec![0.0], vec![4.0]]);
        assert_eq!(trace.records[0].loss, 4.0);
    }

    #[test]
    fn centralized_run_skips_validation() {
        let trace = example1_run(10, "centralized");
        assert!(trace.validation.is_none());
        assert!(trace.records.iter().all(|r| r.nu_residual == 0.0 && r.y_residual == 0.0));
    }

    #[test]
    fn strict_mode_refuses_invalid_schedules() {
        let spec = make_example1(10);
        let sched = StaticSchedule::new(WeightedDigraph::identity(2), None, None).unwrap();
        let config = RunConfig {
            horizon: 10,
            ..RunConfig::default()
        };
        assert!(matches!(run(&spec, &sched, &config), Err(Error::ScheduleInvalid(_))));
        let lenient = RunConfig {
            strict: false,
            ..config
        };
        let trace = run(&spec, &sched, &lenient).unwrap();
        assert!(!trace.validation.unwrap().passed());
        assert_eq!(trace.warnings.len(), 1);
    }

    #[test]
    fn divergence_aborts_with_a_diagnostic() {
        // Unbounded sets and a huge constant step blow up quickly.
        let spec = make_quadratic_synthetic(3, 1, 0.0, 2000);
        let spec = crate::problem::ProblemSpec::new(
            vec![crate::geometry::ConvexSet::cap(1e300, 2).unwrap(); 3],
            spec.psi().to_vec(),
            spec.agg_dim(),
            spec.losses().clone(),
            2000,
        )
        .unwrap();
        let sched = make_q_cyclic_schedule(3, 1, 0).unwrap();
        let config = RunConfig {
            horizon: 2000,
            stepsize: StepsizeSchedule::constant(50.0).unwrap(),
            initial: InitialPoint::Given(vec![vec![1.0, 1.0]; 3]),
            ..RunConfig::default()
        };
        match run(&spec, &sched, &config) {
            Err(Error::NonFinite { round, quantity, .. }) => {
                assert!(round > 0);
                assert!(!quantity.is_empty());
            }
            other => panic!("expected a non-finite abort, got {other:?}"),
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let spec = make_quadratic_synthetic(5, 2, 1.0, 200);
        let sched = make_q_cyclic_schedule(5, 2, 3).unwrap();
        let config = RunConfig {
            algorithm: "odgt-stochastic".into(),
            horizon: 200,
            seed: 11,
            noise: NoiseModel::from_variances(0.1, 0.1),
            ..RunConfig::default()
        };
        let a = run(&spec, &sched, &config).unwrap();
        let b = run(&spec, &sched, &RunConfig { parallel: true, ..config.clone() }).unwrap();
        assert_eq!(a, b);
        let c = run(&spec, &sched, &RunConfig { seed: 12, ..config }).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(toml::from_str::<RunConfig>("horizon = 5\nhorizn = 6").is_err());
        let c: RunConfig = toml::from_str("horizon = 5\ninitial = { random = 3 }").unwrap();
        assert_eq!(c.initial, InitialPoint::Random(3));
        assert_eq!(c.algorithm, "odgt");
    }
}
