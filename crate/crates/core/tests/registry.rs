use std::sync::Arc;

use odgt::engine::{
    init_state, odgt_step, run, run_with, Algorithm, AlgorithmRegistry, InitialPoint, RunConfig, StepContext,
    StepMode, SwarmState,
};
use odgt::error::{Error, Result};
use odgt::network::{make_q_cyclic_schedule, WeightedDigraph};
use odgt::problem::{make_quadratic_synthetic, ProblemSpec};

/// O-DGT at half the scheduled stepsize.
struct HalfStep;

impl Algorithm for HalfStep {
    fn name(&self) -> &'static str {
        "half_step"
    }
    fn description(&self) -> &'static str {
        "gradient tracking at half the stepsize"
    }
    fn init(&self, spec: &ProblemSpec, initial: &InitialPoint, _ctx: &StepContext) -> Result<SwarmState> {
        init_state(spec, initial, &StepMode::Deterministic)
    }
    fn step(
        &self,
        spec: &ProblemSpec,
        graph: &WeightedDigraph,
        state: &SwarmState,
        alpha: f64,
        ctx: &StepContext,
    ) -> Result<SwarmState> {
        odgt_step(spec, graph, state, 0.5 * alpha, &StepMode::Deterministic, ctx.parallel)
    }
}

#[test]
fn custom_algorithms_are_selected_by_name() {
    let mut registry = AlgorithmRegistry::with_builtins();
    registry.register(Arc::new(HalfStep));
    registry.alias("half", "half_step");
    assert!(registry.names().any(|n| n == "half_step"));

    let spec = make_quadratic_synthetic(4, 2, 1.0, 50);
    let schedule = make_q_cyclic_schedule(4, 2, 2).unwrap();
    let config = RunConfig {
        algorithm: "HALF".into(),
        horizon: 50,
        ..RunConfig::default()
    };
    let custom = run_with(&registry, &spec, &schedule, &config).unwrap();
    assert_eq!(custom.algorithm, "half_step");
    assert_eq!(custom.records.len(), 51);
    let builtin = run(&spec, &schedule, &RunConfig { algorithm: "odgt".into(), ..config.clone() }).unwrap();
    assert_ne!(custom.final_record().loss, builtin.final_record().loss);
    // Conservation holds for any stepsize.
    assert!(custom.records.iter().all(|r| r.nu_tracking < 1e-10 && r.y_tracking < 1e-10));
}

#[test]
fn unknown_names_are_reported() {
    let spec = make_quadratic_synthetic(2, 0, 0.0, 5);
    let schedule = make_q_cyclic_schedule(2, 1, 0).unwrap();
    let config = RunConfig {
        algorithm: "newton".into(),
        horizon: 5,
        ..RunConfig::default()
    };
    match run(&spec, &schedule, &config) {
        Err(Error::UnknownName { kind, name }) => {
            assert_eq!(kind, "algorithm");
            assert_eq!(name, "newton");
        }
        other => panic!("expected an unknown-name error, got {other:?}"),
    }
}

#[test]
fn parallel_and_serial_runs_agree_exactly() {
    let spec = make_quadratic_synthetic(12, 9, 1.0, 200);
    let schedule = make_q_cyclic_schedule(12, 3, 9).unwrap();
    let serial = RunConfig {
        algorithm: "odgt_stochastic".into(),
        horizon: 200,
        seed: 4,
        noise: odgt::problem::NoiseModel::from_variances(0.1, 0.1),
        ..RunConfig::default()
    };
    let parallel = RunConfig {
        parallel: true,
        ..serial.clone()
    };
    assert_eq!(
        run(&spec, &schedule, &serial).unwrap().records,
        run(&spec, &schedule, &parallel).unwrap().records
    );
}
