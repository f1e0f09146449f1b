//! The iterative algorithms and the run driver.
//!
//! Every algorithm advances a [`SwarmState`] synchronously: all agents read
//! the round-`t` state and write a fresh round-`t+1` state. Algorithms are
//! trait objects held in an [`AlgorithmRegistry`] and selected by name.

mod registry;
mod run;
mod step;
mod stepsize;

use serde::{Deserialize, Serialize};

pub use registry::{Algorithm, AlgorithmRegistry, CentralizedPgd, Odgt, OdgtStochastic, StepContext};
pub use run::{run, run_with, RecordLevel, RunConfig, RunTrace, TraceRecord};
pub use step::{centralized_pgd_step, init_state, odgt_step, StepMode};
pub use stepsize::{DerivedFrom, StepsizeArg, StepsizeSchedule};

use crate::linalg;

/// Per-agent state at round `t`. `g2` holds the `∇₂f_{i,t}(x_{i,t}, ν_{i,t})`
/// values used by the tracking update (the noisy draws in stochastic mode),
/// so the next round can subtract exactly what was added.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmState {
    pub t: usize,
    pub x: Vec<Vec<f64>>,
    pub nu: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub g2: Vec<Vec<f64>>,
}

impl SwarmState {
    pub fn agents(&self) -> usize {
        self.x.len()
    }

    pub fn stacked_x(&self) -> Vec<f64> {
        linalg::flatten(&self.x)
    }

    /// `‖ν_t − 1 ⊗ ν̄_t‖`.
    pub fn nu_residual(&self) -> f64 {
        linalg::consensus_deviation(&self.nu)
    }

    /// `‖y_t − 1 ⊗ ȳ_t‖`.
    pub fn y_residual(&self) -> f64 {
        linalg::consensus_deviation(&self.y)
    }

    /// First non-finite entry as `(agent, quantity)`.
    pub fn first_non_finite(&self) -> Option<(usize, &'static str)> {
        let fields: [(&'static str, &Vec<Vec<f64>>); 4] =
            [("x", &self.x), ("nu", &self.nu), ("y", &self.y), ("grad2", &self.g2)];
        for i in 0..self.agents() {
            for (name, blocks) in fields {
                if !linalg::all_finite(&blocks[i]) {
                    return Some((i, name));
                }
            }
        }
        None
    }
}

/// Starting decisions for a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialPoint {
    #[default]
    Zeros,
    /// Uniform in each agent's set, seeded.
    Random(u64),
    /// Explicit per-agent blocks; projected if infeasible.
    Given(Vec<Vec<f64>>),
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
