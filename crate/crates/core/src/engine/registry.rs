use std::collections::BTreeMap;
use std::sync::Arc;

use super::step::{centralized_pgd_step, centralized_state, init_state, odgt_step, StepMode};
use super::{InitialPoint, SwarmState};
use crate::error::{Error, Result};
use crate::network::WeightedDigraph;
use crate::problem::{NoiseModel, ProblemSpec};

/// Run-wide inputs an algorithm may consult.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepContext {
    pub seed: u64,
    pub noise: NoiseModel,
    pub parallel: bool,
}

/// An iterative method that advances a [`SwarmState`] one synchronous round.
pub trait Algorithm: Send + Sync {
    fn name(&self) -> &'static str;

    fn description(&self) -> &'static str;

    fn is_stochastic(&self) -> bool {
        false
    }

    /// Whether rounds read the communication graph.
    fn uses_network(&self) -> bool {
        true
    }

    fn init(&self, spec: &ProblemSpec, initial: &InitialPoint, ctx: &StepContext) -> Result<SwarmState>;

    fn step(
        &self,
        spec: &ProblemSpec,
        graph: &WeightedDigraph,
        state: &SwarmState,
        alpha: f64,
        ctx: &StepContext,
    ) -> Result<SwarmState>;
}

/// Online distributed gradient tracking with exact gradients.
#[derive(Debug, Default, Clone, Copy)]
pub struct Odgt;

impl Algorithm for Odgt {
    fn name(&self) -> &'static str {
        "odgt"
    }
    fn description(&self) -> &'static str {
        "distributed gradient tracking, exact gradients"
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
        odgt_step(spec, graph, state, alpha, &StepMode::Deterministic, ctx.parallel)
    }
}

/// Gradient tracking with keyed Gaussian gradient noise.
#[derive(Debug, Default, Clone, Copy)]
pub struct OdgtStochastic;

impl OdgtStochastic {
    fn mode(ctx: &StepContext) -> StepMode {
        StepMode::Stochastic {
            seed: ctx.seed,
            noise: ctx.noise,
        }
    }
}

impl Algorithm for OdgtStochastic {
    fn name(&self) -> &'static str {
        "odgt_stochastic"
    }
    fn description(&self) -> &'static str {
        "distributed gradient tracking, noisy gradient oracles"
    }
    fn is_stochastic(&self) -> bool {
        true
    }
    fn init(&self, spec: &ProblemSpec, initial: &InitialPoint, ctx: &StepContext) -> Result<SwarmState> {
        init_state(spec, initial, &Self::mode(ctx))
    }
    fn step(
        &self,
        spec: &ProblemSpec,
        graph: &WeightedDigraph,
        state: &SwarmState,
        alpha: f64,
        ctx: &StepContext,
    ) -> Result<SwarmState> {
        odgt_step(spec, graph, state, alpha, &Self::mode(ctx), ctx.parallel)
    }
}

/// Projected gradient descent on the full objective, as a baseline.
#[derive(Debug, Default, Clone, Copy)]
pub struct CentralizedPgd;

impl Algorithm for CentralizedPgd {
    fn name(&self) -> &'static str {
        "centralized_pgd"
    }
    fn description(&self) -> &'static str {
        "centralized projected gradient descent"
    }
    fn uses_network(&self) -> bool {
        false
    }
    fn init(&self, spec: &ProblemSpec, initial: &InitialPoint, _ctx: &StepContext) -> Result<SwarmState> {
        let s = init_state(spec, initial, &StepMode::Deterministic)?;
        Ok(centralized_state(spec, 0, s.x))
    }
    fn step(
        &self,
        spec: &ProblemSpec,
        _graph: &WeightedDigraph,
        state: &SwarmState,
        alpha: f64,
        _ctx: &StepContext,
    ) -> Result<SwarmState> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "stepsize must be finite and nonnegative, got {alpha}"
            )));
        }
        let x = centralized_pgd_step(spec, state.t, &state.x, alpha);
        Ok(centralized_state(spec, state.t + 1, x))
    }
}

/// Algorithms by name. Lookups ignore case and treat `-` as `_`.
#[derive(Clone, Default)]
pub struct AlgorithmRegistry {
    entries: BTreeMap<String, Arc<dyn Algorithm>>,
    aliases: BTreeMap<String, String>,
}

fn normalize(name: &str) -> String {
    name.trim().to_ascii_lowercase().replace('-', "_")
}

impl AlgorithmRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(Odgt));
        r.register(Arc::new(OdgtStochastic));
        r.register(Arc::new(CentralizedPgd));
        r.alias("centralized", "centralized_pgd");
        r
    }

    /// Adds or replaces an algorithm under its own name.
    pub fn register(&mut self, algorithm: Arc<dyn Algorithm>) {
        self.entries.insert(normalize(algorithm.name()), algorithm);
    }

    pub fn alias(&mut self, alias: &str, target: &str) {
        self.aliases.insert(normalize(alias), normalize(target));
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Algorithm>> {
        let key = normalize(name);
        let key = self.aliases.get(&key).unwrap_or(&key);
        self.entries.get(key).cloned().ok_or_else(|| Error::UnknownName {
            kind: "algorithm",
            name: name.to_string(),
        })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

impl std::fmt::Debug for AlgorithmRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AlgorithmRegistry")
            .field("entries", &self.entries.keys().collect::<Vec<_>>())
            .field("aliases", &self.aliases)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_normalizes_names() {
        let r = AlgorithmRegistry::with_builtins();
        assert_eq!(r.get("odgt-stochastic").unwrap().name(), "odgt_stochastic");
        assert_eq!(r.get("Centralized").unwrap().name(), "centralized_pgd");
        assert_eq!(r.get("centralized_pgd").unwrap().name(), "centralized_pgd");
        assert!(matches!(r.get("admm"), Err(Error::UnknownName { .. })));
        assert_eq!(r.names().collect::<Vec<_>>(), ["centralized_pgd", "odgt", "odgt_stochastic"]);
    }

    #[test]
    fn custom_algorithms_can_be_registered() {
        struct Frozen;
        impl Algorithm for Frozen {
            fn name(&self) -> &'static str {
                "frozen"
            }
            fn description(&self) -> &'static str {
                "never moves"
            }
            fn init(&self, spec: &ProblemSpec, initial: &InitialPoint, ctx: &StepContext) -> Result<SwarmState> {
                Odgt.init(spec, initial, ctx)
            }
            fn step(
                &self,
                _spec: &ProblemSpec,
                _graph: &WeightedDigraph,
                state: &SwarmState,
                _alpha: f64,
                _ctx: &StepContext,
            ) -> Result<SwarmState> {
                Ok(SwarmState {
                    t: state.t + 1,
                    ..state.clone()
                })
            }
        }
        let mut r = AlgorithmRegistry::with_builtins();
        r.register(Arc::new(Frozen));
        assert_eq!(r.get("FROZEN").unwrap().description(), "never moves");
    }
}
