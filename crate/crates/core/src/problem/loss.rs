use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ProblemSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    QuadraticAggregative,
    TargetSurrounding,
    SmoothedTargetSurrounding,
    Custom,
}

/// Where a declared constant came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantSource {
    Analytic,
    /// Sampled maximum scaled by a 1.2 safety factor.
    Estimated,
}

/// Regularity constants of a problem: gradient bound `G`, gradient Lipschitz
/// constant `L1`, Jacobian Lipschitz constant `L2` and decision bound `B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeclaredConstants {
    pub g: f64,
    pub l1: f64,
    pub l2: f64,
    pub b: f64,
    pub source: ConstantSource,
}

/// Exact supremum of `‖∇₂f_{i,t+1}(x, z) − ∇₂f_{i,t}(x, z)‖` over
/// `x ∈ Xᵢ, z ∈ ℝᵈ`, when a family can state it in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationSup {
    pub value: f64,
    /// The sup was taken over a declared compact `z`-box rather than all of ℝᵈ.
    pub restricted: bool,
}

/// A time-indexed family of local losses `f_{i,t}(xᵢ, ν)`.
///
/// Implementations are pure; the engine calls them from parallel workers.
/// Index ranges are checked by [`ProblemSpec`], so implementations may
/// assume `i < N` and correctly sized slices.
pub trait LossFamily: Send + Sync {
    fn kind(&self) -> LossKind;

    /// Short registry name.
    fn name(&self) -> &str;

    fn value(&self, i: usize, t: usize, x: &[f64], nu: &[f64]) -> f64;

    /// Partial gradient with respect to the agent's own decision.
    fn grad1(&self, i: usize, t: usize, x: &[f64], nu: &[f64]) -> Vec<f64>;

    /// Partial gradient with respect to the aggregate.
    fn grad2(&self, i: usize, t: usize, x: &[f64], nu: &[f64]) -> Vec<f64>;

    fn is_time_invariant(&self) -> bool {
        false
    }

    /// Whether the gradients are Lipschitz (finite-difference checks apply).
    fn is_smooth(&self) -> bool {
        true
    }

    /// Analytic constants when available; `None` asks the caller to estimate.
    fn declared_constants(&self, _spec: &ProblemSpec) -> Option<DeclaredConstants> {
        None
    }

    fn grad2_variation_sup(&self, _spec: &ProblemSpec, _i: usize, _t: usize) -> Option<VariationSup> {
        None
    }

    /// Closed-form minimizer of `f_t` over `X`, stacked, when one exists.
    fn exact_optimum(&self, _spec: &ProblemSpec, _t: usize) -> Option<Vec<f64>> {
        None
    }
}

impl fmt::Debug for dyn LossFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LossFamily({})", self.name())
    }
}

/// A time-indexed parameter path `t ↦ p(t)`.
#[derive(Clone)]
pub enum ParamPath {
    Constant(Vec<f64>),
    /// Precomputed values; times past the end hold the last entry.
    Table(Arc<Vec<Vec<f64>>>),
    Func {
        dim: usize,
        f: Arc<dyn Fn(usize) -> Vec<f64> + Send + Sync>,
    },
}

impl fmt::Debug for ParamPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamPath::Constant(v) => write!(f, "Constant({v:?})"),
            ParamPath::Table(t) => write!(f, "Table(len={})", t.len()),
            ParamPath::Func { dim, .. } => write!(f, "Func(dim={dim})"),
        }
    }
}

impl ParamPath {
    pub fn func(dim: usize, f: impl Fn(usize) -> Vec<f64> + Send + Sync + 'static) -> Self {
        ParamPath::Func { dim, f: Arc::new(f) }
    }

    pub fn at(&self, t: usize) -> Vec<f64> {
        match self {
            ParamPath::Constant(v) => v.clone(),
            ParamPath::Table(rows) => rows[t.min(rows.len() - 1)].clone(),
            ParamPath::Func { f, .. } => f(t),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ParamPath::Constant(v) => v.len(),
            ParamPath::Table(rows) => rows[0].len(),
            ParamPath::Func { dim, .. } => *dim,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, ParamPath::Constant(_))
    }

    /// `max_{t ≤ last} ‖p(t)‖`. Time is discrete, so enumeration is exact.
    pub fn sup_norm(&self, last: usize) -> f64 {
        match self {
            ParamPath::Constant(v) => crate::linalg::norm(v),
            _ => (0..=last)
                .map(|t| crate::linalg::norm(&self.at(t)))
                .fold(0.0, f64::max),
        }
    }
}
