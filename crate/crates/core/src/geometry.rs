//! Closed convex sets with closed-form Euclidean projections.
//!
//! Every variant is nonempty, convex and bounded. An unconstrained agent is
//! modelled by [`ConvexSet::Cap`], a box `[-cap, cap]^dim`, so the compactness
//! the regret analysis needs holds formally while projections stay trivial.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;

/// Default half-width for agents whose feasible set is "all of ℝⁿ".
pub const DEFAULT_CAP: f64 = 50.0;

/// Membership tolerance used by feasibility assertions in the engine.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConvexSet {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Product { parts: Vec<ConvexSet> },
    Cap { cap: f64, dim: usize },
}

impl ConvexSet {
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let set = ConvexSet::Box { lower, upper };
        set.validate()?;
        Ok(set)
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(lo: f64, hi: f64, dim: usize) -> Result<Self> {
        Self::boxed(vec![lo; dim], vec![hi; dim])
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        let set = ConvexSet::Ball { center, radius };
        set.validate()?;
        Ok(set)
    }

    pub fn product(parts: Vec<ConvexSet>) -> Result<Self> {
        let set = ConvexSet::Product { parts };
        set.validate()?;
        Ok(set)
    }

    pub fn cap(cap: f64, dim: usize) -> Result<Self> {
        let set = ConvexSet::Cap { cap, dim };
        set.validate()?;
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::Box { lower, .. } => lower.len(),
            ConvexSet::Ball { center, .. } => center.len(),
            ConvexSet::Product { parts } => parts.iter().map(ConvexSet::dim).sum(),
            ConvexSet::Cap { dim, .. } => *dim,
        }
    }

    /// Checks the structural invariants of the set description.
    pub fn validate(&self) -> Result<()> {
        match self {
            ConvexSet::Box { lower, upper } => {
                check_dim(lower.len(), upper.len(), "box upper bound")?;
                if lower.is_empty() {
                    return Err(Error::InvalidArgument("box of dimension 0".into()));
                }
                for (k, (l, u)) in lower.iter().zip(upper).enumerate() {
                    if !(l.is_finite() && u.is_finite()) || l > u {
                        return Err(Error::InvalidArgument(format!(
                            "box coordinate {k}: lower {l} / upper {u} do not describe a bounded interval"
                        )));
                    }
                }
            }
            ConvexSet::Ball { center, radius } => {
                if center.is_empty() {
                    return Err(Error::InvalidArgument("ball of dimension 0".into()));
                }
                if !(radius.is_finite() && *radius >= 0.0) || !linalg::all_finite(center) {
                    return Err(Error::InvalidArgument(format!(
                        "ball radius must be finite and nonnegative, got {radius}"
                    )));
                }
            }
            ConvexSet::Product { parts } => {
                if parts.is_empty() {
                    return Err(Error::InvalidArgument("empty product set".into()));
                }
                for p in parts {
                    p.validate()?;
                }
            }
            ConvexSet::Cap { cap, dim } => {
                if !(cap.is_finite() && *cap > 0.0) || *dim == 0 {
                    return Err(Error::InvalidArgument(format!(
                        "cap set needs cap > 0 and dim > 0, got cap={cap}, dim={dim}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, point: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), point.len(), "projection point")?;
        Ok(self.project_unchecked(point))
    }

    pub(crate) fn project_unchecked(&self, point: &[f64]) -> Vec<f64> {
        match self {
            ConvexSet::Box { lower, upper } => point
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(p, (l, u))| p.clamp(*l, *u))
                .collect(),
            ConvexSet::Ball { center, radius } => {
                let offset = linalg::sub(point, center);
                let r = linalg::norm(&offset);
                if r <= *radius {
                    point.to_vec()
                } else {
                    let s = radius / r;
                    center.iter().zip(&offset).map(|(c, o)| c + s * o).collect()
                }
            }
            ConvexSet::Product { parts } => {
                let mut out = Vec::with_capacity(point.len());
                let mut offset = 0;
                for p in parts {
                    let d = p.dim();
                    out.extend(p.project_unchecked(&point[offset..offset + d]));
                    offset += d;
                }
                out
            }
            ConvexSet::Cap { cap, .. } => point.iter().map(|p| p.clamp(-cap, *cap)).collect(),
        }
    }

    /// True iff `point` satisfies every constraint of the set up to `tol`.
    pub fn contains(&self, point: &[f64], tol: f64) -> Result<bool> {
        check_dim(self.dim(), point.len(), "membership point")?;
        if tol < 0.0 {
            return Err(Error::InvalidArgument(format!("negative tolerance {tol}")));
        }
        Ok(self.contains_unchecked(point, tol))
    }

    fn contains_unchecked(&self, point: &[f64], tol: f64) -> bool {
        match self {
            ConvexSet::Box { lower, upper } => point
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(p, (l, u))| *p >= l - tol && *p <= u + tol),
            ConvexSet::Ball { center, radius } => linalg::dist(point, center) <= radius + tol,
            ConvexSet::Product { parts } => {
                let mut offset = 0;
                parts.iter().all(|p| {
                    let d = p.dim();
                    let ok = p.contains_unchecked(&point[offset..offset + d], tol);
                    offset += d;
                    ok
                })
            }
            ConvexSet::Cap { cap, .. } => point.iter().all(|p| p.abs() <= cap + tol),
        }
    }

    /// A bound `B` with `‖x‖ ≤ B` for every point of the set.
    pub fn diameter_bound(&self) -> f64 {
        self.norm_bound_sq().sqrt()
    }

    fn norm_bound_sq(&self) -> f64 {
        match self {
            ConvexSet::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| {
                    let m = l.abs().max(u.abs());
                    m * m
                })
                .sum(),
            ConvexSet::Ball { center, radius } => {
                let b = linalg::norm(center) + radius;
                b * b
            }
            ConvexSet::Product { parts } => parts.iter().map(ConvexSet::norm_bound_sq).sum(),
            ConvexSet::Cap { cap, dim } => cap * cap * (*dim as f64),
        }
    }
}
