//! Time-varying communication graphs.
//!
//! A [`WeightedDigraph`] stores `A_t` with `a_ij > 0` iff agent `j` sends to
//! agent `i` (self-loops on the diagonal). Schedules produce `A_t` for every
//! round; [`validate_schedule`] checks double stochasticity, the minimum
//! weight `a` and joint strong connectivity over windows of `Q` rounds.

mod schedule;
mod validate;

use serde::{Deserialize, Serialize};

pub use schedule::{
    make_q_cyclic_schedule, CyclicSchedule, GeneratedSchedule, GraphSchedule, ScheduleAudit,
    StaticSchedule,
};
pub use validate::{validate_schedule, ValidationReport, Violation, ViolationKind};

use crate::error::{check_dim, Error, Result};

/// Row/column sum tolerance for double stochasticity.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedDigraph {
    n: usize,
    /// Row-major `n × n`.
    weights: Vec<f64>,
}

impl WeightedDigraph {
    pub fn from_row_major(n: usize, weights: Vec<f64>) -> Result<Self> {
        check_dim(n * n, weights.len(), "weight matrix entries")?;
        if n == 0 {
            return Err(Error::InvalidArgument("graph with no nodes".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "weights must be finite and nonnegative, found {w}"
            )));
        }
        Ok(Self { n, weights })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            check_dim(n, r.len(), "weight matrix row")?;
        }
        Self::from_row_major(n, rows.iter().flatten().copied().collect())
    }

    pub fn identity(n: usize) -> Self {
        let mut weights = vec![0.0; n * n];
        for i in 0..n {
            weights[i * n + i] = 1.0;
        }
        Self { n, weights }
    }

    /// Every entry `1/n`.
    pub fn complete_uniform(n: usize) -> Self {
        Self {
            n,
            weights: vec![1.0 / n as f64; n * n],
        }
    }

    pub fn agents(&self) -> usize {
        self.n
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn row_major(&self) -> &[f64] {
        &self.weights
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.n..(i + 1) * self.n]
    }

    /// Off-diagonal edges `(j, i)` with `a_ij > 0`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| {
            (0..self.n)
                .filter(move |&j| j != i && self.weight(i, j) > 0.0)
                .map(move |j| (j, i))
        })
    }

    pub fn min_positive_entry(&self) -> f64 {
        self.weights
            .iter()
            .copied()
            .filter(|w| *w > 0.0)
            .fold(f64::INFINITY, f64::min)
    }

    /// The action of `A ⊗ I_d`: block `i` of the output is `Σⱼ a_ij vⱼ`.
    pub fn mix(&self, values: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        check_dim(self.n, values.len(), "blocks to mix")?;
        let dim = values[0].len();
        for v in values {
            check_dim(dim, v.len(), "block dimension")?;
        }
        Ok(self.mix_unchecked(values))
    }

    pub(crate) fn mix_unchecked(&self, values: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let dim = values.first().map_or(0, Vec::len);
        (0..self.n)
            .map(|i| {
                let mut acc = vec![0.0; dim];
                for (j, v) in values.iter().enumerate() {
                    let a = self.weight(i, j);
                    if a != 0.0 {
                        for (s, x) in acc.iter_mut().zip(v) {
                            *s += a * x;
                        }
                    }
                }
                acc
            })
            .collect()
    }
}

/// Metropolis–Hastings weights on an undirected edge list:
/// `a_ij = 1/(1 + max(deg_i, deg_j))` on edges, `a_ii = 1 − Σ_{j≠i} a_ij`.
/// Symmetric and doubly stochastic by construction.
pub fn metropolis_weights(
    edges: &[(usize, usize)],
    n: usize,
    min_self_weight: f64,
) -> Result<WeightedDigraph> {
    if n == 0 {
        return Err(Error::InvalidArgument("graph with no nodes".into()));
    }
    let mut adjacency = vec![false; n * n];
    for &(i, j) in edges {
        if i >= n || j >= n {
            return Err(Error::InvalidArgument(format!(
                "edge ({i}, {j}) out of range for {n} nodes"
            )));
        }
        if i == j {
            return Err(Error::InvalidArgument(format!(
                "self-loop ({i}, {i}) listed; self weights are implicit"
            )));
        }
        adjacency[i * n + j] = true;
        adjacency[j * n + i] = true;
    }
    let degree: Vec<usize> = (0..n)
        .map(|i| adjacency[i * n..(i + 1) * n].iter().filter(|&&e| e).count())
        .collect();
    let mut weights = vec![0.0; n * n];
    for i in 0..n {
        let mut off = 0.0;
        for j in 0..n {
            if adjacency[i * n + j] {
                let w = 1.0 / (1.0 + degree[i].max(degree[j]) as f64);
                weights[i * n + j] = w;
                off += w;
            }
        }
        let own = 1.0 - off;
        if own < min_self_weight {
            return Err(Error::Construction(format!(
                "self weight {own} of node {i} is below the required {min_self_weight}"
            )));
        }
        weights[i * n + i] = own;
    }
    WeightedDigraph::from_row_major(n, weights)
}
