//! Best-response dynamics for the aggregative game induced by a problem:
//! agent `i` minimizes its own `f_{i,t}(xᵢ, ν(x))` over `Xᵢ` with the other
//! decisions held fixed.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::linalg;
use crate::problem::ProblemSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestResponseConfig {
    /// Stop when a full sweep moves the profile less than this.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Inner projected-gradient iterations per best response.
    pub max_inner: usize,
}

impl Default for BestResponseConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_sweeps: 10_000,
            max_inner: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashResult {
    pub x: Vec<Vec<f64>>,
    pub sweeps: usize,
    pub last_move: f64,
    pub converged: bool,
}

fn own_objective(spec: &ProblemSpec, t: usize, i: usize, profile: &[Vec<f64>], xi: &[f64]) -> f64 {
    let mut p = profile.to_vec();
    p[i] = xi.to_vec();
    let nu = spec.aggregate_blocks(&p);
    spec.losses().value(i, t, xi, &nu)
}

/// `∇_{xᵢ} f_{i,t}(xᵢ, ν(x)) = ∇₁f + (1/N) ∇ψᵢᵀ ∇₂f`.
fn own_gradient(spec: &ProblemSpec, t: usize, i: usize, profile: &[Vec<f64>], xi: &[f64]) -> Vec<f64> {
    let mut p = profile.to_vec();
    p[i] = xi.to_vec();
    let nu = spec.aggregate_blocks(&p);
    let g1 = spec.losses().grad1(i, t, xi, &nu);
    let g2 = spec.losses().grad2(i, t, xi, &nu);
    let coupling = spec.psi()[i].apply_jacobian_transpose(xi, &g2);
    linalg::add(&g1, &linalg::scale(&coupling, 1.0 / spec.agents() as f64))
}

/// Projected gradient with Armijo backtracking on agent `i`'s own objective.
pub fn best_response(
    spec: &ProblemSpec,
    t: usize,
    i: usize,
    profile: &[Vec<f64>],
    config: &BestResponseConfig,
) -> Vec<f64> {
    let set = &spec.sets()[i];
    let mut x = set.project_unchecked(&profile[i]);
    let mut fx = own_objective(spec, t, i, profile, &x);
    let mut step = 1.0;
    for _ in 0..config.max_inner {
        let g = own_gradient(spec, t, i, profile, &x);
        let mut accepted = None;
        while step > 1e-16 {
            let cand = set.project_unchecked(&linalg::sub(&x, &linalg::scale(&g, step)));
            let d = linalg::sub(&cand, &x);
            let fc = own_objective(spec, t, i, profile, &cand);
            let decrease: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            if fc <= fx + 0.5 * decrease {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, fc)) = accepted else { break };
        let moved = linalg::dist(&cand, &x);
        x = cand;
        fx = fc;
        step = (step * 2.0).min(1e6);
        if moved <= config.tol * 1e-2 {
            break;
        }
    }
    x
}

/// Gauss–Seidel best-response sweeps from `start`.
pub fn best_response_iteration(
    spec: &ProblemSpec,
    t: usize,
    start: &[Vec<f64>],
    config: &BestResponseConfig,
) -> Result<NashResult> {
    spec.check_time(t)?;
    check_dim(spec.agents(), start.len(), "starting profile")?;
    for (b, &d) in start.iter().zip(spec.dims()) {
        check_dim(d, b.len(), "starting block")?;
    }
    let mut x = spec.project_blocks(start);
    let mut last_move = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < config.max_sweeps {
        sweeps += 1;
        let before = x.clone();
        for i in 0..spec.agents() {
            x[i] = best_response(spec, t, i, &x, config);
        }
        last_move = linalg::dist(&linalg::flatten(&x), &linalg::flatten(&before));
        if last_move <= config.tol {
            break;
        }
    }
    Ok(NashResult {
        x,
        sweeps,
        last_move,
        converged: last_move <= config.tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::make_example1;

    #[test]
    fn example1_best_responses() {
        let spec = make_example1(1);
        let cfg = BestResponseConfig::default();
        // x₁ = −x₂/2 and x₂ = (2 − x₁)/2.
        let br1 = best_response(&spec, 0, 0, &[vec![5.0], vec![3.0]], &cfg);
        assert!((br1[0] + 1.5).abs() < 1e-8);
        let br2 = best_response(&spec, 0, 1, &[vec![-4.0], vec![0.0]], &cfg);
        assert!((br2[0] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn example1_equilibrium() {
        let spec = make_example1(1);
        let r = best_response_iteration(&spec, 0, &[vec![7.0], vec![-9.0]], &Default::default()).unwrap();
        assert!(r.converged);
        assert!((r.x[0][0] + 2.0 / 3.0).abs() < 1e-8);
        assert!((r.x[1][0] - 4.0 / 3.0).abs() < 1e-8);
    }
}
