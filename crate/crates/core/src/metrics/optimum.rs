use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg;
use crate::problem::ProblemSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Stop when successive iterates move less than this.
    pub step_tol: f64,
    pub max_iterations: usize,
    /// Required projected-gradient residual `‖x − P_X(x − ∇f(x))‖`.
    pub residual_tol: f64,
    /// Use a family's closed-form optimum when it has one.
    pub closed_form: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            step_tol: 1e-8,
            max_iterations: 100_000,
            residual_tol: 1e-6,
            closed_form: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    ClosedForm,
    AcceleratedGradient,
    Cached,
}

/// `x_t* = argmin_X f_t` and `f_t(x_t*)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimumSolution {
    pub t: usize,
    /// Stacked decision vector.
    pub x: Vec<f64>,
    pub value: f64,
    pub method: SolveMethod,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

fn objective(spec: &ProblemSpec, t: usize, x: &[f64]) -> f64 {
    spec.global_loss_blocks(t, &linalg::split(x, spec.dims()))
}

fn gradient(spec: &ProblemSpec, t: usize, x: &[f64]) -> Vec<f64> {
    linalg::flatten(&spec.centralized_gradient(t, &linalg::split(x, spec.dims())))
}

fn project(spec: &ProblemSpec, x: &[f64]) -> Vec<f64> {
    linalg::flatten(&spec.project_blocks(&linalg::split(x, spec.dims())))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `‖x − P_X(x − ∇f_t(x))‖`, zero exactly at constrained minimizers.
pub fn projected_residual(spec: &ProblemSpec, t: usize, x: &[f64]) -> f64 {
    let g = gradient(spec, t, x);
    linalg::dist(x, &project(spec, &linalg::sub(x, &g)))
}

/// Minimizes `f_t` over `X`. Families with a closed form are answered
/// directly; otherwise accelerated projected gradient with backtracking and
/// adaptive restart, started from `warm` (or the projection of the origin).
pub fn solve_instantaneous_optimum(
    spec: &ProblemSpec,
    t: usize,
    config: &SolverConfig,
    warm: Option<&[f64]>,
) -> Result<OptimumSolution> {
    spec.check_time(t)?;
    if config.closed_form {
        if let Some(x) = spec.losses().exact_optimum(spec, t) {
            let residual = projected_residual(spec, t, &x);
            return Ok(OptimumSolution {
                t,
                value: objective(spec, t, &x),
                x,
                method: SolveMethod::ClosedForm,
                iterations: 0,
                residual,
                converged: true,
            });
        }
    }

    let start = match warm {
        Some(w) => {
            crate::error::check_dim(spec.total_dim(), w.len(), "warm start")?;
            project(spec, w)
        }
        None => project(spec, &vec![0.0; spec.total_dim()]),
    };
    let mut x = start.clone();
    let mut fx = objective(spec, t, &x);
    let mut y = start;
    let mut momentum = 1.0f64;
    let mut lipschitz = 1.0f64;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        let fy = objective(spec, t, &y);
        let gy = gradient(spec, t, &y);
        let (p, fp) = loop {
            let p = project(spec, &linalg::sub(&y, &linalg::scale(&gy, 1.0 / lipschitz)));
            let d = linalg::sub(&p, &y);
            let fp = objective(spec, t, &p);
            let model = fy + dot(&gy, &d) + 0.5 * lipschitz * dot(&d, &d);
            if fp <= model + 1e-12 * fy.abs().max(1.0) || lipschitz > 1e14 {
                break (p, fp);
            }
            lipschitz *= 2.0;
        };
        let moved = linalg::dist(&p, &x);
        if fp > fx && momentum > 1.0 {
            // Adaptive restart: drop momentum and retry from the last iterate.
            y = x.clone();
            momentum = 1.0;
            continue;
        }
        let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = (momentum - 1.0) / next_momentum;
        y = p
            .iter()
            .zip(&x)
            .map(|(a, b)| a + beta * (a - b))
            .collect();
        x = p;
        fx = fp;
        momentum = next_momentum;
        lipschitz = (lipschitz * 0.9).max(1e-12);
        if moved <= config.step_tol && projected_residual(spec, t, &x) <= config.residual_tol {
            break;
        }
    }
    let residual = projected_residual(spec, t, &x);
    let converged = residual <= config.residual_tol;
    if !converged {
        log::warn!("optimum solve at t={t} stopped after {iterations} iterations, residual {residual:.3e}");
    }
    Ok(OptimumSolution {
        t,
        value: fx,
        x,
        method: SolveMethod::AcceleratedGradient,
        iterations,
        residual,
        converged,
    })
}

/// Optima for `t = first..=last`. Time-invariant families are solved once;
/// otherwise rounds are solved independently (in parallel when asked).
pub fn solve_optima(
    spec: &ProblemSpec,
    first: usize,
    last: usize,
    config: &SolverConfig,
    parallel: bool,
) -> Result<Vec<OptimumSolution>> {
    if last < first {
        return Ok(Vec::new());
    }
    if spec.losses().is_time_invariant() {
        let base = solve_instantaneous_optimum(spec, first, config, None)?;
        return Ok((first..=last)
            .map(|t| OptimumSolution {
                t,
                method: if t == first { base.method } else { SolveMethod::Cached },
                ..base.clone()
            })
            .collect());
    }
    let solve = |t| solve_instantaneous_optimum(spec, t, config, None);
    if parallel {
        (first..=last).into_par_iter().map(solve).collect()
    } else {
        (first..=last).map(solve).collect()
    }
}

/// Aggregate solver statistics for a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub solves: usize,
    pub closed_form: usize,
    pub iterative: usize,
    pub cached: usize,
    pub max_iterations: usize,
    pub max_residual: f64,
    pub all_converged: bool,
    pub config: SolverConfig,
}

impl SolverStats {
    pub fn from_solutions(solutions: &[OptimumSolution], config: SolverConfig) -> Self {
        let count = |m| solutions.iter().filter(|s| s.method == m).count();
        Self {
            solves: solutions.len(),
            closed_form: count(SolveMethod::ClosedForm),
            iterative: count(SolveMethod::AcceleratedGradient),
            cached: count(SolveMethod::Cached),
            max_iterations: solutions.iter().map(|s| s.iterations).max().unwrap_or(0),
            max_residual: solutions.iter().map(|s| s.residual).fold(0.0, f64::max),
            all_converged: solutions.iter().all(|s| s.converged),
            config,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{make_example1, make_quadratic_synthetic};

    fn iterative() -> SolverConfig {
        SolverConfig {
            closed_form: false,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn example1_optimum() {
        let spec = make_example1(5);
        for config in [SolverConfig::default(), iterative()] {
            let s = solve_instantaneous_optimum(&spec, 1, &config, None).unwrap();
            assert!(s.converged);
            assert!(linalg::dist(&s.x, &[-0.8, 1.2]) < 1e-7, "{s:?}");
            assert!((s.value - 1.6).abs() < 1e-10);
        }
    }

    #[test]
    fn iterative_matches_closed_form_on_drifting_quadratics() {
        let spec = make_quadratic_synthetic(6, 4, 1.0, 40);
        for t in [1, 7, 40] {
            let exact = solve_instantaneous_optimum(&spec, t, &SolverConfig::default(), None).unwrap();
            let iter = solve_instantaneous_optimum(&spec, t, &iterative(), None).unwrap();
            assert_eq!(exact.method, SolveMethod::ClosedForm);
            assert!(iter.converged);
            assert!(linalg::dist(&exact.x, &iter.x) < 1e-6);
        }
    }

    #[test]
    fn time_invariant_optima_are_cached() {
        let spec = make_example1(10);
        let all = solve_optima(&spec, 1, 11, &SolverConfig::default(), false).unwrap();
        assert_eq!(all.len(), 11);
        assert!(all.iter().all(|s| s.x == all[0].x));
        assert_eq!(SolverStats::from_solutions(&all, SolverConfig::default()).cached, 10);
    }

    #[test]
    fn iteration_cap_is_flagged() {
        let spec = make_quadratic_synthetic(4, 1, 1.0, 10);
        let config = SolverConfig {
            max_iterations: 1,
            ..iterative()
        };
        let s = solve_instantaneous_optimum(&spec, 3, &config, None).unwrap();
        assert!(!s.converged);
        assert_eq!(s.iterations, 1);
    }
}
