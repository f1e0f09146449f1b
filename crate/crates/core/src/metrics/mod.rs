//! Dynamic regret, regularity measures and bound diagnostics.

mod optimum;
mod variation;

use serde::{Deserialize, Serialize};

pub use optimum::{
    projected_residual, solve_instantaneous_optimum, solve_optima, OptimumSolution, SolveMethod,
    SolverConfig, SolverStats,
};
pub use variation::{
    gradient_variation, path_variation, GradVariationEstimator, GradVariationWeighting,
    GradientVariation, PathWeights,
};

use crate::engine::RunTrace;
use crate::error::{Error, Result};
use crate::linalg;
use crate::problem::ProblemSpec;

/// `R_T`, its running sums `R_t` and the averages `R_t/t`, for `t = 1..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretSeries {
    pub total: f64,
    pub cumulative: Vec<f64>,
    pub average: Vec<f64>,
}

/// `losses[k] = f_{k+1}(x_{k+1})` and `optimal[k] = f_{k+1}(x*_{k+1})`.
pub fn dynamic_regret(losses: &[f64], optimal: &[f64]) -> Result<RegretSeries> {
    if losses.len() != optimal.len() {
        return Err(Error::DimensionMismatch {
            expected: losses.len(),
            got: optimal.len(),
            context: "optimal values per round",
        });
    }
    let mut cumulative = Vec::with_capacity(losses.len());
    let mut acc = 0.0;
    for (f, f_star) in losses.iter().zip(optimal) {
        acc += f - f_star;
        cumulative.push(acc);
    }
    let average = cumulative
        .iter()
        .enumerate()
        .map(|(k, r)| r / (k + 1) as f64)
        .collect();
    Ok(RegretSeries {
        total: acc,
        cumulative,
        average,
    })
}

/// Regret of a trace against optima for rounds `1..=T` (extra optima are ignored).
pub fn trace_regret(trace: &RunTrace, optima: &[OptimumSolution]) -> Result<RegretSeries> {
    let losses: Vec<f64> = trace.records.iter().skip(1).map(|r| r.loss).collect();
    if optima.len() < losses.len() {
        return Err(Error::DimensionMismatch {
            expected: losses.len(),
            got: optima.len(),
            context: "optima covering rounds 1..=T",
        });
    }
    let values: Vec<f64> = optima[..losses.len()].iter().map(|o| o.value).collect();
    dynamic_regret(&losses, &values)
}

/// Per-round `‖ν_t − 1⊗ν̄_t‖` and `‖y_t − 1⊗ȳ_t‖`, recomputed from the stored states.
pub fn tracking_residuals(trace: &RunTrace) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut nu = Vec::with_capacity(trace.records.len());
    let mut y = Vec::with_capacity(trace.records.len());
    for r in &trace.records {
        match (&r.nu, &r.y) {
            (Some(n), Some(v)) => {
                nu.push(linalg::consensus_deviation(n));
                y.push(linalg::consensus_deviation(v));
            }
            _ => {
                return Err(Error::Trace(format!(
                    "round {} has no stored states; residuals need a full-mode trace",
                    r.t
                )))
            }
        }
    }
    Ok((nu, y))
}

/// Network constants of the residual bound `‖y_t − 1⊗ȳ_t‖ ≤ N·B₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub gamma: f64,
    pub xi: f64,
    pub b1: f64,
}

/// `γ = (1 − a/(2N²))⁻²`, `ξ = (1 − a/(2N²))^{1/Q}`,
/// `B₁ = Nγ max‖y_{i,1}‖ + 2NGγξ/(1 − ξ) + 4G`.
pub fn compute_bound_constants(n: usize, a: f64, q: usize, g: f64, y_first_max_norm: f64) -> Result<BoundConstants> {
    if n == 0 || q == 0 || !(a > 0.0 && a < 1.0) || g < 0.0 || y_first_max_norm < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "bound constants need N ≥ 1, a in (0, 1), Q ≥ 1, G ≥ 0; got N={n}, a={a}, Q={q}, G={g}"
        )));
    }
    let nf = n as f64;
    let base = 1.0 - a / (2.0 * nf * nf);
    let gamma = base.powi(-2);
    let xi = base.powf(1.0 / q as f64);
    let b1 = nf * gamma * y_first_max_norm + 2.0 * nf * g * gamma * xi / (1.0 - xi) + 4.0 * g;
    Ok(BoundConstants { gamma, xi, b1 })
}

/// Which measures a report computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Measures {
    pub regret: bool,
    pub path_variation: bool,
    pub grad_variation: bool,
    pub residuals: bool,
}

impl Default for Measures {
    fn default() -> Self {
        Self {
            regret: true,
            path_variation: true,
            grad_variation: true,
            residuals: true,
        }
    }
}

impl std::str::FromStr for Measures {
    type Err = Error;

    /// Comma-separated subset of `regret,pathvar,gradvar,residuals`.
    fn from_str(s: &str) -> Result<Self> {
        let mut m = Measures {
            regret: false,
            path_variation: false,
            grad_variation: false,
            residuals: false,
        };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "regret" => m.regret = true,
                "pathvar" => m.path_variation = true,
                "gradvar" => m.grad_variation = true,
                "residuals" => m.residuals = true,
                other => {
                    return Err(Error::UnknownName {
                        kind: "measure",
                        name: other.to_string(),
                    })
                }
            }
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportOptions {
    pub measures: Measures,
    pub solver: SolverConfig,
    pub grad_estimator: GradVariationEstimator,
    /// `(a, Q)` of the schedule, for the bound constants.
    pub network: Option<(f64, usize)>,
    pub parallel: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimumRecord {
    pub t: usize,
    pub x: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub horizon: usize,
    pub regret_total: Option<f64>,
    /// `R_t/t` for `t = 1..=T`.
    pub regret_over_t: Option<Vec<f64>>,
    /// `V^p_{T,α⁻¹}`.
    pub path_variation_weighted: Option<f64>,
    /// `V^p_{T,1}`.
    pub path_variation_unit: Option<f64>,
    /// `V^g_T`.
    pub grad_variation: Option<f64>,
    /// `V^g_{T,α}`.
    pub grad_variation_weighted: Option<f64>,
    /// `V^g_{T,1}`.
    pub grad_variation_unit_square: Option<f64>,
    pub grad_variation_estimated: bool,
    pub grad_variation_restricted: bool,
    /// `x*_t` and `f_t(x*_t)` for `t = 1..=T+1`.
    pub optima: Vec<OptimumRecord>,
    pub optima_solver_stats: Option<SolverStats>,
    pub bound_constants: Option<BoundConstants>,
    pub max_y_residual: Option<f64>,
    /// `N·B₁`.
    pub y_residual_bound: Option<f64>,
    pub warnings: Vec<String>,
}

/// Computes the requested measures for one run.
pub fn regret_report(spec: &ProblemSpec, trace: &RunTrace, options: &ReportOptions) -> Result<RegretReport> {
    let m = options.measures;
    let horizon = trace.horizon;
    if trace.records.len() != horizon + 1 {
        return Err(Error::Trace(format!(
            "trace holds {} records for horizon {horizon}",
            trace.records.len()
        )));
    }
    let mut warnings = Vec::new();
    let mut report = RegretReport {
        horizon,
        regret_total: None,
        regret_over_t: None,
        path_variation_weighted: None,
        path_variation_unit: None,
        grad_variation: None,
        grad_variation_weighted: None,
        grad_variation_unit_square: None,
        grad_variation_estimated: false,
        grad_variation_restricted: false,
        optima: Vec::new(),
        optima_solver_stats: None,
        bound_constants: None,
        max_y_residual: None,
        y_residual_bound: None,
        warnings: Vec::new(),
    };

    if (m.regret || m.path_variation) && horizon > 0 {
        let optima = solve_optima(spec, 1, horizon + 1, &options.solver, options.parallel)?;
        let stats = SolverStats::from_solutions(&optima, options.solver);
        if !stats.all_converged {
            warnings.push(format!(
                "optimum solver did not converge everywhere (max residual {:.3e})",
                stats.max_residual
            ));
        }
        if m.regret {
            let r = trace_regret(trace, &optima)?;
            report.regret_total = Some(r.total);
            report.regret_over_t = Some(r.average);
        }
        if m.path_variation {
            let points: Vec<Vec<f64>> = optima.iter().map(|o| o.x.clone()).collect();
            report.path_variation_unit = Some(path_variation(&points, PathWeights::Unit));
            report.path_variation_weighted =
                Some(path_variation(&points, PathWeights::InverseStepsize(trace.stepsize)));
        }
        report.optima = optima
            .into_iter()
            .map(|o| OptimumRecord {
                t: o.t,
                x: o.x,
                value: o.value,
            })
            .collect();
        report.optima_solver_stats = Some(stats);
    } else if m.regret {
        report.regret_total = Some(0.0);
        report.regret_over_t = Some(Vec::new());
    }

    if m.grad_variation {
        let g = gradient_variation(spec, horizon, &trace.stepsize, &options.grad_estimator);
        report.grad_variation = Some(g.unit_sum);
        report.grad_variation_weighted = Some(g.alpha_weighted_square);
        report.grad_variation_unit_square = Some(g.unit_square);
        report.grad_variation_estimated = g.estimated;
        report.grad_variation_restricted = g.restricted;
    }

    if m.residuals {
        report.max_y_residual = Some(trace.records.iter().map(|r| r.y_residual).fold(0.0, f64::max));
        match (options.network, trace.records.get(1)) {
            (Some((a, q)), Some(first)) => {
                let constants = spec.constants();
                let b = compute_bound_constants(spec.agents(), a, q, constants.g, first.y_max_norm)?;
                report.y_residual_bound = Some(spec.agents() as f64 * b.b1);
                report.bound_constants = Some(b);
            }
            _ => warnings.push("bound constants need the schedule and at least one round".into()),
        }
    }
    report.warnings = warnings;
    Ok(report)
}

/// Sample mean and standard error of `R_t/t` across independent seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedRegret {
    pub seeds: Vec<u64>,
    pub mean_over_t: Vec<f64>,
    pub stderr_over_t: Vec<f64>,
    pub mean_total: f64,
    pub stderr_total: f64,
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1.0);
    (mean, (var / r).sqrt())
}

pub fn expected_regret(seeds: &[u64], series: &[RegretSeries]) -> Result<ExpectedRegret> {
    if series.is_empty() || seeds.len() != series.len() {
        return Err(Error::InvalidArgument(format!(
            "expectation needs one series per seed, got {} seeds and {} series",
            seeds.len(),
            series.len()
        )));
    }
    let len = series[0].average.len();
    if series.iter().any(|s| s.average.len() != len) {
        return Err(Error::InvalidArgument("regret series differ in length".into()));
    }
    let (mean_over_t, stderr_over_t) = (0..len)
        .map(|k| mean_and_stderr(&series.iter().map(|s| s.average[k]).collect::<Vec<_>>()))
        .unzip();
    let (mean_total, stderr_total) = mean_and_stderr(&series.iter().map(|s| s.total).collect::<Vec<_>>());
    Ok(ExpectedRegret {
        seeds: seeds.to_vec(),
        mean_over_t,
        stderr_over_t,
        mean_total,
        stderr_total,
    })
}
