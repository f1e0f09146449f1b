use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::StepsizeSchedule;
use crate::linalg;
use crate::problem::{sample_in_ball, sample_in_set, ProblemSpec};

/// Weights of the path variation `Σ_t w_t ‖x*_{t+1} − x*_t‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathWeights {
    Unit,
    /// `w_t = 1/α_t`.
    InverseStepsize(StepsizeSchedule),
}

/// `optima[k]` is `x*_{k+1}`; the sum runs over `t = 1..=optima.len() − 1`.
pub fn path_variation(optima: &[Vec<f64>], weights: PathWeights) -> f64 {
    optima
        .windows(2)
        .enumerate()
        .map(|(k, pair)| {
            let step = linalg::dist(&pair[1], &pair[0]);
            match weights {
                PathWeights::Unit => step,
                PathWeights::InverseStepsize(s) => step / s.at(k + 1),
            }
        })
        .sum()
}

/// How the per-round sups `max_{x, z} ‖∇₂f_{i,t+1}(x, z) − ∇₂f_{i,t}(x, z)‖` are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GradVariationEstimator {
    /// Family-provided sups, falling back to sampling when a family has none.
    Analytic {
        #[serde(default = "default_samples")]
        fallback_samples: usize,
    },
    /// Monte Carlo over `X_i × {‖z‖ ≤ z_radius}`. A smaller budget evaluates a
    /// prefix of a larger budget's sample stream, so estimates are monotone
    /// in `samples`.
    Sampled {
        samples: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        z_radius: Option<f64>,
    },
}

fn default_samples() -> usize {
    256
}

impl Default for GradVariationEstimator {
    fn default() -> Self {
        GradVariationEstimator::Analytic {
            fallback_samples: default_samples(),
        }
    }
}

/// Gradient-variation terms over rounds `1..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientVariation {
    /// `S_t = Σ_i sup_{i,t}` for `t = 1..=T`.
    pub per_round: Vec<f64>,
    /// `V^g_T = Σ_t S_t`.
    pub unit_sum: f64,
    /// `V^g_{T,α} = Σ_t α_t S_t²`.
    pub alpha_weighted_square: f64,
    /// `V^g_{T,1} = Σ_t S_t²`.
    pub unit_square: f64,
    /// Some sups are sample maxima, hence lower bounds.
    pub estimated: bool,
    /// Some sups are taken over a bounded aggregate region only.
    pub restricted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradVariationWeighting {
    UnitSum,
    AlphaWeightedSquare,
    UnitSquare,
}

impl GradientVariation {
    pub fn value(&self, weighting: GradVariationWeighting) -> f64 {
        match weighting {
            GradVariationWeighting::UnitSum => self.unit_sum,
            GradVariationWeighting::AlphaWeightedSquare => self.alpha_weighted_square,
            GradVariationWeighting::UnitSquare => self.unit_square,
        }
    }

    fn from_rounds(per_round: Vec<f64>, stepsize: &StepsizeSchedule, estimated: bool, restricted: bool) -> Self {
        let unit_sum = per_round.iter().sum();
        let unit_square = per_round.iter().map(|s| s * s).sum();
        let alpha_weighted_square = per_round
            .iter()
            .enumerate()
            .map(|(k, s)| stepsize.at(k + 1) * s * s)
            .sum();
        Self {
            per_round,
            unit_sum,
            alpha_weighted_square,
            unit_square,
            estimated,
            restricted,
        }
    }
}

fn sampled_sup(spec: &ProblemSpec, i: usize, t: usize, samples: usize, seed: u64, z_radius: f64) -> f64 {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(t as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(i as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    let losses = spec.losses();
    let mut best: f64 = 0.0;
    for _ in 0..samples {
        let x = sample_in_set(&spec.sets()[i], &mut rng);
        let z = sample_in_ball(spec.agg_dim(), z_radius, &mut rng);
        let d = linalg::dist(&losses.grad2(i, t + 1, &x, &z), &losses.grad2(i, t, &x, &z));
        best = best.max(d);
    }
    best
}

/// Gradient variation over rounds `1..=horizon`. Time-invariant families give
/// exactly zero.
pub fn gradient_variation(
    spec: &ProblemSpec,
    horizon: usize,
    stepsize: &StepsizeSchedule,
    estimator: &GradVariationEstimator,
) -> GradientVariation {
    if spec.losses().is_time_invariant() {
        return GradientVariation::from_rounds(vec![0.0; horizon], stepsize, false, false);
    }
    let default_radius = spec.aggregate_bound();
    let mut estimated = false;
    let mut restricted = false;
    let per_round = (1..=horizon)
        .map(|t| {
            (0..spec.agents())
                .map(|i| match *estimator {
                    GradVariationEstimator::Analytic { fallback_samples } => {
                        match spec.losses().grad2_variation_sup(spec, i, t) {
                            Some(v) => {
                                restricted |= v.restricted;
                                v.value
                            }
                            None => {
                                estimated = true;
                                restricted = true;
                                sampled_sup(spec, i, t, fallback_samples, 0, default_radius)
                            }
                        }
                    }
                    GradVariationEstimator::Sampled {
                        samples,
                        seed,
                        z_radius,
                    } => {
                        estimated = true;
                        restricted = true;
                        sampled_sup(spec, i, t, samples, seed, z_radius.unwrap_or(default_radius))
                    }
                })
                .sum::<f64>()
        })
        .collect();
    GradientVariation::from_rounds(per_round, stepsize, estimated, restricted)
}
