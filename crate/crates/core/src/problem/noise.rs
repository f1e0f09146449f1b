use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Isotropic Gaussian gradient noise. `sigma1` covers `∇₁f` and `∇ψ`,
/// `sigma2` covers `∇₂f`. A perturbation of dimension `m` has per-component
/// variance `σ²/m`, so `E‖δ‖² = σ²` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub sigma1: f64,
    pub sigma2: f64,
}

impl NoiseModel {
    pub fn from_variances(var1: f64, var2: f64) -> Self {
        Self {
            sigma1: var1.sqrt(),
            sigma2: var2.sqrt(),
        }
    }

    pub fn sigma_for(&self, slot: DrawSlot) -> f64 {
        match slot {
            DrawSlot::Grad1 | DrawSlot::GradPsi => self.sigma1,
            DrawSlot::Grad2 => self.sigma2,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sigma1 == 0.0 && self.sigma2 == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawSlot {
    Grad1 = 0,
    GradPsi = 1,
    Grad2 = 2,
}

/// Counter-based key for one noise draw. Each `(seed, round, agent, slot)`
/// maps to its own ChaCha stream, so draws do not depend on evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngKey {
    pub seed: u64,
    pub round: u64,
    pub agent: u64,
    pub slot: DrawSlot,
}

impl RngKey {
    pub fn new(seed: u64, round: usize, agent: usize, slot: DrawSlot) -> Self {
        Self {
            seed,
            round: round as u64,
            agent: agent as u64,
            slot,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut bytes = [0u8; 32];
        bytes[..8].copy_from_slice(&self.seed.to_le_bytes());
        bytes[8..16].copy_from_slice(&self.round.to_le_bytes());
        bytes[16..24].copy_from_slice(&self.agent.to_le_bytes());
        bytes[24..32].copy_from_slice(&(self.slot as u64).to_le_bytes());
        ChaCha8Rng::from_seed(bytes)
    }
}

fn perturb(key: RngKey, sigma: f64, values: &mut [f64]) {
    if sigma == 0.0 || values.is_empty() {
        return;
    }
    let std = sigma / (values.len() as f64).sqrt();
    let mut rng = key.rng();
    for v in values.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += std * z;
    }
}

/// `true_grad + δ` with `E[δ] = 0` and `E‖δ‖² = σ²` for the slot's σ.
pub fn noisy_gradient(key: RngKey, noise: &NoiseModel, true_grad: &[f64]) -> Vec<f64> {
    let mut out = true_grad.to_vec();
    perturb(key, noise.sigma_for(key.slot), &mut out);
    out
}

/// Noisy Jacobian of an aggregation map. The noise budget `σ₁²` is spread
/// over all `d·n` entries.
pub fn noisy_jacobian(key: RngKey, noise: &NoiseModel, jacobian: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = jacobian.clone();
    perturb(key, noise.sigma_for(key.slot), out.as_mut_slice());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;

    #[test]
    fn zero_sigma_is_exact() {
        let noise = NoiseModel::default();
        let g = vec![1.25, -3.0, 0.5];
        let key = RngKey::new(9, 3, 1, DrawSlot::Grad1);
        assert_eq!(noisy_gradient(key, &noise, &g), g);
    }

    #[test]
    fn draws_are_keyed() {
        let noise = NoiseModel::from_variances(0.1, 0.1);
        let g = vec![0.0; 4];
        let k = RngKey::new(1, 2, 3, DrawSlot::Grad2);
        assert_eq!(noisy_gradient(k, &noise, &g), noisy_gradient(k, &noise, &g));
        let other = RngKey { agent: 4, ..k };
        assert_ne!(noisy_gradient(k, &noise, &g), noisy_gradient(other, &noise, &g));
        let other_slot = RngKey { slot: DrawSlot::Grad1, ..k };
        assert_ne!(noisy_gradient(k, &noise, &g), noisy_gradient(other_slot, &noise, &g));
    }

    // Monte Carlo oracle: sample mean within a CLT bound, second moment within 5%.
    #[test]
    fn unbiased_with_prescribed_second_moment() {
        let sigma2: f64 = 0.1;
        let noise = NoiseModel::from_variances(0.0, sigma2);
        let truth = vec![0.7, -1.1, 2.0];
        let draws = 100_000;
        let mut mean = vec![0.0; 3];
        let mut second = 0.0;
        for r in 0..draws {
            let g = noisy_gradient(RngKey::new(42, r, 0, DrawSlot::Grad2), &noise, &truth);
            let d = linalg::sub(&g, &truth);
            second += linalg::norm(&d).powi(2);
            for (m, v) in mean.iter_mut().zip(&d) {
                *m += v;
            }
        }
        let bias = linalg::norm(&mean) / draws as f64;
        assert!(bias <= 4.0 * sigma2.sqrt() / (draws as f64).sqrt(), "bias {bias}");
        let second = second / draws as f64;
        assert!((second - sigma2).abs() <= 0.05 * sigma2, "E|d|^2 = {second}");
    }

    #[test]
    fn jacobian_noise_uses_sigma1() {
        let noise = NoiseModel { sigma1: 0.0, sigma2: 1.0 };
        let j = DMatrix::identity(2, 2);
        let key = RngKey::new(0, 0, 0, DrawSlot::GradPsi);
        assert_eq!(noisy_jacobian(key, &noise, &j), j);
    }
}
