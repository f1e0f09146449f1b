//! Time-varying separable objectives with an aggregative variable.
//!
//! The global loss at time `t` is `f_t(x) = Σᵢ f_{i,t}(xᵢ, ν(x))` with the
//! aggregate `ν(x) = (1/N) Σᵢ ψᵢ(xᵢ)`. A [`ProblemSpec`] bundles the agents'
//! feasible sets, aggregation maps and a [`LossFamily`].

mod aggregation;
mod loss;
mod noise;
mod quadratic;
mod target;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use aggregation::{AggregationMap, SmoothAggregation};
pub(crate) use aggregation::matvec_t;
pub use loss::{ConstantSource, DeclaredConstants, LossFamily, LossKind, ParamPath, VariationSup};
pub use noise::{noisy_gradient, noisy_jacobian, DrawSlot, NoiseModel, RngKey};
pub use quadratic::{make_example1, make_quadratic_synthetic, QuadraticAggregative, QuadraticAgent};
pub use target::{
    make_target_surrounding, reference_intruder_path, reference_target_path, Smoothing, TargetSurrounding,
};

use crate::error::{check_dim, Error, Result};
use crate::geometry::ConvexSet;
use crate::linalg;

/// Safety factor applied to sampled maxima when a family has no closed-form
/// constants.
pub const ESTIMATE_SAFETY: f64 = 1.2;

#[derive(Clone)]
pub struct ProblemSpec {
    dims: Vec<usize>,
    agg_dim: usize,
    sets: Vec<ConvexSet>,
    psi: Vec<AggregationMap>,
    losses: Arc<dyn LossFamily>,
    horizon: usize,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("agents", &self.agents())
            .field("dims", &self.dims)
            .field("agg_dim", &self.agg_dim)
            .field("losses", &self.losses.name())
            .field("horizon", &self.horizon)
            .finish()
    }
}

impl ProblemSpec {
    pub fn new(
        sets: Vec<ConvexSet>,
        psi: Vec<AggregationMap>,
        agg_dim: usize,
        losses: Arc<dyn LossFamily>,
        horizon: usize,
    ) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::InvalidArgument("a problem needs at least one agent".into()));
        }
        check_dim(sets.len(), psi.len(), "aggregation maps per agent")?;
        if agg_dim == 0 {
            return Err(Error::InvalidArgument("aggregate dimension must be positive".into()));
        }
        let mut dims = Vec::with_capacity(sets.len());
        for (set, map) in sets.iter().zip(&psi) {
            set.validate()?;
            check_dim(set.dim(), map.input_dim(), "aggregation map input")?;
            check_dim(agg_dim, map.output_dim(), "aggregation map output")?;
            dims.push(set.dim());
        }
        Ok(Self {
            dims,
            agg_dim,
            sets,
            psi,
            losses,
            horizon,
        })
    }

    pub fn agents(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn agg_dim(&self) -> usize {
        self.agg_dim
    }

    pub fn sets(&self) -> &[ConvexSet] {
        &self.sets
    }

    pub fn psi(&self) -> &[AggregationMap] {
        &self.psi
    }

    pub fn losses(&self) -> &Arc<dyn LossFamily> {
        &self.losses
    }

    /// Number of decision rounds `T`.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn with_horizon(&self, horizon: usize) -> Self {
        Self {
            horizon,
            ..self.clone()
        }
    }

    /// Losses are queryable for `t ≤ T + 1`: the last update and the
    /// variation measures look one step past the decision horizon.
    pub fn check_time(&self, t: usize) -> Result<()> {
        if t <= self.horizon + 1 {
            Ok(())
        } else {
            Err(Error::TimeOutOfRange {
                t,
                horizon: self.horizon,
            })
        }
    }

    fn check_agent(&self, i: usize) -> Result<()> {
        if i < self.agents() {
            Ok(())
        } else {
            Err(Error::AgentOutOfRange {
                index: i,
                agents: self.agents(),
            })
        }
    }

    pub fn split(&self, stacked: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_dim(self.total_dim(), stacked.len(), "stacked decision vector")?;
        Ok(linalg::split(stacked, &self.dims))
    }

    /// `ν(x) = (1/N) Σ ψᵢ(xᵢ)` for a stacked decision vector.
    pub fn aggregate(&self, x: &[f64]) -> Result<Vec<f64>> {
        let blocks = self.split(x)?;
        Ok(self.aggregate_blocks(&blocks))
    }

    pub fn aggregate_blocks(&self, blocks: &[Vec<f64>]) -> Vec<f64> {
        let images: Vec<Vec<f64>> = blocks
            .iter()
            .zip(&self.psi)
            .map(|(x, map)| map.value(x))
            .collect();
        linalg::block_mean(&images)
    }

    /// `f_t(x) = Σᵢ f_{i,t}(xᵢ, ν(x))`.
    pub fn global_loss(&self, t: usize, x: &[f64]) -> Result<f64> {
        self.check_time(t)?;
        let blocks = self.split(x)?;
        Ok(self.global_loss_blocks(t, &blocks))
    }

    pub fn global_loss_blocks(&self, t: usize, blocks: &[Vec<f64>]) -> f64 {
        let nu = self.aggregate_blocks(blocks);
        blocks
            .iter()
            .enumerate()
            .map(|(i, x)| self.losses.value(i, t, x, &nu))
            .sum()
    }

    pub fn local_loss(&self, i: usize, t: usize, x: &[f64], nu: &[f64]) -> Result<f64> {
        self.check_local(i, t, x, nu)?;
        Ok(self.losses.value(i, t, x, nu))
    }

    pub fn grad1(&self, i: usize, t: usize, x: &[f64], nu: &[f64]) -> Result<Vec<f64>> {
        self.check_local(i, t, x, nu)?;
        Ok(self.losses.grad1(i, t, x, nu))
    }

    pub fn grad2(&self, i: usize, t: usize, x: &[f64], nu: &[f64]) -> Result<Vec<f64>> {
        self.check_local(i, t, x, nu)?;
        Ok(self.losses.grad2(i, t, x, nu))
    }

    fn check_local(&self, i: usize, t: usize, x: &[f64], nu: &[f64]) -> Result<()> {
        self.check_agent(i)?;
        self.check_time(t)?;
        check_dim(self.dims[i], x.len(), "agent decision")?;
        check_dim(self.agg_dim, nu.len(), "aggregate")
    }

    /// Blocks of `∇f_t(x)`: `∇₁f_{i,t}(xᵢ, ν(x)) + ∇ψᵢ(xᵢ)ᵀ (1/N) Σⱼ ∇₂f_{j,t}(xⱼ, ν(x))`.
    pub fn centralized_gradient(&self, t: usize, blocks: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let nu = self.aggregate_blocks(blocks);
        let g2: Vec<Vec<f64>> = blocks
            .iter()
            .enumerate()
            .map(|(i, x)| self.losses.grad2(i, t, x, &nu))
            .collect();
        let mean_g2 = linalg::block_mean(&g2);
        blocks
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let g1 = self.losses.grad1(i, t, x, &nu);
                let coupling = self.psi[i].apply_jacobian_transpose(x, &mean_g2);
                linalg::add(&g1, &coupling)
            })
            .collect()
    }

    pub fn project_blocks(&self, blocks: &[Vec<f64>]) -> Vec<Vec<f64>> {
        blocks
            .iter()
            .zip(&self.sets)
            .map(|(x, s)| s.project_unchecked(x))
            .collect()
    }

    pub fn is_feasible(&self, blocks: &[Vec<f64>], tol: f64) -> bool {
        blocks
            .iter()
            .zip(&self.sets)
            .all(|(x, s)| s.contains(x, tol).unwrap_or(false))
    }

    /// Bound on `‖ν‖` over images of the feasible sets.
    pub fn aggregate_bound(&self) -> f64 {
        self.sets
            .iter()
            .zip(&self.psi)
            .map(|(s, m)| m.image_bound(s))
            .fold(0.0, f64::max)
    }

    /// `B`: the largest per-agent decision norm.
    pub fn decision_bound(&self) -> f64 {
        self.sets
            .iter()
            .map(ConvexSet::diameter_bound)
            .fold(0.0, f64::max)
    }

    /// Declared `G`, `L1`, `L2`, `B`: analytic when the family provides them,
    /// otherwise sampled maxima scaled by [`ESTIMATE_SAFETY`].
    pub fn constants(&self) -> DeclaredConstants {
        if let Some(c) = self.losses.declared_constants(self) {
            return c;
        }
        self.estimate_constants(2000, 0x5eed)
    }

    pub fn estimate_constants(&self, samples: usize, seed: u64) -> DeclaredConstants {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g: f64 = self.psi.iter().map(AggregationMap::jacobian_bound).fold(0.0, f64::max);
        let mut l1: f64 = 0.0;
        for _ in 0..samples {
            let p = self.sample_point(&mut rng);
            let qx = sample_in_set(&self.sets[p.agent], &mut rng);
            let qnu = sample_in_ball(self.agg_dim, self.aggregate_bound().max(1e-9), &mut rng);
            let g1 = self.losses.grad1(p.agent, p.t, &p.x, &p.nu);
            let g2 = self.losses.grad2(p.agent, p.t, &p.x, &p.nu);
            g = g.max(linalg::norm(&g1)).max(linalg::norm(&g2));
            let h1 = self.losses.grad1(p.agent, p.t, &qx, &qnu);
            let h2 = self.losses.grad2(p.agent, p.t, &qx, &qnu);
            let gap = linalg::dist(&p.x, &qx) + linalg::dist(&p.nu, &qnu);
            if gap > 1e-12 {
                l1 = l1
                    .max(linalg::dist(&g1, &h1) / gap)
                    .max(linalg::dist(&g2, &h2) / gap);
            }
        }
        DeclaredConstants {
            g: ESTIMATE_SAFETY * g,
            l1: ESTIMATE_SAFETY * l1,
            l2: self.psi.iter().map(AggregationMap::jacobian_lipschitz).fold(0.0, f64::max),
            b: self.decision_bound(),
            source: ConstantSource::Estimated,
        }
    }

    fn sample_point(&self, rng: &mut ChaCha8Rng) -> SamplePoint {
        let agent = rng.random_range(0..self.agents());
        let t = rng.random_range(0..=self.horizon + 1);
        let x = sample_in_set(&self.sets[agent], rng);
        let nb = self.aggregate_bound().max(1e-9);
        let nu = sample_in_ball(self.agg_dim, nb, rng);
        SamplePoint { agent, t, x, nu }
    }

    /// Compares analytic gradients with central differences at random
    /// feasible points. The error is `‖analytic − fd‖ / max(1, ‖analytic‖)`.
    pub fn finite_difference_check(&self, samples: usize, h: f64, seed: u64) -> FdReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst1: f64 = 0.0;
        let mut worst2: f64 = 0.0;
        for _ in 0..samples {
            let p = self.sample_point(&mut rng);
            let (i, t) = (p.agent, p.t);
            let g1 = self.losses.grad1(i, t, &p.x, &p.nu);
            let fd1 = central_difference(|v| self.losses.value(i, t, v, &p.nu), &p.x, h);
            worst1 = worst1.max(linalg::dist(&g1, &fd1) / linalg::norm(&g1).max(1.0));
            let g2 = self.losses.grad2(i, t, &p.x, &p.nu);
            let fd2 = central_difference(|v| self.losses.value(i, t, &p.x, v), &p.nu, h);
            worst2 = worst2.max(linalg::dist(&g2, &fd2) / linalg::norm(&g2).max(1.0));
        }
        FdReport {
            samples,
            max_rel_error_grad1: worst1,
            max_rel_error_grad2: worst2,
        }
    }

    /// Samples gradient norms over feasible points and checks them against
    /// the declared `G`.
    pub fn gradient_audit(&self, samples: usize, seed: u64) -> GradientAudit {
        let declared = self.constants();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut audit = GradientAudit {
            declared_g: declared.g,
            ..GradientAudit::default()
        };
        for _ in 0..samples {
            let p = self.sample_point(&mut rng);
            let g1 = self.losses.grad1(p.agent, p.t, &p.x, &p.nu);
            let g2 = self.losses.grad2(p.agent, p.t, &p.x, &p.nu);
            let jac = aggregation::spectral_norm(&self.psi[p.agent].jacobian(&p.x));
            audit.max_grad1 = audit.max_grad1.max(linalg::norm(&g1));
            audit.max_grad2 = audit.max_grad2.max(linalg::norm(&g2));
            audit.max_jacobian = audit.max_jacobian.max(jac);
        }
        let worst = audit.max_grad1.max(audit.max_grad2).max(audit.max_jacobian);
        audit.passed = worst <= declared.g * (1.0 + 1e-12);
        if !audit.passed {
            log::warn!(
                "gradient audit failed: sampled norm {worst} exceeds declared G = {}",
                declared.g
            );
        }
        audit
    }
}

struct SamplePoint {
    agent: usize,
    t: usize,
    x: Vec<f64>,
    nu: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FdReport {
    pub samples: usize,
    pub max_rel_error_grad1: f64,
    pub max_rel_error_grad2: f64,
}

impl FdReport {
    pub fn max_error(&self) -> f64 {
        self.max_rel_error_grad1.max(self.max_rel_error_grad2)
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct GradientAudit {
    pub declared_g: f64,
    pub max_grad1: f64,
    pub max_grad2: f64,
    pub max_jacobian: f64,
    pub passed: bool,
}

pub(crate) fn central_difference(f: impl Fn(&[f64]) -> f64, at: &[f64], h: f64) -> Vec<f64> {
    let mut probe = at.to_vec();
    (0..at.len())
        .map(|k| {
            probe[k] = at[k] + h;
            let plus = f(&probe);
            probe[k] = at[k] - h;
            let minus = f(&probe);
            probe[k] = at[k];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Uniform point of the set's bounding cube, projected onto the set.
pub(crate) fn sample_in_set(set: &ConvexSet, rng: &mut impl Rng) -> Vec<f64> {
    let b = set.diameter_bound().max(1e-9);
    let raw: Vec<f64> = (0..set.dim()).map(|_| rng.random_range(-b..=b)).collect();
    set.project_unchecked(&raw)
}

pub(crate) fn sample_in_ball(dim: usize, radius: f64, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-radius..=radius)).collect();
        if linalg::norm(&v) <= radius {
            return v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_is_the_mean_of_images() {
        let spec = make_example1(10);
        assert_eq!(spec.aggregate(&[1.0, 3.0]).unwrap(), vec![2.0]);

        let sets = vec![ConvexSet::cap(10.0, 2).unwrap(); 2];
        let psi = vec![AggregationMap::identity(2); 2];
        let losses = Arc::new(QuadraticAggregative::zero(2, 2, 2));
        let spec2 = ProblemSpec::new(sets, psi, 2, losses, 5).unwrap();
        assert_eq!(spec2.aggregate(&[0.0, 0.0, 4.0, 2.0]).unwrap(), vec![2.0, 1.0]);
    }

    #[test]
    fn single_agent_aggregate_is_its_image() {
        let sets = vec![ConvexSet::cap(10.0, 2).unwrap()];
        let psi = vec![AggregationMap::linear(1, 2, &[2.0, -1.0]).unwrap()];
        let losses = Arc::new(QuadraticAggregative::zero(1, 2, 1));
        let spec = ProblemSpec::new(sets, psi, 1, losses, 5).unwrap();
        assert_eq!(spec.aggregate(&[3.0, 1.0]).unwrap(), vec![5.0]);
    }

    #[test]
    fn example1_global_loss() {
        let spec = make_example1(10);
        assert!((spec.global_loss(0, &[0.0, 0.0]).unwrap() - 4.0).abs() < 1e-15);
        assert!((spec.global_loss(3, &[-0.8, 1.2]).unwrap() - 1.6).abs() < 1e-12);
    }

    #[test]
    fn zero_losses_sum_to_zero() {
        let sets = vec![ConvexSet::cap(5.0, 1).unwrap(); 3];
        let psi = vec![AggregationMap::identity(1); 3];
        let spec = ProblemSpec::new(sets, psi, 1, Arc::new(QuadraticAggregative::zero(3, 1, 1)), 4)
            .unwrap();
        assert_eq!(spec.global_loss(2, &[1.0, -2.0, 3.0]).unwrap(), 0.0);
    }

    #[test]
    fn example1_partial_gradients() {
        let spec = make_example1(10);
        assert_eq!(spec.grad1(0, 0, &[0.0], &[0.0]).unwrap(), vec![0.0]);
        assert_eq!(spec.grad2(0, 0, &[0.0], &[0.0]).unwrap(), vec![0.0]);
        assert_eq!(spec.grad1(1, 0, &[4.0], &[4.0]).unwrap(), vec![4.0]);
        assert_eq!(spec.grad2(1, 0, &[4.0], &[4.0]).unwrap(), vec![32.0]);
    }

    #[test]
    fn out_of_range_indices() {
        let spec = make_example1(10).with_horizon(5);
        assert!(spec.global_loss(6, &[0.0, 0.0]).is_ok());
        assert!(matches!(
            spec.global_loss(7, &[0.0, 0.0]),
            Err(Error::TimeOutOfRange { t: 7, .. })
        ));
        assert!(matches!(
            spec.grad1(2, 0, &[0.0], &[0.0]),
            Err(Error::AgentOutOfRange { .. })
        ));
        assert!(spec.aggregate(&[1.0]).is_err());
    }

    #[test]
    fn mismatched_maps_are_rejected() {
        let sets = vec![ConvexSet::cap(5.0, 2).unwrap()];
        let psi = vec![AggregationMap::identity(3)];
        let r = ProblemSpec::new(sets, psi, 3, Arc::new(QuadraticAggregative::zero(1, 2, 3)), 4);
        assert!(r.is_err());
    }

    #[test]
    fn aggregate_is_permutation_equivariant() {
        let spec = make_quadratic_synthetic(5, 7, 1.0, 50);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let blocks: Vec<Vec<f64>> = spec.sets().iter().map(|s| sample_in_set(s, &mut rng)).collect();
        let mut perm = blocks.clone();
        perm.reverse();
        perm.swap(0, 2);
        let a = spec.aggregate_blocks(&blocks);
        let b = spec.aggregate_blocks(&perm);
        assert!(linalg::dist(&a, &b) < 1e-12);
    }

    #[test]
    fn estimated_constants_are_flagged() {
        let spec = make_example1(10);
        let est = spec.estimate_constants(500, 3);
        assert_eq!(est.source, ConstantSource::Estimated);
        assert!(est.g <= spec.constants().g * ESTIMATE_SAFETY);
    }
}
