use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::loss::{ConstantSource, DeclaredConstants, LossFamily, LossKind, ParamPath, VariationSup};
use super::{AggregationMap, ProblemSpec};
use crate::error::{Error, Result};
use crate::geometry::ConvexSet;
use crate::linalg;

/// Default Huber width for the smoothed target-surrounding losses.
pub const DEFAULT_HUBER_EPS: f64 = 1e-3;

/// Distance penalty `ρ` used by the target-surrounding losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Smoothing {
    /// Plain Euclidean norm; subgradient 0 at the kink.
    None,
    /// `‖v‖²/(2ε)` inside radius ε, `‖v‖ − ε/2` outside.
    Huber { epsilon: f64 },
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing::Huber {
            epsilon: DEFAULT_HUBER_EPS,
        }
    }
}

impl Smoothing {
    fn penalty(&self, v: &[f64]) -> f64 {
        let r = linalg::norm(v);
        match *self {
            Smoothing::None => r,
            Smoothing::Huber { epsilon } => {
                if r <= epsilon {
                    r * r / (2.0 * epsilon)
                } else {
                    r - epsilon / 2.0
                }
            }
        }
    }

    fn gradient(&self, v: &[f64]) -> Vec<f64> {
        let r = linalg::norm(v);
        match *self {
            Smoothing::None => {
                if r == 0.0 {
                    vec![0.0; v.len()]
                } else {
                    linalg::scale(v, 1.0 / r)
                }
            }
            Smoothing::Huber { epsilon } => linalg::scale(v, 1.0 / r.max(epsilon)),
        }
    }

    /// `sup_z ‖∇ρ(z − a) − ∇ρ(z − b)‖` for `‖a − b‖ = shift`, attained at the
    /// midpoint of `a` and `b`.
    fn gradient_shift_sup(&self, shift: f64) -> f64 {
        if shift == 0.0 {
            return 0.0;
        }
        match *self {
            Smoothing::None => 2.0,
            Smoothing::Huber { epsilon } => (shift / epsilon).min(2.0),
        }
    }
}

/// Agents guard a moving target `x₀(t)` against intruders `zᵢ(t)`:
/// `f_{i,t}(xᵢ, ν) = ρ(xᵢ − zᵢ(t)) + ρ(ν − x₀(t))`, planar, `ψᵢ = Id`.
#[derive(Debug, Clone)]
pub struct TargetSurrounding {
    target: ParamPath,
    intruders: Vec<ParamPath>,
    smoothing: Smoothing,
}

impl TargetSurrounding {
    pub fn new(target: ParamPath, intruders: Vec<ParamPath>, smoothing: Smoothing) -> Self {
        Self {
            target,
            intruders,
            smoothing,
        }
    }

    pub fn smoothing(&self) -> Smoothing {
        self.smoothing
    }

    pub fn target_at(&self, t: usize) -> Vec<f64> {
        self.target.at(t)
    }

    pub fn intruder_at(&self, i: usize, t: usize) -> Vec<f64> {
        self.intruders[i].at(t)
    }
}

impl LossFamily for TargetSurrounding {
    fn kind(&self) -> LossKind {
        match self.smoothing {
            Smoothing::None => LossKind::TargetSurrounding,
            Smoothing::Huber { .. } => LossKind::SmoothedTargetSurrounding,
        }
    }

    fn name(&self) -> &str {
        "target_surrounding"
    }

    fn value(&self, i: usize, t: usize, x: &[f64], nu: &[f64]) -> f64 {
        let z = self.intruders[i].at(t);
        let x0 = self.target.at(t);
        self.smoothing.penalty(&linalg::sub(x, &z)) + self.smoothing.penalty(&linalg::sub(nu, &x0))
    }

    fn grad1(&self, i: usize, t: usize, x: &[f64], _nu: &[f64]) -> Vec<f64> {
        self.smoothing
            .gradient(&linalg::sub(x, &self.intruders[i].at(t)))
    }

    fn grad2(&self, _i: usize, t: usize, _x: &[f64], nu: &[f64]) -> Vec<f64> {
        self.smoothing.gradient(&linalg::sub(nu, &self.target.at(t)))
    }

    fn is_time_invariant(&self) -> bool {
        self.target.is_constant() && self.intruders.iter().all(ParamPath::is_constant)
    }

    fn is_smooth(&self) -> bool {
        matches!(self.smoothing, Smoothing::Huber { .. })
    }

    fn declared_constants(&self, spec: &ProblemSpec) -> Option<DeclaredConstants> {
        Some(DeclaredConstants {
            g: 1.0,
            l1: match self.smoothing {
                Smoothing::None => f64::INFINITY,
                Smoothing::Huber { epsilon } => 1.0 / epsilon,
            },
            l2: 0.0,
            b: spec.decision_bound(),
            source: ConstantSource::Analytic,
        })
    }

    fn grad2_variation_sup(&self, _spec: &ProblemSpec, _i: usize, t: usize) -> Option<VariationSup> {
        let shift = linalg::dist(&self.target.at(t + 1), &self.target.at(t));
        Some(VariationSup {
            value: self.smoothing.gradient_shift_sup(shift),
            restricted: false,
        })
    }

    /// When all intruders coincide at `z`, Jensen gives
    /// `f_t ≥ N·min_ν [ρ(ν − z) + ρ(ν − x₀)]`, attained by placing every
    /// agent at the midpoint of `z` and `x₀`.
    fn exact_optimum(&self, spec: &ProblemSpec, t: usize) -> Option<Vec<f64>> {
        let z = self.intruders.first()?.at(t);
        if self.intruders.iter().skip(1).any(|p| p.at(t) != z) {
            return None;
        }
        let x0 = self.target.at(t);
        let mid: Vec<f64> = z.iter().zip(&x0).map(|(a, b)| 0.5 * (a + b)).collect();
        let blocks = vec![mid; spec.agents()];
        if spec.is_feasible(&blocks, 0.0) {
            Some(linalg::flatten(&blocks))
        } else {
            None
        }
    }
}

/// `x₀(t) = (10, 10) + (1, 1)/(t + 1)`.
pub fn reference_target_path() -> ParamPath {
    ParamPath::func(2, |t| {
        let s = 1.0 / (t as f64 + 1.0);
        vec![10.0 + s, 10.0 + s]
    })
}

/// `zᵢ(t) = (10, 10) + 6·(sin t, cos t) + (1, 1)/(t + 1)`, shared by every intruder.
pub fn reference_intruder_path() -> ParamPath {
    ParamPath::func(2, |t| {
        let tf = t as f64;
        let s = 1.0 / (tf + 1.0);
        vec![10.0 + 6.0 * tf.sin() + s, 10.0 + 6.0 * tf.cos() + s]
    })
}

/// Builds the target-surrounding problem with agent `i` watching intruder `i`.
pub fn make_target_surrounding(
    agents: usize,
    target: ParamPath,
    intruders: Vec<ParamPath>,
    smoothing: Smoothing,
    cap: f64,
    horizon: usize,
) -> Result<ProblemSpec> {
    if agents != intruders.len() {
        return Err(Error::InvalidArgument(format!(
            "each agent watches one intruder: {agents} agents but {} intruders",
            intruders.len()
        )));
    }
    if let Smoothing::Huber { epsilon } = smoothing {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("Huber width must be positive, got {epsilon}")));
        }
    }
    if target.dim() != 2 || intruders.iter().any(|p| p.dim() != 2) {
        return Err(Error::InvalidArgument("target-surrounding paths are planar".into()));
    }
    let family = TargetSurrounding::new(target, intruders, smoothing);
    ProblemSpec::new(
        vec![ConvexSet::cap(cap, 2)?; agents],
        vec![AggregationMap::identity(2); agents],
        2,
        Arc::new(family),
        horizon,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_problem(n: usize, smoothing: Smoothing) -> ProblemSpec {
        make_target_surrounding(
            n,
            reference_target_path(),
            vec![reference_intruder_path(); n],
            smoothing,
            crate::geometry::DEFAULT_CAP,
            100,
        )
        .unwrap()
    }

    #[test]
    fn reference_paths_at_time_zero() {
        assert_eq!(reference_target_path().at(0), vec![11.0, 11.0]);
        assert_eq!(reference_intruder_path().at(0), vec![11.0, 17.0]);
    }

    #[test]
    fn zero_loss_when_on_both_targets() {
        for smoothing in [Smoothing::None, Smoothing::default()] {
            let spec = reference_problem(3, smoothing);
            let fam = spec.losses();
            let t = 4;
            let z = reference_intruder_path().at(t);
            let x0 = reference_target_path().at(t);
            assert_eq!(spec.local_loss(1, t, &z, &x0).unwrap(), 0.0);
            assert_eq!(fam.grad1(1, t, &z, &x0), vec![0.0, 0.0]);
        }
    }

    #[test]
    fn aggregate_gradient_is_unit() {
        let spec = reference_problem(2, Smoothing::None);
        let g = spec.grad2(0, 3, &[0.0, 0.0], &[1.0, 2.0]).unwrap();
        let x0 = reference_target_path().at(3);
        let dir = linalg::sub(&[1.0, 2.0], &x0);
        let want = linalg::scale(&dir, 1.0 / linalg::norm(&dir));
        assert!(linalg::dist(&g, &want) < 1e-15);
        assert!((linalg::norm(&g) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mismatched_counts_are_rejected() {
        let r = make_target_surrounding(
            3,
            reference_target_path(),
            vec![reference_intruder_path(); 2],
            Smoothing::None,
            50.0,
            10,
        );
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn huber_gradients_match_finite_differences() {
        let spec = reference_problem(5, Smoothing::default());
        let fd = spec.finite_difference_check(100, 1e-6, 21);
        assert!(fd.max_error() <= 1e-5, "{fd:?}");
        assert!(spec.gradient_audit(2000, 5).passed);
    }

    #[test]
    fn midpoint_optimum_beats_samples() {
        use rand::{Rng, SeedableRng};
        for smoothing in [Smoothing::None, Smoothing::default()] {
            let spec = reference_problem(4, smoothing);
            let t = 7;
            let best = spec.losses().exact_optimum(&spec, t).unwrap();
            let f_best = spec.global_loss(t, &best).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
            for _ in 0..2000 {
                let x: Vec<f64> = best.iter().map(|v| v + rng.random_range(-3.0..3.0)).collect();
                assert!(spec.global_loss(t, &x).unwrap() >= f_best - 1e-12);
            }
        }
    }

    #[test]
    fn variation_sup_of_unit_gradients() {
        let spec = reference_problem(3, Smoothing::None);
        let v = spec.losses().grad2_variation_sup(&spec, 0, 5).unwrap();
        assert_eq!(v.value, 2.0);
        let huber = reference_problem(3, Smoothing::Huber { epsilon: 1.0 });
        let v = huber.losses().grad2_variation_sup(&huber, 0, 5).unwrap();
        let shift = linalg::dist(&reference_target_path().at(6), &reference_target_path().at(5));
        assert!((v.value - shift).abs() < 1e-15);
    }
}
