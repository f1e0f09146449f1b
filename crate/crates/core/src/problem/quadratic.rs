use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::{ConstantSource, DeclaredConstants, LossFamily, LossKind, ParamPath, VariationSup};
use super::{AggregationMap, ProblemSpec};
use crate::geometry::ConvexSet;
use crate::linalg;

/// One agent's quadratic: `w‖x − c(t)‖² + κ‖ν − r(t)‖²`.
#[derive(Debug, Clone)]
pub struct QuadraticAgent {
    pub weight: f64,
    pub center: ParamPath,
    pub kappa: f64,
    pub reference: ParamPath,
}

/// Separable quadratics in the decision and the aggregate.
#[derive(Debug, Clone)]
pub struct QuadraticAggregative {
    agents: Vec<QuadraticAgent>,
}

impl QuadraticAggregative {
    pub fn new(agents: Vec<QuadraticAgent>) -> Self {
        Self { agents }
    }

    /// All-zero losses, for tests and as a neutral element.
    pub fn zero(agents: usize, dim: usize, agg_dim: usize) -> Self {
        let a = QuadraticAgent {
            weight: 0.0,
            center: ParamPath::Constant(vec![0.0; dim]),
            kappa: 0.0,
            reference: ParamPath::Constant(vec![0.0; agg_dim]),
        };
        Self::new(vec![a; agents])
    }

    pub fn agents(&self) -> &[QuadraticAgent] {
        &self.agents
    }

    /// Stacked centers `c(t)`.
    pub fn center_stack(&self, t: usize) -> Vec<f64> {
        self.agents.iter().flat_map(|a| a.center.at(t)).collect()
    }
}

impl LossFamily for QuadraticAggregative {
    fn kind(&self) -> LossKind {
        LossKind::QuadraticAggregative
    }

    fn name(&self) -> &str {
        "quadratic"
    }

    fn value(&self, i: usize, t: usize, x: &[f64], nu: &[f64]) -> f64 {
        let a = &self.agents[i];
        let dx = linalg::dist(x, &a.center.at(t));
        let dn = linalg::dist(nu, &a.reference.at(t));
        a.weight * dx * dx + a.kappa * dn * dn
    }

    fn grad1(&self, i: usize, t: usize, x: &[f64], _nu: &[f64]) -> Vec<f64> {
        let a = &self.agents[i];
        let c = a.center.at(t);
        x.iter().zip(&c).map(|(x, c)| 2.0 * a.weight * (x - c)).collect()
    }

    fn grad2(&self, i: usize, t: usize, _x: &[f64], nu: &[f64]) -> Vec<f64> {
        let a = &self.agents[i];
        let r = a.reference.at(t);
        nu.iter().zip(&r).map(|(v, r)| 2.0 * a.kappa * (v - r)).collect()
    }

    fn is_time_invariant(&self) -> bool {
        self.agents
            .iter()
            .all(|a| a.center.is_constant() && a.reference.is_constant())
    }

    // G bounds ∇₂ over the aggregate ball ‖ν‖ ≤ max ‖ψᵢ(Xᵢ)‖.
    fn declared_constants(&self, spec: &ProblemSpec) -> Option<DeclaredConstants> {
        let last = spec.horizon() + 1;
        let nu_bound = spec.aggregate_bound();
        let mut g: f64 = spec
            .psi()
            .iter()
            .map(AggregationMap::jacobian_bound)
            .fold(0.0, f64::max);
        let mut max_w: f64 = 0.0;
        let mut max_k: f64 = 0.0;
        for (a, set) in self.agents.iter().zip(spec.sets()) {
            g = g.max(2.0 * a.weight * (set.diameter_bound() + a.center.sup_norm(last)));
            g = g.max(2.0 * a.kappa * (nu_bound + a.reference.sup_norm(last)));
            max_w = max_w.max(a.weight);
            max_k = max_k.max(a.kappa);
        }
        Some(DeclaredConstants {
            g,
            l1: 2.0 * max_w.max(max_k),
            l2: spec
                .psi()
                .iter()
                .map(AggregationMap::jacobian_lipschitz)
                .fold(0.0, f64::max),
            b: spec.decision_bound(),
            source: ConstantSource::Analytic,
        })
    }

    // ∇₂ is affine in z with a z-independent slope, so the difference is constant.
    fn grad2_variation_sup(&self, _spec: &ProblemSpec, i: usize, t: usize) -> Option<VariationSup> {
        let a = &self.agents[i];
        let shift = linalg::dist(&a.reference.at(t + 1), &a.reference.at(t));
        Some(VariationSup {
            value: 2.0 * a.kappa * shift,
            restricted: false,
        })
    }

    /// Solves `(W + K SᵀS) x = W c + Sᵀ Σₖ κₖ rₖ` with `S = [J₁ … J_N]/N`.
    /// Returns `None` for non-affine maps, singular systems, or when the
    /// unconstrained minimizer leaves `X`.
    fn exact_optimum(&self, spec: &ProblemSpec, t: usize) -> Option<Vec<f64>> {
        if !spec.psi().iter().all(AggregationMap::is_affine) {
            return None;
        }
        let n = spec.total_dim();
        let d = spec.agg_dim();
        let inv_n = 1.0 / spec.agents() as f64;
        let mut s = DMatrix::<f64>::zeros(d, n);
        let mut w = DVector::<f64>::zeros(n);
        let mut c = DVector::<f64>::zeros(n);
        let mut offset = 0;
        for (i, map) in spec.psi().iter().enumerate() {
            let ni = spec.dims()[i];
            let jac = map.jacobian(&vec![0.0; ni]);
            s.view_mut((0, offset), (d, ni)).copy_from(&(jac * inv_n));
            let center = self.agents[i].center.at(t);
            for k in 0..ni {
                w[offset + k] = self.agents[i].weight;
                c[offset + k] = center[k];
            }
            offset += ni;
        }
        let total_kappa: f64 = self.agents.iter().map(|a| a.kappa).sum();
        let mut weighted_ref = DVector::<f64>::zeros(d);
        for a in &self.agents {
            weighted_ref += DVector::from_vec(a.reference.at(t)) * a.kappa;
        }
        let lhs = DMatrix::from_diagonal(&w) + s.transpose() * &s * total_kappa;
        let rhs = w.component_mul(&c) + s.transpose() * weighted_ref;
        let sol = lhs.lu().solve(&rhs)?;
        let x: Vec<f64> = sol.iter().copied().collect();
        let blocks = linalg::split(&x, spec.dims());
        if linalg::all_finite(&x) && spec.is_feasible(&blocks, 1e-12) {
            Some(x)
        } else {
            None
        }
    }
}

/// The two-agent scalar problem `f₁ = x₁² + 4ν²`, `f₂ = (x₂ − 2)² + 4ν²`
/// with `ν = (x₁ + x₂)/2` on `[−10, 10]` each. Its cooperative minimizer is
/// `(−0.8, 1.2)` and the Nash equilibrium of the induced game `(−2/3, 4/3)`.
pub fn make_example1(horizon: usize) -> ProblemSpec {
    let agent = |c: f64| QuadraticAgent {
        weight: 1.0,
        center: ParamPath::Constant(vec![c]),
        kappa: 4.0,
        reference: ParamPath::Constant(vec![0.0]),
    };
    let losses = QuadraticAggregative::new(vec![agent(0.0), agent(2.0)]);
    let set = ConvexSet::cube(-10.0, 10.0, 1).expect("valid box");
    ProblemSpec::new(
        vec![set.clone(), set],
        vec![AggregationMap::identity(1); 2],
        1,
        Arc::new(losses),
        horizon,
    )
    .expect("example problem is well formed")
}

/// Half-width of the feasible box in the synthetic drift problem.
pub const SYNTHETIC_CAP: f64 = 20.0;
const SYNTHETIC_ORBIT: f64 = 5.0;

/// Planar agents whose minimizers orbit fixed home points so that the
/// stacked optimum moves by exactly `drift_rate / √t` between rounds `t` and
/// `t+1` (`drift_rate` from round 0 to 1).
///
/// Every agent shares the reference `r(t) = mean_j c_j(t)`, hence
/// `x_t* = c(t)` with `f_t(x_t*) = 0`.
pub fn make_quadratic_synthetic(agents: usize, seed: u64, drift_rate: f64, horizon: usize) -> ProblemSpec {
    assert!(agents >= 1, "synthetic problem needs at least one agent");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let homes: Vec<[f64; 2]> = (0..agents)
        .map(|_| [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)])
        .collect();
    let phases: Vec<f64> = (0..agents)
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();
    let weights: Vec<f64> = (0..agents).map(|_| rng.random_range(0.5..1.5)).collect();

    let steps = horizon + 2;
    let mut angles = Vec::with_capacity(steps);
    let mut theta: f64 = 0.0;
    for t in 0..steps {
        angles.push(theta);
        let chord = drift_rate / ((agents * t.max(1)) as f64).sqrt();
        theta += 2.0 * (chord / (2.0 * SYNTHETIC_ORBIT)).min(1.0).asin();
    }

    let orbit = |i: usize, angle: f64| {
        vec![
            homes[i][0] + SYNTHETIC_ORBIT * (angle + phases[i]).cos(),
            homes[i][1] + SYNTHETIC_ORBIT * (angle + phases[i]).sin(),
        ]
    };
    let centers: Vec<ParamPath> = (0..agents)
        .map(|i| {
            if drift_rate == 0.0 {
                ParamPath::Constant(orbit(i, 0.0))
            } else {
                ParamPath::Table(Arc::new(angles.iter().map(|&a| orbit(i, a)).collect()))
            }
        })
        .collect();
    let reference = if drift_rate == 0.0 {
        ParamPath::Constant(linalg::block_mean(
            &centers.iter().map(|c| c.at(0)).collect::<Vec<_>>(),
        ))
    } else {
        let rows = (0..steps)
            .map(|t| linalg::block_mean(&centers.iter().map(|c| c.at(t)).collect::<Vec<_>>()))
            .collect();
        ParamPath::Table(Arc::new(rows))
    };
    let losses = QuadraticAggregative::new(
        centers
            .into_iter()
            .zip(weights)
            .map(|(center, weight)| QuadraticAgent {
                weight,
                center,
                kappa: 1.0,
                reference: reference.clone(),
            })
            .collect(),
    );
    let set = ConvexSet::cap(SYNTHETIC_CAP, 2).expect("valid cap");
    ProblemSpec::new(
        vec![set; agents],
        vec![AggregationMap::identity(2); agents],
        2,
        Arc::new(losses),
        horizon,
    )
    .expect("synthetic problem is well formed")
}
