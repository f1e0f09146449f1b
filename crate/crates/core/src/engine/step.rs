use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{InitialPoint, SwarmState};
use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::network::WeightedDigraph;
use crate::problem::{
    matvec_t, noisy_gradient, noisy_jacobian, DrawSlot, NoiseModel, ProblemSpec, RngKey,
};

/// Gradient oracle used by a step: exact, or perturbed with keyed noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepMode {
    Deterministic,
    Stochastic { seed: u64, noise: NoiseModel },
}

impl StepMode {
    fn grad1(&self, spec: &ProblemSpec, i: usize, t: usize, x: &[f64], nu: &[f64]) -> Vec<f64> {
        let g = spec.losses().grad1(i, t, x, nu);
        match self {
            StepMode::Deterministic => g,
            StepMode::Stochastic { seed, noise } => {
                noisy_gradient(RngKey::new(*seed, t, i, DrawSlot::Grad1), noise, &g)
            }
        }
    }

    fn grad2(&self, spec: &ProblemSpec, i: usize, t: usize, x: &[f64], nu: &[f64]) -> Vec<f64> {
        let g = spec.losses().grad2(i, t, x, nu);
        match self {
            StepMode::Deterministic => g,
            StepMode::Stochastic { seed, noise } => {
                noisy_gradient(RngKey::new(*seed, t, i, DrawSlot::Grad2), noise, &g)
            }
        }
    }

    /// `∇ψᵢ(x)ᵀ y`, with a noisy Jacobian in stochastic mode.
    fn coupling(&self, spec: &ProblemSpec, i: usize, t: usize, x: &[f64], y: &[f64]) -> Vec<f64> {
        let map = &spec.psi()[i];
        match self {
            StepMode::Stochastic { seed, noise } if noise.sigma1 > 0.0 => {
                let key = RngKey::new(*seed, t, i, DrawSlot::GradPsi);
                let jac = noisy_jacobian(key, noise, &map.jacobian(x));
                matvec_t(&jac, y)
            }
            _ => map.apply_jacobian_transpose(x, y),
        }
    }
}

fn initial_blocks(spec: &ProblemSpec, initial: &InitialPoint) -> Result<Vec<Vec<f64>>> {
    let blocks = match initial {
        InitialPoint::Zeros => spec.dims().iter().map(|&d| vec![0.0; d]).collect(),
        InitialPoint::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            spec.sets()
                .iter()
                .map(|s| crate::problem::sample_in_set(s, &mut rng))
                .collect()
        }
        InitialPoint::Given(blocks) => {
            check_dim(spec.agents(), blocks.len(), "initial decision blocks")?;
            for (b, &d) in blocks.iter().zip(spec.dims()) {
                check_dim(d, b.len(), "initial decision block")?;
            }
            if blocks.iter().any(|b| !linalg::all_finite(b)) {
                return Err(Error::InvalidArgument("initial decisions must be finite".into()));
            }
            blocks.clone()
        }
    };
    Ok(spec.project_blocks(&blocks))
}

/// Round-0 state: `ν_{i,0} = ψᵢ(x_{i,0})`, `y_{i,0} = ∇₂f_{i,0}(x_{i,0}, ν_{i,0})`
/// (noisy in stochastic mode).
pub fn init_state(spec: &ProblemSpec, initial: &InitialPoint, mode: &StepMode) -> Result<SwarmState> {
    let x = initial_blocks(spec, initial)?;
    let nu: Vec<Vec<f64>> = x.iter().zip(spec.psi()).map(|(x, m)| m.value(x)).collect();
    let g2: Vec<Vec<f64>> = (0..spec.agents())
        .map(|i| mode.grad2(spec, i, 0, &x[i], &nu[i]))
        .collect();
    Ok(SwarmState {
        t: 0,
        x,
        nu,
        y: g2.clone(),
        g2,
    })
}

fn mix_row(graph: &WeightedDigraph, i: usize, values: &[Vec<f64>]) -> Vec<f64> {
    let mut acc = vec![0.0; values[0].len()];
    for (j, v) in values.iter().enumerate() {
        let a = graph.weight(i, j);
        if a != 0.0 {
            for (s, x) in acc.iter_mut().zip(v) {
                *s += a * x;
            }
        }
    }
    acc
}

fn descend(x: &[f64], dir: &[f64], alpha: f64) -> Vec<f64> {
    linalg::sub(x, &linalg::scale(dir, alpha))
}

type AgentNext = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

fn agent_update(
    spec: &ProblemSpec,
    graph: &WeightedDigraph,
    state: &SwarmState,
    alpha: f64,
    mode: &StepMode,
    i: usize,
) -> AgentNext {
    let t = state.t;
    let (x, nu, y) = (&state.x[i], &state.nu[i], &state.y[i]);
    let map = &spec.psi()[i];

    let g1 = mode.grad1(spec, i, t, x, nu);
    let dir = linalg::add(&g1, &mode.coupling(spec, i, t, x, y));
    let x_next = spec.sets()[i].project_unchecked(&descend(x, &dir, alpha));

    let nu_mix = mix_row(graph, i, &state.nu);
    let nu_next = linalg::add(&linalg::sub(&nu_mix, &map.value(x)), &map.value(&x_next));

    let g2_next = mode.grad2(spec, i, t + 1, &x_next, &nu_next);
    let y_mix = mix_row(graph, i, &state.y);
    let y_next = linalg::add(&linalg::sub(&y_mix, &state.g2[i]), &g2_next);

    (x_next, nu_next, y_next, g2_next)
}

fn check_step(spec: &ProblemSpec, graph: &WeightedDigraph, state: &SwarmState, alpha: f64) -> Result<()> {
    check_dim(spec.agents(), graph.agents(), "graph size")?;
    check_dim(spec.agents(), state.agents(), "state agents")?;
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "stepsize must be finite and nonnegative, got {alpha}"
        )));
    }
    Ok(())
}

/// One synchronous O-DGT round:
/// `x ← P_X[x − α(∇₁f + ∇ψᵀ y)]`, `ν ← Aν + ψ(x⁺) − ψ(x)`,
/// `y ← Ay + ∇₂f_{t+1}(x⁺, ν⁺) − ∇₂f_t(x, ν)`.
pub fn odgt_step(
    spec: &ProblemSpec,
    graph: &WeightedDigraph,
    state: &SwarmState,
    alpha: f64,
    mode: &StepMode,
    parallel: bool,
) -> Result<SwarmState> {
    check_step(spec, graph, state, alpha)?;
    let update = |i| agent_update(spec, graph, state, alpha, mode, i);
    let next: Vec<AgentNext> = if parallel {
        (0..spec.agents()).into_par_iter().map(update).collect()
    } else {
        (0..spec.agents()).map(update).collect()
    };
    let mut out = SwarmState {
        t: state.t + 1,
        x: Vec::with_capacity(next.len()),
        nu: Vec::with_capacity(next.len()),
        y: Vec::with_capacity(next.len()),
        g2: Vec::with_capacity(next.len()),
    };
    for (x, nu, y, g2) in next {
        out.x.push(x);
        out.nu.push(nu);
        out.y.push(y);
        out.g2.push(g2);
    }
    Ok(out)
}

/// `x_{t+1} = P_X(x_t − α ∇f_t(x_t))` on per-agent blocks.
pub fn centralized_pgd_step(spec: &ProblemSpec, t: usize, x: &[Vec<f64>], alpha: f64) -> Vec<Vec<f64>> {
    let grad = spec.centralized_gradient(t, x);
    x.iter()
        .zip(&grad)
        .zip(spec.sets())
        .map(|((x, g), set)| set.project_unchecked(&descend(x, g, alpha)))
        .collect()
}

/// The state a central coordinator would hold: every `νᵢ = ν(x)` and every
/// `yᵢ` the exact mean of `∇₂f`.
pub(crate) fn centralized_state(spec: &ProblemSpec, t: usize, x: Vec<Vec<f64>>) -> SwarmState {
    let nu = spec.aggregate_blocks(&x);
    let g2: Vec<Vec<f64>> = x
        .iter()
        .enumerate()
        .map(|(i, xi)| spec.losses().grad2(i, t, xi, &nu))
        .collect();
    let mean = linalg::block_mean(&g2);
    let n = x.len();
    SwarmState {
        t,
        x,
        nu: vec![nu; n],
        y: vec![mean; n],
        g2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::make_q_cyclic_schedule;
    use crate::network::GraphSchedule;
    use crate::problem::make_example1;

    #[test]
    fn example1_initial_state() {
        let spec = make_example1(10);
        let s = init_state(&spec, &InitialPoint::Zeros, &StepMode::Deterministic).unwrap();
        assert_eq!(s.nu, vec![vec![0.0], vec![0.0]]);
        assert_eq!(s.y, vec![vec![0.0], vec![0.0]]);
    }

    #[test]
    fn example1_first_step_by_hand() {
        let spec = make_example1(10);
        let g = WeightedDigraph::complete_uniform(2);
        let s0 = init_state(&spec, &InitialPoint::Zeros, &StepMode::Deterministic).unwrap();
        let s1 = odgt_step(&spec, &g, &s0, 1.0, &StepMode::Deterministic, false).unwrap();
        assert_eq!(s1.x, vec![vec![0.0], vec![4.0]]);
        assert_eq!(s1.nu[1], vec![4.0]);
        assert_eq!(s1.y[1], vec![32.0]);
        let c1 = centralized_pgd_step(&spec, 0, &s0.x, 1.0);
        assert_eq!(c1, vec![vec![0.0], vec![4.0]]);
    }

    #[test]
    fn centralized_fixed_point_and_zero_step() {
        let spec = make_example1(10);
        let star = vec![vec![-0.8], vec![1.2]];
        let next = centralized_pgd_step(&spec, 3, &star, 0.1);
        assert!(linalg::dist(&linalg::flatten(&next), &[-0.8, 1.2]) < 1e-12);
        let x = vec![vec![3.0], vec![-1.0]];
        assert_eq!(centralized_pgd_step(&spec, 0, &x, 0.0), x);
    }

    #[test]
    fn infeasible_start_is_projected() {
        let spec = make_example1(10);
        let s = init_state(
            &spec,
            &InitialPoint::Given(vec![vec![40.0], vec![-3.0]]),
            &StepMode::Deterministic,
        )
        .unwrap();
        assert_eq!(s.x, vec![vec![10.0], vec![-3.0]]);
        assert!(init_state(&spec, &InitialPoint::Given(vec![vec![0.0]]), &StepMode::Deterministic).is_err());
    }

    #[test]
    fn zero_noise_matches_deterministic() {
        let spec = crate::problem::make_quadratic_synthetic(4, 3, 1.0, 50);
        let sched = make_q_cyclic_schedule(4, 2, 1).unwrap();
        let quiet = StepMode::Stochastic {
            seed: 9,
            noise: NoiseModel::default(),
        };
        let init = InitialPoint::Random(2);
        let mut a = init_state(&spec, &init, &StepMode::Deterministic).unwrap();
        let mut b = init_state(&spec, &init, &quiet).unwrap();
        for t in 0..30 {
            let g = sched.graph_at(t);
            a = odgt_step(&spec, &g, &a, 0.3, &StepMode::Deterministic, false).unwrap();
            b = odgt_step(&spec, &g, &b, 0.3, &quiet, false).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn parallel_matches_serial() {
        let spec = crate::problem::make_quadratic_synthetic(12, 5, 1.0, 50);
        let sched = make_q_cyclic_schedule(12, 3, 4).unwrap();
        let mode = StepMode::Stochastic {
            seed: 1,
            noise: NoiseModel::from_variances(0.1, 0.1),
        };
        let mut a = init_state(&spec, &InitialPoint::Random(1), &mode).unwrap();
        let mut b = a.clone();
        for t in 0..20 {
            let g = sched.graph_at(t);
            a = odgt_step(&spec, &g, &a, 0.2, &mode, false).unwrap();
            b = odgt_step(&spec, &g, &b, 0.2, &mode, true).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_inputs() {
        let spec = make_example1(10);
        let s0 = init_state(&spec, &InitialPoint::Zeros, &StepMode::Deterministic).unwrap();
        let g3 = WeightedDigraph::identity(3);
        assert!(odgt_step(&spec, &g3, &s0, 1.0, &StepMode::Deterministic, false).is_err());
        let g2 = WeightedDigraph::identity(2);
        assert!(odgt_step(&spec, &g2, &s0, f64::NAN, &StepMode::Deterministic, false).is_err());
    }
}
