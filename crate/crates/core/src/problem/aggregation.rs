use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::geometry::ConvexSet;

/// A user-supplied smooth aggregation map `ψ: ℝⁿ → ℝᵈ` with its Jacobian.
pub trait SmoothAggregation: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> Vec<f64>;
    /// `d × n` Jacobian at `x`.
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64>;
    /// Declared bound on the Jacobian's spectral norm over the feasible set.
    fn jacobian_bound(&self) -> f64;
    /// Declared Lipschitz constant of the Jacobian.
    fn jacobian_lipschitz(&self) -> f64;
}

/// Maps an agent's decision into the aggregation space. The aggregate is the
/// mean of these images over all agents.
#[derive(Clone)]
pub enum AggregationMap {
    Identity { dim: usize },
    Linear { matrix: DMatrix<f64> },
    Smooth(Arc<dyn SmoothAggregation>),
}

impl fmt::Debug for AggregationMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AggregationMap::Identity { dim } => write!(f, "Identity({dim})"),
            AggregationMap::Linear { matrix } => {
                write!(f, "Linear({}x{})", matrix.nrows(), matrix.ncols())
            }
            AggregationMap::Smooth(m) => {
                write!(f, "Smooth({}->{})", m.input_dim(), m.output_dim())
            }
        }
    }
}

impl AggregationMap {
    pub fn identity(dim: usize) -> Self {
        AggregationMap::Identity { dim }
    }

    /// Linear map from a `d × n` matrix given row-major.
    pub fn linear(rows: usize, cols: usize, row_major: &[f64]) -> Result<Self> {
        check_dim(rows * cols, row_major.len(), "linear aggregation matrix")?;
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument("empty aggregation matrix".into()));
        }
        Ok(AggregationMap::Linear {
            matrix: DMatrix::from_row_slice(rows, cols, row_major),
        })
    }

    pub fn input_dim(&self) -> usize {
        match self {
            AggregationMap::Identity { dim } => *dim,
            AggregationMap::Linear { matrix } => matrix.ncols(),
            AggregationMap::Smooth(m) => m.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            AggregationMap::Identity { dim } => *dim,
            AggregationMap::Linear { matrix } => matrix.nrows(),
            AggregationMap::Smooth(m) => m.output_dim(),
        }
    }

    pub fn is_affine(&self) -> bool {
        !matches!(self, AggregationMap::Smooth(_))
    }

    pub fn value(&self, x: &[f64]) -> Vec<f64> {
        match self {
            AggregationMap::Identity { .. } => x.to_vec(),
            AggregationMap::Linear { matrix } => matvec(matrix, x),
            AggregationMap::Smooth(m) => m.value(x),
        }
    }

    /// `d × n` Jacobian.
    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        match self {
            AggregationMap::Identity { dim } => DMatrix::identity(*dim, *dim),
            AggregationMap::Linear { matrix } => matrix.clone(),
            AggregationMap::Smooth(m) => m.jacobian(x),
        }
    }

    /// `J(x)ᵀ y`, an `n`-vector.
    pub fn apply_jacobian_transpose(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        match self {
            AggregationMap::Identity { .. } => y.to_vec(),
            AggregationMap::Linear { matrix } => matvec_t(matrix, y),
            AggregationMap::Smooth(m) => matvec_t(&m.jacobian(x), y),
        }
    }

    /// Bound on `‖J‖₂` over the feasible set.
    pub fn jacobian_bound(&self) -> f64 {
        match self {
            AggregationMap::Identity { .. } => 1.0,
            AggregationMap::Linear { matrix } => spectral_norm(matrix),
            AggregationMap::Smooth(m) => m.jacobian_bound(),
        }
    }

    pub fn jacobian_lipschitz(&self) -> f64 {
        match self {
            AggregationMap::Identity { .. } | AggregationMap::Linear { .. } => 0.0,
            AggregationMap::Smooth(m) => m.jacobian_lipschitz(),
        }
    }

    /// Bound on `‖ψ(x)‖` over `set`. Exact composition for affine maps,
    /// `‖ψ(0)‖ + G_ψ·B` otherwise.
    pub fn image_bound(&self, set: &ConvexSet) -> f64 {
        let b = set.diameter_bound();
        match self {
            AggregationMap::Identity { .. } => b,
            AggregationMap::Linear { matrix } => spectral_norm(matrix) * b,
            AggregationMap::Smooth(m) => {
                let origin = vec![0.0; m.input_dim()];
                crate::linalg::norm(&m.value(&origin)) + m.jacobian_bound() * b
            }
        }
    }

    /// Largest deviation between the Jacobian and central differences of
    /// `value` at `x`, per entry.
    pub fn jacobian_fd_error(&self, x: &[f64], h: f64) -> f64 {
        let jac = self.jacobian(x);
        let mut worst: f64 = 0.0;
        let mut probe = x.to_vec();
        for col in 0..x.len() {
            probe[col] = x[col] + h;
            let plus = self.value(&probe);
            probe[col] = x[col] - h;
            let minus = self.value(&probe);
            probe[col] = x[col];
            for row in 0..jac.nrows() {
                let fd = (plus[row] - minus[row]) / (2.0 * h);
                worst = worst.max((fd - jac[(row, col)]).abs());
            }
        }
        worst
    }
}

pub(crate) fn matvec(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)] * x[c]).sum())
        .collect()
}

pub(crate) fn matvec_t(m: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    (0..m.ncols())
        .map(|c| (0..m.nrows()).map(|r| m[(r, c)] * y[r]).sum())
        .collect()
}

pub(crate) fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct SoftSquash;

    // ψ(x) = (tanh x₀, x₀·x₁/10)
    impl SmoothAggregation for SoftSquash {
        fn input_dim(&self) -> usize {
            2
        }
        fn output_dim(&self) -> usize {
            2
        }
        fn value(&self, x: &[f64]) -> Vec<f64> {
            vec![x[0].tanh(), x[0] * x[1] / 10.0]
        }
        fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
            let s = 1.0 - x[0].tanh().powi(2);
            DMatrix::from_row_slice(2, 2, &[s, 0.0, x[1] / 10.0, x[0] / 10.0])
        }
        fn jacobian_bound(&self) -> f64 {
            2.0
        }
        fn jacobian_lipschitz(&self) -> f64 {
            1.0
        }
    }

    #[test]
    fn linear_map_and_transpose() {
        let m = AggregationMap::linear(1, 2, &[1.0, 2.0]).unwrap();
        assert_eq!(m.value(&[3.0, 4.0]), vec![11.0]);
        assert_eq!(m.apply_jacobian_transpose(&[0.0, 0.0], &[2.0]), vec![2.0, 4.0]);
        assert!((m.jacobian_bound() - 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn identity_transpose_is_exact() {
        let m = AggregationMap::identity(2);
        assert_eq!(m.apply_jacobian_transpose(&[9.0, 9.0], &[0.1, 0.2]), vec![0.1, 0.2]);
        assert_eq!(m.jacobian_lipschitz(), 0.0);
    }

    #[test]
    fn smooth_jacobian_matches_differences() {
        let m = AggregationMap::Smooth(Arc::new(SoftSquash));
        for x in [[0.3, -1.2], [1.5, 2.0], [-0.7, 0.4]] {
            assert!(m.jacobian_fd_error(&x, 1e-6) < 1e-7);
        }
        assert!(!m.is_affine());
    }
}
