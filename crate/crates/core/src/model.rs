//! Model Hessians `H = B + ridge·I` with `B = curvature + shift·I ⪰ 0`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::linalg::{power_iteration, LinearOperator};
use crate::problem::DENSE_EIGEN_LIMIT;

#[derive(Debug, Clone)]
pub enum Curvature {
    /// `Aᵀ diag(w) A`.
    Composite {
        op: Arc<dyn LinearOperator>,
        weights: DVector<f64>,
    },
    Dense(DMatrix<f64>),
    Zero,
}

#[derive(Debug, Clone)]
pub struct ModelHessian {
    pub dim: usize,
    pub curvature: Curvature,
    /// Multiple of the identity folded into `B`.
    pub shift: f64,
    /// Multiple of the identity added on top of `B`.
    pub ridge: f64,
}

impl ModelHessian {
    pub fn apply_curvature(&self, w: &DVector<f64>) -> DVector<f64> {
        match &self.curvature {
            Curvature::Composite { op, weights } => {
                op.apply_adjoint(&op.apply(w).component_mul(weights))
            }
            Curvature::Dense(m) => m * w,
            Curvature::Zero => DVector::zeros(w.len()),
        }
    }

    /// `B w`.
    pub fn apply_b(&self, w: &DVector<f64>) -> DVector<f64> {
        self.apply_curvature(w) + w * self.shift
    }

    /// `H w`.
    pub fn apply(&self, w: &DVector<f64>) -> DVector<f64> {
        self.apply_curvature(w) + w * (self.shift + self.ridge)
    }

    /// A rigorous upper bound on `‖B‖`.
    pub fn b_norm_upper_bound(&self) -> f64 {
        match &self.curvature {
            Curvature::Composite { op, weights } => {
                let wmax = weights.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                wmax * op.op_norm_sq() + self.shift.abs()
            }
            Curvature::Dense(m) => {
                if m.nrows() <= DENSE_EIGEN_LIMIT {
                    let sym = (m + m.transpose()) * 0.5;
                    sym.symmetric_eigenvalues()
                        .iter()
                        .fold(0.0f64, |a, &v| a.max((v + self.shift).abs()))
                } else {
                    m.norm() + self.shift.abs()
                }
            }
            Curvature::Zero => self.shift.abs(),
        }
    }

    /// A rigorous upper bound on `‖H‖`.
    pub fn norm_upper_bound(&self) -> f64 {
        self.b_norm_upper_bound() + self.ridge.abs()
    }

    /// Power-iteration estimate of `‖B‖`.
    pub fn b_norm_estimate(&self, iters: usize) -> f64 {
        if matches!(self.curvature, Curvature::Zero) {
            return self.shift.abs();
        }
        power_iteration(|w| self.apply_b(w), self.dim, iters, 1e-8)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseOperator;

    #[test]
    fn bounds_dominate_true_norm() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, -1.0, 0.5, 3.0]);
        let w = DVector::from_vec(vec![0.5, 2.0]);
        let h = ModelHessian {
            dim: 3,
            curvature: Curvature::Composite {
                op: Arc::new(DenseOperator::new(a.clone())),
                weights: w.clone(),
            },
            shift: 0.1,
            ridge: 0.3,
        };
        let b = a.transpose() * DMatrix::from_diagonal(&w) * &a + DMatrix::identity(3, 3) * 0.1;
        let exact = b.symmetric_eigenvalues().max();
        assert!(h.b_norm_upper_bound() >= exact * (1.0 - 1e-9));
        assert!((h.b_norm_estimate(200) - exact).abs() < 1e-6 * exact);
        let e = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        assert!((h.apply(&e) - (&b * &e + &e * 0.3)).norm() < 1e-12);
    }

    #[test]
    fn dense_bound_is_exact() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, -3.0]);
        let h = ModelHessian {
            dim: 2,
            curvature: Curvature::Dense(m.clone()),
            shift: 3.5,
            ridge: 0.0,
        };
        let exact = (m + DMatrix::identity(2, 2) * 3.5).symmetric_eigenvalues().abs().max();
        assert!((h.b_norm_upper_bound() - exact).abs() < 1e-12);
    }
}
