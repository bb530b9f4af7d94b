//! Student's t data-fit `f(x) = ψ(Ax − b)`, `ψ(y) = Σ log(1 + y_i²/ν)`.

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{invalid, Result};
use crate::linalg::LinearOperator;
use crate::problem::{HessianInfo, SmoothOracle};

/// Derivatives of `ψ` at `y` up to second order.
#[derive(Debug, Clone)]
pub struct PsiDerivatives {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess_diag: DVector<f64>,
}

pub fn psi_derivatives(y: &DVector<f64>, nu: f64) -> PsiDerivatives {
    let value = y.iter().map(|&v| (v * v / nu).ln_1p()).sum();
    let grad = y.map(|v| 2.0 * v / (nu + v * v));
    let hess_diag = y.map(|v| {
        let den = nu + v * v;
        2.0 * (nu - v * v) / (den * den)
    });
    PsiDerivatives {
        value,
        grad,
        hess_diag,
    }
}

#[derive(Debug, Clone)]
pub struct StudentTLoss {
    op: Arc<dyn LinearOperator>,
    b: DVector<f64>,
    nu: f64,
}

impl StudentTLoss {
    pub fn new(op: Arc<dyn LinearOperator>, b: DVector<f64>, nu: f64) -> Result<Self> {
        if !(nu > 0.0) || !nu.is_finite() {
            return invalid(format!("nu must be positive, got {nu}"));
        }
        if b.len() != op.nrows() {
            return invalid(format!(
                "b has length {} but the operator has {} rows",
                b.len(),
                op.nrows()
            ));
        }
        Ok(Self { op, b, nu })
    }

    pub fn op(&self) -> &Arc<dyn LinearOperator> {
        &self.op
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn op_norm_sq(&self) -> f64 {
        self.op.op_norm_sq()
    }

    /// `(2/ν)·‖A‖²`, from `|ψ″| ≤ 2/ν`.
    pub fn lipschitz_bound(&self) -> f64 {
        2.0 / self.nu * self.op_norm_sq()
    }

    pub fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        self.op.apply(x) - &self.b
    }

    /// `ψ` derivatives at the residual `Ax − b`.
    pub fn psi_at(&self, x: &DVector<f64>) -> PsiDerivatives {
        psi_derivatives(&self.residual(x), self.nu)
    }
}

impl SmoothOracle for StudentTLoss {
    fn dim(&self) -> usize {
        self.op.ncols()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let r = self.residual(x);
        r.iter().map(|&v| (v * v / self.nu).ln_1p()).sum()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.value_and_gradient(x).1
    }

    fn value_and_gradient(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let r = self.residual(x);
        let value = r.iter().map(|&v| (v * v / self.nu).ln_1p()).sum();
        let g = r.map(|v| 2.0 * v / (self.nu + v * v));
        (value, self.op.apply_adjoint(&g))
    }

    fn hessian_info(&self, x: &DVector<f64>) -> HessianInfo {
        let psi = self.psi_at(x);
        HessianInfo::diagonal_composite(psi.hess_diag, self.op.clone()).with_outer_grad(psi.grad)
    }

    fn value_change(&self, x: &DVector<f64>, s: &DVector<f64>) -> f64 {
        // log((ν + (r+δ)²)/(ν + r²)) = log1p(δ(2r + δ)/(ν + r²))
        let r = self.residual(x);
        let delta = self.op.apply(s);
        r.iter()
            .zip(delta.iter())
            .map(|(&ri, &di)| (di * (2.0 * ri + di) / (self.nu + ri * ri)).ln_1p())
            .sum()
    }
}

/// Wraps the loss as a shareable smooth oracle.
pub fn smooth_oracle_from(loss: StudentTLoss) -> Arc<dyn SmoothOracle> {
    Arc::new(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseOperator;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn psi_at_origin_and_inflection() {
        let nu = 0.25;
        let p = psi_derivatives(&DVector::zeros(3), nu);
        assert_eq!(p.value, 0.0);
        assert_eq!(p.grad, DVector::zeros(3));
        assert!(p.hess_diag.iter().all(|&h| (h - 2.0 / nu).abs() < 1e-15));
        let q = psi_derivatives(&DVector::from_vec(vec![nu.sqrt()]), nu);
        assert!(q.hess_diag[0].abs() < 1e-15);
    }

    #[test]
    fn psi_grad_fd() {
        let nu = 0.25;
        let y = DVector::from_vec(vec![1.0]);
        let p = psi_derivatives(&y, nu);
        assert!((p.grad[0] - 1.6).abs() < 1e-15);
        let h = 1e-6;
        let fd = (psi_derivatives(&DVector::from_vec(vec![1.0 + h]), nu).value
            - psi_derivatives(&DVector::from_vec(vec![1.0 - h]), nu).value)
            / (2.0 * h);
        assert!((fd - 1.6).abs() < 1e-6);
    }

    #[test]
    fn hess_diag_fd_and_bound() {
        let nu = 0.3;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let v: f64 = rng.random_range(-4.0..4.0);
            let p = psi_derivatives(&DVector::from_vec(vec![v]), nu);
            let h = 1e-6;
            let fd = (psi_derivatives(&DVector::from_vec(vec![v + h]), nu).grad[0]
                - psi_derivatives(&DVector::from_vec(vec![v - h]), nu).grad[0])
                / (2.0 * h);
            assert!((fd - p.hess_diag[0]).abs() < 1e-5);
            assert!(p.hess_diag[0].abs() <= 2.0 / nu + 1e-12);
        }
    }

    fn dense_loss(seed: u64) -> StudentTLoss {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(4, 6, |_, _| rng.random_range(-1.0..1.0));
        let b = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        StudentTLoss::new(Arc::new(DenseOperator::new(a)), b, 0.25).unwrap()
    }

    #[test]
    fn gradient_matches_fd() {
        let loss = dense_loss(4);
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let x = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let g = loss.gradient(&x);
        let h = 1e-6;
        for i in 0..6 {
            let mut e = DVector::zeros(6);
            e[i] = h;
            let fd = (loss.value(&(&x + &e)) - loss.value(&(&x - &e))) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 * g.norm().max(1.0));
        }
    }

    #[test]
    fn value_change_matches_difference() {
        let loss = dense_loss(12);
        let mut rng = ChaCha8Rng::seed_from_u64(120);
        for _ in 0..50 {
            let x = DVector::from_fn(6, |_, _| rng.random_range(-2.0..2.0));
            let s = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
            let direct = loss.value(&(&x + &s)) - loss.value(&x);
            assert!((loss.value_change(&x, &s) - direct).abs() < 1e-11);
        }
        // Tiny steps keep relative accuracy where the plain difference cannot.
        let x = DVector::from_element(6, 0.7);
        let s = DVector::from_element(6, 1e-13);
        let g = loss.gradient(&x);
        assert!((loss.value_change(&x, &s) - g.dot(&s)).abs() <= 1e-6 * g.dot(&s).abs());
    }

    #[test]
    fn zero_residual_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = DMatrix::from_fn(3, 5, |_, _| rng.random_range(-1.0..1.0));
        let x = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
        let b = &a * &x;
        let loss = StudentTLoss::new(Arc::new(DenseOperator::new(a)), b, 0.5).unwrap();
        assert!(loss.gradient(&x).norm() < 1e-14);
        assert!(loss.value(&x).abs() < 1e-28);
    }

    #[test]
    fn nonconvexity_witness() {
        let loss = dense_loss(6);
        let x = DVector::from_element(6, 3.0);
        let info = loss.hessian_info(&x);
        assert!(info.lambda_min_lower_bound < 0.0);
    }

    #[test]
    fn lipschitz_certificate() {
        let loss = dense_loss(8);
        let l = loss.lipschitz_bound();
        let mut rng = ChaCha8Rng::seed_from_u64(80);
        for _ in 0..100 {
            let x = DVector::from_fn(6, |_, _| rng.random_range(-3.0..3.0));
            let y = DVector::from_fn(6, |_, _| rng.random_range(-3.0..3.0));
            let lhs = (loss.gradient(&x) - loss.gradient(&y)).norm();
            assert!(lhs <= l * (&x - &y).norm() * (1.0 + 1e-9));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let op: Arc<dyn LinearOperator> = Arc::new(DenseOperator::new(DMatrix::zeros(2, 3)));
        assert!(StudentTLoss::new(op.clone(), DVector::zeros(3), 1.0).is_err());
        assert!(StudentTLoss::new(op, DVector::zeros(2), 0.0).is_err());
    }
}
