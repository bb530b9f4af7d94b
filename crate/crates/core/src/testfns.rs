//! Small smooth test functions with dense Hessians.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::problem::{HessianInfo, SmoothOracle};

/// `f(x) = ½ (x − s)ᵀ Q (x − s)` with `Q` symmetric.
#[derive(Debug, Clone)]
pub struct Quadratic {
    q: DMatrix<f64>,
    center: DVector<f64>,
}

impl Quadratic {
    pub fn new(q: DMatrix<f64>, center: DVector<f64>) -> Result<Self> {
        if !q.is_square() || q.nrows() != center.len() {
            return invalid("quadratic: Q must be square and match the center length");
        }
        Ok(Self { q, center })
    }

    /// `½‖x − s‖²`.
    pub fn isotropic(center: DVector<f64>) -> Self {
        let n = center.len();
        Self {
            q: DMatrix::identity(n, n),
            center,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }
}

impl SmoothOracle for Quadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.center;
        0.5 * d.dot(&(&self.q * &d))
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.q * (x - &self.center)
    }

    fn hessian_info(&self, _x: &DVector<f64>) -> HessianInfo {
        HessianInfo::dense(self.q.clone())
    }

    fn value_change(&self, x: &DVector<f64>, s: &DVector<f64>) -> f64 {
        let qs = &self.q * s;
        (x - &self.center).dot(&qs) + 0.5 * s.dot(&qs)
    }
}

/// `f(x) = (1 − x₀)² + 100 (x₁ − x₀²)²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Rosenbrock;

impl SmoothOracle for Rosenbrock {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let t = x[1] - x[0] * x[0];
        DVector::from_vec(vec![-2.0 * (1.0 - x[0]) - 400.0 * x[0] * t, 200.0 * t])
    }

    fn hessian_info(&self, x: &DVector<f64>) -> HessianInfo {
        let h = DMatrix::from_row_slice(
            2,
            2,
            &[
                2.0 - 400.0 * x[1] + 1200.0 * x[0] * x[0],
                -400.0 * x[0],
                -400.0 * x[0],
                200.0,
            ],
        );
        HessianInfo::dense(h)
    }

    fn value_change(&self, x: &DVector<f64>, s: &DVector<f64>) -> f64 {
        let (a, p, q) = (x[0], s[0], s[1]);
        let t = x[1] - a * a;
        let dt = q - 2.0 * a * p - p * p;
        p * (p - 2.0 * (1.0 - a)) + 100.0 * dt * (2.0 * t + dt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock_derivatives_fd() {
        let f = Rosenbrock;
        let x = DVector::from_vec(vec![-1.2, 1.0]);
        let g = f.gradient(&x);
        let h = 1e-6;
        for i in 0..2 {
            let mut e = DVector::zeros(2);
            e[i] = h;
            let fd = (f.value(&(&x + &e)) - f.value(&(&x - &e))) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 * g.norm());
        }
        let info = f.hessian_info(&x);
        let e0 = DVector::from_vec(vec![1.0, 0.0]);
        let fd = (f.gradient(&(&x + &e0 * h)) - f.gradient(&(&x - &e0 * h))) / (2.0 * h);
        assert!((fd - info.apply(&e0)).norm() < 1e-4);
    }

    #[test]
    fn value_changes_match_differences() {
        let x = DVector::from_vec(vec![-1.2, 1.0]);
        let s = DVector::from_vec(vec![0.3, -0.7]);
        let r = Rosenbrock;
        let direct = r.value(&(&x + &s)) - r.value(&x);
        assert!((r.value_change(&x, &s) - direct).abs() < 1e-10 * direct.abs().max(1.0));
        let q = Quadratic::new(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            DVector::from_vec(vec![1.0, -1.0]),
        )
        .unwrap();
        let direct = q.value(&(&x + &s)) - q.value(&x);
        assert!((q.value_change(&x, &s) - direct).abs() < 1e-12);
    }
}
