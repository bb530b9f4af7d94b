//! Matrix-free linear operators and the Krylov helpers built on them.

use std::fmt::Debug;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};

/// An `m x n` linear map with forward and adjoint application.
pub trait LinearOperator: Debug + Send + Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, x: &DVector<f64>) -> DVector<f64>;
    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64>;
    /// `‖A‖²` (spectral norm squared), exact or estimated at construction.
    fn op_norm_sq(&self) -> f64;
}

/// Dense matrix wrapped as a [`LinearOperator`]. The squared norm is estimated
/// once at construction with 50 power iterations.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    matrix: DMatrix<f64>,
    norm_sq: f64,
}

impl DenseOperator {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        let n = matrix.ncols();
        let norm_sq = power_iteration(
            |x| matrix.tr_mul(&(&matrix * x)),
            n,
            50,
            1e-10,
        );
        Self { matrix, norm_sq }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl LinearOperator for DenseOperator {
    fn nrows(&self) -> usize {
        self.matrix.nrows()
    }
    fn ncols(&self) -> usize {
        self.matrix.ncols()
    }
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x
    }
    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        self.matrix.tr_mul(y)
    }
    fn op_norm_sq(&self) -> f64 {
        self.norm_sq
    }
}

/// Deterministic start vector for power iteration. Not orthogonal to any
/// coordinate axis, and varied enough to avoid the all-ones null directions
/// of difference-type operators.
pub(crate) fn power_start(n: usize) -> DVector<f64> {
    let v = DVector::from_fn(n, |i, _| 1.0 + 0.5 * ((i as f64) * 0.7 + 0.3).sin());
    let nrm = v.norm();
    if nrm > 0.0 {
        v / nrm
    } else {
        v
    }
}

/// Largest-magnitude eigenvalue estimate of a symmetric operator.
///
/// Stops after `iters` steps or when the relative change of the estimate
/// drops below `tol`.
pub fn power_iteration(
    apply: impl Fn(&DVector<f64>) -> DVector<f64>,
    n: usize,
    iters: usize,
    tol: f64,
) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut x = power_start(n);
    let mut est = 0.0;
    for _ in 0..iters {
        let y = apply(&x);
        let nrm = y.norm();
        if nrm == 0.0 || !nrm.is_finite() {
            return if nrm.is_finite() { 0.0 } else { f64::INFINITY };
        }
        let converged = (nrm - est).abs() <= tol * nrm;
        est = nrm;
        x = y / nrm;
        if converged {
            break;
        }
    }
    est
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: DVector<f64>,
    pub iters: usize,
    /// Norm of the recursively updated residual `rhs - A x`.
    pub residual_norm: f64,
}

/// Conjugate gradients for `A x = rhs` with `A` symmetric positive definite,
/// started from zero.
///
/// `done(x, ‖r‖)` is consulted before every iteration (including the zero
/// start); the loop also exits on `max_iters` or on breakdown (`pᵀAp ≤ 0`
/// or stagnation), returning the current iterate either way.
pub fn conjugate_gradient(
    apply: impl Fn(&DVector<f64>) -> DVector<f64>,
    rhs: &DVector<f64>,
    max_iters: usize,
    mut done: impl FnMut(&DVector<f64>, f64) -> bool,
) -> CgOutcome {
    let n = rhs.len();
    let mut x = DVector::zeros(n);
    let mut r = rhs.clone();
    let mut rr = r.norm_squared();
    let mut p = r.clone();
    let mut iters = 0;
    while iters < max_iters {
        if done(&x, rr.sqrt()) {
            break;
        }
        let ap = apply(&p);
        let pap = p.dot(&ap);
        if pap <= 0.0 || !pap.is_finite() {
            break;
        }
        let alpha = rr / pap;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        let rr_new = r.norm_squared();
        iters += 1;
        if rr_new == 0.0 {
            rr = 0.0;
            break;
        }
        let beta = rr_new / rr;
        rr = rr_new;
        p *= beta;
        p += &r;
    }
    CgOutcome {
        x,
        iters,
        residual_norm: rr.sqrt(),
    }
}

pub(crate) fn check_len(v: &DVector<f64>, n: usize, what: &str) -> Result<()> {
    if v.len() != n {
        return invalid(format!("{what}: expected length {n}, got {}", v.len()));
    }
    Ok(())
}
