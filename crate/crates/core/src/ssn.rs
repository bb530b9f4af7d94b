//! Semismooth Newton method on the dual of the proximal Newton subproblem for
//! `f = ψ(Ax − b)` with separable `ψ`.
//!
//! The model Hessian is `H = A_kᵀA_k + μ̂I` with `A_k = diag(√(D+ρ))A`, where
//! `D = ψ″(Ax_k − b)` and `ρ ≥ 0` lifts the weights to be positive. With
//! `b_k = A_k x_k` and `g_k = (D+ρ)^{-1/2}∇ψ(Ax_k − b)`, the dual function is
//!
//! ```text
//! Φ(z) = ½‖z − g_k‖² + ‖A_kᵀz‖²/(2μ̂) − e(x_k − A_kᵀz/μ̂)
//! ∇Φ(z) = −A_k prox_{g/μ̂}(x_k − A_kᵀz/μ̂) + z + b_k − g_k
//! ```
//!
//! with `e` the Moreau envelope of `g` at parameter `1/μ̂`. Internally the
//! iteration runs in `w = z − g_k` and evaluates everything through the
//! regularizer's anchored displacement, so that residuals near the solution
//! are accurate relative to their own size instead of to `‖x_k‖`.

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SolverError};
use crate::linalg::{check_len, conjugate_gradient, LinearOperator};
use crate::problem::{ClarkeElement, Regularizer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsnConfig {
    /// Armijo constant γ.
    pub gamma: f64,
    /// Cap β̄ on the CG tolerance.
    pub beta_bar: f64,
    /// Exponent β̂ in `‖∇Φ‖^{1+β̂}`.
    pub beta_hat: f64,
    /// Backtracking factor β̃.
    pub beta_tilde: f64,
    pub eps_bar_0: f64,
    pub max_iters: usize,
    pub cg_max_iters: usize,
    pub armijo_max: usize,
    /// Also stop (uncertified) once `‖∇Φ‖` falls below this.
    pub grad_tol: Option<f64>,
}

impl Default for SsnConfig {
    fn default() -> Self {
        Self {
            gamma: 1e-4,
            beta_bar: 0.5,
            beta_hat: 0.3,
            beta_tilde: 0.8,
            eps_bar_0: 10.0,
            max_iters: 50,
            cg_max_iters: 200,
            armijo_max: 60,
            grad_tol: None,
        }
    }
}

impl SsnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 0.5) {
            return invalid(format!("ssn gamma must lie in (0, 1/2), got {}", self.gamma));
        }
        if !(self.beta_bar > 0.0 && self.beta_bar < 1.0) {
            return invalid(format!("ssn beta_bar must lie in (0, 1), got {}", self.beta_bar));
        }
        if !(self.beta_hat > 0.0 && self.beta_hat <= 1.0) {
            return invalid(format!("ssn beta_hat must lie in (0, 1], got {}", self.beta_hat));
        }
        if !(self.beta_tilde > 0.0 && self.beta_tilde < 1.0) {
            return invalid(format!("ssn beta_tilde must lie in (0, 1), got {}", self.beta_tilde));
        }
        if !(self.eps_bar_0 > 0.0) {
            return invalid("ssn eps_bar_0 must be positive");
        }
        if self.max_iters == 0 || self.cg_max_iters == 0 {
            return invalid("ssn iteration caps must be positive");
        }
        Ok(())
    }
}

/// Output of an inner solve together with its inexactness certificate.
///
/// `epsilon` is the vector `ε` with `0 ∈ ∂q(x̂) + ε`; `residual_norm = ‖ε‖`
/// and `bound` is the right-hand side of the accuracy test it was checked
/// against.
#[derive(Debug, Clone)]
pub struct SubproblemCertificate {
    pub x_hat: DVector<f64>,
    /// `x̂ − x_k`, computed without cancellation.
    pub step: DVector<f64>,
    /// Dual solution, when the solver is dual.
    pub z_hat: Option<DVector<f64>>,
    pub epsilon: DVector<f64>,
    pub residual_norm: f64,
    pub bound: f64,
    /// `residual_norm ≤ bound`.
    pub certified: bool,
    pub inner_iters: usize,
    pub cg_total: usize,
    /// CG solves whose true residual missed the requested tolerance.
    pub cg_contract_misses: usize,
    /// Iterations whose Newton direction was replaced by `−∇Φ`.
    pub descent_fallbacks: usize,
    /// Unit steps accepted because the Armijo difference was at roundoff level.
    pub roundoff_steps: usize,
    /// Dual values along the iterates (up to an additive constant for the
    /// roundoff-accepted steps).
    pub dual_trace: Vec<f64>,
}

/// Data of one dual subproblem.
#[derive(Debug, Clone)]
pub struct SsnSubproblem {
    op: Arc<dyn LinearOperator>,
    scale: DVector<f64>,
    rho: f64,
    mu_hat: f64,
    x_k: DVector<f64>,
    g_k: DVector<f64>,
    b_k: DVector<f64>,
    grad_f: DVector<f64>,
    // ∇f(x_k) + ξ with ξ the anchor subgradient at x_k
    reduced: DVector<f64>,
    reg: Arc<dyn Regularizer>,
}

struct DualPoint {
    r: DVector<f64>,
    d: DVector<f64>,
    grad: DVector<f64>,
    // Φ + g(x_k)
    value: f64,
    // Sum of magnitudes of the terms of `value`, for roundoff tests.
    magnitude: f64,
}

impl SsnSubproblem {
    /// `hess_diag = ψ″(Ax_k − b)`, `outer_grad = ∇ψ(Ax_k − b)`. The lift is
    /// `ρ = 0` if `min D > 0` and `c/2 − min D` otherwise.
    pub fn new(
        op: Arc<dyn LinearOperator>,
        hess_diag: &DVector<f64>,
        outer_grad: &DVector<f64>,
        x_k: DVector<f64>,
        mu_hat: f64,
        c: f64,
        reg: Arc<dyn Regularizer>,
    ) -> Result<Self> {
        let dmin = hess_diag.iter().cloned().fold(f64::INFINITY, f64::min);
        let rho = if hess_diag.is_empty() || dmin > 0.0 {
            0.0
        } else {
            c / 2.0 - dmin
        };
        Self::with_lift(op, hess_diag, outer_grad, x_k, mu_hat, rho, reg)
    }

    /// Same as [`Self::new`] with an explicit lift `ρ`; requires `D + ρ > 0`.
    pub fn with_lift(
        op: Arc<dyn LinearOperator>,
        hess_diag: &DVector<f64>,
        outer_grad: &DVector<f64>,
        x_k: DVector<f64>,
        mu_hat: f64,
        rho: f64,
        reg: Arc<dyn Regularizer>,
    ) -> Result<Self> {
        let m = op.nrows();
        check_len(hess_diag, m, "ssn hessian diagonal")?;
        check_len(outer_grad, m, "ssn outer gradient")?;
        check_len(&x_k, op.ncols(), "ssn base point")?;
        if !(mu_hat > 0.0) || !mu_hat.is_finite() {
            return invalid(format!("ssn needs a positive ridge, got {mu_hat}"));
        }
        if !(rho >= 0.0) {
            return invalid(format!("ssn lift must be nonnegative, got {rho}"));
        }
        let weights = hess_diag.add_scalar(rho);
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return invalid("ssn weights D + rho must be positive and finite");
        }
        let scale = weights.map(f64::sqrt);
        let g_k = outer_grad.component_div(&scale);
        let b_k = op.apply(&x_k).component_mul(&scale);
        let grad_f = op.apply_adjoint(outer_grad);
        let reduced = &grad_f + reg.anchor_subgradient(&x_k);
        Ok(Self {
            op,
            scale,
            rho,
            mu_hat,
            x_k,
            g_k,
            b_k,
            grad_f,
            reduced,
            reg,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn mu_hat(&self) -> f64 {
        self.mu_hat
    }

    pub fn x_k(&self) -> &DVector<f64> {
        &self.x_k
    }

    pub fn g_k(&self) -> &DVector<f64> {
        &self.g_k
    }

    pub fn b_k(&self) -> &DVector<f64> {
        &self.b_k
    }

    /// `∇f(x_k) = A_kᵀ g_k`.
    pub fn grad_f(&self) -> &DVector<f64> {
        &self.grad_f
    }

    pub fn dual_dim(&self) -> usize {
        self.op.nrows()
    }

    /// `A_k x`.
    pub fn apply_ak(&self, x: &DVector<f64>) -> DVector<f64> {
        self.op.apply(x).component_mul(&self.scale)
    }

    /// `A_kᵀ z`.
    pub fn apply_ak_t(&self, z: &DVector<f64>) -> DVector<f64> {
        self.op.apply_adjoint(&z.component_mul(&self.scale))
    }

    /// `H w = A_kᵀA_k w + μ̂ w`.
    pub fn apply_h(&self, w: &DVector<f64>) -> DVector<f64> {
        self.apply_ak_t(&self.apply_ak(w)) + w * self.mu_hat
    }

    /// Subproblem objective minus `f(x_k)`:
    /// `⟨∇f_k, x − x_k⟩ + ½(x − x_k)ᵀH(x − x_k) + g(x)`.
    pub fn model_value(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.x_k;
        self.grad_f.dot(&d) + 0.5 * d.dot(&self.apply_h(&d)) + self.reg.value(x)
    }

    /// `x(z) = prox_{g/μ̂}(x_k − A_kᵀz/μ̂)`.
    pub fn primal_of(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let v = &self.x_k - self.apply_ak_t(z) / self.mu_hat;
        self.reg.prox(&v, 1.0 / self.mu_hat)
    }

    fn evaluate(&self, w: &DVector<f64>) -> Result<DualPoint> {
        let t = 1.0 / self.mu_hat;
        let r = &self.reduced + self.apply_ak_t(w);
        let d = self.reg.prox_displacement(&self.x_k, &r, t)?;
        let grad = w - self.apply_ak(&d);
        let ww = 0.5 * w.norm_squared();
        let breg = self.reg.bregman_gap(&self.x_k, &d);
        let dd = 0.5 * self.mu_hat * d.norm_squared();
        let dr = d.dot(&r);
        let value = ww - breg - dd - dr;
        if !value.is_finite() || grad.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::OracleFailure("non-finite dual evaluation".into()));
        }
        Ok(DualPoint {
            r,
            d,
            grad,
            value,
            magnitude: ww + breg.abs() + dd + dr.abs(),
        })
    }

    fn newton_element(&self, point: &DualPoint) -> ClarkeElement {
        let t = 1.0 / self.mu_hat;
        let xi = self.reg.anchor_subgradient(&self.x_k);
        let v = &self.x_k - (&point.r - xi) * t;
        self.reg.clarke_element(&v, t)
    }

    /// `V s = s + A_k U A_kᵀ s / μ̂`.
    fn apply_v_with(&self, u: &ClarkeElement, s: &DVector<f64>) -> DVector<f64> {
        s + self.apply_ak(&u.apply(&self.apply_ak_t(s))) / self.mu_hat
    }
}

/// `∇Φ(z)`.
pub fn dual_grad(sub: &SsnSubproblem, z: &DVector<f64>) -> Result<DVector<f64>> {
    check_len(z, sub.dual_dim(), "dual point")?;
    Ok(sub.evaluate(&(z - &sub.g_k))?.grad)
}

/// `Φ(z)`.
pub fn dual_value(sub: &SsnSubproblem, z: &DVector<f64>) -> Result<f64> {
    check_len(z, sub.dual_dim(), "dual point")?;
    let point = sub.evaluate(&(z - &sub.g_k))?;
    Ok(point.value - sub.reg.value(&sub.x_k))
}

/// `V s` for the generalized Hessian of `Φ` at `z`.
pub fn apply_v(sub: &SsnSubproblem, z: &DVector<f64>, s: &DVector<f64>) -> Result<DVector<f64>> {
    check_len(z, sub.dual_dim(), "dual point")?;
    check_len(s, sub.dual_dim(), "dual direction")?;
    let point = sub.evaluate(&(z - &sub.g_k))?;
    let u = sub.newton_element(&point);
    Ok(sub.apply_v_with(&u, s))
}

/// Runs semismooth Newton from `z = 0` until
/// `‖A_kᵀ∇Φ(z)‖ ≤ outer_bound·‖x(z) − x_k‖`.
///
/// `outer_bound` is the caller's accuracy factor (for instance
/// `(μ₂/2)·min{1, ‖G(x_k)‖^δ}`). Exhausting `max_iters` is an
/// [`SolverError::InnerFailure`]; reaching `grad_tol` returns normally with
/// `certified` reflecting the test.
pub fn ssn_solve(
    sub: &SsnSubproblem,
    cfg: &SsnConfig,
    outer_bound: f64,
) -> Result<SubproblemCertificate> {
    cfg.validate()?;
    if !(outer_bound >= 0.0) {
        return invalid(format!("certificate factor must be nonnegative, got {outer_bound}"));
    }
    let mut w = -sub.g_k.clone();
    let mut point = sub.evaluate(&w)?;
    let mut eps_bar = cfg.eps_bar_0;
    let mut cg_total = 0;
    let mut cg_misses = 0;
    let mut fallbacks = 0;
    let mut roundoff_steps = 0;
    let g_xk = sub.reg.value(&sub.x_k);
    let mut trace = vec![point.value - g_xk];
    let mut best: Option<(f64, DVector<f64>)> = None;

    for iter in 0..=cfg.max_iters {
        let epsilon = sub.apply_ak_t(&point.grad);
        let residual_norm = epsilon.norm();
        let bound = outer_bound * point.d.norm();
        let certified = residual_norm <= bound;
        let gnorm = point.grad.norm();
        let ratio = if bound > 0.0 { residual_norm / bound } else { residual_norm };
        if best.as_ref().is_none_or(|(r, _)| ratio < *r) {
            best = Some((ratio, &sub.x_k + &point.d));
        }
        let grad_done = cfg.grad_tol.is_some_and(|tol| gnorm <= tol) || gnorm == 0.0;
        if certified || grad_done {
            return Ok(SubproblemCertificate {
                x_hat: &sub.x_k + &point.d,
                step: point.d.clone(),
                z_hat: Some(&w + &sub.g_k),
                epsilon,
                residual_norm,
                bound,
                certified,
                inner_iters: iter,
                cg_total,
                cg_contract_misses: cg_misses,
                descent_fallbacks: fallbacks,
                roundoff_steps,
                dual_trace: trace,
            });
        }
        if iter == cfg.max_iters {
            break;
        }

        eps_bar = eps_bar.min(gnorm.powf(1.0 + cfg.beta_hat));
        let tol = cfg.beta_bar.min(eps_bar);
        let u = sub.newton_element(&point);
        let rhs = -&point.grad;
        let cg = conjugate_gradient(
            |s| sub.apply_v_with(&u, s),
            &rhs,
            cfg.cg_max_iters,
            |_, r| r <= tol,
        );
        cg_total += cg.iters;
        let mut s = cg.x;
        let true_res = (sub.apply_v_with(&u, &s) + &point.grad).norm();
        if true_res > tol {
            cg_misses += 1;
        }
        let mut slope = point.grad.dot(&s);
        if !(slope < 0.0) {
            fallbacks += 1;
            s = rhs;
            slope = -gnorm * gnorm;
        }

        let mut accepted = None;
        let mut alpha = 1.0;
        for m in 0..=cfg.armijo_max {
            let trial_w = &w + &s * alpha;
            let trial = sub.evaluate(&trial_w)?;
            let change = trial.value - point.value;
            if change <= cfg.gamma * alpha * slope {
                accepted = Some((trial_w, trial, false));
                break;
            }
            // A full step whose decrease is invisible in floating point is
            // taken if it still shrinks the dual gradient.
            let noise = 64.0 * f64::EPSILON * (point.magnitude + trial.magnitude);
            if m == 0 && change.abs() <= noise && trial.grad.norm() < gnorm {
                accepted = Some((trial_w, trial, true));
                break;
            }
            alpha *= cfg.beta_tilde;
        }
        let Some((new_w, new_point, roundoff)) = accepted else {
            return Err(SolverError::InnerFailure {
                reason: "dual line search exhausted".into(),
                iters: iter + 1,
                best: best.map(|b| b.1),
            });
        };
        if roundoff {
            roundoff_steps += 1;
        }
        w = new_w;
        point = new_point;
        trace.push(point.value - g_xk);
    }
    Err(SolverError::InnerFailure {
        reason: format!(
            "no certificate within {} iterations (factor {outer_bound:e})",
            cfg.max_iters
        ),
        iters: cfg.max_iters,
        best: best.map(|b| b.1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dct::DctSubsampledOperator;
    use crate::linalg::DenseOperator;
    use crate::prox::{GroupL2Reg, L1Reg, ZeroReg};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sub(seed: u64, reg: Arc<dyn Regularizer>, negative: bool) -> SsnSubproblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(5, 8, |_, _| rng.random_range(-1.0..1.0));
        let d = DVector::from_fn(5, |_, _| {
            if negative {
                rng.random_range(-1.0..2.0)
            } else {
                rng.random_range(0.2..2.0)
            }
        });
        let psi = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
        let x = DVector::from_fn(8, |i, _| if i % 3 == 0 { 0.0 } else { rng.random_range(-1.0..1.0) });
        SsnSubproblem::new(Arc::new(DenseOperator::new(a)), &d, &psi, x, 0.3, 0.05, reg).unwrap()
    }

    fn tight() -> SsnConfig {
        SsnConfig {
            grad_tol: Some(1e-12),
            max_iters: 200,
            ..SsnConfig::default()
        }
    }

    // Proximal gradient on the primal model, run long enough to be an oracle.
    fn fista_oracle(sub: &SsnSubproblem, reg: &dyn Regularizer, n: usize) -> DVector<f64> {
        let lip = {
            let mut m = DMatrix::zeros(n, n);
            for j in 0..n {
                let mut e = DVector::zeros(n);
                e[j] = 1.0;
                m.set_column(j, &sub.apply_h(&e));
            }
            m.symmetric_eigenvalues().max()
        };
        let mut x = sub.x_k().clone();
        let mut y = x.clone();
        let mut tk = 1.0f64;
        for _ in 0..20000 {
            let g = sub.grad_f() + sub.apply_h(&(&y - sub.x_k()));
            let xn = reg.prox(&(&y - g / lip), 1.0 / lip).unwrap();
            let tn = (1.0 + (1.0 + 4.0 * tk * tk).sqrt()) / 2.0;
            y = &xn + (&xn - &x) * ((tk - 1.0) / tn);
            x = xn;
            tk = tn;
        }
        x
    }

    #[test]
    fn lift_rule() {
        let reg: Arc<dyn Regularizer> = Arc::new(ZeroReg);
        let op: Arc<dyn LinearOperator> = Arc::new(DenseOperator::new(DMatrix::identity(2, 2)));
        let pos = SsnSubproblem::new(
            op.clone(),
            &DVector::from_vec(vec![0.5, 1.0]),
            &DVector::zeros(2),
            DVector::zeros(2),
            1.0,
            0.1,
            reg.clone(),
        )
        .unwrap();
        assert_eq!(pos.rho(), 0.0);
        let neg = SsnSubproblem::new(
            op,
            &DVector::from_vec(vec![-0.3, 1.0]),
            &DVector::zeros(2),
            DVector::zeros(2),
            1.0,
            0.1,
            reg,
        )
        .unwrap();
        assert!((neg.rho() - 0.35).abs() < 1e-15);
    }

    #[test]
    fn identity_reduction_l1() {
        // A = I, D = 1, ρ = 0: the subproblem is a scaled soft threshold.
        let n = 4;
        let lambda = 0.4;
        let mu = 0.5;
        let op: Arc<dyn LinearOperator> = Arc::new(DenseOperator::new(DMatrix::identity(n, n)));
        let grad = DVector::from_vec(vec![1.0, -0.1, 0.3, -2.0]);
        let x_k = DVector::from_vec(vec![0.5, 0.0, -0.2, 1.0]);
        let reg: Arc<dyn Regularizer> = Arc::new(L1Reg::new(lambda).unwrap());
        let sub = SsnSubproblem::new(op, &DVector::from_element(n, 1.0), &grad, x_k.clone(), mu, 0.05, reg)
            .unwrap();
        let cert = ssn_solve(&sub, &tight(), 0.0).unwrap();
        // argmin ⟨grad, x − x_k⟩ + ½(1+μ)‖x − x_k‖² + λ‖x‖₁
        let h = 1.0 + mu;
        let u = &x_k - &grad / h;
        let expect = u.map(|v| v.signum() * (v.abs() - lambda / h).max(0.0));
        assert!((cert.x_hat - expect).norm() < 1e-10);
    }

    #[test]
    fn zero_reg_is_a_linear_solve() {
        let sub = random_sub(3, Arc::new(ZeroReg), false);
        let cert = ssn_solve(&sub, &tight(), 0.0).unwrap();
        let res = sub.grad_f() + sub.apply_h(&cert.step);
        assert!(res.norm() < 1e-9, "{}", res.norm());
    }

    #[test]
    fn dual_root_gives_zero_primal_residual() {
        for (seed, reg) in [
            (1u64, Arc::new(L1Reg::new(0.3).unwrap()) as Arc<dyn Regularizer>),
            (2, Arc::new(GroupL2Reg::contiguous(0.3, 8, 4).unwrap())),
        ] {
            let sub = random_sub(seed, reg.clone(), true);
            let cert = ssn_solve(&sub, &tight(), 0.0).unwrap();
            let z = cert.z_hat.clone().unwrap();
            assert!(dual_grad(&sub, &z).unwrap().norm() < 1e-10);
            // Primal recovery, and ∂q(x̂) ∋ 0 up to the residual.
            let x = sub.primal_of(&z).unwrap();
            assert!((&x - &cert.x_hat).norm() < 1e-9);
            let w = -(sub.grad_f() + sub.apply_h(&cert.step));
            assert!(reg.subgradient_distance(&cert.x_hat, &w) < 1e-8);
            // Strong duality: q(x*) + Φ(z*) = f(x_k), here with f(x_k) = 0.
            let gap = sub.model_value(&cert.x_hat) + dual_value(&sub, &z).unwrap();
            assert!(gap.abs() < 1e-9, "gap {gap}");
            // Minimality against an independent first-order solver.
            let oracle = fista_oracle(&sub, reg.as_ref(), 8);
            assert!((oracle - &cert.x_hat).norm() < 1e-6);
        }
    }

    #[test]
    fn epsilon_is_the_subdifferential_element() {
        let reg: Arc<dyn Regularizer> = Arc::new(L1Reg::new(0.2).unwrap());
        let sub = random_sub(7, reg.clone(), true);
        let cfg = SsnConfig {
            max_iters: 3,
            ..SsnConfig::default()
        };
        let cert = match ssn_solve(&sub, &cfg, 1e-30) {
            Ok(c) => c,
            Err(SolverError::InnerFailure { .. }) => return,
            Err(e) => panic!("{e}"),
        };
        let z = cert.z_hat.unwrap();
        let t = 1.0 / sub.mu_hat();
        let v = sub.x_k() - sub.apply_ak_t(&z) * t;
        let zeta = (v - &cert.x_hat) / t;
        let elem = sub.grad_f() + sub.apply_h(&cert.step) + zeta;
        assert!((elem + &cert.epsilon).norm() < 1e-9);
    }

    #[test]
    fn dual_gradient_matches_fd() {
        let sub = random_sub(11, Arc::new(L1Reg::new(0.25).unwrap()), true);
        let mut rng = ChaCha8Rng::seed_from_u64(110);
        let z = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
        let g = dual_grad(&sub, &z).unwrap();
        let h = 1e-6;
        for i in 0..5 {
            let mut e = DVector::zeros(5);
            e[i] = h;
            let fd = (dual_value(&sub, &(&z + &e)).unwrap() - dual_value(&sub, &(&z - &e)).unwrap())
                / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6, "{i}: {fd} vs {}", g[i]);
        }
        // Direct formula −A_k prox(·) + z + b_k − g_k.
        let p = sub.primal_of(&z).unwrap();
        let direct = -sub.apply_ak(&p) + &z + sub.b_k() - sub.g_k();
        assert!((direct - g).norm() < 1e-10);
    }

    #[test]
    fn newton_matrix_dominates_identity() {
        let sub = random_sub(13, Arc::new(GroupL2Reg::contiguous(0.2, 8, 2).unwrap()), true);
        let z = DVector::from_element(5, 0.3);
        let mut m = DMatrix::zeros(5, 5);
        for j in 0..5 {
            let mut e = DVector::zeros(5);
            e[j] = 1.0;
            m.set_column(j, &apply_v(&sub, &z, &e).unwrap());
        }
        let sym = (&m + m.transpose()) * 0.5;
        assert!((&m - &sym).norm() < 1e-10);
        assert!(sym.symmetric_eigenvalues().min() >= 1.0 - 1e-10);
    }

    #[test]
    fn dual_values_decrease() {
        let sub = random_sub(17, Arc::new(L1Reg::new(0.3).unwrap()), true);
        let cert = ssn_solve(&sub, &SsnConfig::default(), 1e-3).unwrap();
        assert!(cert.certified);
        for w in cert.dual_trace.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn dct_instance_reaches_tight_certificate() {
        let n = 256;
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let rows: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.25)).collect();
        let m = rows.len();
        let op: Arc<dyn LinearOperator> = Arc::new(DctSubsampledOperator::new(n, rows).unwrap());
        let d = DVector::from_fn(m, |_, _| rng.random_range(-1.0..8.0));
        let psi = DVector::from_fn(m, |_, _| rng.random_range(-2.0..2.0));
        let x = DVector::from_fn(n, |i, _| if i % 10 == 0 { rng.random_range(-5.0..5.0) } else { 0.0 });
        let reg: Arc<dyn Regularizer> = Arc::new(L1Reg::new(0.5).unwrap());
        let sub = SsnSubproblem::new(op, &d, &psi, x, 0.06, 0.05, reg).unwrap();
        let cert = ssn_solve(&sub, &SsnConfig::default(), 1e-6).unwrap();
        assert!(cert.certified);
        assert!(cert.residual_norm <= cert.bound);
        assert!(cert.inner_iters < 50);
    }

    #[test]
    fn rejects_bad_input() {
        let op: Arc<dyn LinearOperator> = Arc::new(DenseOperator::new(DMatrix::identity(2, 2)));
        let reg: Arc<dyn Regularizer> = Arc::new(ZeroReg);
        let ones = DVector::from_element(2, 1.0);
        assert!(SsnSubproblem::new(op.clone(), &ones, &ones, DVector::zeros(3), 1.0, 0.1, reg.clone()).is_err());
        assert!(SsnSubproblem::new(op.clone(), &ones, &ones, DVector::zeros(2), 0.0, 0.1, reg.clone()).is_err());
        let sub = SsnSubproblem::new(op, &ones, &ones, DVector::zeros(2), 1.0, 0.1, reg).unwrap();
        let bad = SsnConfig {
            gamma: 0.7,
            ..SsnConfig::default()
        };
        assert!(ssn_solve(&sub, &bad, 0.1).is_err());
        assert!(ssn_solve(&sub, &SsnConfig::default(), -1.0).is_err());
    }
}
