//! Proximal gradient (optionally accelerated) on the quadratic model
//! `q(x) = ⟨∇f_k, x − x_k⟩ + ½(x − x_k)ᵀH(x − x_k) + g(x)`.
//!
//! After a step `x⁺ = prox_{g/L}(y − (∇f_k + H(y − x_k))/L)` the vector
//! `(LI − H)(y − x⁺)` lies in `∂q(x⁺)`, which gives a computable certificate
//! for any `L ≥ ‖H‖`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SolverError};
use crate::linalg::check_len;
use crate::model::ModelHessian;
use crate::problem::Regularizer;
use crate::ssn::SubproblemCertificate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgInnerConfig {
    pub max_iters: usize,
    /// FISTA extrapolation.
    pub accelerated: bool,
}

impl Default for PgInnerConfig {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            accelerated: false,
        }
    }
}

/// Runs until `‖ε‖ ≤ outer_bound·‖x⁺ − x_k‖` with `ε = (LI − H)(x⁺ − y)`.
pub fn pg_inner_solve(
    reg: &dyn Regularizer,
    h: &ModelHessian,
    x_k: &DVector<f64>,
    grad_f: &DVector<f64>,
    outer_bound: f64,
    cfg: &PgInnerConfig,
) -> Result<SubproblemCertificate> {
    let n = x_k.len();
    check_len(grad_f, n, "pg gradient")?;
    if h.dim != n {
        return invalid(format!("model Hessian has dimension {} but x has {n}", h.dim));
    }
    if !(outer_bound >= 0.0) {
        return invalid(format!("certificate factor must be nonnegative, got {outer_bound}"));
    }
    if cfg.max_iters == 0 {
        return invalid("pg iteration cap must be positive");
    }
    let lip = h.norm_upper_bound();
    if !(lip > 0.0) || !lip.is_finite() {
        return invalid(format!("pg needs a positive finite step bound, got {lip}"));
    }
    let t = 1.0 / lip;
    let reduced = grad_f + reg.anchor_subgradient(x_k);

    // Displacements from x_k.
    let mut e = DVector::zeros(n);
    let mut y = e.clone();
    let mut momentum = 1.0f64;
    let mut best: Option<(f64, DVector<f64>)> = None;
    for iter in 1..=cfg.max_iters {
        let hy = h.apply(&y);
        let r = &reduced + &hy - &y * lip;
        let e_new = reg.prox_displacement(x_k, &r, t)?;
        let diff = &e_new - &y;
        let epsilon = diff.clone() * lip - h.apply(&diff);
        let residual_norm = epsilon.norm();
        let bound = outer_bound * e_new.norm();
        if !residual_norm.is_finite() {
            return Err(SolverError::OracleFailure("non-finite pg iterate".into()));
        }
        let ratio = if bound > 0.0 { residual_norm / bound } else { residual_norm };
        if best.as_ref().is_none_or(|(b, _)| ratio < *b) {
            best = Some((ratio, x_k + &e_new));
        }
        if residual_norm <= bound {
            return Ok(SubproblemCertificate {
                x_hat: x_k + &e_new,
                step: e_new,
                z_hat: None,
                epsilon,
                residual_norm,
                bound,
                certified: true,
                inner_iters: iter,
                cg_total: 0,
                cg_contract_misses: 0,
                descent_fallbacks: 0,
                roundoff_steps: 0,
                dual_trace: Vec::new(),
            });
        }
        if cfg.accelerated {
            let next = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
            y = &e_new + (&e_new - &e) * ((momentum - 1.0) / next);
            momentum = next;
        } else {
            y = e_new.clone();
        }
        e = e_new;
    }
    Err(SolverError::InnerFailure {
        reason: format!("pg found no certificate within {} iterations", cfg.max_iters),
        iters: cfg.max_iters,
        best: best.map(|b| b.1),
    })
}
