use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// One accepted outer iteration. Audit flags are `None` when the inequality
/// does not apply to the mode or needs an `L_H` that was not supplied.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    /// `φ(x_k)`.
    pub phi: f64,
    /// `‖G(x_k)‖`.
    pub g_norm: f64,
    pub d_norm: f64,
    pub alpha: f64,
    pub ls_trials: usize,
    pub inner_iters: usize,
    pub cg_total: usize,
    pub cert_residual: f64,
    pub cert_bound: f64,
    pub lh_current: Option<f64>,
    pub wall_ms: f64,
    /// `φ(x_k) − φ(x_{k+1})`, evaluated without cancellation.
    pub decrease: f64,
    /// Estimate of `‖B_k‖`.
    pub bk_norm: f64,
    pub doublings: usize,
    pub eta_hat_check: Option<bool>,
    pub decrease_check: Option<bool>,
    pub alpha_floor_check: Option<bool>,
    pub linesearch_check: Option<bool>,
    pub certificate_check: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    Converged,
    IterCap,
    TimeCap,
    InnerFailure,
    /// The line search or the `L_H` doubling ran out of trials, or a
    /// unit step failed its decrease audit.
    OuterFailure,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditCounters {
    pub eta_hat: usize,
    pub decrease: usize,
    pub alpha_floor: usize,
    pub linesearch: usize,
    pub certificate: usize,
    pub rate: usize,
}

impl AuditCounters {
    pub fn total(&self) -> usize {
        self.eta_hat + self.decrease + self.alpha_floor + self.linesearch + self.certificate + self.rate
    }

    pub fn add(&mut self, other: &AuditCounters) {
        self.eta_hat += other.eta_hat;
        self.decrease += other.decrease;
        self.alpha_floor += other.alpha_floor;
        self.linesearch += other.linesearch;
        self.certificate += other.certificate;
        self.rate += other.rate;
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub records: Vec<IterationRecord>,
    pub final_x: DVector<f64>,
    pub final_phi: f64,
    pub final_g_norm: f64,
    pub phi0: f64,
    pub status: RunStatus,
    pub message: Option<String>,
    /// Largest `Σ_{j≤k}‖G(x_j)‖² / (η̃·(φ(x_0) − φ(x_{k+1})))` over `k`; at most
    /// one when the certificate holds.
    pub rate_certificate: Option<f64>,
    /// `η̃` (line-search mode) or `ζ` (unit-step modes) at the end of the run.
    pub eta_tilde: Option<f64>,
    pub superlinear_tail: Vec<f64>,
    pub audits: AuditCounters,
    pub total_doublings: usize,
    pub wall_seconds: f64,
}

impl RunReport {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    /// Residual norms `‖G(x_0)‖, …, ‖G(x_K)‖` including the final point.
    pub fn g_norms(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.records.iter().map(|r| r.g_norm).collect();
        v.push(self.final_g_norm);
        v
    }

    /// First `k` with `‖G(x_k)‖ ≤ eps`.
    pub fn first_passage(&self, eps: f64) -> Option<usize> {
        self.g_norms().iter().position(|&g| g <= eps)
    }

    /// `⌈η̃(φ(x_0) − φ_final)ε⁻²⌉ + 1`.
    pub fn complexity_bound(&self, eps: f64) -> Option<f64> {
        self.eta_tilde
            .map(|et| (et * (self.phi0 - self.final_phi).max(0.0) / (eps * eps)).ceil() + 1.0)
    }

    /// `min_{j≤k}‖G(x_j)‖` for each `k`.
    pub fn running_min_g(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.g_norms()
            .into_iter()
            .map(|g| {
                best = best.min(g);
                best
            })
            .collect()
    }
}

/// `‖G(x_{k+1})‖/‖G(x_k)‖` along the sequence.
pub fn ratio_tail(g: &[f64]) -> Vec<f64> {
    g.windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
        .collect()
}
