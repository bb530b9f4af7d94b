use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::pg_inner::PgInnerConfig;
use crate::ssn::SsnConfig;

/// A user-supplied `B_k`, held fixed over the run.
#[derive(Debug, Clone)]
pub enum ProvidedBk {
    Zero,
    /// Must be symmetric positive semidefinite.
    Dense(DMatrix<f64>),
}

/// How the curvature part `B_k` of the model Hessian is formed.
#[derive(Debug, Clone)]
pub enum HessianPolicy {
    /// `B_k = Aᵀ(D_k + ρ_k I)A` for `f = ψ(Ax − b)`; solved by SSN.
    CompositeOperatorForm,
    /// `B_k = ∇²f(x_k) + [−λ_min]₊ I` with a certified lower bound on `λ_min`.
    EigenShiftForm,
    ProvidedBk(ProvidedBk),
}

/// Treatment of the Hessian Lipschitz constant, which also selects the
/// outer algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LhMode {
    /// Line search on the proximal Newton direction.
    Unknown,
    /// `L_H` added to the ridge, unit steps.
    Known { lipschitz: f64 },
    /// Unit steps with `L_H^k` estimated by doubling, floored at `initial`.
    Adaptive { initial: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InnerChoice {
    /// Conjugate gradients for `g ≡ 0`, SSN for the operator form, proximal
    /// gradient otherwise.
    Auto,
    Ssn,
    Pg,
    Cg,
}

#[derive(Debug, Clone)]
pub struct OuterConfig {
    pub c: f64,
    pub tau: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub delta: f64,
    pub theta: f64,
    /// Stop once `‖G(x_k)‖ ≤ eps0`.
    pub eps0: f64,
    pub max_outer_iters: usize,
    pub max_wall_seconds: f64,
    pub hessian_policy: HessianPolicy,
    pub lh_mode: LhMode,
    pub inner: InnerChoice,
    pub ssn: SsnConfig,
    pub pg: PgInnerConfig,
    pub cg_max_iters: usize,
    pub linesearch_max: usize,
    pub doubling_max: usize,
    /// `L_H` used by the audits only. Falls back to the problem's constant.
    pub audit_lipschitz: Option<f64>,
    /// Power iterations for the `‖B_k‖` estimate.
    pub norm_power_iters: usize,
}

impl Default for OuterConfig {
    fn default() -> Self {
        let c = 0.05;
        Self {
            c,
            tau: (1e-4f64).min(c / 2.0),
            mu1: 0.1,
            mu2: 0.1,
            delta: 0.95,
            theta: 0.6,
            eps0: 1e-5,
            max_outer_iters: 10_000,
            max_wall_seconds: 1800.0,
            hessian_policy: HessianPolicy::CompositeOperatorForm,
            lh_mode: LhMode::Unknown,
            inner: InnerChoice::Auto,
            ssn: SsnConfig::default(),
            pg: PgInnerConfig::default(),
            cg_max_iters: 1000,
            linesearch_max: 100,
            doubling_max: 80,
            audit_lipschitz: None,
            norm_power_iters: 20,
        }
    }
}

impl OuterConfig {
    /// Sets `c` and the matching default `τ = min(1e-4, c/2)`.
    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self.tau = (1e-4f64).min(c / 2.0);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return invalid(format!("c must be positive, got {}", self.c));
        }
        if !(self.tau > 0.0 && self.tau < self.c) {
            return invalid(format!("tau must lie in (0, c), got {}", self.tau));
        }
        if !(self.mu1 > 0.0 && self.mu1 <= 1.0) {
            return invalid(format!("mu1 must lie in (0, 1], got {}", self.mu1));
        }
        if !(self.mu2 > 0.0 && self.mu2 <= self.mu1) {
            return invalid(format!("mu2 must lie in (0, mu1], got {}", self.mu2));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return invalid(format!("delta must lie in [0, 1], got {}", self.delta));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return invalid(format!("theta must lie in (0, 1), got {}", self.theta));
        }
        if !(self.eps0 > 0.0) {
            return invalid(format!("eps0 must be positive, got {}", self.eps0));
        }
        if !(self.max_wall_seconds > 0.0) {
            return invalid("wall-clock cap must be positive");
        }
        if self.linesearch_max == 0 || self.cg_max_iters == 0 {
            return invalid("line-search and CG caps must be positive");
        }
        match self.lh_mode {
            LhMode::Known { lipschitz } if !(lipschitz > 0.0 && lipschitz.is_finite()) => {
                return invalid(format!("L_H must be positive, got {lipschitz}"));
            }
            LhMode::Adaptive { initial } if !(initial > 0.0 && initial.is_finite()) => {
                return invalid(format!("initial L_H estimate must be positive, got {initial}"));
            }
            _ => {}
        }
        if let Some(l) = self.audit_lipschitz {
            if !(l > 0.0) {
                return invalid(format!("audit L_H must be positive, got {l}"));
            }
        }
        self.ssn.validate()
    }

    /// `min{1, ‖G‖^δ}`, with `0⁰ = 1`.
    pub fn residual_factor(&self, g_norm: f64) -> f64 {
        if self.delta == 0.0 {
            1.0
        } else {
            g_norm.powf(self.delta).min(1.0)
        }
    }
}
