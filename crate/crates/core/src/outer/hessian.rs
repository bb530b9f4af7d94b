use std::sync::Arc;

use nalgebra::{DVector};

use crate::error::{invalid, Result};
use crate::linalg::LinearOperator;
use crate::model::{Curvature, ModelHessian};
use crate::outer::config::{HessianPolicy, OuterConfig, ProvidedBk};
use crate::problem::{CompositeProblem, HessianInfo, HessianKind};

/// Pieces of the operator form needed by the dual solver.
#[derive(Debug, Clone)]
pub struct OperatorForm {
    pub op: Arc<dyn LinearOperator>,
    pub hess_diag: DVector<f64>,
    pub outer_grad: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct BuiltHessian {
    pub model: ModelHessian,
    /// `c + μ₁·min{1, ‖G‖^δ}` plus any `L_H` term; equals `μ̂` in the operator form.
    pub ridge: f64,
    pub rho: f64,
    /// Power-iteration estimate of `‖B_k‖`, for audits.
    pub bk_norm_est: f64,
    pub operator_form: Option<OperatorForm>,
}

/// Model Hessian `B_k + (c + μ₁ min{1, ‖G‖^δ} + lh_term) I` under the
/// configured policy. `lh_term` is `L_H` (or `L_H^k`) for the unit-step
/// variants and zero otherwise.
pub fn build_hk(
    problem: &CompositeProblem,
    x_k: &DVector<f64>,
    g_norm: f64,
    cfg: &OuterConfig,
    lh_term: f64,
) -> Result<BuiltHessian> {
    let info = problem.smooth.hessian_info(x_k);
    build_hk_from(info, problem.dim(), g_norm, cfg, lh_term)
}

pub(crate) fn build_hk_from(
    info: HessianInfo,
    n: usize,
    g_norm: f64,
    cfg: &OuterConfig,
    lh_term: f64,
) -> Result<BuiltHessian> {
    if !(g_norm >= 0.0) {
        return invalid(format!("residual norm must be nonnegative, got {g_norm}"));
    }
    let ridge = cfg.c + cfg.mu1 * cfg.residual_factor(g_norm) + lh_term;
    let mut rho = 0.0;
    let mut operator_form = None;
    let (curvature, shift) = match &cfg.hessian_policy {
        HessianPolicy::CompositeOperatorForm => match info.kind {
            HessianKind::DiagonalComposite { d, op, outer_grad } => {
                let dmin = d.iter().cloned().fold(f64::INFINITY, f64::min);
                rho = if d.is_empty() || dmin > 0.0 { 0.0 } else { cfg.c / 2.0 - dmin };
                let weights = d.add_scalar(rho);
                if let Some(g) = outer_grad {
                    operator_form = Some(OperatorForm {
                        op: op.clone(),
                        hess_diag: d,
                        outer_grad: g,
                    });
                }
                (Curvature::Composite { op, weights }, 0.0)
            }
            HessianKind::Dense(_) => {
                return invalid("the operator-form policy needs a composite Hessian");
            }
        },
        HessianPolicy::EigenShiftForm => {
            let shift = (-info.lambda_min_lower_bound).max(0.0);
            let curvature = match info.kind {
                HessianKind::DiagonalComposite { d, op, .. } => Curvature::Composite { op, weights: d },
                HessianKind::Dense(m) => Curvature::Dense(m),
            };
            (curvature, shift)
        }
        HessianPolicy::ProvidedBk(ProvidedBk::Zero) => (Curvature::Zero, 0.0),
        HessianPolicy::ProvidedBk(ProvidedBk::Dense(m)) => {
            if m.nrows() != n || m.ncols() != n {
                return invalid("provided B_k has the wrong shape");
            }
            (Curvature::Dense(m.clone()), 0.0)
        }
    };
    let model = ModelHessian {
        dim: n,
        curvature,
        shift,
        ridge,
    };
    let bk_norm_est = model.b_norm_estimate(cfg.norm_power_iters);
    Ok(BuiltHessian {
        model,
        ridge,
        rho,
        bk_norm_est,
        operator_form,
    })
}
