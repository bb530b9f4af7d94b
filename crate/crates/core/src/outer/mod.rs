//! Outer proximal Newton loops. The `LhMode` of the config picks between a
//! line search (unknown `L_H`) and unit steps with a known or adaptively
//! doubled `L_H`. A proximal gradient baseline shares the logging.
//!
//! Every checkable inequality from the convergence analysis is re-evaluated
//! at runtime and recorded on the iteration.

mod config;
mod hessian;
mod report;

use std::time::Instant;

use nalgebra::DVector;

use crate::error::{invalid, Result, SolverError};
use crate::linalg::{check_len, conjugate_gradient};
use crate::model::ModelHessian;
use crate::pg_inner::pg_inner_solve;
use crate::problem::CompositeProblem;
use crate::ssn::{ssn_solve, SsnSubproblem, SubproblemCertificate};

pub use config::{HessianPolicy, InnerChoice, LhMode, OuterConfig, ProvidedBk};
pub use hessian::{build_hk, BuiltHessian, OperatorForm};
pub use report::{ratio_tail, AuditCounters, IterationRecord, RunReport, RunStatus};

/// Slack on norm-estimate based audits.
pub const AUDIT_SLACK: f64 = 1.01;

/// A point with everything the outer loop needs about it.
#[derive(Debug, Clone)]
pub struct IterateState {
    pub x: DVector<f64>,
    pub f: f64,
    pub grad: DVector<f64>,
    pub phi: f64,
    pub g_norm: f64,
}

pub fn evaluate_state(problem: &CompositeProblem, x: DVector<f64>) -> Result<IterateState> {
    check_len(&x, problem.dim(), "iterate")?;
    let (f, grad) = problem.smooth.value_and_gradient(&x);
    if !f.is_finite() {
        return Err(SolverError::OracleFailure(format!("f(x) = {f}")));
    }
    let g_norm = problem.kkt_residual_from_grad(&x, &grad)?.norm();
    let phi = f + problem.reg.value(&x);
    if !phi.is_finite() {
        return Err(SolverError::OracleFailure("iterate left the domain of g".into()));
    }
    Ok(IterateState {
        x,
        f,
        grad,
        phi,
        g_norm,
    })
}

/// Result of one outer step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub next: IterateState,
    pub record: IterationRecord,
    /// `L_H^{k+1}` in adaptive mode.
    pub next_lh: Option<f64>,
    /// The certified model step was zero, so `x_k` is stationary.
    pub stationary: bool,
}

#[derive(Debug, Clone, Copy)]
enum Mode {
    LineSearch,
    Unit { lh: f64 },
    Adaptive { lh: f64, floor: f64 },
}

fn mode_of(cfg: &OuterConfig, lh_state: Option<f64>) -> Mode {
    match cfg.lh_mode {
        LhMode::Unknown => Mode::LineSearch,
        LhMode::Known { lipschitz } => Mode::Unit { lh: lipschitz },
        LhMode::Adaptive { initial } => Mode::Adaptive {
            lh: lh_state.unwrap_or(initial).max(initial),
            floor: initial,
        },
    }
}

/// Conjugate gradients on `H d = −∇f` stopped by
/// `‖H d + ∇f‖ ≤ bound_factor·‖d‖`; `ε = H d + ∇f` is the certificate.
pub fn cg_inner_solve(
    h: &ModelHessian,
    grad: &DVector<f64>,
    bound_factor: f64,
    max_iters: usize,
) -> Result<SubproblemCertificate> {
    check_len(grad, h.dim, "cg gradient")?;
    let rhs = -grad;
    let out = conjugate_gradient(|w| h.apply(w), &rhs, max_iters, |d, r| r <= bound_factor * d.norm());
    let epsilon = h.apply(&out.x) + grad;
    let residual_norm = epsilon.norm();
    let bound = bound_factor * out.x.norm();
    if residual_norm > bound {
        return Err(SolverError::InnerFailure {
            reason: format!("cg residual {residual_norm:e} above {bound:e}"),
            iters: out.iters,
            best: Some(out.x),
        });
    }
    Ok(SubproblemCertificate {
        x_hat: DVector::zeros(0),
        step: out.x,
        z_hat: None,
        epsilon,
        residual_norm,
        bound,
        certified: true,
        inner_iters: out.iters,
        cg_total: out.iters,
        cg_contract_misses: 0,
        descent_fallbacks: 0,
        roundoff_steps: 0,
        dual_trace: Vec::new(),
    })
}

fn resolve_inner(problem: &CompositeProblem, cfg: &OuterConfig) -> InnerChoice {
    match cfg.inner {
        InnerChoice::Auto if problem.reg.is_zero() => InnerChoice::Cg,
        InnerChoice::Auto => match cfg.hessian_policy {
            HessianPolicy::CompositeOperatorForm => InnerChoice::Ssn,
            _ => InnerChoice::Pg,
        },
        other => other,
    }
}

fn inner_solve(
    problem: &CompositeProblem,
    state: &IterateState,
    built: &BuiltHessian,
    bound_factor: f64,
    cfg: &OuterConfig,
) -> Result<SubproblemCertificate> {
    let mut cert = match resolve_inner(problem, cfg) {
        InnerChoice::Cg => {
            if !problem.reg.is_zero() {
                return invalid("the CG inner solver needs g ≡ 0");
            }
            cg_inner_solve(&built.model, &state.grad, bound_factor, cfg.cg_max_iters)?
        }
        InnerChoice::Ssn => {
            let Some(form) = &built.operator_form else {
                return invalid("SSN needs the operator-form policy and a separable outer loss");
            };
            let sub = SsnSubproblem::with_lift(
                form.op.clone(),
                &form.hess_diag,
                &form.outer_grad,
                state.x.clone(),
                built.ridge,
                built.rho,
                problem.reg.clone(),
            )?;
            let cert = ssn_solve(&sub, &cfg.ssn, bound_factor)?;
            if !cert.certified {
                return Err(SolverError::InnerFailure {
                    reason: "ssn stopped on its gradient tolerance without a certificate".into(),
                    iters: cert.inner_iters,
                    best: Some(cert.x_hat),
                });
            }
            cert
        }
        InnerChoice::Pg | InnerChoice::Auto => {
            pg_inner_solve(problem.reg.as_ref(), &built.model, &state.x, &state.grad, bound_factor, &cfg.pg)?
        }
    };
    cert.x_hat = &state.x + &cert.step;
    Ok(cert)
}

fn objective_change(problem: &CompositeProblem, x: &DVector<f64>, s: &DVector<f64>) -> f64 {
    problem.smooth.value_change(x, s) + problem.reg.value_change(x, s)
}

fn audit_lipschitz(problem: &CompositeProblem, cfg: &OuterConfig) -> Option<f64> {
    cfg.audit_lipschitz.or(problem.lipschitz_grad)
}

fn step_impl(
    problem: &CompositeProblem,
    state: &IterateState,
    cfg: &OuterConfig,
    mode: Mode,
    k: usize,
    start: Instant,
) -> Result<StepOutcome> {
    let bound_factor = cfg.mu2 / 2.0 * cfg.residual_factor(state.g_norm);
    let audit_l = audit_lipschitz(problem, cfg);
    let n = problem.dim();

    let (built, cert, lh_used, doublings) = match mode {
        Mode::LineSearch => {
            let built = build_hk(problem, &state.x, state.g_norm, cfg, 0.0)?;
            let cert = inner_solve(problem, state, &built, bound_factor, cfg)?;
            (built, cert, None, 0)
        }
        Mode::Unit { lh } => {
            let built = build_hk(problem, &state.x, state.g_norm, cfg, lh)?;
            let cert = inner_solve(problem, state, &built, bound_factor, cfg)?;
            (built, cert, Some(lh), 0)
        }
        Mode::Adaptive { lh, .. } => {
            let info = problem.smooth.hessian_info(&state.x);
            let mut l = lh;
            let mut doublings = 0;
            loop {
                let built = hessian::build_hk_from(info.clone(), n, state.g_norm, cfg, l)?;
                let cert = inner_solve(problem, state, &built, bound_factor, cfg)?;
                let d = &cert.step;
                let f_tilde = problem.smooth.value_change(&state.x, d)
                    - state.grad.dot(d)
                    - l / 2.0 * d.norm_squared();
                if f_tilde <= 0.0 {
                    break (built, cert, Some(l), doublings);
                }
                if doublings >= cfg.doubling_max {
                    return Err(SolverError::OuterFailure(format!(
                        "L_H doubled {doublings} times without a model upper bound"
                    )));
                }
                l *= 2.0;
                doublings += 1;
            }
        }
    };

    let d = cert.step.clone();
    let d_norm = d.norm();
    let m_obs = built.bk_norm_est;
    let mut record = IterationRecord {
        k,
        phi: state.phi,
        g_norm: state.g_norm,
        d_norm,
        alpha: 1.0,
        ls_trials: 0,
        inner_iters: cert.inner_iters,
        cg_total: cert.cg_total,
        cert_residual: cert.residual_norm,
        cert_bound: cert.bound,
        lh_current: lh_used,
        wall_ms: 0.0,
        decrease: 0.0,
        bk_norm: m_obs,
        doublings,
        eta_hat_check: None,
        decrease_check: None,
        alpha_floor_check: None,
        linesearch_check: None,
        certificate_check: Some(cert.residual_norm <= cert.bound),
    };
    if d_norm == 0.0 {
        record.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        return Ok(StepOutcome {
            next: state.clone(),
            record,
            next_lh: lh_used,
            stationary: true,
        });
    }

    let next_lh;
    match mode {
        Mode::LineSearch => {
            let need = cfg.tau / 2.0 * d_norm * d_norm;
            let mut accepted = None;
            for j in 0..cfg.linesearch_max {
                let alpha = cfg.theta.powi(j as i32);
                let change = objective_change(problem, &state.x, &(&d * alpha));
                if change.is_finite() && change <= -need * alpha {
                    accepted = Some((j, alpha, -change));
                    break;
                }
            }
            let Some((j, alpha, decrease)) = accepted else {
                return Err(SolverError::OuterFailure(format!(
                    "line search failed after {} trials",
                    cfg.linesearch_max
                )));
            };
            record.alpha = alpha;
            record.ls_trials = j;
            record.decrease = decrease;
            record.linesearch_check = Some(decrease >= need * alpha);
            let eta_hat = 3.0 + m_obs + cfg.c;
            record.eta_hat_check = Some(state.g_norm <= AUDIT_SLACK * eta_hat * d_norm);
            if let Some(l) = audit_l {
                let floor = cfg.theta * (cfg.c - cfg.tau) / l;
                record.alpha_floor_check = Some(alpha >= floor);
                let coef = cfg.tau * cfg.theta * (cfg.c - cfg.tau)
                    / (2.0 * l * (AUDIT_SLACK * eta_hat).powi(2));
                record.decrease_check = Some(decrease >= coef * state.g_norm * state.g_norm);
            }
            next_lh = None;
        }
        Mode::Unit { .. } | Mode::Adaptive { .. } => {
            let l = lh_used.unwrap_or(0.0);
            let decrease = -objective_change(problem, &state.x, &d);
            record.decrease = decrease;
            let eta_bar = m_obs + l + 3.0;
            record.eta_hat_check = Some(state.g_norm <= AUDIT_SLACK * eta_bar * d_norm);
            record.decrease_check = Some(decrease >= cfg.c / 2.0 * d_norm * d_norm);
            next_lh = match mode {
                Mode::Adaptive { floor, .. } => Some((l / 2.0).max(floor)),
                _ => lh_used,
            };
        }
    }

    let x_next = &state.x + &d * record.alpha;
    let next = evaluate_state(problem, x_next)?;
    record.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(StepOutcome {
        next,
        record,
        next_lh,
        stationary: false,
    })
}

/// One step of the line-search method (unknown `L_H`).
pub fn algorithm1_step(
    problem: &CompositeProblem,
    state: &IterateState,
    cfg: &OuterConfig,
    k: usize,
) -> Result<StepOutcome> {
    cfg.validate()?;
    step_impl(problem, state, cfg, Mode::LineSearch, k, Instant::now())
}

/// One unit step with the known `L_H` from `cfg.lh_mode`. A failed
/// `c/2`-decrease audit is an outer failure.
pub fn algorithm2_step(
    problem: &CompositeProblem,
    state: &IterateState,
    cfg: &OuterConfig,
    k: usize,
) -> Result<StepOutcome> {
    cfg.validate()?;
    let LhMode::Known { lipschitz } = cfg.lh_mode else {
        return invalid("algorithm2_step needs LhMode::Known");
    };
    let out = step_impl(problem, state, cfg, Mode::Unit { lh: lipschitz }, k, Instant::now())?;
    if out.record.decrease_check == Some(false) {
        return Err(SolverError::OuterFailure(format!(
            "decrease {:e} below (c/2)‖step‖² at iteration {k}; L_H is too small",
            out.record.decrease
        )));
    }
    Ok(out)
}

/// One adaptive step starting from the estimate `lh_k`.
pub fn algorithm3_step(
    problem: &CompositeProblem,
    state: &IterateState,
    lh_k: f64,
    cfg: &OuterConfig,
    k: usize,
) -> Result<StepOutcome> {
    cfg.validate()?;
    let LhMode::Adaptive { initial } = cfg.lh_mode else {
        return invalid("algorithm3_step needs LhMode::Adaptive");
    };
    if lh_k < initial {
        return invalid("the L_H estimate may not drop below its floor");
    }
    step_impl(
        problem,
        state,
        cfg,
        Mode::Adaptive {
            lh: lh_k,
            floor: initial,
        },
        k,
        Instant::now(),
    )
}

/// The regularized Newton step for `g ≡ 0`: eigenvalue-shifted Hessian and
/// CG with the relative residual stop. Line search unless `cfg.lh_mode` is
/// `Known`.
pub fn regularized_newton_step(
    problem: &CompositeProblem,
    state: &IterateState,
    cfg: &OuterConfig,
    k: usize,
) -> Result<StepOutcome> {
    if !problem.reg.is_zero() {
        return invalid("regularized Newton needs g ≡ 0");
    }
    let cfg = regularized_newton_config(cfg);
    cfg.validate()?;
    step_impl(problem, state, &cfg, mode_of(&cfg, None), k, Instant::now())
}

/// `cfg` with the eigenvalue-shift policy and the CG inner solver.
pub fn regularized_newton_config(cfg: &OuterConfig) -> OuterConfig {
    OuterConfig {
        hessian_policy: HessianPolicy::EigenShiftForm,
        inner: InnerChoice::Cg,
        ..cfg.clone()
    }
}

struct RateTracker {
    sum_g2: f64,
    sum_dec: f64,
    worst: Option<f64>,
    violations: usize,
    eta: Option<f64>,
}

impl RateTracker {
    fn new() -> Self {
        Self {
            sum_g2: 0.0,
            sum_dec: 0.0,
            worst: None,
            violations: 0,
            eta: None,
        }
    }

    fn push(&mut self, g: f64, dec: f64, eta: Option<f64>) {
        self.sum_g2 += g * g;
        self.sum_dec += dec;
        self.eta = eta;
        if let Some(eta) = eta {
            let ratio = self.sum_g2 / (eta * self.sum_dec);
            let ratio = if ratio.is_nan() { f64::INFINITY } else { ratio };
            self.worst = Some(self.worst.map_or(ratio, |w| w.max(ratio)));
            if ratio > 1.0 {
                self.violations += 1;
            }
        }
    }
}

fn count(flag: Option<bool>) -> usize {
    usize::from(flag == Some(false))
}

/// Runs the outer method selected by `cfg.lh_mode` from `x0`.
///
/// Invalid input is an error; solver failures after the start are reported
/// through [`RunReport::status`].
pub fn run(problem: &CompositeProblem, x0: &DVector<f64>, cfg: &OuterConfig) -> Result<RunReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut state = evaluate_state(problem, x0.clone())?;
    let phi0 = state.phi;
    let audit_l = audit_lipschitz(problem, cfg);
    let mut records = Vec::new();
    let mut audits = AuditCounters::default();
    let mut rate = RateTracker::new();
    let mut lh_state = None;
    let mut m_max = 0.0f64;
    let mut l_max = 0.0f64;
    let mut total_doublings = 0;
    let mut message = None;

    let status = loop {
        if state.g_norm <= cfg.eps0 {
            break RunStatus::Converged;
        }
        if records.len() >= cfg.max_outer_iters {
            break RunStatus::IterCap;
        }
        if start.elapsed().as_secs_f64() > cfg.max_wall_seconds {
            break RunStatus::TimeCap;
        }
        let mode = mode_of(cfg, lh_state);
        let out = match step_impl(problem, &state, cfg, mode, records.len(), start) {
            Ok(out) => out,
            Err(e) => {
                let status = match e {
                    SolverError::InnerFailure { .. } => RunStatus::InnerFailure,
                    _ => RunStatus::OuterFailure,
                };
                message = Some(e.to_string());
                break status;
            }
        };
        if out.stationary {
            message = Some("certified model step is zero".into());
            break RunStatus::Converged;
        }
        let rec = out.record;
        m_max = m_max.max(rec.bk_norm);
        total_doublings += rec.doublings;
        audits.eta_hat += count(rec.eta_hat_check);
        audits.decrease += count(rec.decrease_check);
        audits.alpha_floor += count(rec.alpha_floor_check);
        audits.linesearch += count(rec.linesearch_check);
        audits.certificate += count(rec.certificate_check);
        let eta = match mode {
            Mode::LineSearch => audit_l.map(|l| {
                let eta_hat = AUDIT_SLACK * (3.0 + m_max + cfg.c);
                2.0 * l * eta_hat * eta_hat / (cfg.tau * cfg.theta * (cfg.c - cfg.tau))
            }),
            Mode::Unit { lh } | Mode::Adaptive { lh, .. } => {
                l_max = l_max.max(rec.lh_current.unwrap_or(lh));
                let eta_bar = AUDIT_SLACK * (m_max + l_max + 3.0);
                Some(2.0 * eta_bar * eta_bar / cfg.c)
            }
        };
        rate.push(rec.g_norm, rec.decrease, eta);
        let failed_unit_decrease =
            matches!(mode, Mode::Unit { .. }) && rec.decrease_check == Some(false);
        lh_state = out.next_lh;
        records.push(rec);
        state = out.next;
        if failed_unit_decrease {
            message = Some(format!(
                "decrease below (c/2)‖step‖² at iteration {}; L_H is too small",
                records.len() - 1
            ));
            break RunStatus::OuterFailure;
        }
    };
    audits.rate = rate.violations;

    let mut g: Vec<f64> = records.iter().map(|r| r.g_norm).collect();
    g.push(state.g_norm);
    Ok(RunReport {
        records,
        final_phi: state.phi,
        final_g_norm: state.g_norm,
        final_x: state.x,
        phi0,
        status,
        message,
        rate_certificate: rate.worst,
        eta_tilde: rate.eta,
        superlinear_tail: ratio_tail(&g),
        audits,
        total_doublings,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Proximal gradient `x_{k+1} = prox_{tg}(x_k − t∇f(x_k))` with the same
/// stopping rule and logging as [`run`].
pub fn pgm_baseline(
    problem: &CompositeProblem,
    x0: &DVector<f64>,
    step: f64,
    eps0: f64,
    max_iters: usize,
    max_wall_seconds: f64,
) -> Result<RunReport> {
    if !(step > 0.0) || !step.is_finite() {
        return invalid(format!("pgm step must be positive, got {step}"));
    }
    if !(eps0 > 0.0) {
        return invalid("eps0 must be positive");
    }
    let start = Instant::now();
    let mut state = evaluate_state(problem, x0.clone())?;
    let phi0 = state.phi;
    let mut records = Vec::new();
    let mut message = None;
    let status = loop {
        if state.g_norm <= eps0 {
            break RunStatus::Converged;
        }
        if records.len() >= max_iters {
            break RunStatus::IterCap;
        }
        if start.elapsed().as_secs_f64() > max_wall_seconds {
            break RunStatus::TimeCap;
        }
        let moved = problem
            .reg
            .prox(&(&state.x - &state.grad * step), step)
            .and_then(|x| {
                let s = &x - &state.x;
                let dec = -objective_change(problem, &state.x, &s);
                Ok((evaluate_state(problem, x)?, s.norm(), dec))
            });
        let (next, d_norm, decrease) = match moved {
            Ok(v) => v,
            Err(e) => {
                message = Some(e.to_string());
                break RunStatus::OuterFailure;
            }
        };
        records.push(IterationRecord {
            k: records.len(),
            phi: state.phi,
            g_norm: state.g_norm,
            d_norm,
            alpha: step,
            ls_trials: 0,
            inner_iters: 0,
            cg_total: 0,
            cert_residual: 0.0,
            cert_bound: 0.0,
            lh_current: None,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            decrease,
            bk_norm: 0.0,
            doublings: 0,
            eta_hat_check: None,
            decrease_check: None,
            alpha_floor_check: None,
            linesearch_check: None,
            certificate_check: None,
        });
        state = next;
    };
    let mut g: Vec<f64> = records.iter().map(|r| r.g_norm).collect();
    g.push(state.g_norm);
    Ok(RunReport {
        records,
        final_phi: state.phi,
        final_g_norm: state.g_norm,
        final_x: state.x,
        phi0,
        status,
        message,
        rate_certificate: None,
        eta_tilde: None,
        superlinear_tail: ratio_tail(&g),
        audits: AuditCounters::default(),
        total_doublings: 0,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}
