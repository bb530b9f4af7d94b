//! Composite problems `φ(x) = f(x) + g(x)`: oracle contracts and the KKT
//! residual mapping `G(x) = x − prox_g(x − ∇f(x))`.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result, SolverError};
use crate::linalg::{check_len, LinearOperator};

/// Dense Hessians up to this size get an exact eigenvalue computation.
pub const DENSE_EIGEN_LIMIT: usize = 2048;

/// Second-order information of `f` at a point.
#[derive(Debug, Clone)]
pub enum HessianKind {
    /// `Aᵀ diag(d) A`.
    DiagonalComposite {
        d: DVector<f64>,
        op: Arc<dyn LinearOperator>,
        /// `∇ψ(Ax − b)` when `f = ψ(Ax − b)` with separable `ψ`.
        outer_grad: Option<DVector<f64>>,
    },
    Dense(DMatrix<f64>),
}

#[derive(Debug, Clone)]
pub struct HessianInfo {
    pub kind: HessianKind,
    /// Never above the true smallest eigenvalue.
    pub lambda_min_lower_bound: f64,
}

impl HessianInfo {
    /// `min(0, min_i d_i)·‖A‖²` is the lower bound used for the composite form.
    pub fn diagonal_composite(d: DVector<f64>, op: Arc<dyn LinearOperator>) -> Self {
        let dmin = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let bound = dmin.min(0.0) * op.op_norm_sq();
        Self {
            kind: HessianKind::DiagonalComposite {
                d,
                op,
                outer_grad: None,
            },
            lambda_min_lower_bound: bound,
        }
    }

    pub fn with_outer_grad(mut self, grad: DVector<f64>) -> Self {
        if let HessianKind::DiagonalComposite { outer_grad, .. } = &mut self.kind {
            *outer_grad = Some(grad);
        }
        self
    }

    /// Exact `λ_min` when `n ≤ 2048`, Gershgorin bound otherwise.
    pub fn dense(m: DMatrix<f64>) -> Self {
        let n = m.nrows();
        let bound = if n == 0 {
            0.0
        } else if n <= DENSE_EIGEN_LIMIT {
            let sym = (&m + m.transpose()) * 0.5;
            sym.symmetric_eigenvalues()
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min)
        } else {
            (0..n)
                .map(|i| {
                    let off: f64 = (0..n).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum();
                    m[(i, i)] - off
                })
                .fold(f64::INFINITY, f64::min)
        };
        Self {
            kind: HessianKind::Dense(m),
            lambda_min_lower_bound: bound,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            HessianKind::DiagonalComposite { op, .. } => op.ncols(),
            HessianKind::Dense(m) => m.ncols(),
        }
    }

    pub fn apply(&self, w: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            HessianKind::DiagonalComposite { d, op, .. } => {
                let aw = op.apply(w);
                op.apply_adjoint(&aw.component_mul(d))
            }
            HessianKind::Dense(m) => m * w,
        }
    }
}

/// Smooth part `f` of the objective.
pub trait SmoothOracle: Debug + Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn value_and_gradient(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        (self.value(x), self.gradient(x))
    }
    fn hessian_info(&self, x: &DVector<f64>) -> HessianInfo;

    /// `f(x + s) − f(x)`; overridden where a cancellation-free form exists.
    fn value_change(&self, x: &DVector<f64>, s: &DVector<f64>) -> f64 {
        self.value(&(x + s)) - self.value(x)
    }
}

/// One element `U` of the Clarke generalized Jacobian of a prox mapping.
#[derive(Debug, Clone)]
pub enum ClarkeElement {
    Identity,
    /// Diagonal with 0/1 entries.
    Diagonal(DVector<f64>),
    Blocks(Vec<BlockJacobian>),
}

#[derive(Debug, Clone)]
pub struct BlockJacobian {
    pub indices: Vec<usize>,
    pub kind: BlockKind,
}

#[derive(Debug, Clone)]
pub enum BlockKind {
    Zero,
    /// `factor·I + coef·v vᵀ` on the block.
    Shrink {
        factor: f64,
        coef: f64,
        v: DVector<f64>,
    },
}

impl ClarkeElement {
    pub fn apply(&self, w: &DVector<f64>) -> DVector<f64> {
        match self {
            ClarkeElement::Identity => w.clone(),
            ClarkeElement::Diagonal(u) => u.component_mul(w),
            ClarkeElement::Blocks(blocks) => {
                let mut out = DVector::zeros(w.len());
                for b in blocks {
                    if let BlockKind::Shrink { factor, coef, v } = &b.kind {
                        let vw: f64 = b.indices.iter().zip(v.iter()).map(|(&i, vi)| vi * w[i]).sum();
                        for (&i, vi) in b.indices.iter().zip(v.iter()) {
                            out[i] = factor * w[i] + coef * vi * vw;
                        }
                    }
                }
                out
            }
        }
    }

    /// Materializes the element as an `n x n` matrix (testing and diagnostics).
    pub fn to_dense(&self, n: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            m.set_column(j, &self.apply(&e));
        }
        m
    }
}

/// Proper closed convex `g` with an efficiently computable prox.
pub trait Regularizer: Debug + Send + Sync {
    /// `g(x)`; `+∞` outside the effective domain.
    fn value(&self, x: &DVector<f64>) -> f64;

    /// `argmin_x { g(x) + ‖x − u‖²/(2t) }`.
    fn prox(&self, u: &DVector<f64>, t: f64) -> Result<DVector<f64>>;

    /// One element of `∂prox_{tg}(v)`.
    fn clarke_element(&self, v: &DVector<f64>, t: f64) -> ClarkeElement;

    /// `dist(w, ∂g(x))`.
    fn subgradient_distance(&self, x: &DVector<f64>, w: &DVector<f64>) -> f64;

    /// A canonical element `ξ ∈ ∂g(x)`, used to anchor displacements at `x`.
    fn anchor_subgradient(&self, x: &DVector<f64>) -> DVector<f64>;

    /// `prox_{tg}(x − t(r − ξ)) − x` with `ξ = anchor_subgradient(x)`.
    ///
    /// `r` plays the role of a reduced gradient: it is small when `x` is
    /// nearly optimal, and implementations should then return a displacement
    /// accurate relative to `‖r‖` rather than to `‖x‖`.
    fn prox_displacement(&self, x: &DVector<f64>, r: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        let xi = self.anchor_subgradient(x);
        let p = self.prox(&(x - (r - xi) * t), t)?;
        Ok(p - x)
    }

    /// Bregman gap `g(x + d) − g(x) − ⟨ξ, d⟩ ≥ 0` with `ξ = anchor_subgradient(x)`.
    fn bregman_gap(&self, x: &DVector<f64>, d: &DVector<f64>) -> f64 {
        let xi = self.anchor_subgradient(x);
        self.value(&(x + d)) - self.value(x) - xi.dot(d)
    }

    /// `g(x + s) − g(x)`.
    fn value_change(&self, x: &DVector<f64>, s: &DVector<f64>) -> f64 {
        self.value(&(x + s)) - self.value(x)
    }

    fn is_zero(&self) -> bool {
        false
    }
}

/// `min f(x) + g(x)`.
#[derive(Debug, Clone)]
pub struct CompositeProblem {
    pub smooth: Arc<dyn SmoothOracle>,
    pub reg: Arc<dyn Regularizer>,
    /// Lipschitz constant of `∇f`, when known.
    pub lipschitz_grad: Option<f64>,
}

impl CompositeProblem {
    pub fn new(smooth: Arc<dyn SmoothOracle>, reg: Arc<dyn Regularizer>) -> Self {
        Self {
            smooth,
            reg,
            lipschitz_grad: None,
        }
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz_grad = Some(l);
        self
    }

    pub fn dim(&self) -> usize {
        self.smooth.dim()
    }

    pub fn objective(&self, x: &DVector<f64>) -> Result<f64> {
        objective(self, x)
    }

    pub fn kkt_residual(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        kkt_residual(self, x)
    }

    /// `G(x)` from an already evaluated gradient.
    pub fn kkt_residual_from_grad(
        &self,
        x: &DVector<f64>,
        grad: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::OracleFailure("non-finite gradient".into()));
        }
        let p = self.reg.prox(&(x - grad), 1.0)?;
        Ok(x - p)
    }
}

/// `G(x) = x − prox_g(x − ∇f(x))` with unit prox parameter.
pub fn kkt_residual(problem: &CompositeProblem, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_len(x, problem.dim(), "kkt_residual point")?;
    if x.iter().any(|v| !v.is_finite()) {
        return invalid("kkt_residual at a non-finite point");
    }
    let grad = problem.smooth.gradient(x);
    problem.kkt_residual_from_grad(x, &grad)
}

/// `φ(x) = f(x) + g(x)`. Returns `+∞` outside `dom g`; a non-finite `f` is an
/// oracle failure.
pub fn objective(problem: &CompositeProblem, x: &DVector<f64>) -> Result<f64> {
    check_len(x, problem.dim(), "objective point")?;
    let f = problem.smooth.value(x);
    if !f.is_finite() {
        return Err(SolverError::OracleFailure(format!("f(x) = {f}")));
    }
    let g = problem.reg.value(x);
    if g.is_nan() {
        return Err(SolverError::OracleFailure("g(x) is NaN".into()));
    }
    Ok(f + g)
}
