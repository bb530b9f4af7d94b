use std::sync::Arc;

use nalgebra::DVector;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StudentT};
use serde::{Deserialize, Serialize};

use crate::dct::DctSubsampledOperator;
use crate::error::{invalid, Result};
use crate::linalg::LinearOperator;
use crate::problem::{CompositeProblem, Regularizer};
use crate::prox::{GroupL2Reg, L1Reg};
use crate::student_t::StudentTLoss;

/// Name of the generator recorded alongside every instance.
pub const RNG_NAME: &str = "ChaCha20Rng";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    /// `k` scattered nonzeros, `λ‖x‖₁`.
    L1 { sparsity: usize },
    /// `groups` contiguous groups, `active` of them nonzero, `λΣ‖x_J‖`.
    Group { groups: usize, active: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub n: usize,
    pub m: usize,
    pub family: Family,
    pub dynamic_range_db: f64,
    pub nu: f64,
    /// Multiplier on the t₅ noise; 0 gives noiseless data.
    pub noise_scale: f64,
    pub seed: u64,
}

impl InstanceSpec {
    /// `m = n/8`, `k = ⌊n/40⌋`, `ν = 0.25`, noise scale 0.1.
    pub fn l1(n: usize, dynamic_range_db: f64, seed: u64) -> Self {
        Self {
            n,
            m: n / 8,
            family: Family::L1 { sparsity: n / 40 },
            dynamic_range_db,
            nu: 0.25,
            noise_scale: 0.1,
            seed,
        }
    }

    /// `m = n/8`, `ν = 0.2`, noise scale 0.1.
    pub fn group(n: usize, groups: usize, active: usize, dynamic_range_db: f64, seed: u64) -> Self {
        Self {
            n,
            m: n / 8,
            family: Family::Group { groups, active },
            dynamic_range_db,
            nu: 0.2,
            noise_scale: 0.1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return invalid("n must be positive");
        }
        if self.m == 0 || self.m > self.n {
            return invalid(format!("need 0 < m ≤ n, got m = {} and n = {}", self.m, self.n));
        }
        if !(self.nu > 0.0) {
            return invalid(format!("nu must be positive, got {}", self.nu));
        }
        if !(self.noise_scale >= 0.0) || !self.dynamic_range_db.is_finite() {
            return invalid("noise scale must be nonnegative and the dynamic range finite");
        }
        match self.family {
            Family::L1 { sparsity } if sparsity > self.n => {
                invalid(format!("sparsity {sparsity} exceeds n = {}", self.n))
            }
            Family::Group { groups, active } => {
                if groups == 0 || !self.n.is_multiple_of(groups) {
                    invalid(format!("{groups} groups do not divide n = {}", self.n))
                } else if active > groups {
                    invalid(format!("{active} active groups exceed the {groups} groups"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(self.seed)
    }
}

/// `η₁·10^{d·η₂/20}` with `η₁ = ±1` and `η₂ ∈ [0, 1)`.
pub fn signal_magnitude(eta1: f64, eta2: f64, db: f64) -> f64 {
    eta1 * 10f64.powf(db * eta2 / 20.0)
}

fn draw_entry(rng: &mut impl Rng, db: f64) -> f64 {
    let eta1 = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let eta2: f64 = rng.random();
    signal_magnitude(eta1, eta2, db)
}

/// Sparse ground truth. Draw order: support positions, then one sign and
/// one exponent per nonzero in ascending position order.
pub fn generate_signal(spec: &InstanceSpec, rng: &mut impl Rng) -> Result<DVector<f64>> {
    spec.validate()?;
    let mut x = DVector::zeros(spec.n);
    match spec.family {
        Family::L1 { sparsity } => {
            let mut pos = sample(rng, spec.n, sparsity).into_vec();
            pos.sort_unstable();
            for i in pos {
                x[i] = draw_entry(rng, spec.dynamic_range_db);
            }
        }
        Family::Group { groups, active } => {
            let size = spec.n / groups;
            let mut chosen = sample(rng, groups, active).into_vec();
            chosen.sort_unstable();
            for g in chosen {
                for i in g * size..(g + 1) * size {
                    x[i] = draw_entry(rng, spec.dynamic_range_db);
                }
            }
        }
    }
    Ok(x)
}

/// `m` t₅ draws times `scale`.
pub fn student_t_noise(rng: &mut impl Rng, m: usize, scale: f64) -> DVector<f64> {
    let dist = StudentT::new(5.0).expect("5 degrees of freedom is valid");
    DVector::from_fn(m, |_, _| scale * dist.sample(rng))
}

/// A generated sparse recovery instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub spec: InstanceSpec,
    /// Sorted measured DCT rows.
    pub rows: Vec<usize>,
    pub x_true: DVector<f64>,
    pub b: DVector<f64>,
    pub lambda: f64,
    pub loss: Arc<StudentTLoss>,
    pub problem: CompositeProblem,
    pub x0: DVector<f64>,
}

impl Instance {
    /// `2/ν·‖A‖²`.
    pub fn lipschitz(&self) -> f64 {
        self.loss.lipschitz_bound()
    }
}

/// Signal, then rows, then noise, all from one stream seeded by `spec.seed`.
pub fn generate_instance(spec: &InstanceSpec) -> Result<Instance> {
    let mut rng = spec.rng();
    let x_true = generate_signal(spec, &mut rng)?;
    let mut rows = sample(&mut rng, spec.n, spec.m).into_vec();
    rows.sort_unstable();
    let noise = student_t_noise(&mut rng, spec.m, spec.noise_scale);
    let op = DctSubsampledOperator::new(spec.n, rows.clone())?;
    let b = op.apply(&x_true) + noise;
    assemble(spec.clone(), rows, x_true, b, None)
}

/// Builds the problem from stored data. `lambda` is recomputed when absent.
pub fn assemble(
    spec: InstanceSpec,
    rows: Vec<usize>,
    x_true: DVector<f64>,
    b: DVector<f64>,
    lambda: Option<f64>,
) -> Result<Instance> {
    spec.validate()?;
    if x_true.len() != spec.n || b.len() != spec.m || rows.len() != spec.m {
        return invalid("instance data does not match the declared dimensions");
    }
    let op: Arc<dyn LinearOperator> = Arc::new(DctSubsampledOperator::new(spec.n, rows.clone())?);
    let loss = Arc::new(StudentTLoss::new(op.clone(), b.clone(), spec.nu)?);
    let lambda = match lambda {
        Some(l) => l,
        None => lambda_rule(&loss),
    };
    let reg: Arc<dyn Regularizer> = match spec.family {
        Family::L1 { .. } => Arc::new(L1Reg::new(lambda)?),
        Family::Group { groups, .. } => Arc::new(GroupL2Reg::contiguous(lambda, spec.n, groups)?),
    };
    let problem = CompositeProblem::new(loss.clone(), reg).with_lipschitz(loss.lipschitz_bound());
    let x0 = op.apply_adjoint(&b);
    Ok(Instance {
        spec,
        rows,
        x_true,
        b,
        lambda,
        loss,
        problem,
        x0,
    })
}

/// `λ = 0.1·‖∇f(0)‖_∞`.
pub fn lambda_rule(loss: &StudentTLoss) -> f64 {
    use crate::problem::SmoothOracle;
    let g0 = loss.gradient(&DVector::zeros(loss.dim()));
    0.1 * g0.amax()
}
