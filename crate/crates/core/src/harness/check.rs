use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::harness::experiment::{solve_instance, Algorithm};
use crate::harness::instance::{generate_instance, InstanceSpec};
use crate::outer::{OuterConfig, RunStatus};
use crate::problem::SmoothOracle;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn line(name: &str, passed: bool, detail: String) -> CheckLine {
    CheckLine {
        name: name.to_string(),
        passed,
        detail,
    }
}

/// Audit and consistency checks on a small generated instance.
pub fn check_suite(n: usize, seed: u64) -> Result<Vec<CheckLine>> {
    let spec = InstanceSpec::l1(n, 20.0, seed);
    let inst = generate_instance(&spec)?;
    let mut out = Vec::new();
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed);

    let op = inst.loss.op();
    let worst_adj = (0..20)
        .map(|_| {
            let x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let y = DVector::from_fn(spec.m, |_, _| rng.random_range(-1.0..1.0));
            (op.apply(&x).dot(&y) - x.dot(&op.apply_adjoint(&y))).abs()
        })
        .fold(0.0, f64::max);
    out.push(line("dct adjoint", worst_adj < 1e-10, format!("max gap {worst_adj:e}")));

    let x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let g = inst.loss.gradient(&x);
    let dir = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let h = 1e-6;
    let fd = (inst.loss.value(&(&x + &dir * h)) - inst.loss.value(&(&x - &dir * h))) / (2.0 * h);
    let rel = (fd - g.dot(&dir)).abs() / g.dot(&dir).abs().max(1.0);
    out.push(line("gradient vs finite differences", rel < 1e-6, format!("relative error {rel:e}")));

    let cfg = OuterConfig::default();
    for alg in [Algorithm::Alg1, Algorithm::Alg2, Algorithm::Alg3, Algorithm::Pgm] {
        let rep = solve_instance(&inst, alg, &cfg, None)?;
        let ok = rep.status == RunStatus::Converged && rep.audits.total() == 0;
        out.push(line(
            &format!("{alg} run"),
            ok,
            format!(
                "{:?} after {} iterations, ‖G‖ = {:e}, audit violations {}",
                rep.status,
                rep.iterations(),
                rep.final_g_norm,
                rep.audits.total()
            ),
        ));
    }
    Ok(out)
}
