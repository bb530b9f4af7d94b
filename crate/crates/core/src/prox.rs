//! Concrete regularizers. `L1Reg` and `GroupL2Reg` carry cancellation-free
//! displacement and difference formulas; `ZeroReg` is `g ≡ 0`.
//!
//! Ties on the kink set (`|v_i| = tλ`, `‖v_J‖ = tλ`) pick the zero element of
//! the Clarke Jacobian.

use nalgebra::DVector;

use crate::error::{invalid, Result};
use crate::problem::{BlockJacobian, BlockKind, ClarkeElement, Regularizer};

fn check_step(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return invalid(format!("prox step must be positive and finite, got {t}"));
    }
    Ok(())
}

/// Componentwise soft threshold at level `t·λ`.
pub fn prox_l1(u: &DVector<f64>, t: f64, lambda: f64) -> Result<DVector<f64>> {
    check_step(t)?;
    let s = t * lambda;
    Ok(u.map(|ui| ui.signum() * (ui.abs() - s).max(0.0)))
}

/// 0/1 diagonal: 0 where `|v_i| ≤ tλ`, 1 elsewhere.
pub fn clarke_element_l1(v: &DVector<f64>, t: f64, lambda: f64) -> DVector<f64> {
    let s = t * lambda;
    v.map(|vi| if vi.abs() <= s { 0.0 } else { 1.0 })
}

/// Blockwise shrinkage `u_J·max(1 − tλ/‖u_J‖, 0)`.
pub fn prox_group(u: &DVector<f64>, t: f64, reg: &GroupL2Reg) -> Result<DVector<f64>> {
    check_step(t)?;
    if u.len() != reg.dim {
        return invalid(format!("prox_group: expected length {}, got {}", reg.dim, u.len()));
    }
    let s = t * reg.lambda;
    let mut out = DVector::zeros(u.len());
    for group in &reg.groups {
        let nrm = group.iter().map(|&i| u[i] * u[i]).sum::<f64>().sqrt();
        if nrm > s {
            let factor = 1.0 - s / nrm;
            for &i in group {
                out[i] = factor * u[i];
            }
        }
    }
    Ok(out)
}

/// Per block with `s = tλ`: zero if `‖v_J‖ ≤ s`, else
/// `(1 − s/‖v‖)I + (s/‖v‖³) v vᵀ`.
pub fn clarke_element_group(v: &DVector<f64>, t: f64, reg: &GroupL2Reg) -> ClarkeElement {
    let s = t * reg.lambda;
    let blocks = reg
        .groups
        .iter()
        .map(|group| {
            let vb = DVector::from_iterator(group.len(), group.iter().map(|&i| v[i]));
            let nrm = vb.norm();
            let kind = if nrm <= s {
                BlockKind::Zero
            } else {
                BlockKind::Shrink {
                    factor: 1.0 - s / nrm,
                    coef: s / (nrm * nrm * nrm),
                    v: vb,
                }
            };
            BlockJacobian {
                indices: group.clone(),
                kind,
            }
        })
        .collect();
    ClarkeElement::Blocks(blocks)
}

// |a + b| − |a| without cancellation.
fn abs_change(a: f64, b: f64) -> f64 {
    let den = (a + b).abs() + a.abs();
    if den == 0.0 {
        0.0
    } else {
        b * (2.0 * a + b) / den
    }
}

fn gather(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

// ‖a + b‖ − ‖a‖ without cancellation.
fn norm_change(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let an = a.norm();
    let den = (a + b).norm() + an;
    if den == 0.0 {
        0.0
    } else {
        (2.0 * a.dot(b) + b.norm_squared()) / den
    }
}

#[derive(Debug, Clone)]
pub struct L1Reg {
    lambda: f64,
}

impl L1Reg {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return invalid(format!("l1 weight must be positive, got {lambda}"));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl Regularizer for L1Reg {
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.lambda * x.lp_norm(1)
    }

    fn prox(&self, u: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        prox_l1(u, t, self.lambda)
    }

    fn clarke_element(&self, v: &DVector<f64>, t: f64) -> ClarkeElement {
        ClarkeElement::Diagonal(clarke_element_l1(v, t, self.lambda))
    }

    fn subgradient_distance(&self, x: &DVector<f64>, w: &DVector<f64>) -> f64 {
        x.iter()
            .zip(w.iter())
            .map(|(&xi, &wi)| {
                let d = if xi != 0.0 {
                    wi - self.lambda * xi.signum()
                } else {
                    (wi.abs() - self.lambda).max(0.0)
                };
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    fn anchor_subgradient(&self, x: &DVector<f64>) -> DVector<f64> {
        x.map(|xi| if xi == 0.0 { 0.0 } else { self.lambda * xi.signum() })
    }

    fn prox_displacement(&self, x: &DVector<f64>, r: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        check_step(t)?;
        let s = t * self.lambda;
        Ok(DVector::from_iterator(
            x.len(),
            x.iter().zip(r.iter()).map(|(&xi, &ri)| {
                if xi == 0.0 {
                    let v = -t * ri;
                    v.signum() * (v.abs() - s).max(0.0)
                } else if xi.abs() - t * ri * xi.signum() > 0.0 {
                    // Stays on the same side of the kink.
                    -t * ri
                } else {
                    let v = xi - t * (ri - self.lambda * xi.signum());
                    v.signum() * (v.abs() - s).max(0.0) - xi
                }
            }),
        ))
    }

    fn bregman_gap(&self, x: &DVector<f64>, d: &DVector<f64>) -> f64 {
        self.lambda
            * x.iter()
                .zip(d.iter())
                .map(|(&xi, &di)| {
                    if xi == 0.0 {
                        di.abs()
                    } else {
                        let y = xi + di;
                        if y == 0.0 || y.signum() == xi.signum() {
                            0.0
                        } else {
                            2.0 * y.abs()
                        }
                    }
                })
                .sum::<f64>()
    }

    fn value_change(&self, x: &DVector<f64>, s: &DVector<f64>) -> f64 {
        self.lambda * x.iter().zip(s.iter()).map(|(&a, &b)| abs_change(a, b)).sum::<f64>()
    }
}

/// `λ Σ_i ‖x_{J_i}‖` for a partition `{J_i}` of `{0, …, n−1}`.
#[derive(Debug, Clone)]
pub struct GroupL2Reg {
    lambda: f64,
    groups: Vec<Vec<usize>>,
    dim: usize,
}

impl GroupL2Reg {
    pub fn new(lambda: f64, groups: Vec<Vec<usize>>, dim: usize) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return invalid(format!("group weight must be positive, got {lambda}"));
        }
        let mut seen = vec![false; dim];
        for group in &groups {
            if group.is_empty() {
                return invalid("empty group");
            }
            for &i in group {
                if i >= dim {
                    return invalid(format!("group index {i} out of range for n = {dim}"));
                }
                if seen[i] {
                    return invalid(format!("index {i} appears in more than one group"));
                }
                seen[i] = true;
            }
        }
        if let Some(miss) = seen.iter().position(|s| !s) {
            return invalid(format!("index {miss} is not covered by any group"));
        }
        Ok(Self { lambda, groups, dim })
    }

    /// `count` contiguous groups of equal size; `dim` must be divisible by
    /// `count`.
    pub fn contiguous(lambda: f64, dim: usize, count: usize) -> Result<Self> {
        if count == 0 || !dim.is_multiple_of(count) {
            return invalid(format!("cannot split {dim} indices into {count} equal groups"));
        }
        let size = dim / count;
        let groups = (0..count)
            .map(|g| (g * size..(g + 1) * size).collect())
            .collect();
        Self::new(lambda, groups, dim)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }
}

impl Regularizer for GroupL2Reg {
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.lambda
            * self
                .groups
                .iter()
                .map(|g| g.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt())
                .sum::<f64>()
    }

    fn prox(&self, u: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        prox_group(u, t, self)
    }

    fn clarke_element(&self, v: &DVector<f64>, t: f64) -> ClarkeElement {
        clarke_element_group(v, t, self)
    }

    fn subgradient_distance(&self, x: &DVector<f64>, w: &DVector<f64>) -> f64 {
        self.groups
            .iter()
            .map(|g| {
                let xn = g.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt();
                if xn > 0.0 {
                    g.iter()
                        .map(|&i| {
                            let d = w[i] - self.lambda * x[i] / xn;
                            d * d
                        })
                        .sum::<f64>()
                } else {
                    let wn = g.iter().map(|&i| w[i] * w[i]).sum::<f64>().sqrt();
                    (wn - self.lambda).max(0.0).powi(2)
                }
            })
            .sum::<f64>()
            .sqrt()
    }

    fn anchor_subgradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(x.len());
        for g in &self.groups {
            let xn = g.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt();
            if xn > 0.0 {
                for &i in g {
                    out[i] = self.lambda * x[i] / xn;
                }
            }
        }
        out
    }

    fn prox_displacement(&self, x: &DVector<f64>, r: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        check_step(t)?;
        let s = t * self.lambda;
        let mut out = DVector::zeros(x.len());
        for g in &self.groups {
            let xb = gather(x, g);
            let rb = gather(r, g);
            let xn = xb.norm();
            let db = if xn == 0.0 {
                let v = &rb * (-t);
                let vn = v.norm();
                if vn > s {
                    v * (1.0 - s / vn)
                } else {
                    DVector::zeros(g.len())
                }
            } else {
                // v = a·x − t·r with a = 1 + s/‖x‖.
                let a = 1.0 + s / xn;
                let v = &xb * a - &rb * t;
                let vn = v.norm();
                if vn > s {
                    let ax = a * xn;
                    let sq_gap = 2.0 * t * a * xb.dot(&rb) - t * t * rb.norm_squared();
                    let gap = sq_gap / (ax + vn);
                    // v/‖v‖ − x/‖x‖
                    let unit_diff = &xb * (gap / (vn * xn)) - &rb * (t / vn);
                    -unit_diff * s - &rb * t
                } else {
                    -xb
                }
            };
            for (k, &i) in g.iter().enumerate() {
                out[i] = db[k];
            }
        }
        Ok(out)
    }

    fn bregman_gap(&self, x: &DVector<f64>, d: &DVector<f64>) -> f64 {
        self.lambda
            * self
                .groups
                .iter()
                .map(|g| {
                    let xb = gather(x, g);
                    let db = gather(d, g);
                    let xn = xb.norm();
                    if xn == 0.0 {
                        return db.norm();
                    }
                    let yn = (&xb + &db).norm();
                    let delta = norm_change(&xb, &db);
                    let num = db.norm_squared() * xn - xb.dot(&db) * delta;
                    (num / ((yn + xn) * xn)).max(0.0)
                })
                .sum::<f64>()
    }

    fn value_change(&self, x: &DVector<f64>, s: &DVector<f64>) -> f64 {
        self.lambda
            * self
                .groups
                .iter()
                .map(|g| norm_change(&gather(x, g), &gather(s, g)))
                .sum::<f64>()
    }
}

/// `g ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroReg;

impl Regularizer for ZeroReg {
    fn value(&self, _x: &DVector<f64>) -> f64 {
        0.0
    }

    fn prox(&self, u: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        check_step(t)?;
        Ok(u.clone())
    }

    fn clarke_element(&self, _v: &DVector<f64>, _t: f64) -> ClarkeElement {
        ClarkeElement::Identity
    }

    fn subgradient_distance(&self, _x: &DVector<f64>, w: &DVector<f64>) -> f64 {
        w.norm()
    }

    fn anchor_subgradient(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(x.len())
    }

    fn prox_displacement(&self, _x: &DVector<f64>, r: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        check_step(t)?;
        Ok(r * (-t))
    }

    fn bregman_gap(&self, _x: &DVector<f64>, _d: &DVector<f64>) -> f64 {
        0.0
    }

    fn value_change(&self, _x: &DVector<f64>, _s: &DVector<f64>) -> f64 {
        0.0
    }

    fn is_zero(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
        let gr = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - gr * (b - a);
        let mut d = a + gr * (b - a);
        while (b - a).abs() > tol {
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
            c = b - gr * (b - a);
            d = a + gr * (b - a);
        }
        0.5 * (a + b)
    }

    #[test]
    fn l1_basic_values() {
        let z = prox_l1(&DVector::zeros(3), 0.7, 2.0).unwrap();
        assert_eq!(z, DVector::zeros(3));
        let p = prox_l1(&DVector::from_vec(vec![1.2]), 0.5, 1.0).unwrap();
        assert!((p[0] - 0.7).abs() < 1e-15);
        assert!(prox_l1(&DVector::zeros(1), 0.0, 1.0).is_err());
        assert!(prox_l1(&DVector::zeros(1), -1.0, 1.0).is_err());
    }

    #[test]
    fn l1_matches_scalar_minimization() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (t, lambda) = (0.6, 0.5);
        let u = DVector::from_fn(50, |_, _| rng.random_range(-2.0..2.0));
        let p = prox_l1(&u, t, lambda).unwrap();
        for i in 0..50 {
            let ui = u[i];
            let x = golden_section(
                |x| lambda * x.abs() + (x - ui).powi(2) / (2.0 * t),
                -3.0,
                3.0,
                1e-11,
            );
            // Value comparisons resolve the minimizer to about √ε only.
            assert!((p[i] - x).abs() < 1e-6, "i={i}: {} vs {x}", p[i]);
        }
    }

    #[test]
    fn clarke_l1_rule() {
        let u = clarke_element_l1(&DVector::from_vec(vec![2.0, -0.1, 0.0, 0.5, -0.5]), 1.0, 0.5);
        assert_eq!(u.as_slice(), &[1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn group_examples() {
        let reg = GroupL2Reg::new(1.0, vec![vec![0, 1]], 2).unwrap();
        let u = DVector::from_vec(vec![3.0, 4.0]);
        let z = prox_group(&u, 5.0, &reg).unwrap();
        assert_eq!(z, DVector::zeros(2));
        let h = prox_group(&u, 2.5, &reg).unwrap();
        assert!((h[0] - 1.5).abs() < 1e-15 && (h[1] - 2.0).abs() < 1e-15);
        let zero = prox_group(&DVector::zeros(2), 1.0, &reg).unwrap();
        assert_eq!(zero, DVector::zeros(2));
    }

    #[test]
    fn group_prox_matches_grid_search() {
        // Coarse-to-fine grid minimization of λ‖x‖ + ‖x − u‖²/(2t) in 2-D.
        let reg = GroupL2Reg::new(1.0, vec![vec![0, 1]], 2).unwrap();
        let u = DVector::from_vec(vec![3.0, 4.0]);
        let t = 2.5;
        let obj = |x: f64, y: f64| (x * x + y * y).sqrt() + ((x - 3.0).powi(2) + (y - 4.0).powi(2)) / (2.0 * t);
        let (mut cx, mut cy, mut h) = (0.0, 0.0, 1.0);
        for _ in 0..60 {
            let mut best = (obj(cx, cy), cx, cy);
            for i in -10..=10 {
                for j in -10..=10 {
                    let (x, y) = (cx + i as f64 * h, cy + j as f64 * h);
                    let v = obj(x, y);
                    if v < best.0 {
                        best = (v, x, y);
                    }
                }
            }
            cx = best.1;
            cy = best.2;
            h *= 0.5;
        }
        let p = prox_group(&u, t, &reg).unwrap();
        assert!((p[0] - cx).abs() < 1e-8 && (p[1] - cy).abs() < 1e-8);
    }

    #[test]
    fn group_jacobian_example_and_fd() {
        let reg = GroupL2Reg::new(1.0, vec![vec![0, 1]], 2).unwrap();
        let v = DVector::from_vec(vec![3.0, 4.0]);
        let w = DVector::from_vec(vec![1.0, 0.0]);
        let jw = clarke_element_group(&v, 2.5, &reg).apply(&w);
        assert!((jw[0] - 0.68).abs() < 1e-12 && (jw[1] - 0.24).abs() < 1e-12);
        let h = 1e-6;
        let fd = (prox_group(&(&v + &w * h), 2.5, &reg).unwrap()
            - prox_group(&(&v - &w * h), 2.5, &reg).unwrap())
            / (2.0 * h);
        assert!((fd - jw).norm() < 1e-4);
    }

    #[test]
    fn group_jacobian_limits() {
        let reg = GroupL2Reg::new(1.0, vec![vec![0, 1]], 2).unwrap();
        let small = clarke_element_group(&DVector::from_vec(vec![0.3, 0.4]), 0.5, &reg);
        assert_eq!(small.to_dense(2), nalgebra::DMatrix::zeros(2, 2));
        let big = clarke_element_group(&DVector::from_vec(vec![3e9, 4e9]), 0.5, &reg);
        let d = big.to_dense(2) - nalgebra::DMatrix::<f64>::identity(2, 2);
        assert!(d.norm() < 1e-9);
    }

    #[test]
    fn group_validation() {
        assert!(GroupL2Reg::new(1.0, vec![vec![0, 1], vec![1, 2]], 3).is_err());
        assert!(GroupL2Reg::new(1.0, vec![vec![0, 1]], 3).is_err());
        assert!(GroupL2Reg::new(0.0, vec![vec![0]], 1).is_err());
        assert!(GroupL2Reg::contiguous(1.0, 10, 3).is_err());
        let g = GroupL2Reg::contiguous(1.0, 12, 3).unwrap();
        assert_eq!(g.groups()[2], vec![8, 9, 10, 11]);
    }

    fn arb_vec(n: usize) -> impl Strategy<Value = DVector<f64>> {
        proptest::collection::vec(-5.0f64..5.0, n).prop_map(DVector::from_vec)
    }

    fn regs() -> Vec<Box<dyn Regularizer>> {
        vec![
            Box::new(L1Reg::new(0.7).unwrap()),
            Box::new(GroupL2Reg::new(0.9, vec![vec![0, 3], vec![1, 2, 5], vec![4]], 6).unwrap()),
            Box::new(ZeroReg),
        ]
    }

    proptest! {
        #[test]
        fn prox_is_nonexpansive(u in arb_vec(6), v in arb_vec(6), t in 0.01f64..3.0) {
            for reg in regs() {
                let pu = reg.prox(&u, t).unwrap();
                let pv = reg.prox(&v, t).unwrap();
                prop_assert!((pu - pv).norm() <= (&u - &v).norm() * (1.0 + 1e-12) + 1e-14);
            }
        }

        #[test]
        fn prox_optimality(u in arb_vec(6), t in 0.01f64..3.0) {
            for reg in regs() {
                let z = reg.prox(&u, t).unwrap();
                let w = (&u - &z) / t;
                prop_assert!(reg.subgradient_distance(&z, &w) <= 1e-9 * (1.0 + w.norm()));
            }
        }

        #[test]
        fn displacement_matches_direct_prox(x in arb_vec(6), r in arb_vec(6), t in 0.01f64..3.0) {
            for reg in regs() {
                let xi = reg.anchor_subgradient(&x);
                let direct = reg.prox(&(&x - (&r - &xi) * t), t).unwrap() - &x;
                let stable = reg.prox_displacement(&x, &r, t).unwrap();
                prop_assert!((direct - stable).norm() <= 1e-10 * (1.0 + x.norm() + r.norm()));
            }
        }

        #[test]
        fn anchor_is_a_subgradient(x in arb_vec(6)) {
            for reg in regs() {
                let xi = reg.anchor_subgradient(&x);
                prop_assert!(reg.subgradient_distance(&x, &xi) <= 1e-12);
            }
        }

        #[test]
        fn bregman_and_change_match_direct(x in arb_vec(6), d in arb_vec(6)) {
            for reg in regs() {
                let xi = reg.anchor_subgradient(&x);
                let y = &x + &d;
                let direct = reg.value(&y) - reg.value(&x);
                prop_assert!((reg.value_change(&x, &d) - direct).abs() <= 1e-10 * (1.0 + reg.value(&x)));
                let gap = reg.bregman_gap(&x, &d);
                prop_assert!(gap >= 0.0);
                prop_assert!((gap - (direct - xi.dot(&d))).abs() <= 1e-10 * (1.0 + reg.value(&x) + d.norm()));
            }
        }

        #[test]
        fn clarke_eigenvalues_in_unit_interval(v in arb_vec(6), t in 0.01f64..3.0) {
            for reg in regs() {
                let m = reg.clarke_element(&v, t).to_dense(6);
                let sym = (&m + m.transpose()) * 0.5;
                prop_assert!((&m - &sym).norm() < 1e-12);
                for ev in sym.symmetric_eigenvalues().iter() {
                    prop_assert!(*ev >= -1e-12 && *ev <= 1.0 + 1e-12);
                }
            }
        }

        #[test]
        fn clarke_matches_directional_fd(v in arb_vec(6), w in arb_vec(6), t in 0.05f64..2.0) {
            for reg in regs() {
                // Skip points within 1e-3 of the kink set.
                let margin = match reg.clarke_element(&v, t) {
                    ClarkeElement::Diagonal(_) => v.iter().map(|x| (x.abs() - 0.7 * t).abs()).fold(f64::INFINITY, f64::min),
                    ClarkeElement::Blocks(bs) => bs.iter().map(|b| {
                        let n = b.indices.iter().map(|&i| v[i] * v[i]).sum::<f64>().sqrt();
                        (n - 0.9 * t).abs()
                    }).fold(f64::INFINITY, f64::min),
                    ClarkeElement::Identity => f64::INFINITY,
                };
                prop_assume!(margin > 1e-3);
                let wn = &w / w.norm().max(1e-12);
                let h = 1e-7;
                let fd = (reg.prox(&(&v + &wn * h), t).unwrap() - reg.prox(&(&v - &wn * h), t).unwrap()) / (2.0 * h);
                let jw = reg.clarke_element(&v, t).apply(&wn);
                prop_assert!((fd - jw).norm() < 1e-5);
            }
        }
    }
}
