//! Orthonormal DCT-II and the row-subsampled DCT measurement operator.
//!
//! The transform uses the even/odd reordering trick so that one complex FFT
//! of length `n` yields all `n` cosine coefficients. With the orthonormal
//! scaling the full transform matrix is orthogonal, so a row subset has
//! orthonormal rows and `‖A‖ = 1` exactly.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Result};
use crate::linalg::LinearOperator;

/// Planned orthonormal DCT-II / DCT-III pair of a fixed length.
#[derive(Clone)]
pub struct DctPlan {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    // e^{-iπk/(2n)}
    twiddle: Vec<Complex<f64>>,
}

impl fmt::Debug for DctPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DctPlan").field("n", &self.n).finish()
    }
}

impl DctPlan {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n.max(1));
        let ifft = planner.plan_fft_inverse(n.max(1));
        let twiddle = (0..n)
            .map(|k| Complex::from_polar(1.0, -PI * k as f64 / (2.0 * n as f64)))
            .collect();
        Self {
            n,
            fft,
            ifft,
            twiddle,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn scale(&self, k: usize) -> f64 {
        let n = self.n as f64;
        if k == 0 {
            (1.0 / n).sqrt()
        } else {
            (2.0 / n).sqrt()
        }
    }

    /// Orthonormal DCT-II.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(x.len(), n);
        if n == 0 {
            return Vec::new();
        }
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let half = n.div_ceil(2);
        for j in 0..half {
            buf[j].re = x[2 * j];
        }
        for j in 0..n / 2 {
            buf[n - 1 - j].re = x[2 * j + 1];
        }
        self.fft.process(&mut buf);
        (0..n)
            .map(|k| (self.twiddle[k] * buf[k]).re * self.scale(k))
            .collect()
    }

    /// Orthonormal DCT-III, the inverse (and transpose) of [`Self::forward`].
    pub fn inverse(&self, coeffs: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(coeffs.len(), n);
        if n == 0 {
            return Vec::new();
        }
        let unscaled: Vec<f64> = (0..n).map(|k| coeffs[k] / self.scale(k)).collect();
        let mut buf: Vec<Complex<f64>> = (0..n)
            .map(|k| {
                let partner = if k == 0 { 0.0 } else { unscaled[n - k] };
                self.twiddle[k].conj() * Complex::new(unscaled[k], -partner)
            })
            .collect();
        self.ifft.process(&mut buf);
        let inv_n = 1.0 / n as f64;
        let mut x = vec![0.0; n];
        let half = n.div_ceil(2);
        for j in 0..half {
            x[2 * j] = buf[j].re * inv_n;
        }
        for j in 0..n / 2 {
            x[2 * j + 1] = buf[n - 1 - j].re * inv_n;
        }
        x
    }
}

/// `A x = (dct(x))_J` for a sorted row set `J`.
#[derive(Debug, Clone)]
pub struct DctSubsampledOperator {
    plan: DctPlan,
    rows: Vec<usize>,
}

impl DctSubsampledOperator {
    /// `rows` are zero-based and get sorted. Duplicates or indices `≥ n` are
    /// rejected.
    pub fn new(n: usize, rows: Vec<usize>) -> Result<Self> {
        let mut rows = rows;
        rows.sort_unstable();
        if let Some(&last) = rows.last() {
            if last >= n {
                return invalid(format!("row index {last} out of range for n = {n}"));
            }
        }
        if rows.windows(2).any(|w| w[0] == w[1]) {
            return invalid("duplicate row index in DCT row set");
        }
        Ok(Self {
            plan: DctPlan::new(n),
            rows,
        })
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn n(&self) -> usize {
        self.plan.len()
    }
}

impl LinearOperator for DctSubsampledOperator {
    fn nrows(&self) -> usize {
        self.rows.len()
    }

    fn ncols(&self) -> usize {
        self.plan.len()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let full = self.plan.forward(x.as_slice());
        DVector::from_iterator(self.rows.len(), self.rows.iter().map(|&j| full[j]))
    }

    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut padded = vec![0.0; self.plan.len()];
        for (&j, &v) in self.rows.iter().zip(y.iter()) {
            padded[j] = v;
        }
        DVector::from_vec(self.plan.inverse(&padded))
    }

    fn op_norm_sq(&self) -> f64 {
        if self.rows.is_empty() {
            0.0
        } else {
            1.0
        }
    }
}

/// `(dct(x))_J` for zero-based `J`.
pub fn dct_forward(x: &DVector<f64>, rows: &[usize]) -> Result<DVector<f64>> {
    let op = DctSubsampledOperator::new(x.len(), rows.to_vec())?;
    Ok(op.apply(x))
}

/// Inverse orthonormal DCT of `y` scattered into positions `J` of a length-`n`
/// zero vector.
pub fn dct_adjoint(y: &DVector<f64>, n: usize, rows: &[usize]) -> Result<DVector<f64>> {
    if y.len() != rows.len() {
        return invalid(format!(
            "adjoint input has length {} but {} rows were given",
            y.len(),
            rows.len()
        ));
    }
    let mut pairs: Vec<(usize, f64)> = rows.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_unstable_by_key(|p| p.0);
    let op = DctSubsampledOperator::new(n, pairs.iter().map(|p| p.0).collect())?;
    let sorted = DVector::from_iterator(pairs.len(), pairs.iter().map(|p| p.1));
    Ok(op.apply_adjoint(&sorted))
}
