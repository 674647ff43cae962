//! Two-dimensional FFTs over row-major square or rectangular grids.
//!
//! The 1-D transforms come from `rustfft`; this module adds the row/column
//! passes, the `1/N²` inverse normalization and the power-of-two contract the
//! ocean synthesizer relies on.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftDirection, FftPlanner};
use thiserror::Error;

use crate::real::Real;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FftError {
    #[error("grid size {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("buffer of length {got} does not hold a {n}x{n} grid")]
    BadLength { n: usize, got: usize },
}

/// Planned 2-D transform for a fixed `rows x cols` grid.
#[derive(Clone)]
pub struct Fft2<T: Real> {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<T>>,
    row_inv: Arc<dyn Fft<T>>,
    col_fwd: Arc<dyn Fft<T>>,
    col_inv: Arc<dyn Fft<T>>,
}

impl<T: Real> std::fmt::Debug for Fft2<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("rows", &self.rows).field("cols", &self.cols).finish()
    }
}

impl<T: Real> Fft2<T> {
    /// Square power-of-two grid, as required by the ocean synthesizer.
    pub fn square(n: usize) -> Result<Self, FftError> {
        if n == 0 || !n.is_power_of_two() {
            return Err(FftError::NotPowerOfTwo(n));
        }
        Ok(Self::any_size(n, n))
    }

    /// Arbitrary grid size (used for spectral analysis of image patches).
    pub fn any_size(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft(cols, FftDirection::Forward),
            row_inv: planner.plan_fft(cols, FftDirection::Inverse),
            col_fwd: planner.plan_fft(rows, FftDirection::Forward),
            col_inv: planner.plan_fft(rows, FftDirection::Inverse),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    fn run(&self, data: &mut [Complex<T>], row: &Arc<dyn Fft<T>>, col: &Arc<dyn Fft<T>>) {
        for r in data.chunks_exact_mut(self.cols) {
            row.process(r);
        }
        let mut column = vec![Complex::new(T::zero(), T::zero()); self.rows];
        for c in 0..self.cols {
            for (r, v) in column.iter_mut().enumerate() {
                *v = data[r * self.cols + c];
            }
            col.process(&mut column);
            for (r, v) in column.iter().enumerate() {
                data[r * self.cols + c] = *v;
            }
        }
    }

    fn check(&self, data: &[Complex<T>]) -> Result<(), FftError> {
        if data.len() != self.rows * self.cols {
            return Err(FftError::BadLength {
                n: self.rows,
                got: data.len(),
            });
        }
        Ok(())
    }

    /// Unnormalized forward transform, in place.
    pub fn forward(&self, data: &mut [Complex<T>]) -> Result<(), FftError> {
        self.check(data)?;
        self.run(data, &self.row_fwd, &self.col_fwd);
        Ok(())
    }

    /// Inverse transform with `1/(rows*cols)` normalization, in place.
    pub fn inverse(&self, data: &mut [Complex<T>]) -> Result<(), FftError> {
        self.inverse_unnormalized(data)?;
        let scale = T::one() / T::lit((self.rows * self.cols) as f64);
        data.iter_mut().for_each(|v| *v = *v * scale);
        Ok(())
    }

    /// Inverse transform without normalization: `Σ_k F(k) e^{+i k·x}`.
    pub fn inverse_unnormalized(&self, data: &mut [Complex<T>]) -> Result<(), FftError> {
        self.check(data)?;
        self.run(data, &self.row_inv, &self.col_inv);
        Ok(())
    }
}

/// Inverse 2-D DFT of an `N x N` row-major grid with `1/N²` normalization.
pub fn ifft2<T: Real>(field: &[Complex<T>]) -> Result<Vec<Complex<T>>, FftError> {
    let n = (field.len() as f64).sqrt().round() as usize;
    if n * n != field.len() {
        return Err(FftError::BadLength { n, got: field.len() });
    }
    let plan = Fft2::square(n)?;
    let mut out = field.to_vec();
    plan.inverse(&mut out)?;
    Ok(out)
}

/// Forward 2-D DFT of an `N x N` grid (unnormalized).
pub fn fft2<T: Real>(field: &[Complex<T>]) -> Result<Vec<Complex<T>>, FftError> {
    let n = (field.len() as f64).sqrt().round() as usize;
    if n * n != field.len() {
        return Err(FftError::BadLength { n, got: field.len() });
    }
    let plan = Fft2::square(n)?;
    let mut out = field.to_vec();
    plan.forward(&mut out)?;
    Ok(out)
}
