//! Complex linear algebra shared by every other module.
//!
//! Unitary DFT matrices, Kronecker-structured transforms applied without
//! materializing the Kronecker product, and Hermitian solves with jitter
//! escalation. All sizes here are small (antenna counts <= 64), so direct
//! matrix application is used throughout.

pub mod rng;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub use rng::{mix_labels, mix64, Rng};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Unitary DFT matrix `F_n` with `F_n F_n^H = I` (1/sqrt(n) normalization).
pub fn unitary_dft(n: usize) -> Result<CMat> {
    if n == 0 {
        return Err(Error::Dimension("DFT dimension must be >= 1".into()));
    }
    let scale = 1.0 / (n as f64).sqrt();
    let base = -2.0 * std::f64::consts::PI / n as f64;
    Ok(CMat::from_fn(n, n, |j, l| {
        // exp(-2*pi*i*j*l/n) / sqrt(n); reduce j*l mod n to keep the angle small
        let phase = base * ((j * l) % n) as f64;
        Complex64::from_polar(scale, phase)
    }))
}

/// Applies `(a ⊗ b) v` as `vec(b * V * a^T)` where `V` is the column-major
/// matricization of `v` (rows = `b.ncols()`, cols = `a.ncols()`).
pub fn kron_apply(a: &CMat, b: &CMat, v: &CVec) -> Result<CVec> {
    let (rows, cols) = (b.ncols(), a.ncols());
    if v.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "kron_apply: vector length {} != {}x{}",
            v.len(),
            rows,
            cols
        )));
    }
    let m = CMat::from_column_slice(rows, cols, v.as_slice());
    let out = b * m * a.transpose();
    Ok(CVec::from_column_slice(out.as_slice()))
}

/// Kronecker DFT pair for one antenna geometry. Holds `F_rx` and `F_tx` so
/// hot loops do not rebuild the trig tables per sample.
#[derive(Debug, Clone)]
pub struct Beamspace {
    n_rx: usize,
    n_tx: usize,
    f_rx: CMat,
    f_tx: CMat,
}

impl Beamspace {
    pub fn new(n_rx: usize, n_tx: usize) -> Result<Self> {
        Ok(Self {
            n_rx,
            n_tx,
            f_rx: unitary_dft(n_rx)?,
            f_tx: unitary_dft(n_tx)?,
        })
    }

    /// `(F_tx ⊗ F_rx) h`
    pub fn forward(&self, h: &CVec) -> Result<CVec> {
        kron_apply(&self.f_tx, &self.f_rx, h)
    }

    /// `(F_tx^H ⊗ F_rx^H) h`, the adjoint (and inverse) of [`Self::forward`].
    pub fn inverse(&self, h: &CVec) -> Result<CVec> {
        kron_apply(&self.f_tx.adjoint(), &self.f_rx.adjoint(), h)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n_rx, self.n_tx)
    }
}

/// One-shot beamspace transform `(F_tx ⊗ F_rx) h` for `h` of length
/// `n_rx * n_tx`.
pub fn beamspace(h: &CVec, n_rx: usize, n_tx: usize) -> Result<CVec> {
    Beamspace::new(n_rx, n_tx)?.forward(h)
}

/// Inverse of [`beamspace`].
pub fn inverse_beamspace(h: &CVec, n_rx: usize, n_tx: usize) -> Result<CVec> {
    Beamspace::new(n_rx, n_tx)?.inverse(h)
}

/// Cholesky factorization of a Hermitian PSD matrix with jitter escalation:
/// on failure, `1e-10 * I` is added and scaled by 10 up to `1e-6 * I`.
pub struct HermitianSolver {
    chol: Cholesky<Complex64, Dyn>,
    jitter: f64,
}

impl HermitianSolver {
    pub fn new(c: &CMat) -> Result<Self> {
        if c.nrows() != c.ncols() {
            return Err(Error::Dimension("HermitianSolver: matrix not square".into()));
        }
        if let Some(chol) = c.clone().cholesky() {
            return Ok(Self { chol, jitter: 0.0 });
        }
        let mut jitter = 1e-10;
        while jitter <= 1e-6 {
            let mut m = c.clone();
            for i in 0..m.nrows() {
                m[(i, i)] += Complex64::new(jitter, 0.0);
            }
            if let Some(chol) = m.cholesky() {
                return Ok(Self { chol, jitter });
            }
            jitter *= 10.0;
        }
        Err(Error::Numeric(
            "Hermitian factorization failed even with 1e-6 jitter".into(),
        ))
    }

    pub fn solve_vec(&self, b: &CVec) -> CVec {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &CMat) -> CMat {
        self.chol.solve(b)
    }

    /// `ln det(C + jitter*I)`; real because the matrix is Hermitian PSD.
    pub fn ln_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.re.ln()).sum::<f64>()
    }

    /// Jitter that had to be added before factorization succeeded (0 if none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }
}

/// True if every entry is finite (no NaN/Inf in either component).
pub fn all_finite(v: &CVec) -> bool {
    v.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn all_finite_mat(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}
