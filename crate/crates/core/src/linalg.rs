//! Dense complex linear algebra helpers shared by the solver blocks.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

const POWER_METHOD_TOL: f64 = 1e-8;
const POWER_METHOD_MAX_ITERS: usize = 500;

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.nrows();
    let scale = frobenius(m).max(1.0);
    for i in 0..n {
        for j in i..n {
            if (m[(i, j)] - m[(j, i)].conj()).norm() > tol * scale {
                return false;
            }
        }
    }
    true
}

/// Solves `m x = rhs` for Hermitian positive-definite `m` via Cholesky.
///
/// A factorization whose smallest squared pivot falls below `1e-12 * trace(m)`
/// is treated as singular.
pub fn hermitian_solve(m: &CMat, rhs: &CMat) -> Result<CMat> {
    if !m.is_square() || m.nrows() != rhs.nrows() {
        return Err(Error::Dimension(format!(
            "system {}x{} with right-hand side {}x{}",
            m.nrows(),
            m.ncols(),
            rhs.nrows(),
            rhs.ncols()
        )));
    }
    let trace: f64 = (0..m.nrows()).map(|i| m[(i, i)].re).sum();
    if !(trace > 0.0) || !trace.is_finite() {
        return Err(Error::Numerical(format!(
            "matrix is not positive definite (trace {trace:e})"
        )));
    }
    let chol = Cholesky::<Complex64, Dyn>::new(m.clone()).ok_or_else(|| {
        Error::Numerical("Cholesky factorization failed: matrix not positive definite".into())
    })?;
    let floor = 1e-12 * trace;
    let l = chol.l_dirty();
    for i in 0..m.nrows() {
        if l[(i, i)].norm_sqr() < floor {
            return Err(Error::Numerical(format!(
                "matrix is numerically singular (pivot {i} below {floor:e})"
            )));
        }
    }
    Ok(chol.solve(rhs))
}

/// Gershgorin enclosure `[lower, upper]` of the (real) spectrum of a Hermitian matrix.
pub fn gershgorin_bounds(m: &CMat) -> (f64, f64) {
    let n = m.nrows();
    let mut lower = f64::INFINITY;
    let mut upper = f64::NEG_INFINITY;
    for i in 0..n {
        let radius: f64 = (0..n).filter(|&j| j != i).map(|j| m[(i, j)].norm()).sum();
        let center = m[(i, i)].re;
        lower = lower.min(center - radius);
        upper = upper.max(center + radius);
    }
    (lower, upper)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxEig {
    pub value: f64,
    pub iterations: usize,
    /// `false` when the power method hit its iteration cap and `value` is the
    /// fallback upper bound.
    pub converged: bool,
}

/// Largest eigenvalue of a Hermitian matrix by the power method.
///
/// The iteration runs on `M + sI` with a Gershgorin shift `s` so that indefinite
/// matrices converge to the algebraically largest eigenvalue. On convergence the
/// Rayleigh quotient plus the residual norm is returned. If the method stalls,
/// `min(‖M‖_F, Gershgorin upper bound)` is returned instead, which still bounds
/// the spectrum from above.
pub fn max_eig_hermitian(m: &CMat) -> Result<MaxEig> {
    let n = m.nrows();
    if n == 0 || !m.is_square() {
        return Err(Error::Dimension(format!(
            "max_eig_hermitian needs a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !is_hermitian(m, 1e-10) {
        return Err(Error::InvalidArgument("matrix is not Hermitian".into()));
    }
    let frob = frobenius(m);
    if frob == 0.0 {
        return Ok(MaxEig {
            value: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    let (g_lo, g_hi) = gershgorin_bounds(m);
    let shift = (-g_lo).max(0.0);

    let mut x = start_vector(n);
    let mut y = CVec::zeros(n);
    for it in 1..=POWER_METHOD_MAX_ITERS {
        y.gemv(ONE, m, &x, ZERO);
        let mu = x.dotc(&y).re;
        let resid = (&y - &x * Complex64::from(mu)).norm();
        if resid <= POWER_METHOD_TOL * frob {
            return Ok(MaxEig {
                value: mu + resid,
                iterations: it,
                converged: true,
            });
        }
        y.axpy(Complex64::from(shift), &x, ONE);
        let norm = y.norm();
        if norm == 0.0 || !norm.is_finite() {
            break;
        }
        x.copy_from(&y);
        x.unscale_mut(norm);
    }
    Ok(MaxEig {
        value: frob.min(g_hi),
        iterations: POWER_METHOD_MAX_ITERS,
        converged: false,
    })
}

// Deterministic, generic start vector: unit norm with no special alignment.
fn start_vector(n: usize) -> CVec {
    let golden = 2.399_963_229_728_653;
    let mut v = CVec::from_fn(n, |i, _| {
        let mag = 1.0 + ((i * 7 + 3) % 11) as f64 / 11.0;
        Complex64::from_polar(mag, golden * i as f64)
    });
    let norm = v.norm();
    v.unscale_mut(norm);
    v
}

/// `x^H M x` for Hermitian `M` (imaginary round-off discarded).
pub fn quad_form(m: &CMat, x: &CVec) -> f64 {
    x.dotc(&(m * x)).re
}

/// Elementwise conjugate of a vector.
pub fn conj(v: &CVec) -> CVec {
    v.map(|z| z.conj())
}
