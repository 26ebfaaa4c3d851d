//! Complex dense linear algebra shared by the estimator, detector and RIS
//! design. Thin wrappers over `nalgebra` with the error mapping this crate
//! uses.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// One draw of CN(0, `var`): the variance is split evenly between the real
/// and imaginary parts.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    if var <= 0.0 {
        return C64::new(0.0, 0.0);
    }
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, var: f64) -> CMat {
    // column-major fill keeps the draw order stable
    let mut m = CMat::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            m[(r, c)] = complex_gaussian(rng, var);
        }
    }
    m
}

/// Squared Frobenius norm.
pub fn fro2(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

pub fn fro2_vec(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// `x ⊗ φ` for a symbol vector `x` and a phase vector `φ`.
pub fn kron_vec(x: &[C64], phi: &[C64]) -> CVec {
    let mut out = CVec::zeros(x.len() * phi.len());
    for (k, xk) in x.iter().enumerate() {
        for (l, p) in phi.iter().enumerate() {
            out[k * phi.len() + l] = xk * p;
        }
    }
    out
}

/// Solves `A X = B` for Hermitian positive (semi)definite `A`. Falls back to
/// LU when the Cholesky factorisation breaks down.
pub fn solve_hermitian(a: CMat, b: &CMat, context: &'static str) -> Result<CMat> {
    if a.nrows() != a.ncols() || a.nrows() != b.nrows() {
        return Err(crate::error::dim(format!(
            "{context}: system {}x{} against rhs {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if let Some(ch) = a.clone().cholesky() {
        let x = ch.solve(b);
        if x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Ok(x);
        }
    }
    let cond = hermitian_condition(&a);
    match a.lu().solve(b) {
        Some(x) if x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) => Ok(x),
        _ => Err(Error::Singular {
            context,
            condition: cond,
        }),
    }
}

/// `B A⁻¹` for Hermitian `A`, computed as `(A⁻¹ Bᴴ)ᴴ`.
pub fn solve_right_hermitian(b: &CMat, a: CMat, context: &'static str) -> Result<CMat> {
    let bh = b.adjoint();
    Ok(solve_hermitian(a, &bh, context)?.adjoint())
}

/// Condition number of a Hermitian matrix from its eigenvalues.
pub fn hermitian_condition(a: &CMat) -> f64 {
    if a.nrows() == 0 {
        return 1.0;
    }
    let ev = a.clone().symmetric_eigenvalues();
    let max = ev.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let min = ev.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn singular_values(m: &CMat) -> DVector<f64> {
    m.clone().svd(false, false).singular_values
}

/// Numerical rank with a relative singular-value threshold.
pub fn numerical_rank(m: &CMat, rel_tol: f64) -> usize {
    let sv = singular_values(m);
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Moore-Penrose pseudo-inverse.
pub fn pseudo_inverse(m: &CMat) -> CMat {
    let svd = m.clone().svd(true, true);
    let max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let eps = max * 1e-10 * (m.nrows().max(m.ncols()) as f64);
    svd.pseudo_inverse(eps.max(f64::MIN_POSITIVE))
        .expect("SVD computed with both factors")
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Scales column `c` of `m` by `s[c]` (right multiplication by `diag(s)`).
pub fn scale_columns(m: &mut CMat, s: &[f64]) {
    for (c, &v) in s.iter().enumerate() {
        m.column_mut(c).scale_mut(v);
    }
}

/// Scales row `r` of `m` by `s[r]` (left multiplication by `diag(s)`).
pub fn scale_rows(m: &mut CMat, s: &[f64]) {
    for (r, &v) in s.iter().enumerate() {
        m.row_mut(r).scale_mut(v);
    }
}
