//! Small dense linear-algebra helpers.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::math;
use crate::{Error, Matrix, Result};

const POWER_MAX_ITERS: usize = 10_000;
const POWER_TOL: f64 = 1e-14;

/// Spectral radius of a square non-negative matrix by power iteration.
///
/// Iterates on `A + I`: for a non-negative `A` the Perron root of the shifted
/// matrix strictly dominates every other eigenvalue in modulus, so the
/// iteration converges even when `A` is bipartite (eigenvalues `±λ`). The
/// radius is read off as `‖A v‖` for the converged unit Perron vector `v`.
pub fn spectral_radius(a: &Matrix) -> Result<f64> {
    let n = a.rows();
    if n != a.cols() {
        return Err(Error::Shape(alloc::format!(
            "spectral radius of a non-square {}x{} matrix",
            n,
            a.cols()
        )));
    }
    if a.as_slice().iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::Invalid(
            "power iteration expects a finite non-negative matrix".into(),
        ));
    }
    if a.as_slice().iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let mut v = vec![1.0 / math::sqrt(n as f64); n];
    for _ in 0..POWER_MAX_ITERS {
        let mut w = a.matvec(&v)?;
        for (wi, vi) in w.iter_mut().zip(&v) {
            *wi += vi;
        }
        let norm = math::sqrt(w.iter().map(|x| x * x).sum());
        for wi in w.iter_mut() {
            *wi /= norm;
        }
        let change = w
            .iter()
            .zip(&v)
            .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
        v = w;
        if change <= POWER_TOL {
            break;
        }
    }
    let av = a.matvec(&v)?;
    Ok(math::sqrt(av.iter().map(|x| x * x).sum()))
}

/// Solves `A x = b` with partial-pivot LU.
pub fn solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    if n != a.cols() || b.len() != n {
        return Err(Error::Shape(alloc::format!(
            "cannot solve a {}x{} system with a right-hand side of length {}",
            n,
            a.cols(),
            b.len()
        )));
    }
    let lu = to_nalgebra(a).lu();
    let x = lu.solve(&DVector::from_column_slice(b)).ok_or(Error::Singular)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    Ok(x.iter().copied().collect())
}

/// Inverse via partial-pivot LU.
pub fn inverse(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if n != a.cols() {
        return Err(Error::Shape(alloc::format!(
            "cannot invert a {}x{} matrix",
            n,
            a.cols()
        )));
    }
    let inv = to_nalgebra(a).lu().try_inverse().ok_or(Error::Singular)?;
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    Ok(Matrix::from_fn(n, n, |r, c| inv[(r, c)]))
}

/// Eigenvalues of a symmetric matrix, sorted in descending order.
pub fn symmetric_eigenvalues(a: &Matrix) -> Result<Vec<f64>> {
    if a.rows() != a.cols() {
        return Err(Error::Shape("eigenvalues of a non-square matrix".into()));
    }
    let eig = to_nalgebra(a).symmetric_eigen();
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(|x, y| y.total_cmp(x));
    Ok(values)
}

fn to_nalgebra(a: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice())
}
