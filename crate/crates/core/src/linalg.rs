//! Small dense linear-algebra helpers shared by the analysis code.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Solves `a x = b` by LU with partial pivoting.
pub fn solve(a: &Matrix, b: &Vector) -> Result<Vector> {
    if a.nrows() != a.ncols() || a.nrows() != b.len() {
        return Err(Error::Shape(format!(
            "cannot solve {}x{} system with rhs of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let lu = a.clone().lu();
    let x = lu
        .solve(b)
        .ok_or_else(|| Error::Singular("LU factorization hit a zero pivot".into()))?;
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::Singular("solution is not finite".into()))
    }
}

/// Solves `a X = b` for a matrix right-hand side.
pub fn solve_matrix(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.nrows() != a.ncols() || a.nrows() != b.nrows() {
        return Err(Error::Shape(format!(
            "cannot solve {}x{} system with {} rhs rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    let x = a
        .clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Singular("LU factorization hit a zero pivot".into()))?;
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::Singular("solution is not finite".into()))
    }
}

/// Eigenvalues of the symmetric part `(m + mᵀ)/2`, ascending.
pub fn symmetric_eigenvalues(m: &Matrix) -> Vector {
    let sym = (m + m.transpose()) * 0.5;
    let mut eig: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| a.total_cmp(b));
    Vector::from_vec(eig)
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_symmetric_eigenvalue(m: &Matrix) -> f64 {
    symmetric_eigenvalues(m)[0]
}

/// Largest eigenvalue of the symmetric part of `m`.
pub fn max_symmetric_eigenvalue(m: &Matrix) -> f64 {
    let e = symmetric_eigenvalues(m);
    e[e.len() - 1]
}

/// Induced ℓ₂ norm (largest singular value).
pub fn spectral_norm(m: &Matrix) -> f64 {
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Induced ℓ∞ norm: the largest absolute row sum.
pub fn inf_norm(m: &Matrix) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn l1_norm(v: &Vector) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn max_abs(v: &Vector) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Numerical rank with singular values counted above `tol * max(1, σ_max)`.
pub fn rank(m: &Matrix, tol: f64) -> usize {
    let sv = m.singular_values();
    let scale = sv.iter().copied().fold(1.0, f64::max);
    sv.iter().filter(|&&s| s > tol * scale).count()
}
