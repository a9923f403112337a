//! Linear feature representations and weight vectors.

use serde::{Deserialize, Serialize};

use crate::linalg::{self, Matrix, Vector};
use crate::{Error, Result};

/// Tolerance for the full-column-rank check.
pub const RANK_TOL: f64 = 1e-10;

/// Anything that can act as a feature vector `x` in `xᵀw` and `w += c·x`.
pub trait FeatureVector {
    fn dot(&self, w: &[f64]) -> f64;
    fn add_scaled_to(&self, w: &mut [f64], scale: f64);
}

impl FeatureVector for [f64] {
    fn dot(&self, w: &[f64]) -> f64 {
        self.iter().zip(w).map(|(x, w)| x * w).sum()
    }

    fn add_scaled_to(&self, w: &mut [f64], scale: f64) {
        for (w, x) in w.iter_mut().zip(self) {
            *w += scale * x;
        }
    }
}

impl FeatureVector for Vec<f64> {
    fn dot(&self, w: &[f64]) -> f64 {
        self.as_slice().dot(w)
    }

    fn add_scaled_to(&self, w: &mut [f64], scale: f64) {
        self.as_slice().add_scaled_to(w, scale)
    }
}

/// Binary feature vector given by its active indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SparseBinary(pub Vec<usize>);

impl SparseBinary {
    pub fn indices(&self) -> &[usize] {
        &self.0
    }
}

impl FeatureVector for SparseBinary {
    fn dot(&self, w: &[f64]) -> f64 {
        self.0.iter().map(|&i| w[i]).sum()
    }

    fn add_scaled_to(&self, w: &mut [f64], scale: f64) {
        for &i in &self.0 {
            w[i] += scale;
        }
    }
}

/// Dense feature matrix `X` whose rows are indexed by state or by flattened
/// state-action pair. Always has full column rank.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    matrix: Matrix,
    /// Row-major copy for fast per-row access.
    rows: Vec<f64>,
}

impl FeatureMap {
    pub fn new(matrix: Matrix) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::Shape("feature matrix is empty".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("feature matrix has non-finite entries".into()));
        }
        let rank = linalg::rank(&matrix, RANK_TOL);
        if rank < matrix.ncols() {
            return Err(Error::RankDeficient { rank, columns: matrix.ncols() });
        }
        let rows = matrix.transpose().as_slice().to_vec();
        Ok(Self { matrix, rows })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::Shape("feature rows have different lengths".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(Matrix::from_row_slice(rows.len(), ncols, &flat))
    }

    /// The identity features of a tabular representation.
    pub fn tabular(n: usize) -> Self {
        Self::new(Matrix::identity(n, n)).expect("identity has full rank")
    }

    /// Features `c·X`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(&self.matrix * c)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn row(&self, idx: usize) -> &[f64] {
        let k = self.dim();
        &self.rows[idx * k..(idx + 1) * k]
    }

    /// `Xw` as a vector over rows.
    pub fn values(&self, w: &[f64]) -> Vector {
        &self.matrix * Vector::from_column_slice(w)
    }
}

/// Weight vector of a linear learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinearWeights(Vec<f64>);

impl LinearWeights {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn from_vec(w: Vec<f64>) -> Self {
        Self(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn to_vector(&self) -> Vector {
        Vector::from_column_slice(&self.0)
    }
}

/// Euclidean projection onto the ball of radius `radius` around the origin.
/// An infinite radius leaves `w` untouched.
pub fn project_ball(w: &mut [f64], radius: f64) {
    if !radius.is_finite() {
        return;
    }
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > radius {
        let scale = radius / norm;
        for x in w.iter_mut() {
            *x *= scale;
        }
    }
}
