//! Small dense linear algebra for the ARU closed-form solve.
//!
//! Sizes here never exceed a few dozen rows, so everything is plain row-major
//! `f64` storage with O(d^3) Cholesky.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn zeros(len: usize) -> Self {
        DenseVector(vec![0.0; len])
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        DenseVector(data)
    }

    /// `[v, 1]`: the bias-augmented copy used throughout the local fit.
    pub fn augmented(v: &[f64]) -> Self {
        let mut data = Vec::with_capacity(v.len() + 1);
        data.extend_from_slice(v);
        data.push(1.0);
        DenseVector(data)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
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

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.0, other)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

impl Index<usize> for DenseVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for DenseVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Square row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(dim: usize) -> Self {
        DenseMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::shape(format!("row of length {dim}"), row.len()));
            }
            data.extend_from_slice(row);
        }
        Ok(DenseMatrix { dim, data })
    }

    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::shape(dim * dim, data.len()));
        }
        Ok(DenseMatrix { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<DenseVector> {
        if v.len() != self.dim {
            return Err(Error::shape(self.dim, v.len()));
        }
        Ok(DenseVector(
            (0..self.dim).map(|i| dot(self.row(i), v)).collect(),
        ))
    }

    /// `self + shift * I`
    pub fn add_diagonal(&self, shift: f64) -> DenseMatrix {
        let mut out = self.clone();
        for i in 0..self.dim {
            out[(i, i)] += shift;
        }
        out
    }

    /// Replace the matrix with `(M + M^T) / 2`.
    pub fn symmetrize(&mut self) {
        let d = self.dim;
        for i in 0..d {
            for j in (i + 1)..d {
                let avg = 0.5 * (self.data[i * d + j] + self.data[j * d + i]);
                self.data[i * d + j] = avg;
                self.data[j * d + i] = avg;
            }
        }
    }

    pub fn is_symmetric(&self) -> bool {
        let d = self.dim;
        (0..d).all(|i| (0..i).all(|j| self.data[i * d + j] == self.data[j * d + i]))
    }

    /// In-place `self = alpha * self + z z^T`, the rank-one aged accumulation.
    pub(crate) fn age_and_add_outer(&mut self, alpha: f64, z: &[f64]) {
        let d = self.dim;
        debug_assert_eq!(z.len(), d);
        for i in 0..d {
            let zi = z[i];
            let row = &mut self.data[i * d..(i + 1) * d];
            for (m, &zj) in row.iter_mut().zip(z) {
                *m = alpha * *m + zi * zj;
            }
        }
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    // Four independent partial sums, combined in a fixed order.
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `v v^T`
pub fn outer(v: &DenseVector) -> DenseMatrix {
    let d = v.len();
    let mut m = DenseMatrix::zeros(d);
    for i in 0..d {
        for j in 0..d {
            m[(i, j)] = v[i] * v[j];
        }
    }
    m
}

/// `alpha * a + b`, elementwise.
pub fn axpy_matrix(alpha: f64, a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.dim != b.dim {
        return Err(Error::shape(
            format!("{0}x{0}", a.dim),
            format!("{0}x{0}", b.dim),
        ));
    }
    let data = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| alpha * x + y)
        .collect();
    Ok(DenseMatrix { dim: a.dim, data })
}

/// Lower-triangular Cholesky factor `L` with `A = L L^T`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    dim: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    pub fn factor(a: &DenseMatrix) -> Result<Self> {
        let d = a.dim;
        let mut l = vec![0.0; d * d];
        for j in 0..d {
            let row_j = &l[j * d..j * d + j];
            let diag = a[(j, j)] - dot(row_j, row_j);
            if !(diag > 0.0) {
                return Err(Error::NotPositiveDefinite {
                    pivot: j,
                    value: diag,
                });
            }
            let ljj = diag.sqrt();
            l[j * d + j] = ljj;
            for i in (j + 1)..d {
                let (head, tail) = l.split_at_mut(i * d);
                let s = a[(i, j)] - dot(&tail[..j], &head[j * d..j * d + j]);
                tail[j] = s / ljj;
            }
        }
        Ok(Cholesky { dim: d, lower: l })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve(&self, b: &[f64]) -> Result<DenseVector> {
        let d = self.dim;
        if b.len() != d {
            return Err(Error::shape(d, b.len()));
        }
        let l = &self.lower;
        // forward: L y = b
        let mut x = b.to_vec();
        for i in 0..d {
            let s = x[i] - dot(&l[i * d..i * d + i], &x[..i]);
            x[i] = s / l[i * d + i];
        }
        // backward: L^T x = y
        for i in (0..d).rev() {
            let mut s = x[i];
            for k in (i + 1)..d {
                s -= l[k * d + i] * x[k];
            }
            x[i] = s / l[i * d + i];
        }
        Ok(DenseVector(x))
    }
}

/// Solve `A x = b` for symmetric positive-definite `A` by Cholesky, with one
/// step of iterative refinement on the residual.
pub fn spd_solve(a: &DenseMatrix, b: &DenseVector) -> Result<DenseVector> {
    if a.dim != b.len() {
        return Err(Error::shape(a.dim, b.len()));
    }
    let chol = Cholesky::factor(a)?;
    let mut x = chol.solve(b.as_slice())?;
    let ax = a.mul_vec(x.as_slice())?;
    let r: Vec<f64> = b.0.iter().zip(&ax.0).map(|(b, ax)| b - ax).collect();
    let dx = chol.solve(&r)?;
    for (x, d) in x.0.iter_mut().zip(&dx.0) {
        *x += d;
    }
    Ok(x)
}
