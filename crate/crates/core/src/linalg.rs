//! Minimal dense linear algebra for the small systems solved here.
//!
//! Design matrices have at most a few dozen columns, so a plain row-major
//! matrix with an unblocked Cholesky factorization is both simpler and faster
//! than pulling in a full linear-algebra stack.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = F::one();
        }
        m
    }

    /// Builds a matrix from row slices. All rows must share one length.
    pub fn from_rows(rows: &[Vec<F>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::EmptyDesign);
        };
        let cols = first.len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(rows * cols, data.len(), "shape does not match buffer");
        Self { rows, cols, data }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [F] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn scale(&mut self, factor: F) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    pub fn add_diagonal(&mut self, value: F) {
        debug_assert_eq!(self.rows, self.cols);
        for i in 0..self.rows {
            self[(i, i)] += value;
        }
    }

    pub fn trace(&self) -> F {
        debug_assert_eq!(self.rows, self.cols);
        (0..self.rows).map(|i| self[(i, i)]).sum()
    }

    /// y = M x
    pub fn mul_vec(&self, x: &[F]) -> Vec<F> {
        debug_assert_eq!(self.cols, x.len());
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn is_symmetric(&self, tol: F) -> bool {
        if self.rows != self.cols {
            return false;
        }
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if (self[(i, j)] - self[(j, i)]).abs() > tol {
                    return false;
                }
            }
        }
        true
    }
}

impl<F: Scalar> std::ops::Index<(usize, usize)> for Matrix<F> {
    type Output = F;

    fn index(&self, (i, j): (usize, usize)) -> &F {
        &self.data[i * self.cols + j]
    }
}

impl<F: Scalar> std::ops::IndexMut<(usize, usize)> for Matrix<F> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut F {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// x^T M x for square M.
pub fn quad_form<F: Scalar>(m: &Matrix<F>, x: &[F]) -> F {
    dot(&m.mul_vec(x), x)
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
///
/// Fails with [`Error::SingularSystem`] when a pivot is not strictly positive,
/// which covers both singular and indefinite inputs.
pub fn cholesky<F: Scalar>(m: &Matrix<F>) -> Result<Matrix<F>> {
    debug_assert_eq!(m.nrows(), m.ncols());
    let n = m.nrows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = m[(i, j)];
            for k in 0..j {
                sum -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if !(sum > F::zero()) || !sum.is_finite() {
                    return Err(Error::SingularSystem);
                }
                l[(i, j)] = sum.sqrt();
            } else {
                l[(i, j)] = sum / l[(j, j)];
            }
        }
    }
    Ok(l)
}

/// Solves L L^T x = b given the lower Cholesky factor L.
pub fn cholesky_solve<F: Scalar>(l: &Matrix<F>, b: &[F]) -> Vec<F> {
    let n = l.nrows();
    debug_assert_eq!(b.len(), n);
    // forward: L y = b
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            let lik = l[(i, k)];
            y[i] = y[i] - lik * y[k];
        }
        y[i] = y[i] / l[(i, i)];
    }
    // backward: L^T x = y
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let lki = l[(k, i)];
            y[i] = y[i] - lki * y[k];
        }
        y[i] = y[i] / l[(i, i)];
    }
    y
}

/// Inverse of the factored matrix, symmetrized against round-off.
pub fn cholesky_inverse<F: Scalar>(l: &Matrix<F>) -> Matrix<F> {
    let n = l.nrows();
    let mut inv = Matrix::zeros(n, n);
    let mut unit = vec![F::zero(); n];
    for j in 0..n {
        unit[j] = F::one();
        let col = cholesky_solve(l, &unit);
        unit[j] = F::zero();
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }
    let half = F::cast(0.5);
    for i in 0..n {
        for j in 0..i {
            let s = (inv[(i, j)] + inv[(j, i)]) * half;
            inv[(i, j)] = s;
            inv[(j, i)] = s;
        }
    }
    inv
}
