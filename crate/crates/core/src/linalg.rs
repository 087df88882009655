//! Small dense real matrices (row-major) with the handful of factorizations the
//! boundary-operator code needs. Heavy lifting is delegated to `faer`.

use crate::error::{EitError, Result};
use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;
use serde::{Deserialize, Serialize};
use std::ops::{Index, IndexMut};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(EitError::DimensionMismatch(format!("{} entries for a {rows}x{cols} matrix", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(EitError::DimensionMismatch("ragged rows".into()));
        }
        Ok(Self { rows: r, cols: c, data: rows.concat() })
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols.max(1)).map(<[f64]>::to_vec).take(self.rows).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(EitError::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension");
        self.data.chunks(self.cols).map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(EitError::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    /// (A + Aᵀ)/2, written so the result is bit-exactly symmetric.
    pub fn symmetrized(&self) -> Matrix {
        assert!(self.is_square(), "symmetrize needs a square matrix");
        let n = self.rows;
        let mut out = self.clone();
        for i in 0..n {
            for j in i + 1..n {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &Matrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn to_faer(&self) -> Mat<f64> {
        Mat::from_fn(self.rows, self.cols, |i, j| self[(i, j)])
    }

    pub fn from_faer(m: faer::MatRef<'_, f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }

    pub fn singular_values(&self) -> Result<Vec<f64>> {
        self.to_faer().singular_values().map_err(|e| EitError::Internal(format!("svd failed: {e:?}")))
    }

    /// 2-norm condition number; infinite for exactly singular input.
    pub fn condition_number(&self) -> Result<f64> {
        let s = self.singular_values()?;
        let (max, min) = (s.first().copied().unwrap_or(0.0), s.last().copied().unwrap_or(0.0));
        Ok(if min == 0.0 { f64::INFINITY } else { max / min })
    }

    pub fn inverse(&self) -> Result<Matrix> {
        if !self.is_square() {
            return Err(EitError::DimensionMismatch("inverse of a non-square matrix".into()));
        }
        let inv = self.to_faer().partial_piv_lu().inverse();
        let out = Matrix::from_faer(inv.as_ref());
        if !out.is_finite() {
            return Err(EitError::Internal("LU inverse produced non-finite entries".into()));
        }
        Ok(out)
    }

    /// Solves `self · X = rhs` by partial-pivot LU.
    pub fn solve(&self, rhs: &Matrix) -> Result<Matrix> {
        if !self.is_square() || self.rows != rhs.rows {
            return Err(EitError::DimensionMismatch("solve".into()));
        }
        use faer::linalg::solvers::Solve;
        let lu = self.to_faer().partial_piv_lu();
        let mut x = rhs.to_faer();
        lu.solve_in_place(x.as_mut());
        Ok(Matrix::from_faer(x.as_ref()))
    }

    /// Numerical rank with relative singular-value cutoff `rtol`.
    pub fn rank(&self, rtol: f64) -> Result<usize> {
        let s = self.singular_values()?;
        let top = s.first().copied().unwrap_or(0.0);
        Ok(s.iter().filter(|v| **v > rtol * top).count())
    }

    /// Moore–Penrose pseudo-inverse with singular values below `rtol·σ_max` dropped.
    pub fn pseudo_inverse(&self, rtol: f64) -> Result<Matrix> {
        let a = self.to_faer();
        let svd = a.thin_svd().map_err(|e| EitError::Internal(format!("svd failed: {e:?}")))?;
        let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
        let top = if s.nrows() > 0 { s[0] } else { 0.0 };
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..s.nrows() {
            if s[r] <= rtol * top || s[r] == 0.0 {
                continue;
            }
            let inv = 1.0 / s[r];
            for i in 0..self.cols {
                let vi = v[(i, r)] * inv;
                for j in 0..self.rows {
                    out[(i, j)] += vi * u[(j, r)];
                }
            }
        }
        Ok(out)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_diagonal() {
        let m = Matrix::diag(&[2.0, 4.0, 0.5]);
        let inv = m.inverse().unwrap();
        assert_eq!(inv, Matrix::diag(&[0.5, 0.25, 2.0]));
        assert!((m.condition_number().unwrap() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn symmetrized_is_exactly_symmetric() {
        let m = Matrix::from_fn(5, 5, |i, j| (i as f64 * 0.37 + j as f64 * 1.1).sin());
        let s = m.symmetrized();
        assert_eq!(s, s.transpose());
    }

    #[test]
    fn pseudo_inverse_of_rank_deficient() {
        // rows [1,1],[1,1] → pinv = [[.25,.25],[.25,.25]]
        let m = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let p = m.pseudo_inverse(1e-12).unwrap();
        for v in p.as_slice() {
            assert!((v - 0.25).abs() < 1e-14);
        }
        assert_eq!(m.rank(1e-10).unwrap(), 1);
    }

    #[test]
    fn solve_matches_inverse() {
        let a = Matrix::from_rows(&[vec![4.0, 1.0], vec![2.0, 3.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let x = a.solve(&b).unwrap();
        let y = a.inverse().unwrap().matmul(&b).unwrap();
        assert!((x[(0, 0)] - y[(0, 0)]).abs() < 1e-14);
        assert!((x[(1, 0)] - 0.6).abs() < 1e-14);
    }
}
