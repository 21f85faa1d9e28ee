//! Small dense matrices.
//!
//! Dimensions here never exceed a few dozen, so plain row-major storage with
//! textbook algorithms is enough. Exact elimination works for any [`Field`];
//! Cholesky and the symmetric eigensolver need [`Real`].

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::{Field, Real};

#[derive(Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Mat<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[T]> = self.data.chunks(self.cols.max(1)).collect();
        f.debug_struct("Mat").field("rows", &self.rows).field("cols", &self.cols).field("data", &rows).finish()
    }
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

impl<T> Mat<T> {
    /// Row-major constructor.
    pub fn from_data(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length does not match shape");
        Mat { rows, cols, data }
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

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Mat<U> {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(f).collect() }
    }

    pub fn to_rows(&self) -> Vec<Vec<T>>
    where
        T: Clone,
    {
        self.data.chunks(self.cols.max(1)).map(|r| r.to_vec()).collect()
    }
}

impl<T: Field> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|row| row.len() != c) {
            return Err(Error::DimensionMismatch { expected: c, found: bad.len() });
        }
        Ok(Mat { rows: r, cols: c, data: rows.iter().flat_map(|row| row.iter().cloned()).collect() })
    }

    pub fn diagonal(entries: &[T]) -> Self {
        let mut m = Self::zeros(entries.len(), entries.len());
        for (i, e) in entries.iter().enumerate() {
            m[(i, i)] = e.clone();
        }
        m
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].clone())
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let prod = a.clone() * other[(k, j)].clone();
                    out[(i, j)] = out[(i, j)].clone() + prod;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "matvec shape mismatch");
        (0..self.rows)
            .map(|i| {
                self.row(i).iter().zip(v).fold(T::zero(), |acc, (a, b)| acc + a.clone() * b.clone())
            })
            .collect()
    }

    /// `xᵗ M x`.
    pub fn quad(&self, x: &[T]) -> T {
        let mx = self.matvec(x);
        x.iter().zip(&mx).fold(T::zero(), |acc, (a, b)| acc + a.clone() * b.clone())
    }

    /// `xᵗ M y`.
    pub fn bilinear(&self, x: &[T], y: &[T]) -> T {
        let my = self.matvec(y);
        x.iter().zip(&my).fold(T::zero(), |acc, (a, b)| acc + a.clone() * b.clone())
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a.clone() + b.clone()).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a.clone() - b.clone()).collect(),
        }
    }

    pub fn scale(&self, s: &T) -> Self {
        self.map(|a| a.clone() * s.clone())
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).fold(T::zero(), |acc, i| acc + self[(i, i)].clone())
    }

    /// `Tr(self · other)` without forming the product.
    pub fn trace_product(&self, other: &Self) -> T {
        assert_eq!(self.cols, other.rows);
        assert_eq!(self.rows, other.cols);
        let mut acc = T::zero();
        for i in 0..self.rows {
            for k in 0..self.cols {
                acc = acc + self[(i, k)].clone() * other[(k, i)].clone();
            }
        }
        acc
    }

    pub fn is_symmetric(&self) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (0..i).all(|j| self[(i, j)] == self[(j, i)]))
    }

    /// `(M + Mᵗ)/2`.
    pub fn symmetrized(&self) -> Self {
        let half = T::one() / T::from_int(2);
        Self::from_fn(self.rows, self.cols, |i, j| {
            (self[(i, j)].clone() + self[(j, i)].clone()) * half.clone()
        })
    }

    /// LU-style elimination with magnitude pivoting; exact on exact fields.
    fn eliminate(&self, rhs: Option<&Self>) -> Option<(T, Option<Self>)> {
        assert!(self.is_square());
        let n = self.rows;
        let mut a = self.clone();
        let mut b = rhs.cloned();
        let mut det = T::one();
        for col in 0..n {
            let pivot = (col..n)
                .filter(|&r| !a[(r, col)].is_zero())
                .max_by(|&x, &y| {
                    let fx = a[(x, col)].to_f64_lossy().abs();
                    let fy = a[(y, col)].to_f64_lossy().abs();
                    fx.partial_cmp(&fy).unwrap_or(std::cmp::Ordering::Equal)
                })?;
            if pivot != col {
                a.swap_rows(pivot, col);
                if let Some(b) = b.as_mut() {
                    b.swap_rows(pivot, col);
                }
                det = -det;
            }
            let p = a[(col, col)].clone();
            det = det * p.clone();
            for r in col + 1..n {
                let factor = a[(r, col)].clone() / p.clone();
                if factor.is_zero() {
                    continue;
                }
                for c in col..n {
                    let v = a[(r, c)].clone() - factor.clone() * a[(col, c)].clone();
                    a[(r, c)] = v;
                }
                if let Some(b) = b.as_mut() {
                    for c in 0..b.cols {
                        let v = b[(r, c)].clone() - factor.clone() * b[(col, c)].clone();
                        b[(r, c)] = v;
                    }
                }
            }
        }
        let solution = b.map(|mut b| {
            for col in (0..n).rev() {
                let p = a[(col, col)].clone();
                for c in 0..b.cols {
                    let mut v = b[(col, c)].clone();
                    for k in col + 1..n {
                        v = v - a[(col, k)].clone() * b[(k, c)].clone();
                    }
                    b[(col, c)] = v / p.clone();
                }
            }
            b
        });
        Some((det, solution))
    }

    fn swap_rows(&mut self, i: usize, j: usize) {
        for c in 0..self.cols {
            self.data.swap(i * self.cols + c, j * self.cols + c);
        }
    }

    pub fn determinant(&self) -> T {
        self.eliminate(None).map_or_else(T::zero, |(det, _)| det)
    }

    /// Inverse, or `None` when singular (exactly singular on exact fields).
    pub fn inverse(&self) -> Option<Self> {
        let (det, inv) = self.eliminate(Some(&Self::identity(self.rows)))?;
        if det.is_zero() {
            None
        } else {
            inv
        }
    }
}

impl<T: Real> Mat<T> {
    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
    }

    /// Maximum absolute asymmetry `|M_ij - M_ji|`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Upper-triangular `R` with `Rᵗ R = self`, or `None` if not positive definite.
    pub fn cholesky_upper(&self) -> Option<Self> {
        if !self.is_square() {
            return None;
        }
        let n = self.rows;
        let mut r = Self::zeros(n, n);
        for j in 0..n {
            let mut diag = self[(j, j)];
            for k in 0..j {
                diag = diag - r[(k, j)] * r[(k, j)];
            }
            if !(diag > T::zero()) || !diag.is_finite() {
                return None;
            }
            let rjj = diag.sqrt();
            r[(j, j)] = rjj;
            for i in j + 1..n {
                let mut v = self[(j, i)];
                for k in 0..j {
                    v = v - r[(k, j)] * r[(k, i)];
                }
                r[(j, i)] = v / rjj;
            }
        }
        Some(r)
    }

    /// Inverse of an upper-triangular matrix.
    pub fn upper_triangular_inverse(&self) -> Self {
        let n = self.rows;
        let mut inv = Self::zeros(n, n);
        for j in 0..n {
            inv[(j, j)] = T::one() / self[(j, j)];
            for i in (0..j).rev() {
                let mut s = T::zero();
                for k in i + 1..=j {
                    s = s + self[(i, k)] * inv[(k, j)];
                }
                inv[(i, j)] = -s / self[(i, i)];
            }
        }
        inv
    }

    /// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
    /// Returns eigenvalues ascending and the matching eigenvectors as columns.
    pub fn symmetric_eigen(&self) -> (Vec<T>, Self) {
        assert!(self.is_square());
        let n = self.rows;
        let mut a = self.symmetrized();
        let mut v = Self::identity(n);
        let eps = T::epsilon();
        for _sweep in 0..100 {
            let mut off = T::zero();
            let mut total = T::zero();
            for i in 0..n {
                for j in 0..n {
                    let sq = a[(i, j)] * a[(i, j)];
                    total = total + sq;
                    if i != j {
                        off = off + sq;
                    }
                }
            }
            if off <= eps * eps * total || off == T::zero() {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    if apq == T::zero() {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (T::lit(2.0) * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    let t = if theta == T::zero() { T::one() } else { t };
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap_or(std::cmp::Ordering::Equal));
        let values = order.iter().map(|&i| a[(i, i)]).collect();
        let vectors = Self::from_fn(n, n, |r, c| v[(r, order[c])]);
        (values, vectors)
    }

    pub fn symmetric_eigenvalues(&self) -> Vec<T> {
        self.symmetric_eigen().0
    }

    /// `f(M)` for symmetric `M` through its eigen-decomposition.
    pub fn symmetric_apply(&self, f: impl Fn(T) -> T) -> Self {
        let (values, vectors) = self.symmetric_eigen();
        let n = self.rows;
        Self::from_fn(n, n, |i, j| {
            (0..n).fold(T::zero(), |acc, k| acc + vectors[(i, k)] * f(values[k]) * vectors[(j, k)])
        })
    }

    pub fn symmetric_exp(&self) -> Self {
        self.symmetric_apply(|x| x.exp())
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, v| acc + *v * *v).sqrt()
    }
}

pub fn dot<T: Field>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + x.clone() * y.clone())
}

pub fn norm<T: Real>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |acc, x| acc + *x * *x).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn a2() -> Mat<f64> {
        Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap()
    }

    #[test]
    fn determinant_and_inverse() {
        let m = a2();
        assert!((m.determinant() - 3.0).abs() < 1e-15);
        let inv = m.inverse().unwrap();
        let id = m.matmul(&inv);
        assert!(id.sub(&Mat::identity(2)).max_abs() < 1e-15);
        let singular = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(singular.inverse().is_none());
    }

    #[test]
    fn exact_inverse() {
        let m = Mat::from_rows(&[
            vec![Rational::from_int(2), Rational::from_int(1)],
            vec![Rational::from_int(1), Rational::from_int(2)],
        ])
        .unwrap();
        let inv = m.inverse().unwrap();
        assert_eq!(inv[(0, 0)], Rational::from_ratio(2, 3));
        assert_eq!(inv[(0, 1)], Rational::from_ratio(-1, 3));
        assert_eq!(m.determinant(), Rational::from_int(3));
    }

    #[test]
    fn cholesky_reconstructs() {
        let m = a2();
        let r = m.cholesky_upper().unwrap();
        assert!(r.transpose().matmul(&r).sub(&m).max_abs() < 1e-15);
        let rinv = r.upper_triangular_inverse();
        assert!(r.matmul(&rinv).sub(&Mat::identity(2)).max_abs() < 1e-15);
        let indefinite = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(indefinite.cholesky_upper().is_none());
    }

    #[test]
    fn jacobi_eigen() {
        let m = Mat::from_rows(&[
            vec![4.0, 1.0, 0.5],
            vec![1.0, 3.0, -0.25],
            vec![0.5, -0.25, 1.0],
        ])
        .unwrap();
        let (vals, vecs) = m.symmetric_eigen();
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let recon = Mat::from_fn(3, 3, |i, j| (0..3).map(|k| vecs[(i, k)] * vals[k] * vecs[(j, k)]).sum());
        assert!(recon.sub(&m).max_abs() < 1e-13);
        assert!((vals.iter().sum::<f64>() - m.trace()).abs() < 1e-13);
    }

    #[test]
    fn exp_of_diagonal() {
        let m = Mat::diagonal(&[0.3, -0.3]);
        let e = m.symmetric_exp();
        assert!((e[(0, 0)] - 0.3f64.exp()).abs() < 1e-15);
        assert!((e[(1, 1)] - (-0.3f64).exp()).abs() < 1e-15);
        assert!(e[(0, 1)].abs() < 1e-15);
    }
}
