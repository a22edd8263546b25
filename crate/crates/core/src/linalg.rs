//! Dense linear algebra for small symmetric problems.
//!
//! Everything here works on row-major `f64` storage. Dimensions in this crate stay in
//! the tens, so the solvers favour robustness over asymptotic speed: cyclic Jacobi for
//! the symmetric eigenproblem and Cholesky whitening for the generalized one.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{LdganError, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(LdganError::invalid(format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from row slices. All rows must share one length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(LdganError::invalid(format!(
                    "row {i} has length {}, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(LdganError::invalid(format!(
                "matmul shape mismatch: {:?} x {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Column means as a vector of length `cols`. Zero rows gives zeros.
    pub fn column_means(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.cols];
        if self.rows == 0 {
            return mean;
        }
        for r in self.row_iter() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        let n = self.rows as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Stacks `self` on top of `other`.
    pub fn vstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(LdganError::invalid(format!(
                "vstack width mismatch: {} vs {}",
                self.cols, other.cols
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Matrix {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }

    /// Copies out the rows listed in `idx`.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Square symmetric matrix. Mutation goes through [`SymMatrix::set`] and
/// [`SymMatrix::add_outer`], which write both triangles, so `a[i][j] == a[j][i]`
/// holds bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    inner: Matrix,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        SymMatrix {
            inner: Matrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix {
            inner: Matrix::identity(dim),
        }
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut s = SymMatrix::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            s.inner[(i, i)] = d;
        }
        s
    }

    /// Builds from `f(i, j)` evaluated on the upper triangle only.
    pub fn from_upper(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut s = SymMatrix::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                s.set(i, j, f(i, j));
            }
        }
        s
    }

    /// Accepts a square matrix whose triangles agree within `1e-12` relative to its
    /// largest entry; the stored matrix is the exact average of both triangles.
    pub fn from_matrix(m: &Matrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(LdganError::invalid(format!(
                "symmetric matrix must be square, got {:?}",
                m.shape()
            )));
        }
        let scale = m.max_abs().max(f64::MIN_POSITIVE);
        let n = m.rows();
        for i in 0..n {
            for j in i + 1..n {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                    return Err(LdganError::invalid(format!(
                        "matrix not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(SymMatrix::from_upper(n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)])))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        SymMatrix::from_matrix(&Matrix::from_rows(rows)?)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.inner.rows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.inner[(i, j)] = v;
        self.inner[(j, i)] = v;
    }

    /// `self += weight * x x^T`
    pub fn add_outer(&mut self, weight: f64, x: &[f64]) {
        let n = self.dim();
        debug_assert_eq!(x.len(), n);
        for i in 0..n {
            let wi = weight * x[i];
            if wi == 0.0 {
                continue;
            }
            for j in i..n {
                let v = self.inner[(i, j)] + wi * x[j];
                self.set(i, j, v);
            }
        }
    }

    /// `self += weight * other`
    pub fn add_scaled(&mut self, weight: f64, other: &SymMatrix) {
        for (a, b) in self
            .inner
            .as_mut_slice()
            .iter_mut()
            .zip(other.inner.as_slice())
        {
            *a += weight * b;
        }
    }

    pub fn add_to_diag(&mut self, v: f64) {
        for i in 0..self.dim() {
            self.inner[(i, i)] += v;
        }
    }

    pub fn scale_in_place(&mut self, s: f64) {
        self.inner.as_mut_slice().iter_mut().for_each(|v| *v *= s);
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.inner[(i, i)]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.inner.max_abs()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.inner
    }

    /// `x^T A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            acc += xi * dot(self.inner.row(i), y);
        }
        acc
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.inner.row_iter().map(|r| dot(r, x)).collect()
    }

    /// Congruence `T A T^T`.
    pub fn congruence(&self, t: &Matrix) -> Result<SymMatrix> {
        let ta = t.matmul(&self.inner)?;
        let tat = ta.matmul(&t.transpose())?;
        Ok(SymMatrix::from_upper(tat.rows(), |i, j| {
            0.5 * (tat[(i, j)] + tat[(j, i)])
        }))
    }
}

/// Eigenvalues in descending order with matching eigenvectors stored one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl EigenPairs {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn vector(&self, k: usize) -> &[f64] {
        self.vectors.row(k)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_REL_TOL: f64 = 1e-12;

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns values in descending order; eigenvector `k` is row `k` of `vectors`, unit
/// norm, with its first nonzero component positive.
pub fn sym_eig(a: &SymMatrix) -> Result<EigenPairs> {
    let n = a.dim();
    if n == 0 {
        return Err(LdganError::invalid("sym_eig on an empty matrix"));
    }
    if !a.as_matrix().is_finite() {
        return Err(LdganError::invalid("sym_eig input has non-finite entries"));
    }

    let mut m = a.as_matrix().clone();
    // columns of v accumulate the rotations
    let mut v = Matrix::identity(n);
    let frob = m.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
    let target = JACOBI_REL_TOL * frob;

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off = off_diagonal_norm(&m);
        if off <= target || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut m, &mut v, p, q, c, s, t);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut vecs: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let mut col: Vec<f64> = (0..n).map(|i| v[(i, k)]).collect();
            normalize_sign(&mut col);
            col
        })
        .collect();
    let vals: Vec<f64> = (0..n).map(|k| m[(k, k)]).collect();
    order.sort_by(|&i, &j| {
        vals[j]
            .total_cmp(&vals[i])
            .then_with(|| lexi_desc(&vecs[i], &vecs[j]))
    });

    let values = order.iter().map(|&k| vals[k]).collect();
    let rows: Vec<Vec<f64>> = order.iter().map(|&k| std::mem::take(&mut vecs[k])).collect();
    Ok(EigenPairs {
        values,
        vectors: Matrix::from_rows(&rows)?,
    })
}

fn off_diagonal_norm(m: &Matrix) -> f64 {
    let n = m.rows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += m[(i, j)] * m[(i, j)];
            }
        }
    }
    acc.sqrt()
}

// Applies the rotation zeroing m[p][q] (Rutishauser's update form).
fn rotate(m: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64, t: f64) {
    let n = m.rows();
    let apq = m[(p, q)];
    let tau = s / (1.0 + c);
    m[(p, p)] -= t * apq;
    m[(q, q)] += t * apq;
    m[(p, q)] = 0.0;
    m[(q, p)] = 0.0;
    for r in 0..n {
        if r != p && r != q {
            let arp = m[(r, p)];
            let arq = m[(r, q)];
            let new_rp = arp - s * (arq + tau * arp);
            let new_rq = arq + s * (arp - tau * arq);
            m[(r, p)] = new_rp;
            m[(p, r)] = new_rp;
            m[(r, q)] = new_rq;
            m[(q, r)] = new_rq;
        }
        let vrp = v[(r, p)];
        let vrq = v[(r, q)];
        v[(r, p)] = vrp - s * (vrq + tau * vrp);
        v[(r, q)] = vrq + s * (vrp - tau * vrq);
    }
}

/// Flips `x` so its first non-negligible component is positive.
fn normalize_sign(x: &mut [f64]) {
    let scale = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return;
    }
    if let Some(first) = x.iter().find(|v| v.abs() > 1e-10 * scale) {
        if *first < 0.0 {
            x.iter_mut().for_each(|v| *v = -*v);
        }
    }
}

fn lexi_desc(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = y.total_cmp(x);
        if o != std::cmp::Ordering::Equal {
            return o;
        }
    }
    std::cmp::Ordering::Equal
}

/// Lower-triangular `L` with positive diagonal such that `L L^T = A`.
pub fn cholesky(a: &SymMatrix) -> Result<Matrix> {
    let n = a.dim();
    if !a.as_matrix().is_finite() {
        return Err(LdganError::invalid("cholesky input has non-finite entries"));
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(LdganError::NotPositiveDefinite { row: j, pivot: d });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Solves `L x = b` for lower-triangular `L`.
pub fn solve_lower(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut x = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solves `L^T x = b` for lower-triangular `L`.
pub fn solve_lower_transpose(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solves `B x = λ W x` for symmetric `B` and positive-definite `W`.
///
/// Whitens with `W = L L^T`, diagonalizes `L^{-1} B L^{-T}`, and maps eigenvectors
/// back through `L^{-T}`. Returned vectors satisfy `w_i^T W w_j = δ_ij`.
pub fn generalized_eig(b: &SymMatrix, w: &SymMatrix) -> Result<EigenPairs> {
    let n = b.dim();
    if w.dim() != n {
        return Err(LdganError::invalid(format!(
            "generalized_eig dimension mismatch: {} vs {}",
            n,
            w.dim()
        )));
    }
    if !b.as_matrix().is_finite() {
        return Err(LdganError::invalid("generalized_eig: non-finite B"));
    }
    let l = cholesky(w)?;

    // X = L^{-1} B, column by column; B symmetric so columns are rows.
    let mut x = Matrix::zeros(n, n);
    for j in 0..n {
        let col = solve_lower(&l, b.as_matrix().row(j));
        for i in 0..n {
            x[(i, j)] = col[i];
        }
    }
    // C = L^{-1} X^T
    let mut c = Matrix::zeros(n, n);
    for j in 0..n {
        let col = solve_lower(&l, x.row(j));
        for i in 0..n {
            c[(i, j)] = col[i];
        }
    }
    let c = SymMatrix::from_upper(n, |i, j| 0.5 * (c[(i, j)] + c[(j, i)]));
    let eig = sym_eig(&c)?;

    let rows: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let mut v = solve_lower_transpose(&l, eig.vector(k));
            normalize_sign(&mut v);
            v
        })
        .collect();
    Ok(EigenPairs {
        values: eig.values,
        vectors: Matrix::from_rows(&rows)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn eig_identity() {
        let e = sym_eig(&SymMatrix::identity(2)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0]);
        let v = &e.vectors;
        assert_close(dot(v.row(0), v.row(1)), 0.0, 1e-15);
        assert_close(norm(v.row(0)), 1.0, 1e-15);
        assert_close(norm(v.row(1)), 1.0, 1e-15);
    }

    #[test]
    fn eig_diagonal() {
        let e = sym_eig(&SymMatrix::from_diag(&[1.0, 3.0])).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
        assert_eq!(e.vector(0), &[0.0, 1.0]);
        assert_eq!(e.vector(1), &[1.0, 0.0]);
    }

    #[test]
    fn eig_two_by_two_closed_form() {
        // characteristic polynomial (2-λ)^2 - 1 = 0 → λ = 3, 1
        let a = SymMatrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let e = sym_eig(&a).unwrap();
        assert_close(e.values[0], 3.0, 1e-14);
        assert_close(e.values[1], 1.0, 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_close(e.vector(0)[0], h, 1e-14);
        assert_close(e.vector(0)[1], h, 1e-14);
        assert_close(e.vector(1)[0], h, 1e-14);
        assert_close(e.vector(1)[1], -h, 1e-14);
    }

    #[test]
    fn eig_rejects_nan() {
        let mut a = SymMatrix::identity(2);
        a.set(0, 1, f64::NAN);
        assert!(matches!(sym_eig(&a), Err(LdganError::InvalidInput(_))));
    }

    #[test]
    fn cholesky_cases() {
        assert_eq!(cholesky(&SymMatrix::identity(3)).unwrap(), Matrix::identity(3));

        let a = SymMatrix::from_rows(&[[4.0, 2.0], [2.0, 5.0]]).unwrap();
        let l = cholesky(&a).unwrap();
        assert_eq!(l, Matrix::from_rows(&[[2.0, 0.0], [1.0, 2.0]]).unwrap());

        let bad = SymMatrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(matches!(
            cholesky(&bad),
            Err(LdganError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn generalized_examples() {
        let b = SymMatrix::from_diag(&[2.0, 0.0]);
        let e = generalized_eig(&b, &SymMatrix::identity(2)).unwrap();
        assert_eq!(e.values, vec![2.0, 0.0]);

        // B w = λ W w with B = diag(2,0), W = diag(2,1): λ = 2/2 = 1 on e1
        let e = generalized_eig(&b, &SymMatrix::from_diag(&[2.0, 1.0])).unwrap();
        assert_close(e.values[0], 1.0, 1e-15);
        assert_close(e.values[1], 0.0, 1e-15);
        // w^T W w = 1
        assert_close(2.0 * e.vector(0)[0].powi(2), 1.0, 1e-15);

        let e = generalized_eig(&SymMatrix::zeros(3), &SymMatrix::identity(3)).unwrap();
        assert!(e.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn generalized_propagates_not_pd() {
        let w = SymMatrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(matches!(
            generalized_eig(&SymMatrix::identity(2), &w),
            Err(LdganError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn symmetry_enforced_by_storage() {
        let mut s = SymMatrix::zeros(3);
        s.add_outer(0.3, &[1.0, -2.0, 0.7]);
        s.set(0, 2, 9.0);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(s.get(i, j).to_bits(), s.get(j, i).to_bits());
            }
        }
        let asym = Matrix::from_rows(&[[1.0, 2.0], [2.5, 1.0]]).unwrap();
        assert!(SymMatrix::from_matrix(&asym).is_err());
    }
}
