//! Dense row-major `f64` matrices and the handful of kernels the rest of the
//! crate is built on: products, row/column softmax, a cyclic Jacobi
//! eigensolver and singular values through the smaller Gram matrix.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sweep limit for the Jacobi eigensolver.
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Off-diagonal Frobenius norm target, relative to the input norm.
pub const JACOBI_TOL: f64 = 1e-12;
/// Inputs to [`sym_eigen`] may deviate from symmetry by this much
/// (scaled by `max(1, max|m|)`) before being rejected.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Gram eigenvalues at or below this times `Q * λ_max` are treated as zero
/// by [`singular_values`].
pub const GRAM_ROUNDOFF: f64 = 16.0 * f64::EPSILON;

/// Dense real matrix, `rows x cols`, stored row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Node or token representations `H`, one entity per row.
pub type RepMatrix = Matrix;

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<MatrixRepr> for Matrix {
    type Error = Error;

    fn try_from(r: MatrixRepr) -> Result<Self> {
        Matrix::from_vec(r.rows, r.cols, r.data)
    }
}

impl From<Matrix> for MatrixRepr {
    fn from(m: Matrix) -> Self {
        MatrixRepr {
            rows: m.rows,
            cols: m.cols,
            data: m.data,
        }
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    /// Builds a matrix from row-major entries, rejecting empty shapes and
    /// non-finite values.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::InvalidShape {
                rows,
                cols,
                len: data.len(),
            });
        }
        let m = Matrix { rows, cols, data };
        match m.first_non_finite() {
            Some((row, col)) => Err(Error::NonFinite { row, col }),
            None => Ok(m),
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n * d);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {d}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Matrix::from_vec(n, d, data)
    }

    /// Unchecked constructor for kernel outputs; callers that can produce
    /// non-finite values check [`Matrix::is_finite`] themselves.
    pub(crate) fn raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert!(rows > 0 && cols > 0 && data.len() == rows * cols);
        Matrix { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix::from_fn(rows, cols, |_, _| value)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix::filled(rows, cols, 0.0)
    }

    pub fn identity(n: usize) -> Self {
        Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Matrix::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|k| (k / self.cols, k % self.cols))
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix::raw(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, c: f64) -> Matrix {
        self.map(|v| c * v)
    }

    fn zip_with(&self, other: &Matrix, op: &str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch(format!(
                "{op}: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Matrix::raw(self.rows, self.cols, data))
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    /// `a * self + b * other`, element-wise.
    pub fn axpby(&self, a: f64, other: &Matrix, b: f64) -> Result<Matrix> {
        self.zip_with(other, "axpby", |x, y| a * x + b * y)
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> Result<f64> {
        Ok(self
            .sub(other)?
            .data
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs())))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (acc, v) in s.iter_mut().zip(self.row(i)) {
                *acc += v;
            }
        }
        s
    }

    pub fn col_means(&self) -> Vec<f64> {
        let n = self.rows as f64;
        self.col_sums().into_iter().map(|s| s / n).collect()
    }

    /// Subtracts each column's mean, i.e. left-multiplies by `I - 11ᵀ/n`.
    pub fn center_columns(&self) -> Matrix {
        let means = self.col_means();
        let mut out = self.clone();
        for i in 0..out.rows {
            for (v, m) in out.row_mut(i).iter_mut().zip(&means) {
                *v -= m;
            }
        }
        out
    }

    /// `self * selfᵀ` (rows x rows).
    pub fn gram_rows(&self) -> Matrix {
        let n = self.rows;
        let mut g = Matrix::raw(n, n, vec![0.0; n * n]);
        for i in 0..n {
            let ri = self.row(i);
            for j in i..n {
                let v = dot(ri, self.row(j));
                g.set(i, j, v);
                g.set(j, i, v);
            }
        }
        g
    }

    /// `selfᵀ * self` (cols x cols).
    pub fn gram_cols(&self) -> Matrix {
        let d = self.cols;
        let mut g = vec![0.0; d * d];
        for i in 0..self.rows {
            let r = self.row(i);
            for a in 0..d {
                let ra = r[a];
                if ra == 0.0 {
                    continue;
                }
                let dst = &mut g[a * d..(a + 1) * d];
                for (acc, rb) in dst[a..].iter_mut().zip(&r[a..]) {
                    *acc += ra * rb;
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                g[a * d + b] = g[b * d + a];
            }
        }
        Matrix::raw(d, d, g)
    }

    /// Returns the matrix whose row `k` is row `perm[k]` of `self`.
    pub fn permute_rows(&self, perm: &[usize]) -> Result<Matrix> {
        if perm.len() != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "permutation of length {} for {} rows",
                perm.len(),
                self.rows
            )));
        }
        let mut data = Vec::with_capacity(self.data.len());
        for &p in perm {
            data.extend_from_slice(self.row(p));
        }
        Ok(Matrix::raw(self.rows, self.cols, data))
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::DimensionMismatch(format!(
            "matmul: {}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let (n, m) = (a.rows, b.cols);
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let dst = &mut out[i * m..(i + 1) * m];
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for (o, bkj) in dst.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    Ok(Matrix::raw(n, m, out))
}

/// In-place shifted softmax of one vector.
pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for i in 0..out.rows {
        softmax_in_place(out.row_mut(i));
    }
    out
}

/// Column-wise softmax, defined as `softmax_rows(mᵀ)ᵀ`.
pub fn softmax_cols(m: &Matrix) -> Matrix {
    softmax_rows(&m.transpose()).transpose()
}

/// Descending list of eigenvalues or singular values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Spectrum(Vec<f64>);

impl Spectrum {
    /// Accepts values already in descending order.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Degenerate(format!("non-finite spectrum value {v}")));
        }
        if values.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig(
                "spectrum values must be sorted descending".into(),
            ));
        }
        Ok(Spectrum(values))
    }

    pub fn from_unsorted(mut values: Vec<f64>) -> Self {
        values.sort_by(|a, b| b.total_cmp(a));
        Spectrum(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> Option<f64> {
        self.0.first().copied()
    }

    pub fn min(&self) -> Option<f64> {
        self.0.last().copied()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl TryFrom<Vec<f64>> for Spectrum {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Spectrum::new(v)
    }
}

impl From<Spectrum> for Vec<f64> {
    fn from(s: Spectrum) -> Self {
        s.0
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching orthonormal
/// eigenvectors as the columns of the second matrix. The input is
/// symmetrized as `(m + mᵀ)/2` first.
pub fn sym_eigen(m: &Matrix) -> Result<(Spectrum, Matrix)> {
    if m.rows != m.cols {
        return Err(Error::DimensionMismatch(format!(
            "sym_eigen needs a square matrix, got {}x{}",
            m.rows, m.cols
        )));
    }
    if let Some((row, col)) = m.first_non_finite() {
        return Err(Error::NonFinite { row, col });
    }
    let n = m.rows;
    let scale = m.max_abs().max(1.0);
    let mut asym = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((m.get(i, j) - m.get(j, i)).abs());
        }
    }
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }

    let mut a = Matrix::from_fn(n, n, |i, j| 0.5 * (m.get(i, j) + m.get(j, i)));
    let mut v = Matrix::identity(n);
    let target = JACOBI_TOL * a.frobenius_sq().sqrt();

    let off_norm = |a: &Matrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += 2.0 * a.get(i, j) * a.get(i, j);
            }
        }
        s.sqrt()
    };

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_norm(&a) <= target {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A <- Jᵀ A J, columns first, then rows.
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    if !converged {
        let residual = off_norm(&a);
        if residual > target {
            return Err(Error::NoConvergence {
                sweeps: JACOBI_MAX_SWEEPS,
                residual,
            });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(j, j).total_cmp(&a.get(i, i)));
    let values = order.iter().map(|&i| a.get(i, i)).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v.get(r, order[c]));
    Ok((Spectrum(values), vectors))
}

/// Singular values from the eigenvalues of the smaller Gram matrix,
/// `min(rows, cols)` of them, descending. Negative round-off is clamped.
pub fn singular_values(m: &Matrix) -> Result<Spectrum> {
    let gram = if m.rows <= m.cols {
        m.gram_rows()
    } else {
        m.gram_cols()
    };
    let (eig, _) = sym_eigen(&gram)?;
    // Eigenvalues within round-off of zero carry no information; their
    // square roots would otherwise surface as ~1e-8 relative noise.
    let floor = GRAM_ROUNDOFF * gram.rows as f64 * eig.max().unwrap_or(0.0).max(0.0);
    Ok(Spectrum(
        eig.0
            .into_iter()
            .map(|l| if l <= floor { 0.0 } else { l.sqrt() })
            .collect(),
    ))
}
