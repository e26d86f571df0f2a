//! Dense row-major `f64` matrices and the handful of kernels the solvers need.
//!
//! Every kernel accumulates each output element sequentially in index order,
//! so results are bit-identical no matter how many threads the rayon pool
//! has. Parallelism is only ever across output rows.

use std::fmt;
use std::ops::{Index, IndexMut};

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Pseudorandom generator used throughout the crate: ChaCha with 8 rounds,
/// seeded from a `u64` through `SeedableRng::seed_from_u64`. The stream is
/// platform independent.
pub type Rng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

// Below this many multiply-adds a matmul stays on the calling thread.
const PAR_THRESHOLD: usize = 1 << 18;

/// Dense matrix with finite entries stored row-major.
#[derive(Clone, PartialEq)]
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
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Matrix::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("matrix dimensions must be positive"));
        }
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        let m = Matrix { rows, cols, data };
        m.ensure_finite("from_vec")?;
        Ok(m)
    }

    /// Builds a matrix from row slices. Panics on ragged or non-finite input;
    /// meant for literals in tests and examples.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let data: Vec<f64> = rows
            .iter()
            .flat_map(|r| {
                assert_eq!(r.as_ref().len(), cols, "ragged rows");
                r.as_ref().iter().copied()
            })
            .collect();
        Matrix::from_vec(rows.len(), cols, data).expect("valid matrix literal")
    }

    /// Column vector (n x 1).
    pub fn column_vector(v: &[f64]) -> Result<Self> {
        Matrix::from_vec(v.len(), 1, v.to_vec())
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

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.data[i * self.cols + j])
            .collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols))
            .map(|i| self.data[i * self.cols + i])
            .sum()
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        matmul(self, other)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Result<Matrix> {
        let m = Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| c * x).collect(),
        };
        m.ensure_finite("scale")?;
        Ok(m)
    }

    /// `self · diag(d)`: column `j` multiplied by `d[j]`.
    pub fn scale_columns(&self, d: &[f64]) -> Result<Matrix> {
        if d.len() != self.cols {
            return Err(Error::DimensionMismatch {
                op: "scale_columns",
                left: self.shape(),
                right: (d.len(), d.len()),
            });
        }
        let mut m = self.clone();
        for row in m.data.chunks_mut(self.cols) {
            for (x, s) in row.iter_mut().zip(d) {
                *x *= s;
            }
        }
        m.ensure_finite("scale_columns")?;
        Ok(m)
    }

    /// `(self + selfᵀ) / 2`; exactly symmetric because IEEE addition commutes.
    pub fn symmetrized(&self) -> Result<Matrix> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch {
                op: "symmetrized",
                left: self.shape(),
                right: self.shape(),
            });
        }
        let n = self.rows;
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
            }
        }
        Ok(m)
    }

    /// `self · v` for a vector `v` of length `cols`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                op: "matvec",
                left: self.shape(),
                right: (v.len(), 1),
            });
        }
        Ok(self
            .data
            .chunks(self.cols)
            .map(|row| {
                let mut acc = 0.0;
                for (a, b) in row.iter().zip(v) {
                    acc += a * b;
                }
                acc
            })
            .collect())
    }

    /// `selfᵀ · v` for a vector `v` of length `rows`, without forming the transpose.
    pub fn matvec_t(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::DimensionMismatch {
                op: "matvec_t",
                left: (self.cols, self.rows),
                right: (v.len(), 1),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (row, &vi) in self.data.chunks(self.cols).zip(v) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * vi;
            }
        }
        Ok(out)
    }

    /// In-place rank-one update `self += u vᵀ`. Leaves `self` untouched and
    /// returns `NonFinite` if the result could overflow.
    pub fn rank_one_update(&mut self, u: &[f64], v: &[f64]) -> Result<()> {
        if u.len() != self.rows || v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                op: "rank_one_update",
                left: self.shape(),
                right: (u.len(), v.len()),
            });
        }
        let max_u = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let max_v = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let bound = self.max_abs() + max_u * max_v;
        if bound.is_nan() || bound >= f64::MAX / 2.0 {
            return Err(Error::NonFinite {
                op: "rank_one_update",
            });
        }
        for (row, &ui) in self.data.chunks_mut(self.cols).zip(u) {
            for (x, vj) in row.iter_mut().zip(v) {
                *x += ui * vj;
            }
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub(crate) fn ensure_finite(&self, op: &'static str) -> Result<()> {
        if self.data.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { op })
        }
    }

    fn zip_with(
        &self,
        other: &Matrix,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        let m = Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        };
        m.ensure_finite(op)?;
        Ok(m)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        assert!(i < self.rows && j < self.cols, "index out of bounds");
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        assert!(i < self.rows && j < self.cols, "index out of bounds");
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for row in self.data.chunks(self.cols) {
            writeln!(f, "  {row:?}")?;
        }
        write!(f, "]")
    }
}

/// Matrix product. Each output element is the sum over `k` of `a[i,k]·b[k,j]`
/// accumulated in increasing `k`; rows are distributed across threads for
/// large products.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::DimensionMismatch {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let (m, inner, p) = (a.rows, a.cols, b.cols);
    let mut out = Matrix::zeros(m, p);

    let row_kernel = |(i, out_row): (usize, &mut [f64])| {
        let a_row = &a.data[i * inner..(i + 1) * inner];
        for (k, &aik) in a_row.iter().enumerate() {
            let b_row = &b.data[k * p..(k + 1) * p];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    };

    if m * inner * p >= PAR_THRESHOLD && m > 1 {
        out.data.par_chunks_mut(p).enumerate().for_each(row_kernel);
    } else {
        out.data.chunks_mut(p).enumerate().for_each(row_kernel);
    }
    out.ensure_finite("matmul")?;
    Ok(out)
}

pub fn frobenius_norm(a: &Matrix) -> f64 {
    a.data.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest singular value by power iteration on `AᵀA`.
///
/// The returned value is `‖A v‖` for the last normalized iterate `v`, which
/// is a Rayleigh quotient of `AᵀA` and therefore never decreases with more
/// iterations (up to rounding) and never exceeds `‖A‖_F`.
pub fn spectral_norm(a: &Matrix, iters: usize, rng: &mut Rng) -> f64 {
    let fro = frobenius_norm(a);
    if fro == 0.0 {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..a.cols).map(|_| StandardNormal.sample(rng)).collect();
    if !normalize(&mut v) {
        v = vec![0.0; a.cols];
        v[0] = 1.0;
    }
    let mut estimate = 0.0;
    for _ in 0..iters.max(1) {
        // Shapes are consistent by construction.
        let av = a.matvec(&v).expect("shape");
        estimate = norm2(&av);
        let mut next = a.matvec_t(&av).expect("shape");
        if !normalize(&mut next) {
            break;
        }
        v = next;
    }
    let av = a.matvec(&v).expect("shape");
    estimate = f64::max(estimate, norm2(&av));
    estimate.min(fro)
}

/// `rows x cols` matrix of i.i.d. standard normal entries, filled row by
/// row from `rand_distr::StandardNormal` (ziggurat transform of the uniform
/// stream).
pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    Matrix { rows, cols, data }
}

/// Haar-distributed orthogonal matrix: Householder QR of a Gaussian matrix
/// with the columns of Q flipped so that R has a positive diagonal.
pub fn haar_orthogonal(n: usize, rng: &mut Rng) -> Matrix {
    let g = gaussian_matrix(n, n, rng);
    let (q, r_diag) = householder_qr(&g);
    let signs: Vec<f64> = r_diag
        .iter()
        .map(|&r| if r < 0.0 { -1.0 } else { 1.0 })
        .collect();
    q.scale_columns(&signs)
        .expect("orthogonal factor is finite")
}

/// Householder QR of a square matrix; returns the explicit `Q` and the
/// diagonal of `R`.
fn householder_qr(a: &Matrix) -> (Matrix, Vec<f64>) {
    let n = a.rows;
    let mut r = a.clone();
    let mut reflectors: Vec<(usize, Vec<f64>)> = Vec::with_capacity(n);
    let mut r_diag = vec![0.0; n];

    for k in 0..n {
        let x: Vec<f64> = (k..n).map(|i| r[(i, k)]).collect();
        let xnorm = norm2(&x);
        if k == n - 1 || xnorm == 0.0 {
            r_diag[k] = x[0];
            continue;
        }
        let alpha = if x[0] >= 0.0 { -xnorm } else { xnorm };
        let mut v = x;
        v[0] -= alpha;
        if !normalize(&mut v) {
            r_diag[k] = r[(k, k)];
            continue;
        }
        // R[k.., k..] -= 2 v (vᵀ R[k.., k..])
        for j in k..n {
            let mut dot = 0.0;
            for (off, vi) in v.iter().enumerate() {
                dot += vi * r[(k + off, j)];
            }
            for (off, vi) in v.iter().enumerate() {
                r[(k + off, j)] -= 2.0 * vi * dot;
            }
        }
        r_diag[k] = r[(k, k)];
        reflectors.push((k, v));
    }

    // Q = H_0 H_1 ... applied to the identity from the last reflector back.
    let mut q = Matrix::identity(n);
    for (k, v) in reflectors.iter().rev() {
        for j in 0..n {
            let mut dot = 0.0;
            for (off, vi) in v.iter().enumerate() {
                dot += vi * q[(k + off, j)];
            }
            for (off, vi) in v.iter().enumerate() {
                q[(k + off, j)] -= 2.0 * vi * dot;
            }
        }
    }
    (q, r_diag)
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize(v: &mut [f64]) -> bool {
    let n = norm2(v);
    if n == 0.0 || !n.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= n);
    true
}
