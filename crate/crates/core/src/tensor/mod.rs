//! Dense numeric kernels shared by the grouping and pruning stages.
//!
//! Everything here works in `f64`, including matrices that were loaded from
//! 32-bit files.

mod svd;

pub use svd::{exact_svd_oracle, truncated_svd, truncated_svd_with, SvdConfig, SvdFactors};

pub(crate) use svd::{gemm, randomized_svd, View};

use std::borrow::Cow;

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "expected {} values for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
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

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::InvalidInput(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
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
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
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

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        gemm(View::n(self), View::n(other))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Keeps the first `k` columns.
    pub fn leading_columns(&self, k: usize) -> Matrix {
        assert!(k <= self.cols);
        Matrix::from_fn(self.rows, k, |i, j| self.get(i, j))
    }
}

/// The pipeline's input: `T` visual tokens (rows) of dimension `D` (columns).
///
/// Construction rejects empty shapes and non-finite entries, so every
/// `TokenMatrix` in circulation is valid. Row `i` stays token `i` through
/// every stage.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenMatrix(Matrix);

impl TokenMatrix {
    pub fn new(tokens: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_matrix(Matrix::from_vec(tokens, dim, data)?)
    }

    pub fn from_matrix(m: Matrix) -> Result<Self> {
        if m.rows == 0 || m.cols == 0 {
            return Err(Error::InvalidInput(format!(
                "token matrix must be at least 1x1, got {}x{}",
                m.rows, m.cols
            )));
        }
        if let Some(pos) = m.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / m.cols,
                col: pos % m.cols,
                value: m.data[pos],
            });
        }
        Ok(Self(m))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::from_matrix(Matrix::from_rows(rows)?)
    }

    pub fn from_f32(tokens: usize, dim: usize, data: &[f32]) -> Result<Self> {
        Self::new(tokens, dim, data.iter().map(|&v| f64::from(v)).collect())
    }

    /// Number of tokens `T`.
    #[inline]
    pub fn tokens(&self) -> usize {
        self.0.rows
    }

    /// Embedding dimension `D`.
    #[inline]
    pub fn dim(&self) -> usize {
        self.0.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// Copies out the given rows, in order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: d,
            data,
        }
    }
}

/// Token matrix with its per-column mean removed.
#[derive(Clone, Debug)]
pub struct CenteredMatrix {
    pub data: Matrix,
    pub mean: Vec<f64>,
}

/// Element-wise logistic sigmoid.
///
/// Input validity (finite entries) is enforced when the `TokenMatrix` is
/// built, so this cannot fail.
pub fn sigmoid_rescale(x: &TokenMatrix) -> TokenMatrix {
    let m = &x.0;
    let data = m.data.iter().map(|&v| sigmoid(v)).collect();
    TokenMatrix(Matrix {
        rows: m.rows,
        cols: m.cols,
        data,
    })
}

#[inline]
pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Subtracts the mean token from every token.
pub fn center_tokens(xs: &TokenMatrix) -> CenteredMatrix {
    let m = &xs.0;
    let mut mean = vec![0.0; m.cols];
    for i in 0..m.rows {
        for (acc, v) in mean.iter_mut().zip(m.row(i)) {
            *acc += v;
        }
    }
    let inv = 1.0 / m.rows as f64;
    mean.iter_mut().for_each(|v| *v *= inv);

    let mut data = m.clone();
    for i in 0..data.rows {
        for (v, mu) in data.row_mut(i).iter_mut().zip(&mean) {
            *v -= mu;
        }
    }
    CenteredMatrix { data, mean }
}

/// Sigmoid followed by centering in one buffer; equal to
/// `center_tokens(&sigmoid_rescale(x))`. Also returns the largest absolute
/// centered entry.
pub(crate) fn rescale_and_center(x: &TokenMatrix) -> (CenteredMatrix, f64) {
    let m = &x.0;
    let mut mean = vec![0.0; m.cols];
    let mut data = Vec::with_capacity(m.data.len());
    for row in m.data.chunks_exact(m.cols) {
        for (acc, &v) in mean.iter_mut().zip(row) {
            let s = sigmoid(v);
            *acc += s;
            data.push(s);
        }
    }
    let inv = 1.0 / m.rows as f64;
    mean.iter_mut().for_each(|v| *v *= inv);
    let mut max_abs = 0.0f64;
    for row in data.chunks_exact_mut(m.cols) {
        for (v, mu) in row.iter_mut().zip(&mean) {
            *v -= mu;
            max_abs = max_abs.max(v.abs());
        }
    }
    let centered = CenteredMatrix {
        data: Matrix {
            rows: m.rows,
            cols: m.cols,
            data,
        },
        mean,
    };
    (centered, max_abs)
}

/// Pairwise similarity lookup. Implemented by the dense matrix and by the
/// lazily evaluated [`NormalizedRows`].
pub trait Similarity {
    fn len(&self) -> usize;
    fn sim(&self, i: usize, j: usize) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Dense symmetric `T x T` cosine similarity matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn from_matrix(m: Matrix) -> Result<Self> {
        if m.rows != m.cols {
            return Err(Error::InvalidInput(format!(
                "similarity matrix must be square, got {}x{}",
                m.rows, m.cols
            )));
        }
        Ok(Self {
            n: m.rows,
            data: m.data,
        })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

impl Similarity for SimilarityMatrix {
    fn len(&self) -> usize {
        self.n
    }

    fn sim(&self, i: usize, j: usize) -> f64 {
        self.get(i, j)
    }
}

/// Cosine similarity evaluated on demand from the rows and their inverse
/// norms. Zero rows have similarity 0 to everything.
#[derive(Clone, Debug)]
pub struct NormalizedRows<'a> {
    m: Cow<'a, Matrix>,
    inv_norm: Vec<f64>,
}

impl<'a> NormalizedRows<'a> {
    pub fn new(m: &'a Matrix) -> Self {
        Self::with(Cow::Borrowed(m))
    }

    pub fn owned(m: Matrix) -> NormalizedRows<'static> {
        NormalizedRows::with(Cow::Owned(m))
    }

    fn with(m: Cow<'a, Matrix>) -> Self {
        let inv_norm = (0..m.rows)
            .map(|i| {
                let r = m.row(i);
                let n = dot(r, r).sqrt();
                if n > 0.0 {
                    1.0 / n
                } else {
                    0.0
                }
            })
            .collect();
        Self { m, inv_norm }
    }

    pub fn from_tokens(x: &'a TokenMatrix) -> Self {
        Self::new(&x.0)
    }

    pub fn into_owned(self) -> NormalizedRows<'static> {
        NormalizedRows {
            m: Cow::Owned(self.m.into_owned()),
            inv_norm: self.inv_norm,
        }
    }

    /// `1 / |x_i|`, or 0 for a zero row.
    pub fn inv_norm(&self, i: usize) -> f64 {
        self.inv_norm[i]
    }

    /// Mean off-diagonal similarity in `O(T D)`, using
    /// `sum_{i != j} u_i . u_j = |sum_i u_i|^2 - sum_i |u_i|^2` for the unit
    /// rows `u_i`.
    pub fn mean_pairwise(&self) -> f64 {
        let t = self.m.rows;
        if t < 2 {
            return 0.0;
        }
        let mut total = vec![0.0; self.m.cols];
        for i in 0..t {
            axpy(self.inv_norm[i], self.m.row(i), &mut total);
        }
        let self_terms = self.inv_norm.iter().filter(|&&v| v > 0.0).count() as f64;
        let cross = dot(&total, &total) - self_terms;
        cross / (t as f64 * (t as f64 - 1.0))
    }
}

impl NormalizedRows<'_> {
    /// Dense similarities among the listed rows, indexed by position in
    /// `rows`.
    pub fn block(&self, rows: &[usize]) -> SimilarityMatrix {
        let (n, d) = (rows.len(), self.m.cols);
        let mut data = Vec::with_capacity(n * d);
        for &i in rows {
            data.extend_from_slice(self.m.row(i));
        }
        let sub = Matrix {
            rows: n,
            cols: d,
            data,
        };
        let mut g = gemm(View::n(&sub), View::t(&sub));
        for (a, &i) in rows.iter().enumerate() {
            let inv_i = self.inv_norm[i];
            for (v, &j) in g.row_mut(a).iter_mut().zip(rows) {
                *v *= inv_i * self.inv_norm[j];
            }
        }
        SimilarityMatrix { n, data: g.data }
    }
}

impl Similarity for NormalizedRows<'_> {
    fn len(&self) -> usize {
        self.m.rows
    }

    #[inline]
    fn sim(&self, i: usize, j: usize) -> f64 {
        dot(self.m.row(i), self.m.row(j)) * self.inv_norm[i] * self.inv_norm[j]
    }
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Cosine similarity between every pair of tokens.
pub fn pairwise_similarity(x: &TokenMatrix) -> SimilarityMatrix {
    let unit = NormalizedRows::from_tokens(x);
    let n = x.tokens();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let s = unit.sim(i, j);
            data[i * n + j] = s;
            data[j * n + i] = s;
        }
    }
    SimilarityMatrix { n, data }
}

/// Dot product with 16 independent partial sums. The summation order is
/// fixed, so the wide and portable paths give bit-identical results.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: AVX2 support was just checked.
            return unsafe { dot_avx2(a, b) };
        }
    }
    dot_lanes(a, b)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn dot_avx2(a: &[f64], b: &[f64]) -> f64 {
    dot_lanes(a, b)
}

#[inline(always)]
fn dot_lanes(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    const L: usize = 16;
    let mut acc = [0.0f64; L];
    let ca = a.chunks_exact(L);
    let cb = b.chunks_exact(L);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..L {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    let mut width = L;
    while width > 1 {
        width /= 2;
        for l in 0..width {
            acc[l] += acc[l + width];
        }
    }
    acc[0] + tail
}
