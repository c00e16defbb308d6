//! Truncated SVD by randomized subspace iteration, plus a dense one-sided
//! Jacobi SVD used as a reference at small sizes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{dot, Matrix};
use crate::error::{Error, Result};

/// Largest `rows * cols` the exact oracle accepts.
pub const ORACLE_MAX_ENTRIES: usize = 4096;

/// `M ~= U diag(S) V^T` with `U: rows x K`, `V: cols x K`.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    pub u: Matrix,
    /// Singular values, descending.
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (v, s) in us.row_mut(i).iter_mut().zip(&self.s) {
                *v *= s;
            }
        }
        gemm(View::n(&us), View::t(&self.v))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SvdConfig {
    /// Extra random probe vectors beyond the target rank.
    pub oversample: usize,
    /// Power iterations; each applies the operator and its transpose once.
    pub power_iters: usize,
}

impl Default for SvdConfig {
    fn default() -> Self {
        Self {
            oversample: 8,
            power_iters: 4,
        }
    }
}

/// Rank-`k` SVD of `m` by randomized subspace iteration with the default
/// oversampling. Deterministic in `seed`.
pub fn truncated_svd(m: &Matrix, k: usize, iters: usize, seed: u64) -> Result<SvdFactors> {
    truncated_svd_with(
        m,
        k,
        SvdConfig {
            power_iters: iters,
            ..SvdConfig::default()
        },
        seed,
    )
}

pub fn truncated_svd_with(m: &Matrix, k: usize, cfg: SvdConfig, seed: u64) -> Result<SvdFactors> {
    let max_k = m.rows().min(m.cols());
    if k == 0 || k > max_k {
        return Err(Error::param(format!(
            "rank {k} out of range [1, {max_k}] for a {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    if cfg.power_iters < 2 {
        return Err(Error::param(format!(
            "at least 2 power iterations required, got {}",
            cfg.power_iters
        )));
    }
    Ok(randomized_svd(View::n(m), k, cfg, seed))
}

/// Randomized SVD of the operator `m` (possibly a transposed view).
///
/// The range finder runs on `m^T`, so the right singular vectors come out of
/// an explicit orthonormalization and stay orthonormal even when `m` is
/// rank deficient.
pub(crate) fn randomized_svd(m: View<'_>, k: usize, cfg: SvdConfig, seed: u64) -> SvdFactors {
    let a = m.transposed();
    let (a_rows, a_cols) = (a.rows(), a.cols());
    let width = (k + cfg.oversample).min(a_rows.min(a_cols));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = Matrix::from_fn(a_cols, width, |_, _| StandardNormal.sample(&mut rng));

    let mut q = orthonormalize(&gemm(a, View::n(&omega)));
    for _ in 0..cfg.power_iters {
        let w = orthonormalize(&gemm(a.transposed(), View::n(&q)));
        q = orthonormalize(&gemm(a, View::n(&w)));
    }
    // b_t = (Q^T A)^T = A^T Q
    let b_t = gemm(a.transposed(), View::n(&q));
    let gram = gemm(View::t(&b_t), View::n(&b_t));
    let (evals, evecs) = symmetric_eigen(&gram);

    let evecs_k = evecs.leading_columns(k);
    let s: Vec<f64> = evals[..k].iter().map(|&l| l.max(0.0).sqrt()).collect();
    let mut v = gemm(View::n(&q), View::n(&evecs_k));
    let mut u = gemm(View::n(&b_t), View::n(&evecs_k));
    let scale = s.first().copied().unwrap_or(0.0);
    for (j, &sj) in s.iter().enumerate() {
        let inv = if sj > scale * 1e-13 && sj > 0.0 {
            1.0 / sj
        } else {
            0.0
        };
        for i in 0..u.rows() {
            let val = u.get(i, j) * inv;
            u.set(i, j, val);
        }
    }
    fix_signs(&mut u, &mut v);
    SvdFactors { u, s, v }
}

/// Full SVD of a small matrix by one-sided (Hestenes) Jacobi rotations.
///
/// Returns `min(rows, cols)` singular triplets. Refuses inputs above
/// [`ORACLE_MAX_ENTRIES`].
pub fn exact_svd_oracle(m: &Matrix) -> Result<SvdFactors> {
    let (r, c) = (m.rows(), m.cols());
    if r * c > ORACLE_MAX_ENTRIES {
        return Err(Error::Refused(format!(
            "exact SVD limited to {ORACLE_MAX_ENTRIES} entries, got {r}x{c}"
        )));
    }
    if r == 0 || c == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }

    // Columns of `m` and of the accumulated rotation, stored contiguously.
    let mut w: Vec<Vec<f64>> = (0..c).map(|j| m.column(j)).collect();
    let mut rot: Vec<Vec<f64>> = (0..c)
        .map(|j| (0..c).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..c {
            for q in p + 1..c {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                rotate_pair(&mut w, p, q, cs, sn);
                rotate_pair(&mut rot, p, q, cs, sn);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = w.iter().map(|col| dot(col, col).sqrt()).collect();
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    let k = r.min(c);
    order.truncate(k);

    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let scale = s[0];
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut missing = Vec::new();
    for (slot, &j) in order.iter().enumerate() {
        if norms[j] > scale * 1e-13 && norms[j] > 0.0 {
            u_cols.push(w[j].iter().map(|v| v / norms[j]).collect());
        } else {
            u_cols.push(vec![0.0; r]);
            missing.push(slot);
        }
    }
    complete_basis(&mut u_cols, &missing);

    let mut u = Matrix::zeros(r, k);
    let mut v = Matrix::zeros(c, k);
    for slot in 0..k {
        for i in 0..r {
            u.set(i, slot, u_cols[slot][i]);
        }
        for i in 0..c {
            v.set(i, slot, rot[order[slot]][i]);
        }
    }
    fix_signs(&mut u, &mut v);
    Ok(SvdFactors { u, s, v })
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, cs: f64, sn: f64) {
    let (head, tail) = cols.split_at_mut(q);
    let (a, b) = (&mut head[p], &mut tail[0]);
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = cs * xp - sn * xq;
        *y = sn * xp + cs * xq;
    }
}

/// Flips each column pair so the largest-magnitude entry of the `v` column
/// is positive (first index wins ties).
fn fix_signs(u: &mut Matrix, v: &mut Matrix) {
    for j in 0..v.cols() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for i in 0..v.rows() {
            let x = v.get(i, j);
            if x.abs() > best {
                best = x.abs();
                sign = x.signum();
            }
        }
        if sign < 0.0 {
            for i in 0..v.rows() {
                v.set(i, j, -v.get(i, j));
            }
            for i in 0..u.rows() {
                u.set(i, j, -u.get(i, j));
            }
        }
    }
}

/// Smallest Cholesky pivot, relative to the largest squared column norm,
/// that Cholesky QR accepts. Keeps the condition number of the input below
/// about `1e5`, where two passes reach full orthogonality.
const CHOLESKY_PIVOT_TOL: f64 = 1e-10;

/// Orthonormal basis for the columns of `y` (`m x n`, `n <= m`) spanning the
/// same leading subspaces. Well-conditioned inputs go through two rounds of
/// Cholesky QR; the rest through Gram-Schmidt.
pub(crate) fn orthonormalize(y: &Matrix) -> Matrix {
    cholesky_qr(y)
        .and_then(|q| cholesky_qr(&q))
        .unwrap_or_else(|| gram_schmidt(y))
}

/// `y R^-1` for the upper Cholesky factor `R` of `y^T y`.
fn cholesky_qr(y: &Matrix) -> Option<Matrix> {
    let n = y.cols();
    let g = gemm(View::t(y), View::n(y));
    let scale = (0..n).map(|j| g.get(j, j)).fold(0.0, f64::max);
    if !(scale > 0.0 && scale.is_finite()) {
        return None;
    }
    let mut r = Matrix::zeros(n, n);
    for j in 0..n {
        let d = g.get(j, j) - (0..j).map(|l| r.get(l, j).powi(2)).sum::<f64>();
        if !(d > scale * CHOLESKY_PIVOT_TOL) {
            return None;
        }
        let rjj = d.sqrt();
        r.set(j, j, rjj);
        for c in j + 1..n {
            let s = g.get(j, c) - (0..j).map(|l| r.get(l, j) * r.get(l, c)).sum::<f64>();
            r.set(j, c, s / rjj);
        }
    }
    let mut inv = Matrix::zeros(n, n);
    for j in 0..n {
        inv.set(j, j, 1.0 / r.get(j, j));
        for i in (0..j).rev() {
            let s: f64 = (i + 1..=j).map(|l| r.get(i, l) * inv.get(l, j)).sum();
            inv.set(i, j, -s / r.get(i, i));
        }
    }
    Some(gemm(View::n(y), View::n(&inv)))
}

/// Gram-Schmidt with one re-orthogonalization pass. Columns that vanish are
/// replaced with coordinate directions so the result always has `n`
/// orthonormal columns.
fn gram_schmidt(y: &Matrix) -> Matrix {
    let (m, n) = (y.rows(), y.cols());
    debug_assert!(n <= m);
    let yt = y.transpose();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| yt.row(j).to_vec()).collect();
    let mut missing = Vec::new();
    for j in 0..n {
        let (done, rest) = cols.split_at_mut(j);
        let v = &mut rest[0];
        let before = dot(v, v).sqrt();
        for _pass in 0..2 {
            for q in done.iter() {
                let r = dot(q, v);
                axpy(-r, q, v);
            }
        }
        let after = dot(v, v).sqrt();
        if after > 0.0 && after > before * 1e-10 {
            let inv = 1.0 / after;
            v.iter_mut().for_each(|x| *x *= inv);
        } else {
            v.iter_mut().for_each(|x| *x = 0.0);
            missing.push(j);
        }
    }
    complete_basis(&mut cols, &missing);

    let mut q = Matrix::zeros(m, n);
    for (j, col) in cols.iter().enumerate() {
        for (i, &x) in col.iter().enumerate() {
            q.set(i, j, x);
        }
    }
    q
}

/// Fills the listed slots with unit vectors orthogonal to every other
/// column. Coordinate directions are tried in order; the first whose
/// residual keeps at least half its length is taken, else the longest
/// residual seen.
fn complete_basis(cols: &mut [Vec<f64>], missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let len = cols[0].len();
    for &slot in missing {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for axis in 0..len {
            let mut v = vec![0.0; len];
            v[axis] = 1.0;
            for _pass in 0..2 {
                for (j, q) in cols.iter().enumerate() {
                    if j != slot {
                        let r = dot(q, &v);
                        axpy(-r, q, &mut v);
                    }
                }
            }
            let norm = dot(&v, &v).sqrt();
            if best.as_ref().is_none_or(|(b, _)| norm > *b) {
                best = Some((norm, v));
            }
            if norm > 0.5 {
                break;
            }
        }
        let (norm, mut v) = best.expect("basis has at least one coordinate");
        assert!(norm > 1e-8, "cannot complete orthonormal basis");
        v.iter_mut().for_each(|x| *x /= norm);
        cols[slot] = v;
    }
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Eigen-decomposition of a small symmetric matrix by cyclic Jacobi.
/// Eigenvalues descending; eigenvectors are the columns of the returned
/// matrix.
pub(crate) fn symmetric_eigen(sym: &Matrix) -> (Vec<f64>, Matrix) {
    let n = sym.rows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| sym.row(i).to_vec()).collect();
    // Symmetrize to absorb rounding in the input.
    for i in 0..n {
        for j in i + 1..n {
            let m = 0.5 * (a[i][j] + a[j][i]);
            a[i][j] = m;
            a[j][i] = m;
        }
    }
    let mut vecs = Matrix::identity(n);
    let total: f64 = a.iter().flatten().map(|v| v * v).sum();

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off <= total * 1e-30 || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (kp, kq) = (row[p], row[q]);
                    row[p] = c * kp - s * kq;
                    row[q] = s * kp + c * kq;
                }
                for k in 0..n {
                    let (pk, qk) = (a[p][k], a[q][k]);
                    a[p][k] = c * pk - s * qk;
                    a[q][k] = s * pk + c * qk;
                }
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                for k in 0..n {
                    let (kp, kq) = (vecs.get(k, p), vecs.get(k, q));
                    vecs.set(k, p, c * kp - s * kq);
                    vecs.set(k, q, s * kp + c * kq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[y][y].total_cmp(&a[x][x]).then(x.cmp(&y)));
    let evals = order.iter().map(|&i| a[i][i]).collect();
    let sorted = Matrix::from_fn(n, n, |i, j| vecs.get(i, order[j]));
    (evals, sorted)
}

/// Borrowed matrix, optionally transposed, for stride-based products.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    m: &'a Matrix,
    t: bool,
}

impl<'a> View<'a> {
    pub(crate) fn n(m: &'a Matrix) -> Self {
        Self { m, t: false }
    }

    pub(crate) fn t(m: &'a Matrix) -> Self {
        Self { m, t: true }
    }

    fn transposed(self) -> Self {
        Self {
            m: self.m,
            t: !self.t,
        }
    }

    fn rows(&self) -> usize {
        if self.t {
            self.m.cols()
        } else {
            self.m.rows()
        }
    }

    fn cols(&self) -> usize {
        if self.t {
            self.m.rows()
        } else {
            self.m.cols()
        }
    }

    fn strides(&self) -> (isize, isize) {
        let ld = self.m.cols() as isize;
        if self.t {
            (1, ld)
        } else {
            (ld, 1)
        }
    }
}

pub(crate) fn gemm(a: View<'_>, b: View<'_>) -> Matrix {
    assert_eq!(a.cols(), b.rows(), "inner dimensions differ");
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut c = Matrix::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: both views address exactly the storage of their matrices with
    // the strides above, and `c` is a freshly allocated m x n buffer.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.m.as_slice().as_ptr(),
            rsa,
            csa,
            b.m.as_slice().as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_slice().as_mut_ptr(),
            n as isize,
            1,
        );
    }
    c
}
