//! Token grouping by principal components taken over the token dimension.
//!
//! Tokens are squashed with a sigmoid, centered, and the centered matrix is
//! decomposed so that each right singular vector spans the tokens. A token
//! joins the component on which its loading has the largest magnitude, and
//! that magnitude is its selection score.

use log::debug;

use crate::error::{Error, Result};
use crate::tensor::{randomized_svd, rescale_and_center, Matrix, SvdConfig, TokenMatrix, View};

/// Below this max-abs value the centered matrix is treated as zero.
const DEGENERATE_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct GroupAssignment {
    /// Group id per token, each in `0..k`.
    pub group_of: Vec<usize>,
    /// Per-token selection score, nonnegative.
    pub scores: Vec<f64>,
    pub k: usize,
    /// `T x k` loadings; row `i` holds token `i`'s weight on each component.
    pub loadings: Matrix,
}

impl GroupAssignment {
    /// Assigns each row to its largest-magnitude column; ties go to the
    /// smaller column index.
    pub fn from_loadings(loadings: Matrix) -> Self {
        let k = loadings.cols();
        let mut group_of = Vec::with_capacity(loadings.rows());
        let mut scores = Vec::with_capacity(loadings.rows());
        for i in 0..loadings.rows() {
            let mut best = 0;
            let mut best_abs = loadings.get(i, 0).abs();
            for j in 1..k {
                let a = loadings.get(i, j).abs();
                if a > best_abs {
                    best = j;
                    best_abs = a;
                }
            }
            group_of.push(best);
            scores.push(best_abs);
        }
        Self {
            group_of,
            scores,
            k,
            loadings,
        }
    }

    /// Builds an assignment from explicit labels and scores. The loadings
    /// matrix carries each score in its token's own column so the
    /// score/argmax invariant holds for baseline groupings too.
    pub fn from_labels(group_of: Vec<usize>, scores: Vec<f64>, k: usize) -> Result<Self> {
        if group_of.len() != scores.len() {
            return Err(Error::InvalidInput(
                "labels and scores differ in length".into(),
            ));
        }
        if let Some(&g) = group_of.iter().find(|&&g| g >= k) {
            return Err(Error::InvalidInput(format!("group id {g} >= {k}")));
        }
        if scores.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidInput(
                "scores must be finite and nonnegative".into(),
            ));
        }
        let mut loadings = Matrix::zeros(group_of.len(), k);
        for (i, (&g, &s)) in group_of.iter().zip(&scores).enumerate() {
            loadings.set(i, g, s);
        }
        Ok(Self {
            group_of,
            scores,
            k,
            loadings,
        })
    }

    pub fn tokens(&self) -> usize {
        self.group_of.len()
    }

    /// Member token indices per group, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.k];
        for (i, &g) in self.group_of.iter().enumerate() {
            groups[g].push(i);
        }
        groups
    }
}

/// Default component count for a budget: `floor(n / 4)`.
pub fn default_group_count(n: usize) -> Result<usize> {
    if n < 4 {
        return Err(Error::param(format!(
            "budget {n} is below 4; pass an explicit group count"
        )));
    }
    Ok(n / 4)
}

/// [`default_group_count`] clamped to what a `tokens x dim` matrix supports.
/// Centering removes one degree of freedom, hence `tokens - 1`.
pub fn default_group_count_for(n: usize, tokens: usize, dim: usize) -> Result<usize> {
    let k = default_group_count(n)?;
    let hi = tokens.saturating_sub(1).min(dim).max(1);
    Ok(k.clamp(1, hi))
}

pub fn psca_group(x: &TokenMatrix, k: usize, seed: u64) -> Result<GroupAssignment> {
    psca_group_with(x, k, seed, SvdConfig::default())
}

pub fn psca_group_with(
    x: &TokenMatrix,
    k: usize,
    seed: u64,
    svd: SvdConfig,
) -> Result<GroupAssignment> {
    let (t, d) = (x.tokens(), x.dim());
    if k == 0 || k > t.min(d) {
        return Err(Error::param(format!(
            "group count {k} out of range [1, {}]",
            t.min(d)
        )));
    }
    let (centered, max_abs) = rescale_and_center(x);
    if max_abs <= DEGENERATE_EPS {
        debug!("centered token matrix is zero; all {t} tokens go to group 0");
        return Ok(GroupAssignment {
            group_of: vec![0; t],
            scores: vec![0.0; t],
            k,
            loadings: Matrix::zeros(t, k),
        });
    }
    // Right singular vectors of X_ctr^T index tokens.
    let factors = randomized_svd(View::t(&centered.data), k, svd, seed);
    Ok(GroupAssignment::from_loadings(factors.v))
}

/// Token count per group.
pub fn group_sizes(assignment: &GroupAssignment) -> Vec<usize> {
    let mut sizes = vec![0; assignment.k];
    for &g in &assignment.group_of {
        sizes[g] += 1;
    }
    sizes
}
