//! Intra-group redundancy removal: adaptive threshold, greedy NMS, quota
//! apportionment and final token selection.

use std::cmp::Ordering;

use log::warn;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::{Similarity, SimilarityMatrix};

/// Redundancy below this value is raised to it when deriving the NMS
/// threshold, so decorrelated inputs do not collapse every group to one
/// token.
pub const RHO_FLOOR: f64 = 0.05;

pub const DEFAULT_ALPHA: f64 = 32.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RedundancyStats {
    /// Mean pairwise cosine similarity.
    pub rho: f64,
    /// Information score, `1 - rho`.
    pub phi: f64,
    pub tau: f64,
    pub lambda: f64,
    pub alpha: f64,
}

impl RedundancyStats {
    pub fn new(rho: f64, budget: usize, alpha: f64) -> Result<Self> {
        let (tau, lambda) = nms_threshold(rho, budget, alpha)?;
        Ok(Self {
            rho,
            phi: 1.0 - rho,
            tau,
            lambda,
            alpha,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    SuppressedByNms,
    OverQuota,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrunedSelection {
    /// Retained token indices, ascending.
    pub retained: Vec<usize>,
    /// Per-group quota `n_k`.
    pub quotas: Vec<usize>,
    /// NMS survivor count per group.
    pub survivors_per_group: Vec<usize>,
    /// Tokens not retained, ascending by index.
    pub dropped: Vec<(usize, DropReason)>,
    /// Retained tokens that were added to make up unmet quotas, ascending.
    pub backfilled: Vec<usize>,
}

impl PrunedSelection {
    /// Keeps every token of a matrix with `t` rows.
    pub fn identity(t: usize) -> Self {
        Self {
            retained: (0..t).collect(),
            quotas: Vec::new(),
            survivors_per_group: Vec::new(),
            dropped: Vec::new(),
            backfilled: Vec::new(),
        }
    }

    /// Retained tokens that came straight out of per-group top-`n_k`
    /// selection (no backfill).
    pub fn nms_selected(&self) -> Vec<usize> {
        self.retained
            .iter()
            .copied()
            .filter(|i| self.backfilled.binary_search(i).is_err())
            .collect()
    }
}

/// Mean similarity over all unordered token pairs.
pub fn global_redundancy(s: &SimilarityMatrix) -> f64 {
    let t = s.len();
    if t < 2 {
        warn!("redundancy undefined for {t} token(s); using 0");
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..t {
        for j in i + 1..t {
            sum += s.get(i, j);
        }
    }
    2.0 * sum / (t as f64 * (t as f64 - 1.0))
}

/// Returns `(tau, lambda)` with `lambda = budget / alpha` and
/// `tau = lambda * max(rho, RHO_FLOOR)`.
pub fn nms_threshold(rho: f64, budget: usize, alpha: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::param(format!("alpha must be positive, got {alpha}")));
    }
    if budget == 0 {
        return Err(Error::param("budget must be at least 1"));
    }
    let lambda = budget as f64 / alpha;
    Ok((lambda * rho.max(RHO_FLOOR), lambda))
}

/// Descending score, then ascending index.
#[inline]
pub(crate) fn by_score_desc(scores: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

/// Greedy NMS over one group. Survivors are returned in visiting order
/// (descending score, ties to the smaller index).
pub fn intra_group_nms<S: Similarity + ?Sized>(
    group: &[usize],
    scores: &[f64],
    sim: &S,
    tau: f64,
) -> Vec<usize> {
    let mut order = group.to_vec();
    order.sort_by(by_score_desc(scores));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept.iter().all(|&j| sim.sim(i, j) < tau) || kept.is_empty() {
            kept.push(i);
        }
    }
    kept
}

/// Largest-remainder apportionment of `budget` over `sizes`. Quotas sum to
/// `budget` exactly; remainder ties go to the smaller group index.
pub fn allocate_quotas(sizes: &[usize], budget: usize) -> Result<Vec<usize>> {
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Err(Error::InvalidInput(
            "cannot apportion a budget over empty groups".into(),
        ));
    }
    let total = total as u128;
    let mut quotas = Vec::with_capacity(sizes.len());
    let mut remainders = Vec::with_capacity(sizes.len());
    for &s in sizes {
        let share = s as u128 * budget as u128;
        quotas.push((share / total) as usize);
        remainders.push(share % total);
    }
    let assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| remainders[b].cmp(&remainders[a]).then(a.cmp(&b)));
    for &k in order.iter().take(budget - assigned) {
        quotas[k] += 1;
    }
    Ok(quotas)
}

/// Takes the top-`n_k` survivors of each group, then backfills any shortfall
/// from leftover survivors and finally from suppressed tokens, both by
/// descending score across groups.
///
/// `groups` lists every group's members; `survivors` the NMS survivors of
/// each group. The result retains `min(budget, total tokens)` indices.
pub fn select_tokens(
    groups: &[Vec<usize>],
    survivors: &[Vec<usize>],
    scores: &[f64],
    quotas: &[usize],
    budget: usize,
) -> PrunedSelection {
    assert_eq!(groups.len(), survivors.len());
    assert_eq!(groups.len(), quotas.len());
    let t: usize = groups.iter().map(Vec::len).sum();
    let target = budget.min(t);
    let cmp = by_score_desc(scores);

    let mut is_survivor = vec![false; scores.len()];
    let mut taken = vec![false; scores.len()];
    let mut retained = Vec::with_capacity(target);
    let mut spare = Vec::new();

    for (surv, &quota) in survivors.iter().zip(quotas) {
        let mut ranked = surv.clone();
        ranked.sort_by(&cmp);
        for (rank, &i) in ranked.iter().enumerate() {
            is_survivor[i] = true;
            if rank < quota && retained.len() < target {
                taken[i] = true;
                retained.push(i);
            } else {
                spare.push(i);
            }
        }
    }

    let mut backfilled = Vec::new();
    if retained.len() < target {
        spare.sort_by(&cmp);
        let mut suppressed: Vec<usize> = groups
            .iter()
            .flatten()
            .copied()
            .filter(|&i| !is_survivor[i])
            .collect();
        suppressed.sort_by(&cmp);
        for i in spare.into_iter().chain(suppressed) {
            if retained.len() == target {
                break;
            }
            taken[i] = true;
            retained.push(i);
            backfilled.push(i);
        }
    }

    retained.sort_unstable();
    backfilled.sort_unstable();
    let mut dropped: Vec<(usize, DropReason)> = groups
        .iter()
        .flatten()
        .copied()
        .filter(|&i| !taken[i])
        .map(|i| {
            let reason = if is_survivor[i] {
                DropReason::OverQuota
            } else {
                DropReason::SuppressedByNms
            };
            (i, reason)
        })
        .collect();
    dropped.sort_unstable_by_key(|&(i, _)| i);

    PrunedSelection {
        retained,
        quotas: quotas.to_vec(),
        survivors_per_group: survivors.iter().map(Vec::len).collect(),
        dropped,
        backfilled,
    }
}
