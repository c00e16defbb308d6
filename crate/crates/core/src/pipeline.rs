//! The two-stage compressor: principal-component grouping followed by
//! adaptive intra-group NMS and quota-based selection.

use std::time::Instant;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouping::{default_group_count_for, psca_group_with, GroupAssignment};
use crate::nms::{
    allocate_quotas, intra_group_nms, select_tokens, PrunedSelection, RedundancyStats,
    DEFAULT_ALPHA,
};
use crate::tensor::{sigmoid_rescale, NormalizedRows, Similarity, SvdConfig, TokenMatrix};

/// Which embeddings the redundancy score and NMS similarities are computed
/// on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SimilaritySource {
    #[default]
    Raw,
    Rescaled,
}

impl SimilaritySource {
    pub fn as_str(self) -> &'static str {
        match self {
            SimilaritySource::Raw => "raw",
            SimilaritySource::Rescaled => "rescaled",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompressConfig {
    /// Explicit group count; `None` uses `floor(budget / 4)`.
    pub groups: Option<usize>,
    pub alpha: f64,
    pub seed: u64,
    pub similarity_source: SimilaritySource,
    pub svd: SvdConfig,
}

impl Default for CompressConfig {
    fn default() -> Self {
        Self {
            groups: None,
            alpha: DEFAULT_ALPHA,
            seed: 0,
            similarity_source: SimilaritySource::Raw,
            svd: SvdConfig::default(),
        }
    }
}

/// Wall-clock time per stage, in microseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StageTimings {
    pub similarity_us: u64,
    pub grouping_us: u64,
    pub nms_us: u64,
    pub selection_us: u64,
    pub total_us: u64,
}

#[derive(Clone, Debug)]
pub struct Compression {
    pub selection: PrunedSelection,
    pub stats: RedundancyStats,
    /// `None` when the budget covers every token and nothing was grouped.
    pub assignment: Option<GroupAssignment>,
    /// Group count actually used, after clamping.
    pub groups: usize,
    pub identity: bool,
    pub warnings: Vec<String>,
    pub timings: StageTimings,
}

/// Similarity oracle for the configured embedding source.
pub fn similarity_view(x: &TokenMatrix, source: SimilaritySource) -> NormalizedRows<'_> {
    match source {
        SimilaritySource::Raw => NormalizedRows::from_tokens(x),
        SimilaritySource::Rescaled => NormalizedRows::owned(sigmoid_rescale(x).into_matrix()),
    }
}

/// Mean pairwise cosine similarity of the tokens.
pub fn redundancy(x: &TokenMatrix, source: SimilaritySource) -> f64 {
    if x.tokens() < 2 {
        warn!("redundancy undefined for a single token; using 0");
        return 0.0;
    }
    similarity_view(x, source).mean_pairwise()
}

/// Group count for a run: explicit values are clamped to `[1, min(T, D)]`,
/// the default follows the budget rule and falls back to 1 below budget 4.
pub fn resolve_group_count(
    budget: usize,
    tokens: usize,
    dim: usize,
    requested: Option<usize>,
    warnings: &mut Vec<String>,
) -> Result<usize> {
    let hi = tokens.min(dim);
    match requested {
        Some(0) => Err(Error::param("group count must be at least 1")),
        Some(k) if k > hi => {
            let msg = format!("group count {k} clamped to {hi} for a {tokens}x{dim} input");
            warn!("{msg}");
            warnings.push(msg);
            Ok(hi)
        }
        Some(k) => Ok(k),
        None if budget < 4 => {
            let msg = format!("budget {budget} below 4; using a single group");
            warn!("{msg}");
            warnings.push(msg);
            Ok(1)
        }
        None => default_group_count_for(budget, tokens, dim),
    }
}

/// NMS inside every group, quota apportionment and final selection.
pub fn prune_groups<S: Similarity + ?Sized>(
    groups: &[Vec<usize>],
    scores: &[f64],
    sim: &S,
    tau: f64,
    budget: usize,
) -> Result<PrunedSelection> {
    let survivors: Vec<Vec<usize>> = groups
        .iter()
        .map(|g| intra_group_nms(g, scores, sim, tau))
        .collect();
    let sizes: Vec<usize> = survivors.iter().map(Vec::len).collect();
    let quotas = allocate_quotas(&sizes, budget)?;
    Ok(select_tokens(groups, &survivors, scores, &quotas, budget))
}

pub fn compress(x: &TokenMatrix, budget: usize, cfg: &CompressConfig) -> Result<Compression> {
    if budget == 0 {
        return Err(Error::param("budget must be at least 1"));
    }
    let start = Instant::now();
    let mut timings = StageTimings::default();
    let mut warnings = Vec::new();
    let t = x.tokens();

    let sim = similarity_view(x, cfg.similarity_source);
    let rho = if t < 2 {
        warnings.push("fewer than two tokens; redundancy set to 0".to_string());
        0.0
    } else {
        sim.mean_pairwise()
    };
    let stats = RedundancyStats::new(rho, budget, cfg.alpha)?;
    timings.similarity_us = elapsed_us(start);

    if budget >= t {
        warnings.push(format!(
            "budget {budget} >= {t} tokens; all tokens retained"
        ));
        timings.total_us = elapsed_us(start);
        return Ok(Compression {
            selection: PrunedSelection::identity(t),
            stats,
            assignment: None,
            groups: 0,
            identity: true,
            warnings,
            timings,
        });
    }

    let k = resolve_group_count(budget, t, x.dim(), cfg.groups, &mut warnings)?;
    let mark = Instant::now();
    let assignment = psca_group_with(x, k, cfg.seed, cfg.svd)?;
    timings.grouping_us = elapsed_us(mark);

    let mark = Instant::now();
    let groups = assignment.members();
    let survivors: Vec<Vec<usize>> = groups
        .iter()
        .map(|g| group_nms(g, &assignment.scores, &sim, stats.tau))
        .collect();
    timings.nms_us = elapsed_us(mark);

    let mark = Instant::now();
    let sizes: Vec<usize> = survivors.iter().map(Vec::len).collect();
    let quotas = allocate_quotas(&sizes, budget)?;
    let selection = select_tokens(&groups, &survivors, &assignment.scores, &quotas, budget);
    timings.selection_us = elapsed_us(mark);
    timings.total_us = elapsed_us(start);

    debug!(
        "compressed {t} -> {} tokens (K={k}, rho={:.4}, tau={:.4}, backfilled {})",
        selection.retained.len(),
        stats.rho,
        stats.tau,
        selection.backfilled.len()
    );

    Ok(Compression {
        selection,
        stats,
        assignment: Some(assignment),
        groups: k,
        identity: false,
        warnings,
        timings,
    })
}

/// Groups up to this size get a dense similarity block for NMS; larger ones
/// evaluate pairs on demand.
const DENSE_GROUP_LIMIT: usize = 2048;

fn group_nms(group: &[usize], scores: &[f64], sim: &NormalizedRows<'_>, tau: f64) -> Vec<usize> {
    if group.len() > DENSE_GROUP_LIMIT {
        return intra_group_nms(group, scores, sim, tau);
    }
    // Positions in `group` follow token order, so score ties still break
    // toward the smaller token index.
    let local_scores: Vec<f64> = group.iter().map(|&i| scores[i]).collect();
    let positions: Vec<usize> = (0..group.len()).collect();
    intra_group_nms(&positions, &local_scores, &sim.block(group), tau)
        .into_iter()
        .map(|p| group[p])
        .collect()
}

fn elapsed_us(since: Instant) -> u64 {
    since.elapsed().as_micros() as u64
}
