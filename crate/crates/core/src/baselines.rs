//! Ablation baselines and the informativeness objective with an exhaustive
//! reference optimizer for tiny inputs.
//!
//! The objective scores a subset `S` as
//! `J(S) = sum_{i in S} s_i - sum_{i<j in S} max(0, sim(i, j))`,
//! i.e. total selection score minus pairwise redundancy.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grouping::{psca_group_with, GroupAssignment};
use crate::nms::{by_score_desc, DropReason, PrunedSelection, RedundancyStats};
use crate::pipeline::{
    compress, prune_groups, resolve_group_count, similarity_view, CompressConfig,
};
use crate::tensor::{dot, Matrix, NormalizedRows, Similarity, TokenMatrix};

/// Largest token count the exhaustive search accepts.
pub const BRUTE_FORCE_MAX_TOKENS: usize = 16;
/// Largest number of candidate subsets the exhaustive search accepts.
pub const BRUTE_FORCE_MAX_SUBSETS: u128 = 20_000;

/// Shuffles tokens with `seed` and cuts them into `k` contiguous chunks whose
/// sizes differ by at most one. Scores are token L2 norms.
pub fn random_grouping(x: &TokenMatrix, k: usize, seed: u64) -> Result<GroupAssignment> {
    let t = x.tokens();
    if k == 0 || k > t {
        return Err(Error::param(format!(
            "group count {k} out of range [1, {t}]"
        )));
    }
    let mut order: Vec<usize> = (0..t).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let (base, extra) = (t / k, t % k);
    let mut group_of = vec![0; t];
    let mut pos = 0;
    for g in 0..k {
        let len = base + usize::from(g < extra);
        for &i in &order[pos..pos + len] {
            group_of[i] = g;
        }
        pos += len;
    }
    let scores = (0..t).map(|i| dot(x.row(i), x.row(i)).sqrt()).collect();
    GroupAssignment::from_labels(group_of, scores, k)
}

#[derive(Clone, Debug)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    pub centroids: Matrix,
    /// Within-cluster sum of squares after each assignment step.
    pub wcss_history: Vec<f64>,
    pub converged: bool,
}

/// Lloyd's algorithm on the raw token features with k-means++ seeding.
/// A cluster that empties is reseeded with the token farthest from its own
/// centroid.
pub fn kmeans(x: &TokenMatrix, k: usize, seed: u64, iters: usize) -> Result<KMeansFit> {
    let (t, d) = (x.tokens(), x.dim());
    if k == 0 || k > t {
        return Err(Error::param(format!(
            "cluster count {k} out of range [1, {t}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(x, k, &mut rng);
    let mut labels = vec![usize::MAX; t];
    let mut wcss_history = Vec::new();
    let mut converged = false;

    for _ in 0..iters.max(1) {
        let mut changed = false;
        let mut dist = vec![0.0; t];
        for i in 0..t {
            let (best, d2) = nearest(x.row(i), &centroids);
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
            dist[i] = d2;
        }

        let mut sizes = vec![0usize; k];
        labels.iter().for_each(|&l| sizes[l] += 1);
        while let Some(empty) = sizes.iter().position(|&s| s == 0) {
            let donor = (0..t)
                .filter(|&i| sizes[labels[i]] > 1)
                .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                .expect("k <= t leaves a cluster with two or more members");
            sizes[labels[donor]] -= 1;
            sizes[empty] = 1;
            labels[donor] = empty;
            dist[donor] = 0.0;
            centroids.row_mut(empty).copy_from_slice(x.row(donor));
            changed = true;
        }
        wcss_history.push(dist.iter().sum());

        if !changed {
            converged = true;
            break;
        }
        let mut sums = Matrix::zeros(k, d);
        for i in 0..t {
            for (acc, v) in sums.row_mut(labels[i]).iter_mut().zip(x.row(i)) {
                *acc += v;
            }
        }
        for c in 0..k {
            let inv = 1.0 / sizes[c] as f64;
            for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                *dst = s * inv;
            }
        }
    }

    Ok(KMeansFit {
        labels,
        centroids,
        wcss_history,
        converged,
    })
}

fn kmeans_plus_plus(x: &TokenMatrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let t = x.tokens();
    let mut centroids = Matrix::zeros(k, x.dim());
    let first = rng.random_range(0..t);
    centroids.row_mut(0).copy_from_slice(x.row(first));
    let mut d2: Vec<f64> = (0..t).map(|i| sq_dist(x.row(i), x.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = t - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..t)
        };
        centroids.row_mut(c).copy_from_slice(x.row(pick));
        for (i, v) in d2.iter_mut().enumerate() {
            *v = v.min(sq_dist(x.row(i), x.row(pick)));
        }
    }
    centroids
}

fn nearest(p: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.rows() {
        let d = sq_dist(p, centroids.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// K-means grouping. Scores are `max_dist - dist_i`, where `dist_i` is the
/// distance from token `i` to its centroid.
pub fn kmeans_grouping(
    x: &TokenMatrix,
    k: usize,
    seed: u64,
    iters: usize,
) -> Result<GroupAssignment> {
    let fit = kmeans(x, k, seed, iters)?;
    let dist: Vec<f64> = (0..x.tokens())
        .map(|i| sq_dist(x.row(i), fit.centroids.row(fit.labels[i])).sqrt())
        .collect();
    let far = dist.iter().copied().fold(0.0, f64::max);
    let scores = dist.iter().map(|d| far - d).collect();
    GroupAssignment::from_labels(fit.labels, scores, k)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ImportanceOrder {
    /// Highest scores first, no redundancy removal.
    Ascend,
    /// Lowest scores first, with the usual grouped NMS.
    Descend,
}

/// Importance-only ablations built on the same grouping and scores as
/// [`compress`].
pub fn importance_only_select(
    x: &TokenMatrix,
    budget: usize,
    order: ImportanceOrder,
    cfg: &CompressConfig,
) -> Result<PrunedSelection> {
    let t = x.tokens();
    if budget == 0 || budget > t {
        return Err(Error::param(format!(
            "budget {budget} out of range [1, {t}]"
        )));
    }
    if budget == t {
        return Ok(PrunedSelection::identity(t));
    }
    let assignment = grouping_for(x, budget, cfg)?;
    match order {
        ImportanceOrder::Ascend => Ok(top_by_score(&assignment.scores, budget)),
        ImportanceOrder::Descend => {
            let sim = similarity_view(x, cfg.similarity_source);
            let stats = RedundancyStats::new(sim.mean_pairwise(), budget, cfg.alpha)?;
            least_important_with_nms(
                &assignment.members(),
                &assignment.scores,
                &sim,
                stats.tau,
                budget,
            )
        }
    }
}

/// The `budget` highest-scoring tokens (ties to the smaller index).
pub fn top_by_score(scores: &[f64], budget: usize) -> PrunedSelection {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(by_score_desc(scores));
    let mut retained = order[..budget.min(order.len())].to_vec();
    retained.sort_unstable();
    let mut dropped: Vec<(usize, DropReason)> = order[budget.min(order.len())..]
        .iter()
        .map(|&i| (i, DropReason::OverQuota))
        .collect();
    dropped.sort_unstable_by_key(|&(i, _)| i);
    PrunedSelection {
        retained,
        quotas: vec![budget],
        survivors_per_group: vec![scores.len()],
        dropped,
        backfilled: Vec::new(),
    }
}

/// Grouped NMS and selection with the score order reversed, so the least
/// important tokens are visited and kept first.
pub fn least_important_with_nms<S: Similarity + ?Sized>(
    groups: &[Vec<usize>],
    scores: &[f64],
    sim: &S,
    tau: f64,
    budget: usize,
) -> Result<PrunedSelection> {
    let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
    prune_groups(groups, &negated, sim, tau, budget)
}

fn grouping_for(x: &TokenMatrix, budget: usize, cfg: &CompressConfig) -> Result<GroupAssignment> {
    let mut ignored = Vec::new();
    let k = resolve_group_count(budget, x.tokens(), x.dim(), cfg.groups, &mut ignored)?;
    psca_group_with(x, k, cfg.seed, cfg.svd)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InformativenessScore {
    pub gain: f64,
    pub penalty: f64,
    pub j: f64,
}

pub fn informativeness_objective<S: Similarity + ?Sized>(
    subset: &[usize],
    scores: &[f64],
    sim: &S,
) -> Result<InformativenessScore> {
    let mut seen = vec![false; scores.len()];
    for &i in subset {
        if i >= scores.len() {
            return Err(Error::InvalidInput(format!("token index {i} out of range")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidInput(format!("duplicate token index {i}")));
        }
    }
    let gain: f64 = subset.iter().map(|&i| scores[i]).sum();
    let mut penalty = 0.0;
    for (a, &i) in subset.iter().enumerate() {
        for &j in &subset[a + 1..] {
            penalty += sim.sim(i, j).max(0.0);
        }
    }
    Ok(InformativenessScore {
        gain,
        penalty,
        j: gain - penalty,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BestSubset {
    pub subset: Vec<usize>,
    pub j: f64,
}

/// `n` choose `k`, saturating.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Exhaustive maximizer of the objective over all subsets of size `n`.
/// Ties keep the lexicographically first subset.
pub fn best_subset_by_enumeration<S: Similarity + ?Sized>(
    scores: &[f64],
    sim: &S,
    n: usize,
) -> Result<BestSubset> {
    let t = scores.len();
    check_guard(t, n)?;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut best = BestSubset {
        subset: idx.clone(),
        j: informativeness_objective(&idx, scores, sim)?.j,
    };
    // Advance to the next combination in lexicographic order.
    'outer: loop {
        let mut p = n;
        loop {
            if p == 0 {
                break 'outer;
            }
            p -= 1;
            if idx[p] < t - n + p {
                break;
            }
            if p == 0 {
                break 'outer;
            }
        }
        idx[p] += 1;
        for q in p + 1..n {
            idx[q] = idx[q - 1] + 1;
        }
        let j = informativeness_objective(&idx, scores, sim)?.j;
        if j > best.j {
            best = BestSubset {
                subset: idx.clone(),
                j,
            };
        }
    }
    Ok(best)
}

/// Refuses instances beyond the exhaustive-search limits.
pub fn check_guard(t: usize, n: usize) -> Result<()> {
    if n == 0 || n > t {
        return Err(Error::param(format!(
            "subset size {n} out of range [1, {t}]"
        )));
    }
    if t > BRUTE_FORCE_MAX_TOKENS {
        return Err(Error::Refused(format!(
            "exhaustive search limited to {BRUTE_FORCE_MAX_TOKENS} tokens, got {t}"
        )));
    }
    let c = binomial(t, n);
    if c > BRUTE_FORCE_MAX_SUBSETS {
        return Err(Error::Refused(format!(
            "exhaustive search limited to {BRUTE_FORCE_MAX_SUBSETS} subsets, got C({t},{n}) = {c}"
        )));
    }
    Ok(())
}

/// Objective inputs for `x` under `cfg`: the grouping scores `compress`
/// would use and the configured similarity.
pub struct ObjectiveContext {
    pub scores: Vec<f64>,
    pub sim: NormalizedRows<'static>,
}

impl ObjectiveContext {
    pub fn new(x: &TokenMatrix, budget: usize, cfg: &CompressConfig) -> Result<Self> {
        Ok(Self {
            scores: grouping_for(x, budget.max(1), cfg)?.scores,
            sim: similarity_view(x, cfg.similarity_source).into_owned(),
        })
    }

    pub fn j(&self, subset: &[usize]) -> Result<f64> {
        Ok(informativeness_objective(subset, &self.scores, &self.sim)?.j)
    }
}

/// Exhaustive optimum of the objective for a token matrix.
pub fn brute_force_best_subset(
    x: &TokenMatrix,
    n: usize,
    cfg: &CompressConfig,
) -> Result<BestSubset> {
    check_guard(x.tokens(), n)?;
    let ctx = ObjectiveContext::new(x, n, cfg)?;
    best_subset_by_enumeration(&ctx.scores, &ctx.sim, n)
}

/// Objective values of every strategy on one instance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StrategyComparison {
    pub j_compress: f64,
    pub j_random: f64,
    pub j_ascend: f64,
    pub j_descend: f64,
    pub j_optimal: Option<f64>,
    pub compress_subset: Vec<usize>,
    pub random_subset: Vec<usize>,
}

/// Runs every strategy on `x`. The random subset is drawn with
/// `random_seed`; the optimum is only computed within the exhaustive-search
/// limits.
pub fn compare_strategies(
    x: &TokenMatrix,
    budget: usize,
    cfg: &CompressConfig,
    random_seed: u64,
) -> Result<StrategyComparison> {
    let t = x.tokens();
    if budget == 0 || budget > t {
        return Err(Error::param(format!(
            "budget {budget} out of range [1, {t}]"
        )));
    }
    let ctx = ObjectiveContext::new(x, budget, cfg)?;
    let ours = compress(x, budget, cfg)?.selection.retained;
    let mut rng = ChaCha8Rng::seed_from_u64(random_seed);
    let mut random_subset = index::sample(&mut rng, t, budget).into_vec();
    random_subset.sort_unstable();
    let ascend = importance_only_select(x, budget, ImportanceOrder::Ascend, cfg)?.retained;
    let descend = importance_only_select(x, budget, ImportanceOrder::Descend, cfg)?.retained;
    let j_optimal = match check_guard(t, budget) {
        Ok(()) => Some(best_subset_by_enumeration(&ctx.scores, &ctx.sim, budget)?.j),
        Err(_) => None,
    };
    Ok(StrategyComparison {
        j_compress: ctx.j(&ours)?,
        j_random: ctx.j(&random_subset)?,
        j_ascend: ctx.j(&ascend)?,
        j_descend: ctx.j(&descend)?,
        j_optimal,
        compress_subset: ours,
        random_subset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{pairwise_similarity, SimilarityMatrix};
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_tokens(t: usize, d: usize, seed: u64) -> TokenMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TokenMatrix::new(
            t,
            d,
            (0..t * d)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect(),
        )
        .unwrap()
    }

    fn sizes(g: &GroupAssignment) -> Vec<usize> {
        crate::grouping::group_sizes(g)
    }

    #[test]
    fn random_grouping_shapes() {
        let x = gaussian_tokens(4, 3, 0);
        assert_eq!(sizes(&random_grouping(&x, 2, 1).unwrap()), vec![2, 2]);
        let singletons = random_grouping(&x, 4, 1).unwrap();
        assert_eq!(sizes(&singletons), vec![1; 4]);
        let x = gaussian_tokens(11, 3, 0);
        let s = sizes(&random_grouping(&x, 3, 5).unwrap());
        assert_eq!(s, vec![4, 4, 3]);
        assert!(random_grouping(&x, 12, 0).is_err());
        assert!(random_grouping(&x, 0, 0).is_err());
    }

    #[test]
    fn random_grouping_seeded() {
        let x = gaussian_tokens(30, 3, 0);
        assert_eq!(
            random_grouping(&x, 5, 9).unwrap(),
            random_grouping(&x, 5, 9).unwrap()
        );
        assert_ne!(
            random_grouping(&x, 5, 9).unwrap().group_of,
            random_grouping(&x, 5, 10).unwrap().group_of
        );
        let g = random_grouping(&x, 5, 9).unwrap();
        for i in 0..30 {
            assert!((g.scores[i] - dot(x.row(i), x.row(i)).sqrt()).abs() < 1e-15);
        }
    }

    fn blobs(seed: u64) -> (TokenMatrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for (b, center) in [[10.0, 10.0, 0.0], [-10.0, 0.0, 5.0]].iter().enumerate() {
            for _ in 0..15 {
                rows.push(
                    center
                        .iter()
                        .map(|c| c + rng.random_range(-1.0..1.0))
                        .collect::<Vec<f64>>(),
                );
                truth.push(b);
            }
        }
        (TokenMatrix::from_rows(&rows).unwrap(), truth)
    }

    #[test]
    fn kmeans_recovers_blobs() {
        for seed in 0..10 {
            let (x, truth) = blobs(seed);
            let g = kmeans_grouping(&x, 2, seed, 50).unwrap();
            let first = g.group_of[0];
            for (i, &b) in truth.iter().enumerate() {
                assert_eq!(g.group_of[i] == first, b == truth[0]);
            }
            assert!(g.scores.iter().all(|&s| s >= 0.0));
        }
    }

    #[test]
    fn kmeans_single_cluster_and_determinism() {
        let x = gaussian_tokens(20, 4, 3);
        assert!(kmeans_grouping(&x, 1, 0, 10)
            .unwrap()
            .group_of
            .iter()
            .all(|&g| g == 0));
        assert_eq!(
            kmeans_grouping(&x, 4, 8, 30).unwrap(),
            kmeans_grouping(&x, 4, 8, 30).unwrap()
        );
    }

    #[test]
    fn kmeans_wcss_non_increasing() {
        for seed in 0..30 {
            let x = gaussian_tokens(60, 5, seed);
            let fit = kmeans(&x, 6, seed, 100).unwrap();
            for w in fit.wcss_history.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", fit.wcss_history);
            }
        }
    }

    #[test]
    fn kmeans_repairs_empty_clusters() {
        // Five identical points and one distinct: three clusters must all be
        // nonempty after repair.
        let x = TokenMatrix::from_rows(&[[0.0], [0.0], [0.0], [0.0], [0.0], [5.0]]).unwrap();
        let fit = kmeans(&x, 3, 0, 10).unwrap();
        for c in 0..3 {
            assert!(fit.labels.contains(&c), "{:?}", fit.labels);
        }
    }

    #[test]
    fn ascend_and_descend_on_fixed_scores() {
        let scores = [3.0, 1.0, 2.0];
        assert_eq!(top_by_score(&scores, 2).retained, vec![0, 2]);

        let sim = SimilarityMatrix::from_matrix(Matrix::identity(3)).unwrap();
        let sel = least_important_with_nms(&[vec![0, 1, 2]], &scores, &sim, 1.5, 2).unwrap();
        assert_eq!(sel.retained, vec![1, 2]);
    }

    #[test]
    fn importance_variants_full_budget() {
        let x = gaussian_tokens(12, 4, 1);
        let cfg = CompressConfig::default();
        for order in [ImportanceOrder::Ascend, ImportanceOrder::Descend] {
            let sel = importance_only_select(&x, 12, order, &cfg).unwrap();
            assert_eq!(sel.retained, (0..12).collect::<Vec<_>>());
            let sel = importance_only_select(&x, 5, order, &cfg).unwrap();
            assert_eq!(sel.retained.len(), 5);
        }
        assert!(importance_only_select(&x, 13, ImportanceOrder::Ascend, &cfg).is_err());
    }

    #[test]
    fn objective_examples() {
        let sim = SimilarityMatrix::from_matrix(
            Matrix::from_rows(&[[1.0, 0.4, -0.5], [0.4, 1.0, 0.2], [-0.5, 0.2, 1.0]]).unwrap(),
        )
        .unwrap();
        let scores = [1.0, 1.0, 0.7];
        assert_eq!(
            informativeness_objective(&[], &scores, &sim).unwrap().j,
            0.0
        );
        assert_eq!(
            informativeness_objective(&[2], &scores, &sim).unwrap().j,
            0.7
        );
        let pair = informativeness_objective(&[0, 1], &scores, &sim).unwrap();
        assert!((pair.j - 1.6).abs() < 1e-15);
        assert_eq!(pair.j, pair.gain - pair.penalty);
        // Negative similarity is not a reward.
        let anti = informativeness_objective(&[0, 2], &scores, &sim).unwrap();
        assert_eq!(anti.penalty, 0.0);
        assert!(informativeness_objective(&[1, 1], &scores, &sim).is_err());
        assert!(informativeness_objective(&[3], &scores, &sim).is_err());
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(10, 4), 210);
        assert_eq!(binomial(16, 8), 12870);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial(5, 0), 1);
    }

    #[test]
    fn enumeration_full_set_and_duplicates() {
        let x = gaussian_tokens(3, 2, 4);
        let best = brute_force_best_subset(&x, 3, &CompressConfig::default()).unwrap();
        assert_eq!(best.subset, vec![0, 1, 2]);

        let dup = TokenMatrix::from_rows(&[[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let best = brute_force_best_subset(&dup, 2, &CompressConfig::default()).unwrap();
        assert!(best.subset.contains(&2), "{:?}", best.subset);

        let sim = pairwise_similarity(&dup);
        let best = best_subset_by_enumeration(&[1.0, 1.0, 1.0], &sim, 2).unwrap();
        assert_eq!(best.subset, vec![0, 2]);
        assert_eq!(best.j, 2.0);
    }

    #[test]
    fn enumeration_is_optimal() {
        let x = gaussian_tokens(10, 4, 7);
        let cfg = CompressConfig::default();
        let ctx = ObjectiveContext::new(&x, 4, &cfg).unwrap();
        let best = brute_force_best_subset(&x, 4, &cfg).unwrap();
        assert_eq!(best.j, ctx.j(&best.subset).unwrap());
        // Exhaustive double check with an independent bitmask walk.
        let mut max = f64::NEG_INFINITY;
        for mask in 0u32..1 << 10 {
            if mask.count_ones() == 4 {
                let s: Vec<usize> = (0..10).filter(|b| mask >> b & 1 == 1).collect();
                max = max.max(ctx.j(&s).unwrap());
            }
        }
        assert_eq!(best.j, max);
    }

    #[test]
    fn enumeration_guards() {
        let x = gaussian_tokens(17, 2, 0);
        assert!(matches!(
            brute_force_best_subset(&x, 2, &CompressConfig::default()),
            Err(Error::Refused(_))
        ));
        // With at most 16 tokens the largest count is C(16, 8).
        assert!(binomial(16, 8) <= BRUTE_FORCE_MAX_SUBSETS);
        assert!(matches!(check_guard(40, 20), Err(Error::Refused(_))));
        let sim = SimilarityMatrix::from_matrix(Matrix::identity(16)).unwrap();
        assert!(best_subset_by_enumeration(&[1.0; 16], &sim, 8).is_ok());
        assert!(best_subset_by_enumeration(&[1.0; 16], &sim, 0).is_err());
    }

    #[test]
    fn comparison_runs() {
        let x = gaussian_tokens(10, 4, 2);
        let c = compare_strategies(&x, 4, &CompressConfig::default(), 3).unwrap();
        let opt = c.j_optimal.unwrap();
        for j in [c.j_compress, c.j_random, c.j_ascend, c.j_descend] {
            assert!(j <= opt + 1e-12);
        }
        let full = compare_strategies(&x, 10, &CompressConfig::default(), 3).unwrap();
        assert_eq!(full.j_compress, full.j_random);
        assert_eq!(full.j_ascend, full.j_descend);
    }
}
