//! Dataset-level budgets: images with more diverse tokens keep more of them
//! while the dataset average stays at the target.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use log::warn;
use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_MIN_BUDGET: usize = 16;

/// `1 - rho`.
pub fn information_score(rho: f64) -> f64 {
    1.0 - rho
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImageBudget {
    pub phi: f64,
    /// Proportional share before rounding and clamping.
    pub raw: f64,
    pub n_prime: usize,
    pub cap: usize,
    /// Whether rounding pushed this image outside `[n_min, cap]`.
    pub clamped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BudgetPlan {
    pub per_image: Vec<ImageBudget>,
    pub target_avg: usize,
    pub n_min: usize,
    pub warnings: Vec<String>,
}

impl BudgetPlan {
    pub fn budgets(&self) -> Vec<usize> {
        self.per_image.iter().map(|b| b.n_prime).collect()
    }

    pub fn total(&self) -> usize {
        self.per_image.iter().map(|b| b.n_prime).sum()
    }

    pub fn mean(&self) -> f64 {
        self.total() as f64 / self.per_image.len() as f64
    }
}

/// Gives each image `phi_i / mean(phi) * target_avg` tokens, rounded and
/// clamped to `[n_min, cap_i]`. Whatever rounding and clamping add or remove
/// is then settled one token at a time among unclamped images, in order of
/// how far each sits from its proportional share.
pub fn allocate_dynamic_budgets(
    phis: &[f64],
    target_avg: usize,
    n_min: usize,
    caps: &[usize],
) -> Result<BudgetPlan> {
    if phis.is_empty() {
        return Err(Error::param("no images to allocate budgets for"));
    }
    if caps.len() != phis.len() {
        return Err(Error::param(format!(
            "{} caps for {} images",
            caps.len(),
            phis.len()
        )));
    }
    if n_min == 0 || target_avg < n_min {
        return Err(Error::param(format!(
            "need target average ({target_avg}) >= min budget ({n_min}) >= 1"
        )));
    }
    if let Some(p) = phis.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::param(format!(
            "information scores must be finite and nonnegative, got {p}"
        )));
    }

    let mut warnings = Vec::new();
    let mean_phi = phis.iter().sum::<f64>() / phis.len() as f64;
    let raws: Vec<f64> = if mean_phi > 0.0 {
        phis.iter()
            .map(|p| p / mean_phi * target_avg as f64)
            .collect()
    } else {
        let msg = "all information scores are zero; using uniform budgets".to_string();
        warn!("{msg}");
        warnings.push(msg);
        vec![target_avg as f64; phis.len()]
    };

    let mut per_image: Vec<ImageBudget> = phis
        .iter()
        .zip(&raws)
        .zip(caps)
        .map(|((&phi, &raw), &cap)| {
            let lo = n_min.min(cap);
            let rounded = raw.round() as usize;
            let n_prime = rounded.clamp(lo, cap);
            ImageBudget {
                phi,
                raw,
                n_prime,
                cap,
                clamped: n_prime != rounded,
            }
        })
        .collect();

    let target = phis.len() * target_avg;
    let current: usize = per_image.iter().map(|b| b.n_prime).sum();
    if current < target {
        settle(&mut per_image, target - current, n_min, true);
    } else if current > target {
        settle(&mut per_image, current - target, n_min, false);
    }
    let total: usize = per_image.iter().map(|b| b.n_prime).sum();
    if total != target {
        let msg = format!("budget total {total} differs from target {target}: no slack left");
        warn!("{msg}");
        warnings.push(msg);
    }

    Ok(BudgetPlan {
        per_image,
        target_avg,
        n_min,
        warnings,
    })
}

/// Moves `amount` tokens into (`grow`) or out of unclamped images. Growth
/// goes to the image furthest below its share, shrinking takes from the one
/// furthest above; ties go to the smaller index.
fn settle(per_image: &mut [ImageBudget], mut amount: usize, n_min: usize, grow: bool) {
    let mut heap: BinaryHeap<Candidate> = per_image
        .iter()
        .enumerate()
        .filter(|(_, b)| !b.clamped)
        .map(|(i, b)| Candidate::new(i, b, grow))
        .collect();
    while amount > 0 {
        let Some(c) = heap.pop() else { break };
        let b = &mut per_image[c.index];
        let has_room = if grow {
            b.n_prime < b.cap
        } else {
            b.n_prime > n_min.min(b.cap)
        };
        if !has_room {
            continue;
        }
        if grow {
            b.n_prime += 1;
        } else {
            b.n_prime -= 1;
        }
        amount -= 1;
        heap.push(Candidate::new(c.index, b, grow));
    }
}

struct Candidate {
    index: usize,
    /// Larger means more deserving of the next adjustment.
    priority: f64,
}

impl Candidate {
    fn new(index: usize, b: &ImageBudget, grow: bool) -> Self {
        let deficit = b.raw - b.n_prime as f64;
        Self {
            index,
            priority: if grow { deficit } else { -deficit },
        }
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then(other.index.cmp(&self.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

/// Equal-width histogram over `[min, max]` of the values.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub min: f64,
    pub max: f64,
    pub counts: Vec<usize>,
}

pub fn information_histogram(phis: &[f64], bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::param("histogram needs at least one bin"));
    }
    let mut counts = vec![0; bins];
    if phis.is_empty() {
        return Ok(Histogram {
            min: 0.0,
            max: 0.0,
            counts,
        });
    }
    let min = phis.iter().copied().fold(f64::INFINITY, f64::min);
    let max = phis.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = max - min;
    for &p in phis {
        let b = if width > 0.0 {
            (((p - min) / width * bins as f64) as usize).min(bins - 1)
        } else {
            0
        };
        counts[b] += 1;
    }
    Ok(Histogram { min, max, counts })
}
