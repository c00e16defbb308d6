//! Per-image selection reports in a canonical JSON form: keys sorted, floats
//! rounded to 9 significant digits, two-space indent, trailing newline.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::grouping::group_sizes;
use crate::pipeline::{CompressConfig, Compression, SimilaritySource, StageTimings};

pub const SCHEMA_VERSION: u32 = 1;

const SIGNIFICANT_DIGITS: usize = 9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub alpha: f64,
    pub groups: Option<usize>,
    pub seed: u64,
    pub similarity: SimilaritySource,
    pub svd_oversample: usize,
    pub svd_power_iters: usize,
}

impl From<&CompressConfig> for ConfigEcho {
    fn from(cfg: &CompressConfig) -> Self {
        Self {
            alpha: cfg.alpha,
            groups: cfg.groups,
            seed: cfg.seed,
            similarity: cfg.similarity_source,
            svd_oversample: cfg.svd.oversample,
            svd_power_iters: cfg.svd.power_iters,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelectionReport {
    pub schema_version: u32,
    pub image_id: String,
    pub t: usize,
    pub d: usize,
    pub n: usize,
    pub k: usize,
    pub alpha: f64,
    pub rho: f64,
    pub phi: f64,
    pub tau: f64,
    pub lambda: f64,
    pub retained: Vec<usize>,
    pub quotas: Vec<usize>,
    pub group_sizes_pre_nms: Vec<usize>,
    pub group_sizes_post_nms: Vec<usize>,
    pub backfilled: Vec<usize>,
    pub identity_selection: bool,
    pub warnings: Vec<String>,
    pub config: ConfigEcho,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing_us: Option<StageTimings>,
}

impl SelectionReport {
    pub fn from_compression(
        image_id: &str,
        tokens: usize,
        dim: usize,
        budget: usize,
        cfg: &CompressConfig,
        out: &Compression,
    ) -> Self {
        let pre = out.assignment.as_ref().map(group_sizes).unwrap_or_default();
        Self {
            schema_version: SCHEMA_VERSION,
            image_id: image_id.to_string(),
            t: tokens,
            d: dim,
            n: budget,
            k: out.groups,
            alpha: out.stats.alpha,
            rho: out.stats.rho,
            phi: out.stats.phi,
            tau: out.stats.tau,
            lambda: out.stats.lambda,
            retained: out.selection.retained.clone(),
            quotas: out.selection.quotas.clone(),
            group_sizes_pre_nms: pre,
            group_sizes_post_nms: out.selection.survivors_per_group.clone(),
            backfilled: out.selection.backfilled.clone(),
            identity_selection: out.identity,
            warnings: out.warnings.clone(),
            config: cfg.into(),
            timing_us: None,
        }
    }

    /// Report for an input with no tokens: nothing to select.
    pub fn empty(image_id: &str, dim: usize, budget: usize, cfg: &CompressConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            image_id: image_id.to_string(),
            t: 0,
            d: dim,
            n: budget,
            k: 0,
            alpha: cfg.alpha,
            rho: 0.0,
            phi: 1.0,
            tau: 0.0,
            lambda: 0.0,
            retained: Vec::new(),
            quotas: Vec::new(),
            group_sizes_pre_nms: Vec::new(),
            group_sizes_post_nms: Vec::new(),
            backfilled: Vec::new(),
            identity_selection: false,
            warnings: vec!["input has no tokens; nothing retained".to_string()],
            config: cfg.into(),
            timing_us: None,
        }
    }

    pub fn with_timing(mut self, timings: StageTimings) -> Self {
        self.timing_us = Some(timings);
        self
    }
}

/// Rounds every float in the tree to 9 significant digits. Non-finite
/// numbers cannot occur in a `Value`; serde_json maps them to null.
pub fn canonicalize(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let f = n.as_f64().unwrap();
            let rounded: f64 = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, f)
                .parse()
                .unwrap();
            // -0.0 and 0.0 must print the same.
            let rounded = if rounded == 0.0 { 0.0 } else { rounded };
            serde_json::Number::from_f64(rounded).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(canonicalize).collect()),
        Value::Object(o) => {
            Value::Object(o.into_iter().map(|(k, v)| (k, canonicalize(v))).collect())
        }
        other => other,
    }
}

/// Canonical JSON text for any serializable value.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = canonicalize(serde_json::to_value(value)?);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn write_canonical_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = to_canonical_json(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_selection_report(report: &SelectionReport, path: &Path) -> Result<()> {
    write_canonical_json(report, path)
}
