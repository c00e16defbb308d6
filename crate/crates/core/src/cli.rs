//! Command-line surface: `compress`, `batch` and `oracle`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{check_guard, compare_strategies, StrategyComparison};
use crate::budget::{
    allocate_dynamic_budgets, information_histogram, information_score, BudgetPlan, Histogram,
    DEFAULT_MIN_BUDGET,
};
use crate::error::{Error, Result};
use crate::io::{
    read_token_matrix, to_canonical_json, tokm, write_canonical_json, Format, Manifest,
    SelectionReport,
};
use crate::nms::DEFAULT_ALPHA;
use crate::pipeline::{compress, redundancy, CompressConfig, SimilaritySource};
use crate::tensor::TokenMatrix;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_IO: i32 = 2;

const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Parser)]
#[command(
    name = "tokprune",
    version,
    about = "Visual token compression by grouping and NMS"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compress one token matrix and write its selection report.
    Compress(CompressArgs),
    /// Compress every image listed in a manifest.
    Batch(BatchArgs),
    /// Compare against baselines and the exhaustive optimum on a small input.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Number of groups; defaults to budget / 4.
    #[arg(long)]
    pub groups: Option<usize>,
    /// Threshold scale: lambda = budget / alpha.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Embeddings used for similarities and redundancy.
    #[arg(long = "sim", value_enum)]
    pub similarity: Option<SimilaritySource>,
}

impl PipelineArgs {
    fn config(&self) -> Result<CompressConfig> {
        let cfg = CompressConfig {
            groups: self.groups,
            alpha: self.alpha.unwrap_or(DEFAULT_ALPHA),
            seed: self.seed.unwrap_or(0),
            similarity_source: self.similarity.unwrap_or_default(),
            ..Default::default()
        };
        check_alpha(cfg.alpha)?;
        Ok(cfg)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 {
        Ok(())
    } else {
        Err(Error::param(format!("alpha must be positive, got {alpha}")))
    }
}

#[derive(Debug, Args)]
pub struct CompressArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Tokens to keep.
    #[arg(long)]
    pub budget: usize,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Input format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Report path; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Include per-stage wall-clock times in the report.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Average tokens kept per image.
    #[arg(long)]
    pub avg_budget: Option<usize>,
    /// Scale each image's budget by its information score.
    #[arg(long)]
    pub dynamic: bool,
    #[arg(long)]
    pub min_budget: Option<usize>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Report directory; `reports/` next to the manifest when omitted.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub budget: usize,
    #[arg(long)]
    pub trials: usize,
    /// Base seed; trial t uses seed + t.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long = "sim", value_enum)]
    pub similarity: Option<SimilaritySource>,
}

/// Exit code for an error: 2 for filesystem failures, 1 for everything else.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_io() {
        EXIT_IO
    } else {
        EXIT_VALIDATION
    }
}

/// Configures logging from `PRUNESID_LOG` (`quiet`, `info`, `debug`);
/// warnings are shown by default.
pub fn init_logging() {
    let level = match std::env::var("PRUNESID_LOG").as_deref() {
        Ok("quiet") => log::LevelFilter::Off,
        Ok("info") => log::LevelFilter::Info,
        Ok("debug") => log::LevelFilter::Debug,
        _ => log::LevelFilter::Warn,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Compress(a) => run_compress(&a),
        Command::Batch(a) => run_batch(&a),
        Command::Oracle(a) => run_oracle(&a),
    }
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Loads a token matrix; `Ok(None)` for a TOKM file declaring no tokens.
fn load_tokens(path: &Path, format: Format) -> Result<Option<(TokenMatrix, usize)>> {
    if format == Format::Tokm {
        let header = tokm::read_header(path)?;
        if header.tokens == 0 {
            return Ok(None);
        }
    }
    let x = read_token_matrix(path, format)?;
    let d = x.dim();
    Ok(Some((x, d)))
}

fn report_for(
    id: &str,
    path: &Path,
    format: Format,
    budget: usize,
    cfg: &CompressConfig,
    timing: bool,
) -> Result<SelectionReport> {
    if budget == 0 {
        return Err(Error::param("budget must be at least 1"));
    }
    match load_tokens(path, format)? {
        None => {
            let dim = tokm::read_header(path)?.dim as usize;
            warn!("{}: no tokens", path.display());
            Ok(SelectionReport::empty(id, dim, budget, cfg))
        }
        Some((x, d)) => {
            let out = compress(&x, budget, cfg)?;
            let report = SelectionReport::from_compression(id, x.tokens(), d, budget, cfg, &out);
            Ok(if timing {
                report.with_timing(out.timings)
            } else {
                report
            })
        }
    }
}

fn image_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn run_compress(a: &CompressArgs) -> Result<()> {
    let cfg = a.pipeline.config()?;
    let format = a.format.unwrap_or_else(|| Format::from_path(&a.input));
    let report = report_for(
        &image_id(&a.input),
        &a.input,
        format,
        a.budget,
        &cfg,
        a.timing,
    )?;
    emit(&to_canonical_json(&report)?, a.output.as_deref())
}

#[derive(Clone, Debug, Serialize)]
struct ImageSummary {
    id: String,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    t: Option<usize>,
    rho: Option<f64>,
    phi: Option<f64>,
    budget: Option<usize>,
    retained: Option<usize>,
}

#[derive(Debug, Serialize)]
struct BudgetSummary {
    dynamic: bool,
    target_avg: usize,
    min_budget: usize,
    mean: f64,
    std: f64,
    budgets: Vec<usize>,
    warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
struct BatchSummary {
    images: Vec<ImageSummary>,
    budget: BudgetSummary,
    phi_histogram: Histogram,
    succeeded: usize,
    failed: usize,
    config: crate::io::ConfigEcho,
}

struct Probe {
    tokens: usize,
    rho: f64,
}

fn run_batch(a: &BatchArgs) -> Result<()> {
    let manifest = Manifest::load(&a.manifest)?;
    let mc = &manifest.config;
    let cfg = CompressConfig {
        groups: a.pipeline.groups.or(mc.groups),
        alpha: a.pipeline.alpha.or(mc.alpha).unwrap_or(DEFAULT_ALPHA),
        seed: a.pipeline.seed.or(mc.seed).unwrap_or(0),
        similarity_source: a.pipeline.similarity.or(mc.similarity).unwrap_or_default(),
        ..Default::default()
    };
    check_alpha(cfg.alpha)?;
    let avg = a
        .avg_budget
        .or(mc.avg_budget)
        .ok_or_else(|| Error::param("no --avg-budget given and none in the manifest"))?;
    if avg == 0 {
        return Err(Error::param("average budget must be at least 1"));
    }
    let dynamic = a.dynamic || mc.dynamic;
    let n_min = a.min_budget.or(mc.min_budget).unwrap_or(DEFAULT_MIN_BUDGET);
    if a.jobs == 0 {
        return Err(Error::param("--jobs must be at least 1"));
    }
    let out_dir = a
        .out_dir
        .clone()
        .unwrap_or_else(|| a.manifest.parent().unwrap_or(Path::new("")).join("reports"));
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs)
        .build()
        .map_err(|e| Error::param(format!("thread pool: {e}")))?;
    let started = Instant::now();

    // Pass 1: redundancy of every image.
    let probes: Vec<Result<Probe>> = pool.install(|| {
        manifest
            .images
            .par_iter()
            .map(|e| {
                let format = Manifest::format_of(e);
                Ok(match load_tokens(&e.path, format)? {
                    None => Probe {
                        tokens: 0,
                        rho: 0.0,
                    },
                    Some((x, _)) => Probe {
                        tokens: x.tokens(),
                        rho: redundancy(&x, cfg.similarity_source),
                    },
                })
            })
            .collect()
    });

    let ok: Vec<usize> = (0..probes.len()).filter(|&i| probes[i].is_ok()).collect();
    let probe = |i: usize| probes[i].as_ref().unwrap();
    let phis: Vec<f64> = ok
        .iter()
        .map(|&i| information_score(probe(i).rho))
        .collect();
    let mut budgets = vec![None; probes.len()];
    let mut plan_warnings = Vec::new();
    if dynamic && !ok.is_empty() {
        let caps: Vec<usize> = ok.iter().map(|&i| probe(i).tokens.max(1)).collect();
        let plan: BudgetPlan = allocate_dynamic_budgets(&phis, avg, n_min, &caps)?;
        for (&i, b) in ok.iter().zip(plan.budgets()) {
            budgets[i] = Some(b);
        }
        plan_warnings = plan.warnings;
    } else {
        for &i in &ok {
            budgets[i] = Some(avg);
        }
    }
    info!("pass 1 done in {:?}", started.elapsed());

    // Pass 2: compress each image under its budget.
    let results: Vec<Result<SelectionReport>> = pool.install(|| {
        manifest
            .images
            .par_iter()
            .enumerate()
            .map(|(i, e)| {
                let budget = match (&probes[i], budgets[i]) {
                    (Err(_), _) | (_, None) => return Err(Error::InvalidInput("skipped".into())),
                    (Ok(_), Some(b)) => b,
                };
                let report =
                    report_for(&e.id, &e.path, Manifest::format_of(e), budget, &cfg, false)?;
                write_canonical_json(&report, &out_dir.join(format!("{}.json", e.id)))?;
                Ok(report)
            })
            .collect()
    });
    info!("pass 2 done in {:?}", started.elapsed());

    let mut images = Vec::with_capacity(results.len());
    let mut failed = 0;
    for (i, e) in manifest.images.iter().enumerate() {
        let entry = match (&probes[i], &results[i]) {
            (Ok(p), Ok(r)) => ImageSummary {
                id: e.id.clone(),
                status: "ok",
                error: None,
                t: Some(p.tokens),
                rho: Some(p.rho),
                phi: Some(information_score(p.rho)),
                budget: budgets[i],
                retained: Some(r.retained.len()),
            },
            (Err(err), _) | (Ok(_), Err(err)) => {
                failed += 1;
                warn!("{}: {err}", e.id);
                ImageSummary {
                    id: e.id.clone(),
                    status: "failed",
                    error: Some(err.to_string()),
                    t: probes[i].as_ref().ok().map(|p| p.tokens),
                    rho: probes[i].as_ref().ok().map(|p| p.rho),
                    phi: probes[i].as_ref().ok().map(|p| information_score(p.rho)),
                    budget: budgets[i],
                    retained: None,
                }
            }
        };
        images.push(entry);
    }

    let assigned: Vec<usize> = budgets.iter().flatten().copied().collect();
    let (mean, std) = mean_std(&assigned);
    let summary = BatchSummary {
        succeeded: images.len() - failed,
        failed,
        phi_histogram: information_histogram(&phis, HISTOGRAM_BINS)?,
        budget: BudgetSummary {
            dynamic,
            target_avg: avg,
            min_budget: n_min,
            mean,
            std,
            budgets: assigned,
            warnings: plan_warnings,
        },
        images,
        config: (&cfg).into(),
    };
    write_canonical_json(&summary, &out_dir.join("summary.json"))?;

    if failed > 0 {
        return Err(Error::BatchFailed {
            failed,
            total: manifest.images.len(),
        });
    }
    Ok(())
}

fn mean_std(values: &[usize]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<usize>() as f64 / n;
    let var = values
        .iter()
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    (mean, var.sqrt())
}

#[derive(Debug, Serialize)]
struct OracleTrial {
    trial: usize,
    seed: u64,
    #[serde(flatten)]
    comparison: StrategyComparison,
}

#[derive(Debug, Default, Serialize)]
pub struct OracleSummary {
    pub trials: usize,
    pub win_rate_vs_random: f64,
    pub tie_rate_vs_random: f64,
    pub win_rate_vs_ascend: f64,
    pub tie_rate_vs_ascend: f64,
    pub win_rate_vs_descend: f64,
    pub tie_rate_vs_descend: f64,
    /// Fraction of trials where compress reaches at least 90% of the optimum.
    pub within_90pct_of_optimal: f64,
    pub mean_j_compress: f64,
    pub mean_j_optimal: f64,
}

/// Relative tolerance under which two objective values count as a tie.
const TIE_TOL: f64 = 1e-9;

fn beats(a: f64, b: f64) -> (bool, bool) {
    let tol = TIE_TOL * a.abs().max(b.abs()).max(1.0);
    (a > b + tol, (a - b).abs() <= tol)
}

/// Win/tie rates of compress against each baseline over the trials.
pub fn summarize_trials(trials: &[StrategyComparison]) -> OracleSummary {
    let m = trials.len() as f64;
    let rate =
        |f: &dyn Fn(&StrategyComparison) -> bool| trials.iter().filter(|c| f(c)).count() as f64 / m;
    let optimal: Vec<f64> = trials.iter().filter_map(|c| c.j_optimal).collect();
    OracleSummary {
        trials: trials.len(),
        win_rate_vs_random: rate(&|c| beats(c.j_compress, c.j_random).0),
        tie_rate_vs_random: rate(&|c| beats(c.j_compress, c.j_random).1),
        win_rate_vs_ascend: rate(&|c| beats(c.j_compress, c.j_ascend).0),
        tie_rate_vs_ascend: rate(&|c| beats(c.j_compress, c.j_ascend).1),
        win_rate_vs_descend: rate(&|c| beats(c.j_compress, c.j_descend).0),
        tie_rate_vs_descend: rate(&|c| beats(c.j_compress, c.j_descend).1),
        within_90pct_of_optimal: rate(&|c| {
            c.j_optimal
                .is_some_and(|o| reaches_fraction(c.j_compress, o, 0.9))
        }),
        mean_j_compress: trials.iter().map(|c| c.j_compress).sum::<f64>() / m,
        mean_j_optimal: if optimal.is_empty() {
            0.0
        } else {
            optimal.iter().sum::<f64>() / optimal.len() as f64
        },
    }
}

/// `j >= frac * optimum`, read as "within (1 - frac)|optimum| of it" so
/// the test stays meaningful when the optimum is negative.
pub fn reaches_fraction(j: f64, optimum: f64, frac: f64) -> bool {
    j >= optimum - (1.0 - frac) * optimum.abs() - TIE_TOL
}

#[derive(Debug, Serialize)]
struct OracleOutput {
    input: String,
    t: usize,
    d: usize,
    n: usize,
    summary: OracleSummary,
    trials: Vec<OracleTrial>,
}

fn run_oracle(a: &OracleArgs) -> Result<()> {
    if a.trials == 0 {
        return Err(Error::param("--trials must be at least 1"));
    }
    let format = a.format.unwrap_or_else(|| Format::from_path(&a.input));
    let x = read_token_matrix(&a.input, format)?;
    check_guard(x.tokens(), a.budget)?;
    let alpha = a.alpha.unwrap_or(DEFAULT_ALPHA);
    check_alpha(alpha)?;

    let mut trials = Vec::with_capacity(a.trials);
    for t in 0..a.trials {
        let seed = a.seed.wrapping_add(t as u64);
        let cfg = CompressConfig {
            alpha,
            seed,
            similarity_source: a.similarity.unwrap_or_default(),
            ..Default::default()
        };
        trials.push(OracleTrial {
            trial: t,
            seed,
            comparison: compare_strategies(&x, a.budget, &cfg, seed)?,
        });
    }
    let comparisons: Vec<StrategyComparison> =
        trials.iter().map(|t| t.comparison.clone()).collect();
    let out = OracleOutput {
        input: a.input.display().to_string(),
        t: x.tokens(),
        d: x.dim(),
        n: a.budget,
        summary: summarize_trials(&comparisons),
        trials,
    };
    emit(&to_canonical_json(&out)?, a.output.as_deref())
}
