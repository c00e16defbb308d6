use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;
use tokprune::io::{write_token_matrix, Format, TokenFileHeader};
use tokprune::TokenMatrix;

fn tokprune(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tokprune"))
        .args(args)
        .env_remove("PRUNESID_LOG")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn random_tokens(t: usize, d: usize, seed: u64) -> TokenMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TokenMatrix::new(
        t,
        d,
        (0..t * d).map(|_| rng.random_range(-2.0..2.0)).collect(),
    )
    .unwrap()
}

/// Unit rows `a e_0 + b f_i` with orthonormal `f_i`: every pair has cosine
/// `a^2`, so the mean pairwise similarity is `rho`.
fn constant_similarity_tokens(t: usize, rho: f64) -> TokenMatrix {
    let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
    let rows: Vec<Vec<f64>> = (0..t)
        .map(|i| {
            let mut r = vec![0.0; t + 1];
            r[0] = a;
            r[i + 1] = b;
            r
        })
        .collect();
    TokenMatrix::from_rows(&rows).unwrap()
}

fn write_tokens(dir: &Path, name: &str, x: &TokenMatrix) -> PathBuf {
    let p = dir.join(name);
    write_token_matrix(x, &p, Format::from_path(&p)).unwrap();
    p
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn usizes(v: &Value) -> Vec<usize> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_u64().unwrap() as usize)
        .collect()
}

fn write_manifest(dir: &Path, images: &[(&str, &str)], config: Value) -> PathBuf {
    let images: Vec<Value> = images
        .iter()
        .map(|(id, path)| serde_json::json!({"id": id, "path": path}))
        .collect();
    let p = dir.join("manifest.json");
    fs::write(
        &p,
        serde_json::json!({"images": images, "config": config}).to_string(),
    )
    .unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn compress_writes_report() {
    let dir = TempDir::new().unwrap();
    let input = write_tokens(dir.path(), "a.tokm", &random_tokens(60, 12, 1));
    let report = dir.path().join("a.json");
    let out = tokprune(&[
        "compress",
        "--input",
        s(&input),
        "--budget",
        "12",
        "--output",
        s(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let r = read_json(&report);
    let retained = usizes(&r["retained"]);
    assert_eq!(retained.len(), 12);
    assert!(retained.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(r["t"], 60);
    assert_eq!(r["d"], 12);
    assert_eq!(r["k"], 3);
    assert_eq!(usizes(&r["quotas"]).iter().sum::<usize>(), 12);
    assert_eq!(usizes(&r["group_sizes_pre_nms"]).iter().sum::<usize>(), 60);
    assert_eq!(r["identity_selection"], false);
    assert!(r.get("timing_us").is_none());
}

#[test]
fn compress_prints_to_stdout_without_output() {
    let dir = TempDir::new().unwrap();
    let input = write_tokens(dir.path(), "a.csv", &random_tokens(20, 5, 2));
    let out = tokprune(&[
        "compress",
        "--input",
        s(&input),
        "--budget",
        "6",
        "--timing",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(usizes(&r["retained"]).len(), 6);
    assert!(r["timing_us"]["total_us"].is_u64());
}

#[test]
fn compress_reports_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let input = write_tokens(dir.path(), "a.tokm", &random_tokens(80, 10, 3));
    let mut bytes = Vec::new();
    for name in ["r1.json", "r2.json"] {
        let p = dir.path().join(name);
        let out = tokprune(&[
            "compress",
            "--input",
            s(&input),
            "--budget",
            "16",
            "--seed",
            "5",
            "--output",
            s(&p),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        bytes.push(fs::read(&p).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn identity_budget_flags_report() {
    let dir = TempDir::new().unwrap();
    let input = write_tokens(dir.path(), "a.tokm", &random_tokens(8, 4, 4));
    let out = tokprune(&["compress", "--input", s(&input), "--budget", "20"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["identity_selection"], true);
    assert_eq!(usizes(&r["retained"]), (0..8).collect::<Vec<_>>());
}

#[test]
fn empty_token_file_gives_empty_report() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("empty.tokm");
    let header = TokenFileHeader {
        version: 1,
        tokens: 0,
        dim: 16,
        dtype: 1,
    };
    fs::write(&input, header.to_bytes()).unwrap();
    let out = tokprune(&["compress", "--input", s(&input), "--budget", "4"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(usizes(&r["retained"]).is_empty());
    assert!(!r["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn zero_budget_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let input = write_tokens(dir.path(), "a.tokm", &random_tokens(10, 4, 5));
    let out = tokprune(&["compress", "--input", s(&input), "--budget", "0"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).starts_with("error:"), "{}", stderr(&out));
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.tokm");
    let out = tokprune(&["compress", "--input", s(&missing), "--budget", "4"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).starts_with("error:"));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let input = write_tokens(dir.path(), "a.tokm", &random_tokens(10, 4, 6));
    let target = dir.path().join("no_such_dir").join("r.json");
    let out = tokprune(&[
        "compress",
        "--input",
        s(&input),
        "--budget",
        "4",
        "--output",
        s(&target),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn malformed_csv_names_the_line() {
    let dir = TempDir::new().unwrap();
    let ragged = dir.path().join("ragged.csv");
    fs::write(&ragged, "1,2,3\n4,5\n").unwrap();
    let out = tokprune(&["compress", "--input", s(&ragged), "--budget", "1"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));

    let nan = dir.path().join("nan.csv");
    fs::write(&nan, "1,2\nNaN,3\n").unwrap();
    let out = tokprune(&["compress", "--input", s(&nan), "--budget", "1"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn corrupt_tokm_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let input = write_tokens(dir.path(), "a.tokm", &random_tokens(10, 4, 7));
    let mut bytes = fs::read(&input).unwrap();
    bytes.truncate(bytes.len() - 4);
    fs::write(&input, &bytes).unwrap();
    let out = tokprune(&["compress", "--input", s(&input), "--budget", "4"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).starts_with("error:"));
}

#[test]
fn usage_errors_and_help() {
    assert_eq!(code(&tokprune(&["compress", "--budget", "4"])), 1);
    assert_eq!(
        code(&tokprune(&["compress", "--input", "x", "--budget", "-3"])),
        1
    );
    assert_eq!(code(&tokprune(&["frobnicate"])), 1);
    assert_eq!(code(&tokprune(&["--help"])), 0);
}

#[test]
fn batch_fixed_budget_matches_single_runs() {
    let dir = TempDir::new().unwrap();
    let inputs = [
        write_tokens(dir.path(), "a.tokm", &random_tokens(70, 9, 10)),
        write_tokens(dir.path(), "b.csv", &random_tokens(40, 6, 11)),
        write_tokens(dir.path(), "c.tokm", &random_tokens(25, 30, 12)),
    ];
    let manifest = write_manifest(
        dir.path(),
        &[("a", "a.tokm"), ("b", "b.csv"), ("c", "c.tokm")],
        serde_json::json!({"seed": 3}),
    );
    let out = tokprune(&["batch", "--manifest", s(&manifest), "--avg-budget", "12"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let reports = dir.path().join("reports");
    for (id, input) in ["a", "b", "c"].iter().zip(&inputs) {
        let single = tokprune(&[
            "compress",
            "--input",
            s(input),
            "--budget",
            "12",
            "--seed",
            "3",
        ]);
        assert_eq!(code(&single), 0, "{}", stderr(&single));
        let single: Value = serde_json::from_slice(&single.stdout).unwrap();
        let batched = read_json(&reports.join(format!("{id}.json")));
        assert_eq!(batched["retained"], single["retained"], "{id}");
        assert_eq!(batched["image_id"], *id);
    }

    let summary = read_json(&reports.join("summary.json"));
    assert_eq!(summary["succeeded"], 3);
    assert_eq!(summary["failed"], 0);
    assert_eq!(summary["budget"]["dynamic"], false);
    assert_eq!(usizes(&summary["budget"]["budgets"]), vec![12, 12, 12]);
}

#[test]
fn batch_dynamic_two_image_example() {
    let dir = TempDir::new().unwrap();
    write_tokens(
        dir.path(),
        "redundant.tokm",
        &constant_similarity_tokens(100, 0.75),
    );
    write_tokens(
        dir.path(),
        "diverse.tokm",
        &constant_similarity_tokens(100, 0.25),
    );
    let manifest = write_manifest(
        dir.path(),
        &[("redundant", "redundant.tokm"), ("diverse", "diverse.tokm")],
        serde_json::json!({}),
    );
    let out_dir = dir.path().join("out");

    let out = tokprune(&[
        "batch",
        "--manifest",
        s(&manifest),
        "--avg-budget",
        "64",
        "--dynamic",
        "--out-dir",
        s(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary = read_json(&out_dir.join("summary.json"));
    assert_eq!(usizes(&summary["budget"]["budgets"]), vec![32, 96]);
    let phis: Vec<f64> = summary["images"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["phi"].as_f64().unwrap())
        .collect();
    assert!(
        (phis[0] - 0.25).abs() < 1e-6 && (phis[1] - 0.75).abs() < 1e-6,
        "{phis:?}"
    );
    assert_eq!(
        usizes(&read_json(&out_dir.join("diverse.json"))["retained"]).len(),
        96
    );

    let out = tokprune(&[
        "batch",
        "--manifest",
        s(&manifest),
        "--avg-budget",
        "64",
        "--out-dir",
        s(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary = read_json(&out_dir.join("summary.json"));
    assert_eq!(usizes(&summary["budget"]["budgets"]), vec![64, 64]);
}

#[test]
fn batch_output_independent_of_jobs() {
    let dir = TempDir::new().unwrap();
    let ids: Vec<String> = (0..6).map(|i| format!("img{i}")).collect();
    let paths: Vec<String> = (0..6).map(|i| format!("img{i}.tokm")).collect();
    for (i, p) in paths.iter().enumerate() {
        write_tokens(dir.path(), p, &random_tokens(50 + 10 * i, 8, 20 + i as u64));
    }
    let entries: Vec<(&str, &str)> = ids
        .iter()
        .map(String::as_str)
        .zip(paths.iter().map(String::as_str))
        .collect();
    let manifest = write_manifest(
        dir.path(),
        &entries,
        serde_json::json!({"avg_budget": 24, "dynamic": true}),
    );

    let mut runs = Vec::new();
    for jobs in ["1", "3"] {
        let out_dir = dir.path().join(format!("jobs{jobs}"));
        let out = tokprune(&[
            "batch",
            "--manifest",
            s(&manifest),
            "--jobs",
            jobs,
            "--out-dir",
            s(&out_dir),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let mut files: Vec<(String, Vec<u8>)> = ids
            .iter()
            .map(|id| {
                (
                    id.clone(),
                    fs::read(out_dir.join(format!("{id}.json"))).unwrap(),
                )
            })
            .collect();
        files.push((
            "summary".into(),
            fs::read(out_dir.join("summary.json")).unwrap(),
        ));
        runs.push(files);
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn batch_failures_are_recorded() {
    let dir = TempDir::new().unwrap();
    write_tokens(dir.path(), "good.tokm", &random_tokens(30, 6, 30));
    let manifest = write_manifest(
        dir.path(),
        &[("good", "good.tokm"), ("gone", "gone.tokm")],
        serde_json::json!({}),
    );
    let out = tokprune(&["batch", "--manifest", s(&manifest), "--avg-budget", "8"]);
    assert_eq!(code(&out), 1);
    let summary = read_json(&dir.path().join("reports").join("summary.json"));
    assert_eq!(summary["succeeded"], 1);
    assert_eq!(summary["failed"], 1);
    assert_eq!(summary["images"][1]["status"], "failed");
    assert!(dir.path().join("reports").join("good.json").exists());
}

#[test]
fn batch_rejects_bad_manifests() {
    let dir = TempDir::new().unwrap();
    let empty = write_manifest(dir.path(), &[], serde_json::json!({}));
    assert_eq!(
        code(&tokprune(&[
            "batch",
            "--manifest",
            s(&empty),
            "--avg-budget",
            "8"
        ])),
        1
    );

    let dup = write_manifest(
        dir.path(),
        &[("a", "a.tokm"), ("a", "b.tokm")],
        serde_json::json!({}),
    );
    assert_eq!(
        code(&tokprune(&[
            "batch",
            "--manifest",
            s(&dup),
            "--avg-budget",
            "8"
        ])),
        1
    );

    let missing = dir.path().join("absent.json");
    assert_eq!(
        code(&tokprune(&[
            "batch",
            "--manifest",
            s(&missing),
            "--avg-budget",
            "8"
        ])),
        2
    );
}

#[test]
fn oracle_summary_rates() {
    let dir = TempDir::new().unwrap();
    let input = write_tokens(dir.path(), "small.csv", &random_tokens(10, 4, 40));
    let out = tokprune(&[
        "oracle",
        "--input",
        s(&input),
        "--budget",
        "4",
        "--trials",
        "200",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    let win = r["summary"]["win_rate_vs_random"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&win));
    assert_eq!(r["trials"].as_array().unwrap().len(), 200);
    let first = &r["trials"][0];
    let j_opt = first["j_optimal"].as_f64().unwrap();
    for key in ["j_compress", "j_random", "j_ascend", "j_descend"] {
        assert!(first[key].as_f64().unwrap() <= j_opt + 1e-9, "{key}");
    }
}

#[test]
fn oracle_full_budget_is_all_ties() {
    let dir = TempDir::new().unwrap();
    let input = write_tokens(dir.path(), "tiny.tokm", &random_tokens(5, 3, 41));
    let out = tokprune(&[
        "oracle",
        "--input",
        s(&input),
        "--budget",
        "5",
        "--trials",
        "3",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary = &serde_json::from_slice::<Value>(&out.stdout).unwrap()["summary"];
    for base in ["random", "ascend", "descend"] {
        assert_eq!(summary[format!("win_rate_vs_{base}")], 0.0);
        assert_eq!(summary[format!("tie_rate_vs_{base}")], 1.0);
    }
}

#[test]
fn oracle_rejects_zero_trials_and_large_inputs() {
    let dir = TempDir::new().unwrap();
    let small = write_tokens(dir.path(), "small.tokm", &random_tokens(10, 4, 42));
    let out = tokprune(&[
        "oracle",
        "--input",
        s(&small),
        "--budget",
        "4",
        "--trials",
        "0",
    ]);
    assert_eq!(code(&out), 1);

    let big = write_tokens(dir.path(), "big.tokm", &random_tokens(20, 4, 43));
    let out = tokprune(&[
        "oracle",
        "--input",
        s(&big),
        "--budget",
        "10",
        "--trials",
        "5",
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).starts_with("error:"));
}

#[test]
fn log_levels_accepted() {
    let dir = TempDir::new().unwrap();
    let input = write_tokens(dir.path(), "a.tokm", &random_tokens(30, 6, 50));
    for level in ["quiet", "info", "debug"] {
        let out = Command::new(env!("CARGO_BIN_EXE_tokprune"))
            .args(["compress", "--input", s(&input), "--budget", "5"])
            .env("PRUNESID_LOG", level)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{level}");
        if level == "quiet" {
            assert!(out.stderr.is_empty());
        }
    }
}
