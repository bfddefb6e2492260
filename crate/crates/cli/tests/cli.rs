use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lsgc::io::load_dictionary;
use lsgc::lsgc::relation_sac;
use serde_json::Value;

fn lsgc_cmd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsgc"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn lsgc")
}

fn ok(args: &[&str]) -> Output {
    let out = lsgc_cmd(args);
    assert!(
        out.status.success(),
        "lsgc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code_of(args: &[&str]) -> i32 {
    lsgc_cmd(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|v| v.trim().parse().unwrap()).collect())
        .collect()
}

fn read_jsonl(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn means(records: &[Value]) -> Vec<&Value> {
    records.iter().filter(|r| r["kind"] == "mean").collect()
}

/// Spiral samples plus a dictionary learned on them.
fn spiral_fixture(dir: &Path, n: usize, k: usize) -> (PathBuf, PathBuf) {
    let data = dir.join(format!("spiral_{n}.csv"));
    let dict = dir.join(format!("dict_{n}_{k}.json"));
    let n = n.to_string();
    let k = k.to_string();
    ok(&[
        "gen-spiral",
        "--n-points",
        &n,
        "--seed",
        "3",
        "--out",
        s(&data),
    ]);
    ok(&[
        "learn-dict",
        "--data",
        s(&data),
        "--schema",
        "target-last",
        "--K",
        &k,
        "--seed",
        "1",
        "--out",
        s(&dict),
    ]);
    (data, dict)
}

/// Three separated uniform blobs in 4-D, away from the origin, with the label in the last column.
fn blobs_csv(path: &Path, per_class: usize) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let centers = [
        [5.0, 0.0, 0.0, 0.0],
        [0.0, 5.0, 0.0, 0.0],
        [0.0, 0.0, 5.0, 0.0],
    ];
    let mut text = String::new();
    for (label, c) in centers.iter().enumerate() {
        for _ in 0..per_class {
            let row: Vec<String> = c
                .iter()
                .map(|m| format!("{}", m + rng.random_range(-0.5..0.5)))
                .collect();
            text.push_str(&format!("{},{label}\n", row.join(",")));
        }
    }
    fs::write(path, text).unwrap();
}

#[test]
fn encode_one_step_equals_normalized_base_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (data, dict_path) = spiral_fixture(dir.path(), 200, 24);
    let base = dir.path().join("base.csv");
    let walk = dir.path().join("walk.csv");
    let common = [
        "encode",
        "--data",
        s(&data),
        "--schema",
        "target-last",
        "--dict",
        s(&dict_path),
        "--method",
        "sac",
        "--sigma",
        "0.8",
    ];
    ok(&[&common[..], &["--out", s(&base)]].concat());
    ok(&[&common[..], &["--lsgc-t", "1", "--out", s(&walk)]].concat());

    let dict = load_dictionary(&dict_path).unwrap();
    let degrees = relation_sac(&dict, 0.8).unwrap().degrees().to_vec();
    let base = read_rows(&base);
    let walk = read_rows(&walk);
    assert_eq!(base.len(), 200);
    assert_eq!(walk.len(), 200);
    for (l, got) in base.iter().zip(&walk) {
        let dx: f64 = l.iter().sum();
        for j in 0..l.len() {
            let want = if l[j] == 0.0 {
                0.0
            } else {
                l[j] / (dx * (degrees[j] + l[j])).sqrt()
            };
            assert!((got[j] - want).abs() < 1e-12, "{} vs {want}", got[j]);
        }
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = tempfile::tempdir().unwrap();
    let (data, dict) = spiral_fixture(dir.path(), 300, 32);
    let (data2, dict2) = spiral_fixture(a.path(), 300, 32);
    assert_eq!(fs::read(&data).unwrap(), fs::read(&data2).unwrap());
    assert_eq!(fs::read(&dict).unwrap(), fs::read(&dict2).unwrap());
    for method in ["sac", "llc", "sparse"] {
        let mut outs = Vec::new();
        for (i, jobs) in ["1", "1", "3"].iter().enumerate() {
            let out = dir.path().join(format!("{method}_{i}.csv"));
            ok(&[
                "--jobs",
                jobs,
                "encode",
                "--data",
                s(&data),
                "--schema",
                "target-last",
                "--dict",
                s(&dict),
                "--method",
                method,
                "--lsgc-t",
                "2",
                "--out",
                s(&out),
            ]);
            outs.push(fs::read(&out).unwrap());
        }
        assert_eq!(outs[0], outs[1], "{method}");
        assert_eq!(outs[0], outs[2], "{method}");
    }
}

fn coding_seconds(stderr: &[u8]) -> f64 {
    let text = String::from_utf8_lossy(stderr);
    let tail = text.rsplit(" samples in ").next().unwrap();
    tail.split_whitespace().next().unwrap().parse().unwrap()
}

#[test]
fn encode_time_scales_linearly() {
    use rand::{Rng, SeedableRng};
    let dir = tempfile::tempdir().unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let write = |path: &Path, rows: usize, rng: &mut rand_chacha::ChaCha8Rng| {
        let text: String = (0..rows)
            .map(|_| {
                let row: Vec<String> = (0..16)
                    .map(|_| format!("{}", rng.random_range(-1.0..1.0)))
                    .collect();
                row.join(",") + "\n"
            })
            .collect();
        fs::write(path, text).unwrap();
    };
    let small = dir.path().join("small.csv");
    let large = dir.path().join("large.csv");
    write(&small, 100, &mut rng);
    write(&large, 1000, &mut rng);
    let dict = dir.path().join("dict.json");
    ok(&[
        "learn-dict",
        "--data",
        s(&large),
        "--K",
        "256",
        "--seed",
        "0",
        "--out",
        s(&dict),
    ]);

    let time = |data: &Path| {
        let out = dir.path().join("codes.csv");
        (0..9)
            .map(|_| {
                let o = ok(&[
                    "--jobs",
                    "1",
                    "encode",
                    "--data",
                    s(data),
                    "--dict",
                    s(&dict),
                    "--method",
                    "llc",
                    "--knn",
                    "5",
                    "--lsgc-t",
                    "2",
                    "--out",
                    s(&out),
                ]);
                coding_seconds(&o.stderr)
            })
            .fold(f64::INFINITY, f64::min)
    };
    let ratio = time(&large) / time(&small);
    assert!(
        (6.0..=14.0).contains(&ratio),
        "1000/100 coding time ratio {ratio}"
    );
}

const REGRESS_TOML: &str = r#"
n_bases = 48
n_labeled = 100
seeds = [0]
folds = 3
variants = ["sac", "llc", "lsgc+sac", "lsgc+llc"]

[spiral]
n_points = 1200
turns = 3.0
inner_radius = 4.0
arm_gap = 1.0
noise = 0.1
seed = 0
target = { kind = "sine", cycles = 2.0 }

[grids]
sigma = [0.05, 0.2]
knn = [3, 10]
lambda = [0.1]
lsgc_sigma = [0.01]
lsgc_knn = [3]
lsgc_lambda = [0.2]
t = [2]
reg = [1e-4, 1e-2]
"#;

#[test]
fn regress_emits_four_rmse_means() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("regress.toml");
    fs::write(&cfg, REGRESS_TOML).unwrap();
    let out = dir.path().join("regress.jsonl");
    ok(&[
        "benchmark",
        "regress",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
    ]);
    let records = read_jsonl(&out);
    assert_eq!(records[0]["kind"], "config");
    let m = means(&records);
    assert_eq!(m.len(), 4);
    let mut names: Vec<&str> = m.iter().map(|r| r["method"].as_str().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["llc", "lsgc+llc", "lsgc+sac", "sac"]);
    for r in &m {
        let rmse = r["metrics"]["rmse"].as_f64().unwrap();
        assert!(rmse.is_finite() && rmse > 0.0);
        assert_eq!(r["run_id"], records[0]["run_id"]);
    }
}

#[test]
fn flags_override_config_and_both_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("regress.toml");
    fs::write(&cfg, REGRESS_TOML).unwrap();
    let out = dir.path().join("r.jsonl");
    ok(&[
        "benchmark",
        "regress",
        "--config",
        s(&cfg),
        "--K",
        "24",
        "--method",
        "sac",
        "--sigma",
        "0.1",
        "--out",
        s(&out),
    ]);
    let records = read_jsonl(&out);
    let header = &records[0]["config"];
    assert_eq!(header["file"]["n_bases"], 48);
    assert_eq!(header["flags"]["K"], 24);
    assert_eq!(header["effective"]["n_bases"], 24);
    assert_eq!(
        header["effective"]["grids"]["sigma"],
        serde_json::json!([0.1])
    );
    assert_eq!(means(&records).len(), 2);
}

#[test]
fn classify_single_count_single_seed_gives_one_record_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("blobs.csv");
    blobs_csv(&data, 40);
    let out = dir.path().join("c.jsonl");
    ok(&[
        "benchmark",
        "classify",
        "--data",
        s(&data),
        "--K",
        "16",
        "--n-labeled",
        "5",
        "--runs",
        "1",
        "--variants",
        "sac,lsgc+sac,llc,lsgc+llc",
        "--out",
        s(&out),
    ]);
    let records = read_jsonl(&out);
    let m = means(&records);
    assert_eq!(m.len(), 4);
    for method in ["sac", "lsgc+sac", "llc", "lsgc+llc"] {
        assert_eq!(m.iter().filter(|r| r["method"] == method).count(), 1);
        assert_eq!(
            records
                .iter()
                .filter(|r| r["kind"] == "run" && r["method"] == method)
                .count(),
            1
        );
    }
}

#[test]
fn cluster_on_blobs_reaches_high_nmi() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("blobs.csv");
    blobs_csv(&data, 60);
    let out = dir.path().join("k.jsonl");
    ok(&[
        "benchmark",
        "cluster",
        "--data",
        s(&data),
        "--K",
        "24",
        "--runs",
        "2",
        "--sigma",
        "0.5",
        "--lambda",
        "0.01",
        "--variants",
        "sac,lsgc+sac,llc,lsgc+llc,sparse,lsgc+sparse",
        "--out",
        s(&out),
    ]);
    let records = read_jsonl(&out);
    let m = means(&records);
    assert_eq!(m.len(), 6);
    for r in m {
        let nmi = r["metrics"]["nmi"].as_f64().unwrap();
        assert!(nmi >= 0.95, "{}: NMI {nmi}", r["method"]);
    }
}

#[test]
fn report_turns_records_into_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("regress.toml");
    fs::write(&cfg, REGRESS_TOML).unwrap();
    let res = dir.path().join("r.jsonl");
    let csv = dir.path().join("r.csv");
    ok(&[
        "benchmark",
        "regress",
        "--config",
        s(&cfg),
        "--method",
        "llc",
        "--out",
        s(&res),
    ]);
    ok(&["report", s(&res), "--out", s(&csv)]);
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], lsgc::protocol::REPORT_CSV_HEADER);
    assert_eq!(lines.len(), 3);
}

#[test]
fn verify_default_grid_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v.csv");
    assert_eq!(code_of(&["verify", "--out", s(&out)]), 0);
    assert_eq!(
        fs::read_to_string(&out).unwrap().lines().count(),
        1 + 4 * 25
    );
}

#[test]
fn verify_catches_corrupted_normalization() {
    let code = code_of(&[
        "verify",
        "--k-grid",
        "6,12",
        "--seeds",
        "3",
        "--inject-degree-offset",
        "1",
    ]);
    assert_eq!(code, 3);
}

#[test]
fn verify_row_count_follows_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v.csv");
    ok(&[
        "verify",
        "--k-grid",
        "6,12,24",
        "--seeds",
        "7",
        "--out",
        s(&out),
    ]);
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        lsgc::oracle::THEOREM_CSV_HEADER
    );
    assert_eq!(text.lines().count(), 1 + 3 * 7);
}

#[test]
fn exit_codes_separate_usage_data_and_verification() {
    let dir = tempfile::tempdir().unwrap();
    let (data, dict) = spiral_fixture(dir.path(), 100, 8);
    let out = dir.path().join("x.csv");
    let out = s(&out);
    assert_eq!(code_of(&["frobnicate"]), 1);
    assert_eq!(
        code_of(&[
            "encode",
            "--data",
            s(&data),
            "--dict",
            s(&dict),
            "--method",
            "pca",
            "--out",
            out
        ]),
        1
    );
    assert_eq!(
        code_of(&["gen-spiral", "--out", out]),
        1,
        "seed is mandatory"
    );
    assert_eq!(code_of(&["benchmark", "forecast"]), 1);
    let missing = dir.path().join("missing.csv");
    assert_eq!(
        code_of(&[
            "encode",
            "--data",
            s(&missing),
            "--dict",
            s(&dict),
            "--method",
            "sac",
            "--out",
            out
        ]),
        2
    );
    // features-only schema reads the target column as a third coordinate
    assert_eq!(
        code_of(&[
            "encode",
            "--data",
            s(&data),
            "--dict",
            s(&dict),
            "--method",
            "sac",
            "--out",
            out
        ]),
        2
    );
    assert_eq!(code_of(&["--help"]), 0);
}
