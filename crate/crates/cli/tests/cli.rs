use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_anonrec"));
    c.env_remove("ANONREC_SEED");
    c
}

/// Fresh scratch directory holding a small tab-separated rating file.
fn workspace(name: &str) -> (PathBuf, PathBuf) {
    let dir = std::env::temp_dir().join(format!("anonrec-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    let mut text = String::new();
    let mut state: u64 = 12345;
    for user in 1..=60u64 {
        for item in 1..=25u64 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let draw = (state >> 33) % 100;
            if draw < 45 || item == user % 25 + 1 {
                let rating = 1 + (user * 7 + item * 3 + draw) % 5;
                text.push_str(&format!("{user}\t{item}\t{rating}\t0\n"));
            }
        }
    }
    let data = dir.join("u.data");
    fs::write(&data, text).unwrap();
    (dir, data)
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("run anonrec");
    assert!(
        out.status.success(),
        "anonrec failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn eval_case1_is_byte_identical_across_runs() {
    let (dir, data) = workspace("case1");
    let csvs: Vec<Vec<u8>> = ["a.csv", "b.csv"]
        .iter()
        .map(|name| {
            let out = dir.join(name);
            run(bin().args([
                "eval-case1", "--input", arg(&data), "--k-min", "2", "--k-max", "4", "--trials", "2",
                "--seed", "11", "--out-csv", arg(&out),
            ]));
            fs::read(out).unwrap()
        })
        .collect();
    assert_eq!(csvs[0], csvs[1]);
    let text = String::from_utf8(csvs[0].clone()).unwrap();
    assert!(text.starts_with("model,k,n,rmse,rmse_sd,fallback_rate\n"));
    assert!(!text.contains('\r'));
    assert_eq!(text.lines().count(), 1 + 2 + 3 * 2);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("a.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "eval-case1");
    assert_eq!(manifest["seeds"]["master"], 11);
    assert_eq!(manifest["dataset"]["checksum"].as_str().unwrap().len(), 16);
    assert!(manifest["timestamps"]["finished_unix"].as_u64().unwrap() > 0);
}

#[test]
fn eval_case2_writes_every_cell() {
    let (dir, data) = workspace("case2");
    let out = dir.join("c2.csv");
    run(bin().args([
        "eval-case2", "--input", arg(&data), "--k-list", "2,3", "--n-min", "1", "--n-max", "3",
        "--draws", "2", "--out-csv", arg(&out),
    ]));
    let text = fs::read_to_string(out).unwrap();
    // Case2/UR, two Case2A/UR curves and BASELINE, three N each.
    assert_eq!(text.lines().count(), 1 + 4 * 3);
    assert!(text.contains("Case2A/UR,3,2,"));
}

#[test]
fn zero_k_is_rejected() {
    let (dir, data) = workspace("k0");
    let out = bin()
        .args(["anonymize", "--input", arg(&data), "--k", "0", "--output", arg(&dir.join("x"))])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("k=0"));
    assert!(!dir.join("x").exists());
}

#[test]
fn unknown_flags_are_rejected() {
    let (_, data) = workspace("flags");
    let out = bin()
        .args(["anonymize", "--input", arg(&data), "--k", "2", "--output", "x", "--shuffle"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn anonymize_then_audit() {
    let (dir, data) = workspace("audit");
    let table = dir.join("anon.txt");
    run(bin().args([
        "anonymize", "--input", arg(&data), "--k", "4", "--seed", "5", "--emit-sigma", "--output",
        arg(&table),
    ]));
    let audit = stdout(&run(bin().args(["audit", "--anon", arg(&table), "--revealed", "1,2"])));
    let first = audit.lines().next().unwrap();
    let k: usize = first.strip_prefix("satisfied_k=").unwrap().parse().unwrap();
    assert!(k >= 4);
    let residual_line = audit.lines().find(|l| l.starts_with("residual_min=")).unwrap();
    let residual: usize = residual_line["residual_min=".len()..].parse().unwrap();
    assert!(residual >= k - 2);
}

#[test]
fn seed_env_matches_flag() {
    let (dir, data) = workspace("env");
    let a = dir.join("a.txt");
    let b = dir.join("b.txt");
    run(bin().args(["anonymize", "--input", arg(&data), "--k", "3", "--seed", "9", "--output", arg(&a)]));
    run(bin()
        .env("ANONREC_SEED", "9")
        .args(["anonymize", "--input", arg(&data), "--k", "3", "--output", arg(&b)]));
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn predict_prints_value_and_fallback() {
    let (dir, data) = workspace("predict");
    let out = stdout(&run(bin().args([
        "predict", "--model", "Case1/REG", "--input", arg(&data), "--user", "3", "--item", "7",
    ])));
    let line = out.trim();
    let (value, fallback) = line.split_once(' ').unwrap();
    let v: f64 = value.strip_prefix("prediction=").unwrap().parse().unwrap();
    assert!((1.0..=5.0).contains(&v));
    assert!(fallback.starts_with("fallback="));

    let table = dir.join("anon.txt");
    run(bin().args(["anonymize", "--input", arg(&data), "--k", "3", "--emit-sigma", "--output", arg(&table)]));
    let ai = stdout(&run(bin().args([
        "predict", "--model", "Case1A/AI", "--anon", arg(&table), "--user", "3", "--item", "7",
    ])));
    assert!(ai.starts_with("prediction="));
    let ur = stdout(&run(bin().args([
        "predict", "--model", "Case2A/UR", "--anon", arg(&table), "--ratings", "1=4,2=2", "--item", "7",
    ])));
    assert!(ur.starts_with("prediction="));
}

#[test]
fn similarity_file_is_written() {
    let (dir, data) = workspace("sim");
    let out = dir.join("sims.txt");
    run(bin().args(["similarity", "--input", arg(&data), "--output", arg(&out)]));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("anonrec-sim-v1 25 raw\n"));
    assert!(text.trim_end().lines().last().unwrap().starts_with("checksum:"));
}

#[test]
fn analyze_writes_tables() {
    let (dir, data) = workspace("analyze");
    let out_dir = dir.join("analysis");
    run(bin().args(["analyze", "--input", arg(&data), "--k-list", "2,5", "--bins", "10", "--out-dir", arg(&out_dir)]));
    let e_avg = fs::read_to_string(out_dir.join("e_avg.csv")).unwrap();
    assert_eq!(e_avg.lines().count(), 3);
    let hist = fs::read_to_string(out_dir.join("histograms.csv")).unwrap();
    assert_eq!(hist.lines().count(), 1 + 3 * 10);
    assert!(out_dir.join("e_var.csv").exists());
    assert!(out_dir.join("analysis.manifest.json").exists());
}
