use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn hpc(args: &[&str]) -> Output {
    hpc_env(args, &[])
}

fn hpc_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hpc"));
    cmd.args(args).env_remove("HPC_SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// File contents under `dir`, manifest excluded.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                if rel != "manifest.json" && rel != "checkpoint.bin" {
                    out.insert(rel, std::fs::read(&path).unwrap());
                }
            }
        }
    }
    out
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

/// K = 2, V = 10, D = 20 toy corpus.
fn toy(tmp: &TempDir) -> std::path::PathBuf {
    let cfg = tmp.path().join("toy.toml");
    std::fs::write(&cfg, "[simulate]\nlevels = [2]\nlength_rate = 60.0\nmean_length = 60.0\n").unwrap();
    let sim = tmp.path().join("toy");
    ok(&hpc(&[
        "--seed", "11", "--config", p(&cfg), "simulate", "--out", p(&sim), "--docs", "20", "--words", "10",
        "--held-out", "8",
    ]));
    sim
}

#[test]
fn simulate_is_byte_identical_across_runs_and_widths() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&hpc(&["--seed", "5", "--parallelism", "1", "simulate", "--out", p(&a), "--docs", "50", "--words", "30"]));
    ok(&hpc(&["--seed", "5", "--parallelism", "3", "simulate", "--out", p(&b), "--docs", "50", "--words", "30"]));
    assert_eq!(snapshot(&a), snapshot(&b));
    assert!(a.join("manifest.json").exists());
}

#[test]
fn seed_flag_overrides_environment() {
    let tmp = TempDir::new().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    ok(&hpc_env(&["simulate", "--out", p(&a), "--docs", "10", "--words", "8"], &[("HPC_SEED", "9")]));
    ok(&hpc_env(&["--seed", "9", "simulate", "--out", p(&b), "--docs", "10", "--words", "8"], &[("HPC_SEED", "1")]));
    ok(&hpc_env(&["--seed", "1", "simulate", "--out", p(&c), "--docs", "10", "--words", "8"], &[("HPC_SEED", "9")]));
    assert_eq!(snapshot(&a), snapshot(&b));
    assert_ne!(snapshot(&a), snapshot(&c));
}

#[test]
fn zero_documents_give_header_only_files() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("d0");
    ok(&hpc(&["simulate", "--out", p(&out), "--docs", "0", "--words", "5"]));
    assert_eq!(std::fs::read_to_string(out.join("counts.csv")).unwrap(), "doc_id,word_id,count\n");
    assert_eq!(std::fs::read_to_string(out.join("labels.csv")).unwrap(), "doc_id,topic_id\n");
}

#[test]
fn cyclic_tree_exits_with_format_error() {
    let tmp = TempDir::new().unwrap();
    let tree = tmp.path().join("t.csv");
    std::fs::write(&tree, "child_id,parent_id,name\n0,,root\n1,2,a\n2,1,b\n").unwrap();
    let out = hpc(&["simulate", "--tree", p(&tree), "--out", p(&tmp.path().join("x"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cycle"));
}

#[test]
fn burn_in_not_below_iterations_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let sim = toy(&tmp);
    let out = hpc(&["fit", "--corpus", p(&sim), "--out", p(&tmp.path().join("e")), "--iterations", "5", "--burn-in", "5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn toy_fit_then_every_downstream_command() {
    let tmp = TempDir::new().unwrap();
    let sim = toy(&tmp);
    let est = tmp.path().join("est");
    let start = std::time::Instant::now();
    ok(&hpc(&["--seed", "2", "fit", "--corpus", p(&sim), "--out", p(&est), "--iterations", "50", "--burn-in", "10"]));
    assert!(start.elapsed().as_secs_f64() < 10.0);
    let diag = csv_rows(&est.join("diagnostics.csv"));
    assert_eq!(diag.len(), 150);

    // identical estimates at another width
    let wide = tmp.path().join("wide");
    ok(&hpc(&[
        "--seed", "2", "--parallelism", "3", "fit", "--corpus", p(&sim), "--out", p(&wide), "--iterations", "50",
        "--burn-in", "10",
    ]));
    assert_eq!(snapshot(&est), snapshot(&wide));

    let sum = tmp.path().join("sum");
    ok(&hpc(&["summarize", "--estimates", p(&est), "--out", p(&sum), "--n", "5"]));
    let top = csv_rows(&sum.join("top_words.csv"));
    assert_eq!(top.len(), 2 * 5);
    let div = csv_rows(&sum.join("diversity.csv"));
    assert_eq!(div.len(), 4, "n = 5 and 10 fit in V = 10, for both summary types");
    assert_eq!(csv_rows(&sum.join("stability.csv")).len(), 10);

    // w = 0: FREX order is the frequency order
    let s0 = tmp.path().join("s0");
    ok(&hpc(&["summarize", "--estimates", p(&est), "--out", p(&s0), "--n", "10", "--w", "0"]));
    for row in csv_rows(&s0.join("top_words.csv")) {
        assert_eq!(row[2], row[3]);
    }

    // classify without thresholds, with truth
    let cls = tmp.path().join("cls");
    let held = sim.join("held_out");
    ok(&hpc(&[
        "classify", "--estimates", p(&est), "--corpus", p(&held), "--out", p(&cls), "--truth",
        p(&held.join("labels.csv")),
    ]));
    let metrics: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(cls.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics.as_object().unwrap().len(), 4);
    let manifest = std::fs::read_to_string(cls.join("manifest.json")).unwrap();
    assert!(manifest.contains("0.5 used for every topic"));
    assert_eq!(csv_rows(&cls.join("predictions.csv")).len(), 8 * 2);

    let cal = tmp.path().join("cal");
    ok(&hpc(&["calibrate", "--estimates", p(&est), "--corpus", p(&held), "--out", p(&cal)]));
    assert_eq!(csv_rows(&cal.join("thresholds.csv")).len(), 2);
    let cls2 = tmp.path().join("cls2");
    ok(&hpc(&[
        "classify", "--estimates", p(&est), "--corpus", p(&held), "--out", p(&cls2), "--thresholds",
        p(&cal.join("thresholds.csv")),
    ]));
    assert!(!cls2.join("metrics.json").exists());

    // empty corpus with the fitted vocabulary
    let empty = tmp.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    std::fs::copy(est.join("vocab.csv"), empty.join("vocab.csv")).unwrap();
    std::fs::write(empty.join("counts.csv"), "doc_id,word_id,count\n").unwrap();
    let ce = tmp.path().join("ce");
    ok(&hpc(&["classify", "--estimates", p(&est), "--corpus", p(&empty), "--out", p(&ce)]));
    assert_eq!(std::fs::read_to_string(ce.join("predictions.csv")).unwrap(), "doc_id,topic_id,probability,label\n");

    // external table with uniform priors
    let ext = tmp.path().join("ext.csv");
    let mut text = String::from("topic_id,word_id,probability\n");
    for k in 1..=3 {
        let weights: Vec<f64> = (0..10).map(|f| if (f + k) % 3 == 0 { 4.0 } else { 1.0 }).collect();
        let total: f64 = weights.iter().sum();
        for (f, w) in weights.iter().enumerate() {
            text.push_str(&format!("{k},{f},{}\n", w / total));
        }
    }
    std::fs::write(&ext, text).unwrap();
    let dv = tmp.path().join("dv");
    ok(&hpc(&["diversity", "--estimates", p(&est), "--out", p(&dv), "--external", p(&ext)]));
    let kinds: Vec<String> = csv_rows(&dv.join("diversity.csv")).into_iter().map(|r| r[1].clone()).collect();
    assert!(kinds.contains(&"external_frex".to_string()));
}

#[test]
fn resumed_fit_reproduces_estimates() {
    let tmp = TempDir::new().unwrap();
    let sim = toy(&tmp);
    let est = tmp.path().join("est");
    let args = ["--seed", "4", "fit", "--corpus", p(&sim), "--out", p(&est), "--iterations", "30", "--burn-in", "5"];
    let mut with_cp = args.to_vec();
    with_cp.extend(["--checkpoint-every", "12"]);
    ok(&hpc(&with_cp));
    let first = snapshot(&est);
    assert!(est.join("checkpoint.bin").exists());
    let mut resume = args.to_vec();
    resume.push("--resume");
    ok(&hpc(&resume));
    assert_eq!(snapshot(&est), first);
    assert!(std::fs::read_to_string(est.join("manifest.json")).unwrap().contains("resumed from scan 24"));

    let mut other = resume.clone();
    other[1] = "5";
    assert_eq!(hpc(&other).status.code(), Some(2));
}

#[test]
fn check_grad_passes_is_reproducible_and_catches_corruption() {
    let a = hpc(&["--seed", "3", "check-grad"]);
    ok(&a);
    let b = hpc(&["--seed", "3", "check-grad"]);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(String::from_utf8_lossy(&a.stdout).lines().count(), 10);
    let bad = hpc(&["check-grad", "--corrupt"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL rate_gradient"));
}

#[test]
fn malformed_inputs_exit_three() {
    let tmp = TempDir::new().unwrap();
    let sim = toy(&tmp);
    std::fs::write(sim.join("counts.csv"), "doc_id,word_id,count\n0,99,1\n").unwrap();
    let out = hpc(&["fit", "--corpus", p(&sim), "--out", p(&tmp.path().join("e")), "--iterations", "5", "--burn-in", "1"]);
    assert_eq!(out.status.code(), Some(3));
    let out = hpc(&["--config", p(&tmp.path().join("missing.toml")), "check-grad"]);
    assert_eq!(out.status.code(), Some(2));
}
