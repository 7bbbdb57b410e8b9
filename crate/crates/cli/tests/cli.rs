use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn inqmad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_inqmad")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = inqmad(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &[&str] = &[
    "--data", "synth", "--synth-n", "400", "--n-init", "64", "--dim", "40", "--epochs", "1", "--num-pairs", "200",
    "--seed", "5",
];

fn with<'a>(cmd: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![cmd];
    v.extend_from_slice(SMALL);
    v.extend_from_slice(extra);
    v
}

#[test]
fn fit_is_reproducible_from_the_echoed_config() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let printed = ok(&with("fit", &["--out", path(&a)]));
    assert!(printed.contains("tau="));
    let cfg = a.join("config.txt");
    ok(&["fit", "--config", path(&cfg), "--out", path(&b)]);
    assert_eq!(fs::read(a.join("detector.ckpt")).unwrap(), fs::read(b.join("detector.ckpt")).unwrap());
    assert!(fs::read_to_string(a.join("train_loss.csv")).unwrap().starts_with("epoch,loss\n0,"));
    assert!(a.join("transform.csv").exists());
}

#[test]
fn fit_rejects_short_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let out = inqmad(&["fit", "--data", "synth", "--synth-n", "10", "--n-init", "64", "--seed", "0", "--out", path(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_init"));
}

#[test]
fn randomized_commands_need_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = path(dir.path());
    for args in [
        vec!["fit", "--data", "synth", "--out", d],
        vec!["eval", "--data", "synth", "--out", d],
        vec!["synth", "--out", d],
        vec!["bench", "--out", d],
    ] {
        let out = inqmad(&args);
        assert!(!out.status.success(), "{args:?} ran without a seed");
        assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
    }
}

#[test]
fn eval_writes_scores_roc_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    ok(&with("eval", &["--out", path(dir.path())]));
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    let auc: f64 = summary
        .lines()
        .find_map(|l| l.strip_prefix("auc="))
        .expect("auc line")
        .parse()
        .unwrap();
    assert!((0.0..=1.0).contains(&auc));
    let scores = fs::read_to_string(dir.path().join("scores.csv")).unwrap();
    let mut lines = scores.lines();
    assert_eq!(lines.next(), Some("index,score,pred_label,true_label"));
    assert_eq!(lines.count(), 400 - 64);
    let roc = fs::read_to_string(dir.path().join("roc.csv")).unwrap();
    assert!(roc.starts_with("fpr,tpr\n"));
    assert!(roc.trim_end().ends_with("1.0000000000000000e0,1.0000000000000000e0"));
}

#[test]
fn ablations_change_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let noadp = dir.path().join("noadp");
    let d200 = dir.path().join("d200");
    ok(&with("eval", &["--ablation", "noadp", "--out", path(&noadp)]));
    ok(&with("eval", &["--ablation", "d200", "--out", path(&d200)]));
    assert!(fs::read_to_string(noadp.join("config.txt")).unwrap().contains("adaptive=false"));
    assert!(fs::read_to_string(d200.join("config.txt")).unwrap().contains("dim=200"));
    let bad = inqmad(&with("eval", &["--ablation", "d100", "--out", path(dir.path())]));
    assert!(!bad.status.success());
}

#[test]
fn csv_datasets_load_with_labels() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    let mut text = String::from("a,b,y\n");
    for i in 0..120 {
        let y = u8::from(i % 10 == 9);
        let off = if y == 1 { 3.0 } else { 0.0 };
        text.push_str(&format!("{},{},{y}\n", (i % 7) as f64 / 7.0 + off, (i % 5) as f64 / 5.0));
    }
    fs::write(&csv, text).unwrap();
    let out = dir.path().join("o");
    ok(&[
        "eval", "--data", path(&csv), "--label-column", "y", "--n-init", "40", "--dim", "30", "--sigma", "0.5",
        "--adaptive", "false", "--seed", "1", "--out", path(&out),
    ]);
    assert!(fs::read_to_string(out.join("summary.txt")).unwrap().contains("n_scored=80"));
}

#[test]
fn grid_resumes_from_completed_rows() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.txt");
    fs::write(&grid, "n_init=64\nlr_base=0.01\nsigma=0.1,0.2\nalpha=0.04\n").unwrap();
    let out = dir.path().join("g");
    ok(&with("grid", &["--grid", path(&grid), "--out", path(&out)]));
    let results = out.join("grid_results.csv");
    let full = fs::read_to_string(&results).unwrap();
    let lines: Vec<&str> = full.lines().collect();
    assert_eq!(lines[0], "n,lr_base,sigma,alpha,auc");
    assert_eq!(lines.len(), 3);

    // simulate an interruption after the first row
    fs::write(&results, format!("{}\n{}\n", lines[0], lines[1])).unwrap();
    ok(&with("grid", &["--grid", path(&grid), "--out", path(&out)]));
    assert_eq!(fs::read_to_string(&results).unwrap(), full);

    let best = fs::read_to_string(out.join("best_params.txt")).unwrap();
    assert!(best.contains("n_init=64") && best.contains("rows=2"));
}

#[test]
fn single_cell_grid_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.txt");
    fs::write(&grid, "n_init=64\nlr_base=0.001\n").unwrap();
    ok(&with("grid", &["--grid", path(&grid), "--out", path(dir.path())]));
    let rows = fs::read_to_string(dir.path().join("grid_results.csv")).unwrap();
    assert_eq!(rows.lines().count(), 2);
}

#[test]
fn synth_writes_the_stream() {
    let dir = tempfile::tempdir().unwrap();
    let printed = ok(&["synth", "--synth-n", "10000", "--synth-rate", "0.1", "--seed", "3", "--out", path(dir.path())]);
    assert!(printed.contains("anomalies=1000"));
    let csv = fs::read_to_string(dir.path().join("synth.csv")).unwrap();
    assert_eq!(csv.lines().count(), 10_001);
    assert!(csv.starts_with("x0,label\n"));
}

fn stats_on(table: &str) -> (tempfile::TempDir, Output) {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.csv");
    fs::write(&t, table).unwrap();
    let out = inqmad(&["stats", "--table", path(&t), "--out", path(dir.path())]);
    (dir, out)
}

#[test]
fn stats_strict_order_table() {
    let (dir, out) = stats_on("dataset,a,b,c\nd1,0.1,0.2,0.3\nd2,0.4,0.5,0.6\nd3,0.7,0.8,0.9\nd4,0.5,-,0.7\n");
    assert!(out.status.success());
    let summary = fs::read_to_string(dir.path().join("friedman.txt")).unwrap();
    assert!(summary.contains("q=6.0000000000000000e0"), "{summary}");
    assert!(summary.contains("rows_dropped=1"));

    let nem = fs::read_to_string(dir.path().join("nemenyi.csv")).unwrap();
    let m: Vec<Vec<f64>> = nem
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(1).map(|c| c.parse().unwrap()).collect())
        .collect();
    for i in 0..3 {
        assert_eq!(m[i][i], 1.0);
        for j in 0..3 {
            assert_eq!(m[i][j], m[j][i]);
        }
    }
    let sig = fs::read_to_string(dir.path().join("significance.csv")).unwrap();
    assert!(sig.starts_with("method,a,b,c\na,false,"));
}

#[test]
fn stats_identical_columns() {
    let (dir, out) = stats_on("dataset,a,b\nd1,0.5,0.5\nd2,0.9,0.9\n");
    assert!(out.status.success());
    assert!(fs::read_to_string(dir.path().join("friedman.txt")).unwrap().contains("q=0.0000000000000000e0"));
}

#[test]
fn stats_needs_two_complete_rows() {
    let (_dir, out) = stats_on("dataset,a,b\nd1,0.5,-\nd2,0.9,0.8\n");
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("complete rows"));
}

#[test]
fn bench_reports_latencies() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "bench", "--dims", "20,40", "--batch-len", "5", "--repetitions", "1", "--seed", "0", "--out", path(dir.path()),
    ]);
    let csv = fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("dim,median_ns,p90_ns,p99_ns,throughput\n20,"));

    let fitted = dir.path().join("fit");
    ok(&with("fit", &["--adaptive", "false", "--out", path(&fitted)]));
    let ckpt = fitted.join("detector.ckpt");
    let out = dir.path().join("b2");
    ok(&["bench", "--checkpoint", path(&ckpt), "--batch-len", "3", "--seed", "0", "--out", path(&out)]);
    assert!(fs::read_to_string(out.join("bench.csv")).unwrap().contains("\n40,"));
}
