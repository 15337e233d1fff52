use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use graphvrnn::detection::{detect_series_from, warm_state, DetectionReport, ThresholdCalibration};
use graphvrnn::experiment::encode_all;
use graphvrnn::experiment::io::{read_conditions, read_series};
use graphvrnn::experiment::Scaler;
use graphvrnn::model::{Model, ModelParams};
use graphvrnn::training::Checkpoint;

const BIN: &str = env!("CARGO_BIN_EXE_graphvrnn");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Generated 8×8 data over `days` and a small trained model.
struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    train_len: usize,
}

impl Fixture {
    fn new(days: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let days = days.to_string();
        ok(&["generate", "--days", &days, "--seed", "3", "--out", s(&root.join("gen"))]);
        let f = Fixture { _dir: dir, root, train_len: 0 };
        let train_len = graphvrnn::experiment::split_point(f.series_len(), 0.8);
        ok(&strs(&f.train_args(&f.root.join("train"), "2")));
        Fixture { train_len, ..f }
    }

    fn gen(&self, name: &str) -> PathBuf {
        self.root.join("gen").join(name)
    }

    fn ckpt(&self) -> PathBuf {
        self.root.join("train").join("model.ckpt")
    }

    fn series_len(&self) -> usize {
        fs::read_to_string(self.gen("conditions.csv")).unwrap().lines().count() - 1
    }

    fn train_args(&self, out: &Path, epochs: &str) -> Vec<String> {
        [
            "train",
            "--series",
            s(&self.gen("series.csv")),
            "--conditions",
            s(&self.gen("conditions.csv")),
            "--graph",
            s(&self.gen("graph.txt")),
            "--epochs",
            epochs,
            "--window",
            "24",
            "--hidden-dim",
            "16",
            "--latent-dim",
            "4",
            "--graph-features",
            "4",
            "--init-seed",
            "9",
            "--out",
            s(out),
        ]
        .iter()
        .map(|a| a.to_string())
        .collect()
    }
}

fn strs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

#[test]
fn generate_is_sized_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["generate", "--rows", "8", "--cols", "8", "--days", "40", "--seed", "7", "--out", s(&a)]);
    ok(&["generate", "--rows", "8", "--cols", "8", "--days", "40", "--seed", "7", "--out", s(&b)]);
    for name in ["series.csv", "conditions.csv", "externals.csv", "graph.txt"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let conditions = fs::read_to_string(a.join("conditions.csv")).unwrap();
    assert_eq!(conditions.lines().count(), 1 + 1920);
    let series = read_series(fs::File::open(a.join("series.csv")).unwrap(), 30).unwrap();
    assert_eq!((series.len(), series.nodes(), series.channels()), (1920, 64, 2));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["generate", "--rows", "1", "--cols", "1", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid"));
    assert_eq!(run(&["generate", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    let missing = run(&["plot", "--report", "/nonexistent/r.csv", "--series", "/nonexistent/s.csv", "--out", s(dir.path())]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn train_is_deterministic_and_reports_each_epoch() {
    let f = Fixture::new(6);
    let again = f.root.join("again");
    ok(&strs(&f.train_args(&again, "2")));
    for name in ["model.ckpt", "train_report.csv", "calibration_scores.csv"] {
        assert_eq!(fs::read(f.root.join("train").join(name)).unwrap(), fs::read(again.join(name)).unwrap(), "{name}");
    }
    let report = fs::read_to_string(again.join("train_report.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "epoch,train_elbo,val_elbo,seconds");
    assert_eq!(lines.len(), 1 + 2);
}

#[test]
fn zero_epochs_keep_the_initialization() {
    let f = Fixture::new(4);
    let out = f.root.join("zero");
    ok(&strs(&f.train_args(&out, "0")));
    let ckpt = Checkpoint::load(out.join("model.ckpt")).unwrap();
    assert_eq!(ckpt.params, ModelParams::init(&ckpt.config, 9).unwrap());
    assert_eq!(fs::read_to_string(out.join("train_report.csv")).unwrap().lines().count(), 1);
}

#[test]
fn inject_writes_one_label_and_rejects_empty_ranges() {
    let f = Fixture::new(4);
    let out = f.root.join("inj");
    let series_path = f.gen("series.csv");
    let series = s(&series_path);
    ok(&["inject", "--series", series, "--type", "gms", "--mu", "0.9", "--p", "3", "--q", "3", "--t0", "20", "--t1", "50", "--out", s(&out)]);
    let labels = fs::read_to_string(out.join("labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), 2);
    assert_eq!(labels.lines().nth(1).unwrap(), "GMS,0,3,3,3,20,50,0.9");
    let steps = fs::read_to_string(out.join("steps.csv")).unwrap();
    let marked: Vec<usize> = steps.lines().skip(1).filter(|l| l.ends_with(",1")).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(marked, (20..50).collect::<Vec<_>>());

    let empty = run(&["inject", "--series", series, "--type", "gms", "--p", "3", "--q", "3", "--t0", "20", "--t1", "20", "--out", s(&out)]);
    assert!(!empty.status.success());
    let partial = run(&["inject", "--series", series, "--type", "lms", "--p", "3", "--out", s(&out)]);
    assert_eq!(partial.status.code(), Some(2));
    let wrong = run(&["inject", "--series", series, "--type", "lac", "--mu", "1", "--out", s(&out)]);
    assert_eq!(wrong.status.code(), Some(2));
}

#[test]
fn scaled_injection_moves_only_labelled_cells() {
    let f = Fixture::new(4);
    let out = f.root.join("inj");
    let start = f.train_len.to_string();
    ok(&[
        "inject", "--series", s(&f.gen("series.csv")), "--type", "gac", "--start", &start,
        "--checkpoint", s(&f.ckpt()), "--conditions", s(&f.gen("conditions.csv")), "--seed", "4", "--out", s(&out),
    ]);
    let clean = read_series(fs::File::open(f.gen("series.csv")).unwrap(), 30).unwrap();
    let dirty = read_series(fs::File::open(out.join("series.csv")).unwrap(), 30).unwrap();
    let labels = graphvrnn::experiment::io::read_labels(fs::File::open(out.join("labels.csv")).unwrap()).unwrap();
    let l = &labels[0];
    assert!(l.t0 >= f.train_len);
    let mut changed = 0;
    for t in 0..clean.len() {
        for c in 0..2 {
            for n in 0..64 {
                if clean.get(t, c, n) != dirty.get(t, c, n) {
                    changed += 1;
                    assert!((l.t0..l.t1).contains(&t) && c == l.channel && l.contains_node(n, 8));
                }
            }
        }
    }
    assert!(changed > 0);
}

#[test]
fn detect_matches_library_and_plots() {
    let f = Fixture::new(6);
    let out = f.root.join("det");
    let start = f.train_len.to_string();
    ok(&[
        "detect", "--checkpoint", s(&f.ckpt()), "--series", s(&f.gen("series.csv")), "--conditions",
        s(&f.gen("conditions.csv")), "--start", &start, "--nodes", "1,2,3", "--threshold", "1e300", "--seed", "5",
        "--out", s(&out),
    ]);
    let report = DetectionReport::read_csv(fs::File::open(out.join("report.csv")).map(std::io::BufReader::new).unwrap()).unwrap();
    assert_eq!(report.flag_count(), report.len());

    // library composition with the same inputs
    let ckpt = Checkpoint::load(f.ckpt()).unwrap();
    let scaler = Scaler::new(ckpt.extras["scaler.min"].data().to_vec(), ckpt.extras["scaler.max"].data().to_vec()).unwrap();
    let model = Model::new(ckpt.config, ckpt.graph, ckpt.params).unwrap();
    let series = scaler.apply(&read_series(fs::File::open(f.gen("series.csv")).unwrap(), 30).unwrap()).unwrap();
    let externals = encode_all(&read_conditions(fs::File::open(f.gen("conditions.csv")).unwrap()).unwrap()).unwrap();
    let warm = warm_state(&model, &series.slice(0..f.train_len).unwrap(), &externals[..f.train_len]).unwrap();
    let cal = ThresholdCalibration::new(1e300, 0.01, 0.95).unwrap();
    let lib = detect_series_from(&model, &warm, &series.slice(f.train_len..series.len()).unwrap(), &externals[f.train_len..], &cal, 16, 5).unwrap();
    assert_eq!(report.scores, lib.scores);

    let svg = fs::read_to_string(out.join("plot.svg")).unwrap();
    assert!(svg.starts_with("<svg xmlns=\"http://www.w3.org/2000/svg\"") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<polyline").count(), 3);
    assert_eq!(svg.matches("class=\"flag\"").count(), 3 * report.flag_count());
    let plot_rows = fs::read_to_string(out.join("plot.csv")).unwrap().lines().count();
    assert_eq!(plot_rows, 1 + 3 * report.len());

    // extreme threshold the other way: nothing flagged, no markers
    let quiet = f.root.join("quiet");
    ok(&[
        "detect", "--checkpoint", s(&f.ckpt()), "--series", s(&f.gen("series.csv")), "--conditions",
        s(&f.gen("conditions.csv")), "--start", &start, "--threshold=-1e300", "--out", s(&quiet),
    ]);
    let quiet_report = fs::read_to_string(quiet.join("report.csv")).unwrap();
    assert!(quiet_report.lines().skip(1).all(|l| l.split(',').nth(2) == Some("0")));
    let svg = fs::read_to_string(quiet.join("plot.svg")).unwrap();
    assert_eq!(svg.matches("class=\"flag\"").count(), 0);
    assert!(svg.matches("<polyline").count() >= 1);

    // standalone plot of the same report
    let replot = f.root.join("replot");
    ok(&["plot", "--report", s(&out.join("report.csv")), "--series", s(&f.gen("series.csv")), "--start", &start, "--nodes", "1,2,3", "--out", s(&replot)]);
    assert_eq!(fs::read(replot.join("plot.svg")).unwrap(), fs::read(out.join("plot.svg")).unwrap());
}

fn parse_metrics(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path).unwrap().lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn evaluate_aggregates_trials() {
    let f = Fixture::new(8);
    let start = f.train_len.to_string();
    let eval = |out: &Path, trials: &str| {
        ok(&[
            "evaluate", "--checkpoint", s(&f.ckpt()), "--series", s(&f.gen("series.csv")), "--conditions",
            s(&f.gen("conditions.csv")), "--start", &start, "--types", "lms,lac", "--trials", trials, "--samples", "4",
            "--out", s(out),
        ]);
    };
    let (a, b) = (f.root.join("e1"), f.root.join("e2"));
    eval(&a, "1");
    eval(&b, "1");
    assert_eq!(fs::read(a.join("metrics.csv")).unwrap(), fs::read(b.join("metrics.csv")).unwrap());

    let c = f.root.join("e3");
    eval(&c, "3");
    let metrics = parse_metrics(&c.join("metrics.csv"));
    assert_eq!(metrics[0], ["type", "trials", "mean_ap", "sd_ap", "mean_auc", "sd_auc"]);
    let trials = parse_metrics(&c.join("trials.csv"));
    let ap_col = trials[0].iter().position(|h| h == "ap").unwrap();
    for row in &metrics[1..] {
        let aps: Vec<f64> = trials[1..].iter().filter(|t| t[0] == row[0]).map(|t| t[ap_col].parse().unwrap()).collect();
        assert_eq!(aps.len(), 3);
        let mean = aps.iter().sum::<f64>() / 3.0;
        assert!((mean - row[2].parse::<f64>().unwrap()).abs() < 1e-12);
    }
}

#[test]
fn manifest_replays_bitwise() {
    let f = Fixture::new(4);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(f.root.join("train").join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["config"]["train"]["epochs"], 2);
    let argv: Vec<String> = manifest["argv"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    fs::remove_dir_all(f.root.join("train")).unwrap();
    ok(&strs(&argv));
    let replayed: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(f.root.join("train").join("manifest.json")).unwrap()).unwrap();
    assert_eq!(replayed["outputs"], manifest["outputs"]);
    assert_eq!(replayed["inputs"], manifest["inputs"]);
}
