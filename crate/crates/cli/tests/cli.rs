use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tsforge::forecasters::{Estimator, EstimatorSpec};
use tsforge::transforms::TransformChain;
use tsforge::{EvalReport, Pipeline, TimeSeriesFrame};

fn air() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/AirPassengers.csv")
}

fn tsforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsforge"))
        .args(args)
        .env_remove("TSFORGE_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = tsforge(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn report(dir: &Path) -> EvalReport {
    EvalReport::from_json(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn read_rows(path: &Path) -> Vec<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn write_series(path: &Path, columns: &[Vec<f64>]) {
    let names: Vec<String> = (0..columns.len()).map(|j| format!("s{j}")).collect();
    let f = TimeSeriesFrame::new(columns.to_vec(), names).unwrap();
    tsforge::frame::write_csv(&f, fs::File::create(path).unwrap()).unwrap();
}

#[test]
fn fit_air_passengers_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("air");
    ok(&["fit", "--input", air().to_str().unwrap(), "--timestamp-col", "Month", "--out", out.to_str().unwrap()]);
    for f in ["model.json", "report.json", "report.csv", "progress.log"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let text = fs::read_to_string(out.join("report.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(json["schema"], 1);
    let r = report(&out);
    assert_eq!(r.pipelines.len(), 10);
    assert!(r.zero_model_smape.is_some());
    assert!(r.pipeline(&r.winner).is_some());
    assert!(!fs::read_to_string(out.join("progress.log")).unwrap().is_empty());
    // One header plus one row per pipeline.
    assert_eq!(fs::read_to_string(out.join("report.csv")).unwrap().lines().count(), 11);
}

#[test]
fn manual_lookback_skips_discovery() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    ok(&["fit", "--input", air().to_str().unwrap(), "--lookback", "12", "--out", out.to_str().unwrap()]);
    assert_eq!(report(&out).lookbacks, vec![12]);
}

#[test]
fn short_series_bypasses_allocation() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("short.csv");
    write_series(&input, &[(0..50).map(|t| 10.0 + t as f64).collect()]);
    let out = dir.path().join("o");
    ok(&[
        "fit", "--input", input.to_str().unwrap(), "--min-allocation", "100", "--lookback", "4", "--out",
        out.to_str().unwrap(),
    ]);
    let r = report(&out);
    assert!(r.bypassed);
    assert!(r.pipelines.iter().all(|p| p.finalist));
}

#[test]
fn predict_zero_model() {
    let dir = tempfile::tempdir().unwrap();
    let f = TimeSeriesFrame::from_series(vec![1.0, 4.0, 2.0, 7.0]).unwrap();
    let mut p = Pipeline::new("ZeroModel", TransformChain::default(), Estimator::new(EstimatorSpec::Zero, 3));
    p.fit(&f).unwrap();
    let model = dir.path().join("model.json");
    fs::write(&model, p.to_json().unwrap()).unwrap();
    let csv = dir.path().join("f.csv");
    ok(&["predict", "--model", model.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert_eq!(read_rows(&csv), vec![vec![7.0]; 3]);
}

#[test]
fn predict_multivariate_shape() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("mv.csv");
    let cols: Vec<Vec<f64>> = (0..3)
        .map(|j| (0..240).map(|t| 50.0 + j as f64 * 10.0 + (t as f64 * 0.5).sin() * (j + 1) as f64).collect())
        .collect();
    write_series(&input, &cols);
    let out = dir.path().join("o");
    ok(&["fit", "--input", input.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let csv = dir.path().join("f.csv");
    ok(&["predict", "--model", out.join("model.json").to_str().unwrap(), "--horizon", "12", "--out", csv.to_str().unwrap()]);
    let rows = read_rows(&csv);
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|r| r.len() == 3 && r.iter().all(|v| v.is_finite())));
}

#[test]
fn predict_rejects_corrupt_model() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    fs::write(&model, "{\"name\": 3").unwrap();
    let out = tsforge(&["predict", "--model", model.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn unreadable_input_fails() {
    let out = tsforge(&["fit", "--input", "/nonexistent/file.csv", "--out", "/tmp/never"]);
    assert!(!out.status.success());
}

#[test]
fn bench_empty_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = tsforge(&["bench", "--input", dir.path().to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn bench_ranks_three_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fs::create_dir(&data).unwrap();
    fs::copy(air(), data.join("AirPassengers.csv")).unwrap();
    write_series(&data.join("line.csv"), &[(0..300).map(|t| 5.0 + 0.2 * t as f64).collect()]);
    write_series(&data.join("wave.csv"), &[(0..300).map(|t| 3.0 + (t as f64 * 0.3).cos()).collect()]);
    let out = dir.path().join("o");
    ok(&["bench", "--input", data.to_str().unwrap(), "--lookback", "12", "--out", out.to_str().unwrap()]);
    let mut rows = csv::Reader::from_path(out.join("bench.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rows.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 30);
    for ds in ["AirPassengers", "line", "wave"] {
        assert_eq!(rows.iter().filter(|r| &r[0] == ds && &r[4] == "true").count(), 1, "{ds}");
    }
    let mut summary = csv::Reader::from_path(out.join("summary.csv")).unwrap();
    let summary: Vec<csv::StringRecord> = summary.records().map(Result::unwrap).collect();
    assert_eq!(summary.len(), 10);
    assert!(summary.iter().all(|r| &r[2] == "3"));
}

#[test]
fn synth_writes_corpus() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--out", dir.path().to_str().unwrap()]);
    let files = fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(files, 21);
    let rows = read_rows(&dir.path().join("constant.csv"));
    assert_eq!(rows.len(), 2000);
}

#[test]
fn reports_identical_across_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for jobs in ["1", "4"] {
        let out = dir.path().join(jobs);
        ok(&["--jobs", jobs, "fit", "--input", air().to_str().unwrap(), "--seed", "7", "--out", out.to_str().unwrap()]);
        reports.push(report(&out).without_timings());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn seed_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: Option<&str>| {
        let out = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_tsforge"));
        cmd.args(["fit", "--input", air().to_str().unwrap(), "--out", out.to_str().unwrap()]);
        match seed {
            Some(s) => cmd.env("TSFORGE_SEED", s),
            None => cmd.args(["--seed", "3"]).env_remove("TSFORGE_SEED"),
        };
        assert!(cmd.output().unwrap().status.success());
        report(&out).without_timings()
    };
    assert_eq!(run("env", Some("3")), run("flag", None));
}
