use std::path::Path;
use std::process::{Command, Output};

use qdbc::data::{read_report, Report, ReportFormat};

fn qdbc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qdbc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn report(out: &Output) -> Report {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    read_report(&out.stdout, ReportFormat::Csv).unwrap()
}

fn bundled_csv(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("iris.csv");
    std::fs::write(&p, qdbc::data::BUNDLED_IRIS).unwrap();
    p
}

#[test]
fn tables_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = bundled_csv(dir.path());
    let out = qdbc(&["tables", "--data", data.to_str().unwrap(), "--preprocess", "minmax"]);
    let r = report(&out);
    let success = r.table("success").unwrap();
    assert_eq!(success.columns, vec!["success_probability"]);
    for (class, want) in [("A", 0.68), ("B", 0.41), ("C", 0.55)] {
        let v = success.cell(class, "success_probability").unwrap();
        assert!((v - want).abs() < 0.03, "{class}: {v}");
    }
    let cond = r.table("conditional").unwrap();
    for (label, row) in &cond.rows {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-5, "{label}");
    }
    assert_eq!(r.metadata["preprocess"], "minmax");
}

#[test]
fn walk_curve_file() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("curve.csv");
    let out = qdbc(&[
        "walk",
        "--scenario",
        "clustered",
        "--steps",
        "1000",
        "--start",
        "mid-A",
        "--engine",
        "marginal",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert!(text.contains("step,p_A,p_B,p_C\n"));
    let r = read_report(text.as_bytes(), ReportFormat::Csv).unwrap();
    let curve = r.table("curve").unwrap();
    assert_eq!(curve.rows.len(), 1000);
    let early = curve.cell("1", "p_A").unwrap();
    let last = curve.cell("1000", "p_A").unwrap();
    assert!(early > last);
}

#[test]
fn prep_check_summary_and_failure_code() {
    let ok = qdbc(&["prep-check", "--features", "4", "--trials", "1000"]);
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stderr).contains("max residual < 1e-10"));
    let template = qdbc(&["prep-check", "--features", "4", "--trials", "20", "--template"]);
    assert_eq!(template.status.code(), Some(4));
}

#[test]
fn recycle_default_pair() {
    let r = report(&qdbc(&["recycle"]));
    let t = r.table("recycling").unwrap();
    assert_eq!(r.metadata["classes"], "A,B");
    for class in ["A", "B"] {
        assert!(t.cell(class, "two_step").unwrap() >= t.cell(class, "one_step").unwrap());
    }
    let all = report(&qdbc(&["recycle", "--all-pairs"]));
    assert_eq!(all.tables.len(), 3);
}

#[test]
fn classify_prints_transcript() {
    let r = report(&qdbc(&["classify", "--vector", "5.1,3.5,1.4,0.2", "--seed", "11"]));
    assert!(r.metadata.contains_key("label"));
    assert!(!r.table("transcript").unwrap().rows.is_empty());
    let r = report(&qdbc(&[
        "classify", "--vector", "6.5,3.0,5.5,1.8", "--method", "recycle", "--max-steps", "5",
    ]));
    assert_eq!(r.metadata["method"], "recycle");
}

#[test]
fn identical_runs_are_byte_identical() {
    for args in [
        vec!["classify", "--vector", "5.9,3.0,4.2,1.5", "--seed", "42"],
        vec!["walk", "--steps", "50", "--scenario", "interleaved"],
        vec!["tables", "--format", "text"],
    ] {
        let a = qdbc(&args);
        let b = qdbc(&args);
        assert!(a.status.success());
        assert_eq!(a.stdout, b.stdout);
    }
}

#[test]
fn config_file_merges_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 5\nsteps = 7\nscenario = \"interleaved\"\n").unwrap();
    let r = report(&qdbc(&["walk", "--config", cfg.to_str().unwrap(), "--seed", "9"]));
    assert_eq!(r.metadata["seed"], "9");
    assert_eq!(r.metadata["steps"], "7");
    assert_eq!(r.metadata["scenario"], "interleaved");
    assert_eq!(r.table("curve").unwrap().rows.len(), 7);
    std::fs::write(&cfg, "colour = \"red\"\n").unwrap();
    assert_eq!(qdbc(&["tables", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn class_order_override() {
    let r = report(&qdbc(&[
        "tables",
        "--class-order",
        "Iris-virginica,Iris-versicolor,Iris-setosa",
    ]));
    let v = r.table("success").unwrap().cell("A", "success_probability").unwrap();
    assert!((v - 0.55).abs() < 0.03);
}

#[test]
fn exit_codes() {
    assert_eq!(qdbc(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(qdbc(&["tables", "--format", "json"]).status.code(), Some(2));
    assert_eq!(qdbc(&["walk", "--scenario", "spiral"]).status.code(), Some(2));
    assert_eq!(qdbc(&["tables", "--data", "/definitely/missing.csv"]).status.code(), Some(3));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "5.1,3.5,1.4,0.2,a\n5.1,3.5,1.4\n").unwrap();
    let out = qdbc(&["tables", "--data", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}
