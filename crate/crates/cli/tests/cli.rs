use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use consensus_cli::format::{sidecar_path, Manifest, MaskFile};
use consensus_core::fixtures::f1;
use consensus_core::{BinaryMask, Grid, Neighborhood, RaterStack};
use serde_json::Value;
use tempfile::TempDir;

fn consensus(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_consensus")).args(args).output().unwrap()
}

fn ok_json(args: &[&str]) -> Value {
    let out = consensus(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn f1_manifest(dir: &TempDir) -> PathBuf {
    Manifest::write_stack(dir.path(), "f1", &f1()).unwrap()
}

fn ones(path: &Path) -> Vec<usize> {
    fs::read(path).unwrap().iter().enumerate().filter(|(_, &b)| b == 1).map(|(i, _)| i).collect()
}

#[test]
fn fuse_reproduces_f1_golden_values() {
    let dir = tempfile::tempdir().unwrap();
    let m = f1_manifest(&dir);
    let out = dir.path().join("mv.u8");
    let r = ok_json(&["fuse", s(&m), "--method", "mv", "--out", s(&out)]);
    assert_eq!(ones(&out), vec![3, 4]);
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["command"], "fuse");

    let out = dir.path().join("j.u8");
    let r = ok_json(&["fuse", s(&m), "--method", "macchiato-j", "--out", s(&out)]);
    assert_eq!(ones(&out), vec![2, 3, 4, 5]);
    assert!((r["global"]["lmsd"].as_f64().unwrap() - 0.0625).abs() < 1e-12);

    let out = dir.path().join("d.u8");
    let r = ok_json(&["fuse", s(&m), "--method", "macchiato-d", "--out", s(&out)]);
    assert!((r["global"]["lmsd"].as_f64().unwrap() - 1.0 / 49.0).abs() < 1e-12);

    let out = dir.path().join("ma.f64");
    let r = ok_json(&["fuse", s(&m), "--method", "ma", "--out", s(&out)]);
    assert_eq!(r["global"]["kind"], "soft");
    assert!((r["global"]["size"].as_f64().unwrap() - 3.0).abs() < 1e-12);
    let header: Value = serde_json::from_slice(&fs::read(sidecar_path(&out)).unwrap()).unwrap();
    assert_eq!(header["dtype"], "f64");
    assert_eq!(header["dims"], serde_json::json!([8]));
}

#[test]
fn fuse_writes_the_report_file_when_asked() {
    let dir = tempfile::tempdir().unwrap();
    let m = f1_manifest(&dir);
    let report = dir.path().join("r.json");
    let out = consensus(&[
        "fuse", s(&m), "--method", "mml-staple", "--prior", "power:3:1",
        "--out", s(&dir.path().join("u.f64")), "--report", s(&report),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let r: Value = serde_json::from_slice(&fs::read(report).unwrap()).unwrap();
    assert_eq!(r["config"]["prior"]["mode"], "power");
    assert!(r["global"]["prior_w"].as_f64().unwrap() > 0.0);
    assert!(r["global"]["em"]["iterations"].as_u64().unwrap() >= 1);
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let m = f1_manifest(&dir);
    let out = dir.path().join("x.u8");
    for args in [
        vec!["fuse", s(&m), "--method", "ma", "--heuristic", "crown", "--out", s(&out)],
        vec!["fuse", s(&m), "--method", "mv", "--prior", "avg", "--out", s(&out)],
        vec!["fuse", s(&m), "--method", "nonsense", "--out", s(&out)],
        vec!["gen-fixtures", "--preset", "nonsense", "--out", s(dir.path())],
    ] {
        assert_eq!(consensus(&args).status.code(), Some(2), "{args:?}");
    }
    assert!(!out.exists());
}

#[test]
fn input_errors_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let m = f1_manifest(&dir);
    let out = dir.path().join("x.u8");
    let missing = dir.path().join("missing.json");
    assert_eq!(
        consensus(&["fuse", s(&missing), "--method", "mv", "--out", s(&out)]).status.code(),
        Some(3)
    );
    fs::write(dir.path().join("rater_0.u8"), [0u8, 0, 7, 1, 1, 0, 0, 0]).unwrap();
    let r = consensus(&["fuse", s(&m), "--method", "mv", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&r.stderr).contains("not 0/1"));
    fs::write(dir.path().join("rater_0.u8"), [0u8, 0, 1]).unwrap();
    assert_eq!(
        consensus(&["fuse", s(&m), "--method", "mv", "--out", s(&out)]).status.code(),
        Some(3)
    );
}

#[test]
fn rater_files_with_different_dims_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid::new(vec![2, 3], Neighborhood::N4).unwrap();
    let stack = RaterStack::new(vec![BinaryMask::zeros(g.clone()), BinaryMask::zeros(g)]).unwrap();
    let m = Manifest::write_stack(dir.path(), "small", &stack).unwrap();
    let other = BinaryMask::zeros(Grid::new(vec![3, 2], Neighborhood::N4).unwrap());
    MaskFile::from_binary(&other).write(&dir.path().join("rater_1.u8")).unwrap();
    let out = consensus(&["fuse", s(&m), "--method", "mv", "--out", s(&dir.path().join("x.u8"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn fuse_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let gen = consensus(&["gen-fixtures", "--preset", "blobs", "--seed", "4", "--out", s(dir.path())]);
    let m = String::from_utf8(gen.stdout).unwrap().trim().to_string();
    for method in ["macchiato-j", "macchiato-tj", "mml-staple"] {
        let a = dir.path().join(format!("{method}-a"));
        let b = dir.path().join(format!("{method}-b"));
        ok_json(&["fuse", &m, "--method", method, "--out", s(&a)]);
        ok_json(&["fuse", &m, "--method", method, "--out", s(&b)]);
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap(), "{method}");
    }
}

#[test]
fn gen_fixtures_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = consensus(&["gen-fixtures", "--preset", "rings", "--seed", "11", "--out", s(dir.path())]);
        assert!(out.status.success());
    }
    let names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert!(names.len() >= 3);
    for name in names {
        assert_eq!(fs::read(a.path().join(&name)).unwrap(), fs::read(b.path().join(&name)).unwrap());
    }
}

#[test]
fn metrics_modes_report_expected_values() {
    let dir = tempfile::tempdir().unwrap();
    let m = f1_manifest(&dir);
    let mv = dir.path().join("mv.u8");
    ok_json(&["fuse", s(&m), "--method", "mv", "--out", s(&mv)]);

    let csv = dir.path().join("voxel.csv");
    let r = ok_json(&["metrics", s(&m), "--consensus", s(&mv), "--mode", "voxel", "--csv", s(&csv)]);
    // Rater {2,3,4} scored against the consensus {3,4}.
    assert!((r["rows"][0]["precision"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert!((r["rows"][0]["recall"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 3);

    let r = ok_json(&["metrics", s(&m), "--consensus", s(&mv), "--mode", "lesion"]);
    assert_eq!(r["rows"].as_array().unwrap().len(), 2);

    let ma = dir.path().join("ma.f64");
    ok_json(&["fuse", s(&m), "--method", "ma", "--out", s(&ma)]);
    let r = ok_json(&["metrics", s(&m), "--consensus", s(&ma), "--mode", "entropy"]);
    assert!(r["entropy"].as_f64().unwrap() > 0.0);

    let r = ok_json(&["metrics", s(&m), "--consensus", s(&mv), "--consensus", s(&ma), "--mode", "sizes"]);
    assert_eq!(r["rows"].as_array().unwrap().len(), 3);

    let two = consensus(&["metrics", s(&m), "--consensus", s(&mv), "--consensus", s(&ma), "--mode", "voxel"]);
    assert_eq!(two.status.code(), Some(2));
}

#[test]
fn bg_study_reports_every_margin() {
    let dir = tempfile::tempdir().unwrap();
    let m = f1_manifest(&dir);
    let r = ok_json(&["bg-study", s(&m), "--method", "ml-staple", "--margins", "0,8,100", "--axis", "0"]);
    assert_eq!(r["command"], "bg-study");
    let rows = r["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let sizes: Vec<f64> = rows.iter().map(|row| row["size"].as_f64().unwrap()).collect();
    assert!(sizes.windows(2).all(|w| w[0] <= w[1]));
    let r = consensus(&["bg-study", s(&m), "--method", "mv", "--margins", "8,0"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn bench_keeps_the_oracle_below_every_heuristic() {
    let dir = tempfile::tempdir().unwrap();
    let m = f1_manifest(&dir);
    let csv = dir.path().join("bench.csv");
    let r = ok_json(&["bench-heuristics", s(&m), "--distance", "dice", "--csv", s(&csv)]);
    let row = &r["result"]["rows"][0];
    let oracle = row["oracle"].as_f64().unwrap();
    assert!(row["lmsd"].as_array().unwrap().iter().all(|v| oracle <= v.as_f64().unwrap()));
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 4);
    assert_eq!(consensus(&["bench-heuristics"]).status.code(), Some(2));
}

#[test]
fn export_png_writes_an_image() {
    let dir = tempfile::tempdir().unwrap();
    let m = f1_manifest(&dir);
    let mv = dir.path().join("mv.u8");
    ok_json(&["fuse", s(&m), "--method", "mv", "--out", s(&mv)]);
    let png = dir.path().join("mv.png");
    assert!(consensus(&["export-png", s(&mv), "--out", s(&png), "--scale", "4"]).status.success());
    assert_eq!(&fs::read(&png).unwrap()[1..4], b"PNG");
}
