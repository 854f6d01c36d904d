use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sectionstack::io;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sectionstack"))
}

fn demo_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/demo.toml")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn malformed_config_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "seed = 3\n[matching]\nkappa = 1.0\npenalty = 2\n").unwrap();
    let out = run(&["simulate", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4"), "{err}");
    assert!(err.contains("penalty"), "{err}");
}

#[test]
fn invalid_value_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "seed = 3\n[matching]\nkappa = -1.0\n").unwrap();
    let out = run(&["advise", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_column_exits_3_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let cells = dir.path().join("cells.csv");
    std::fs::write(&cells, "cell_id,x,y,z,type,section\na,0,0,0,T,0\nb,1,0,4,T,1\n").unwrap();
    let out = run(&["reconstruct", "--config", s(&demo_config()), "--out", s(dir.path()), "--cells", s(&cells)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("'area'"));
}

#[test]
fn mismatched_schema_sidecar_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cells = dir.path().join("cells.csv");
    std::fs::write(&cells, "cell_id,x,y,z,area,type,section\na,0,0,0,3,T,0\nb,1,0,4,3,T,1\n").unwrap();
    let mut meta = io::Meta::new(io::schema::POINTS, None, None);
    std::fs::write(io::meta_path(&cells), serde_json::to_vec(&meta).unwrap()).unwrap();
    let cfg = demo_config();
    let args = ["reconstruct", "--config", s(&cfg), "--out", s(dir.path()), "--cells", s(&cells)];
    assert_eq!(run(&args).status.code(), Some(3));

    meta.schema = io::schema::CELLS.into();
    meta.schema_version = io::SCHEMA_VERSION + 1;
    std::fs::write(io::meta_path(&cells), serde_json::to_vec(&meta).unwrap()).unwrap();
    assert_eq!(run(&args).status.code(), Some(3));

    meta.schema_version = io::SCHEMA_VERSION;
    std::fs::write(io::meta_path(&cells), serde_json::to_vec(&meta).unwrap()).unwrap();
    assert_eq!(run(&args).status.code(), Some(0));
}

#[test]
fn advise_without_runs_reports_insufficient_evidence() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["advise", "--config", s(&demo_config()), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("advisory.json")).unwrap();
    assert_eq!(text.matches("insufficient_evidence").count(), 3);
}

#[test]
fn simulate_sample_estimate_contract() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = demo_config();
    for sub in ["simulate", "sample", "estimate"] {
        let out = run(&[sub, "--config", s(&cfg), "--out", s(dir.path())]);
        assert!(out.status.success(), "{sub}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let reports = io::read_recovery(&dir.path().join("recovery.csv")).unwrap();
    // four seeds times three geometries
    assert_eq!(reports.len(), 12);
    let budgets: Vec<_> = reports.iter().filter(|r| r.seed == Some(0)).map(|r| r.budget).collect();
    assert_eq!(budgets[0], budgets[1], "2D and serial budgets must match");

    let meta = io::read_meta(&dir.path().join("recovery.csv")).unwrap().unwrap();
    assert_eq!(meta.schema, io::schema::RECOVERY);
    assert_eq!(meta.seed, Some(20240611));
    let hash = io::sha256_hex(&std::fs::read(&cfg).unwrap());
    assert_eq!(meta.config_hash.as_deref(), Some(hash.as_str()));

    // estimate reads inputs from another directory
    let other = tempfile::tempdir().unwrap();
    let out = run(&["estimate", "--config", s(&cfg), "--out", s(other.path()), "--input", s(dir.path())]);
    assert!(out.status.success());
    assert_eq!(
        std::fs::read(dir.path().join("recovery.csv")).unwrap(),
        std::fs::read(other.path().join("recovery.csv")).unwrap()
    );
}

#[test]
fn simulate_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        assert!(run(&["simulate", "--config", s(&demo_config()), "--out", s(d.path())]).status.success());
    }
    let vol = "volumes/volume_0.labels";
    let ha = io::sha256_hex(&std::fs::read(a.path().join(vol)).unwrap());
    let hb = io::sha256_hex(&std::fs::read(b.path().join(vol)).unwrap());
    assert_eq!(ha, hb);
}

#[test]
fn missing_upstream_output_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["estimate", "--config", s(&demo_config()), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("observations.json"));
}
