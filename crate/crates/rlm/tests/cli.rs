//! End-to-end tests of the `rlm` binary: full pipeline from one manifest,
//! idempotent reruns, and exit-code classification.

use std::path::Path;
use std::process::Command;

fn rlm(manifest: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_rlm"))
        .arg("--manifest")
        .arg(manifest)
        .args(args)
        .output()
        .expect("spawn rlm")
}

fn write_manifest(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("manifest.json");
    let out_dir = dir.join("out");
    std::fs::write(
        &path,
        format!(
            r#"{{
  "seed": 99,
  "out_dir": "{}",
  "gen": {{ "n_buses": 2, "models_per_bus": 10, "basics_per_bus": 3, "noise_rel_std": 0.03 }},
  "nc_temporal": 3,
  "nc_spatial": [2],
  "neighbor_fraction": 0.1,
  "validation": {{ "n_cases": 2 }}
}}
"#,
            out_dir.display()
        ),
    )
    .unwrap();
    path
}

#[test]
fn full_pipeline_through_the_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = write_manifest(tmp.path());
    for stage in [
        vec!["gen"],
        vec!["cluster-temporal"],
        vec!["cluster-spatial"],
        vec!["validate"],
        vec!["report"],
        vec!["pfr", "--bus", "bus_000"],
    ] {
        let out = rlm(&manifest, &stage);
        assert!(
            out.status.success(),
            "{stage:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let out_dir = tmp.path().join("out");
    assert!(out_dir.join("validation/summary.csv").exists());
    assert!(out_dir.join("report/storage.txt").exists());

    // the compressed table parses back and reconstructs valid models
    let csv = std::fs::read_to_string(out_dir.join("spatial/nc_2/compressed.csv")).unwrap();
    let records = rlm::io::parse_compressed_csv(&csv).unwrap();
    assert!(!records.is_empty());
    let sp = rlm::pipeline::load_spatial(&rlm::io::Manifest {
        out_dir: out_dir.clone(),
        nc_spatial: vec![2],
        ..Default::default()
    })
    .unwrap();
    for rec in &records {
        let model = rlm::hierarchy::reconstruct_model(rec, &sp[&2], 1.0, 0.35).unwrap();
        model.validate().unwrap();
    }
}

#[test]
fn gen_rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = write_manifest(tmp.path());
    assert!(rlm(&manifest, &["gen"]).status.success());
    let first = std::fs::read(tmp.path().join("out/models/bus_000.json")).unwrap();
    let labels_first = std::fs::read(tmp.path().join("out/models/labels.csv")).unwrap();
    assert!(rlm(&manifest, &["gen"]).status.success());
    let second = std::fs::read(tmp.path().join("out/models/bus_000.json")).unwrap();
    let labels_second = std::fs::read(tmp.path().join("out/models/labels.csv")).unwrap();
    assert_eq!(first, second);
    assert_eq!(labels_first, labels_second);
}

#[test]
fn exit_codes_distinguish_failure_classes() {
    let tmp = tempfile::tempdir().unwrap();

    // missing manifest: I/O (4)
    let out = rlm(&tmp.path().join("nope.json"), &["gen"]);
    assert_eq!(out.status.code(), Some(4));

    // invalid configuration: 2
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"neighbor_fraction": 2.0}"#).unwrap();
    let out = rlm(&bad, &["gen"]);
    assert_eq!(out.status.code(), Some(2));

    // clustering before generation: missing inputs are configuration (2)
    let manifest = write_manifest(tmp.path());
    let out = rlm(&manifest, &["cluster-temporal"]);
    assert_eq!(out.status.code(), Some(2));
}
