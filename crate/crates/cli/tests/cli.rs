use std::process::Command;

use fourier_ed::config::{load, Family, Preset, RunConfig};
use fourier_ed::output::{read_csv, read_csv_file, to_csv_bytes, EdRow, TrainingRow};
use fourier_ed::runner::{content_hash, run};
use fourier_ed_core::training::{ExperimentRecord, Regime};

fn overrides(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

#[test]
fn unknown_key_reports_its_line() {
    let text = "{\n  \"preset\": \"ed-vs-purity\",\n  \"bogus\": 3\n}\n";
    let err = load(None, Some(("cfg.json", text)), &[]).unwrap_err().to_string();
    assert!(err.contains("cfg.json at line 3"), "{err}");
    assert!(err.contains("bogus"), "{err}");
}

#[test]
fn unknown_override_is_rejected() {
    let err = load(Some("scan-m"), None, &overrides(&["nope=1"])).unwrap_err();
    assert!(err.to_string().contains("nope"));
}

#[test]
fn preset_cannot_be_overridden_or_contradicted() {
    assert!(load(Some("scan-m"), None, &overrides(&["preset=scan-d"])).is_err());
    let text = r#"{"preset": "scan-d"}"#;
    assert!(load(Some("scan-m"), Some(("c.json", text)), &[]).is_err());
    assert!(load(None, None, &[]).is_err());
}

#[test]
fn file_then_overrides_win_over_defaults() {
    let text = r#"{"preset": "train-compare-dense", "epochs": 40, "learning_rate": 0.05}"#;
    let cfg = load(None, Some(("c.json", text)), &overrides(&["epochs=7", "xis=[1.5]"])).unwrap();
    assert_eq!(cfg.epochs, 7);
    assert_eq!(cfg.learning_rate, 0.05);
    assert_eq!(cfg.xis, vec![1.5]);
    assert_eq!(cfg.n_params, RunConfig::preset(Preset::TrainCompareDense).n_params);
}

#[test]
fn wrongly_typed_value_names_the_field() {
    let err = load(Some("scan-m"), None, &overrides(&["epochs=\"many\""])).unwrap_err();
    assert!(err.to_string().contains("epochs"), "{err}");
}

#[test]
fn oversized_dense_config_is_rejected_with_a_hint() {
    let err = load(Some("train-compare-tensorized"), None, &overrides(&["family=dense"]))
        .unwrap_err()
        .to_string();
    assert!(err.contains("tensorized"), "{err}");
}

#[test]
fn dense_training_report_lists_dimensions() {
    let cfg = load(Some("train-compare-dense"), None, &[]).unwrap();
    assert_eq!(cfg.family, Family::Dense);
    let report = cfg.report().unwrap();
    assert!(report.contains("D=17"), "{report}");
    assert!(report.contains("K=2187"), "{report}");
}

#[test]
fn every_preset_loads_by_name() {
    for p in Preset::ALL {
        let cfg = load(Some(p.name()), None, &[]).unwrap();
        assert_eq!(cfg.preset_kind().unwrap(), p);
    }
}

fn sample_record(regime: Regime, restart: u64) -> ExperimentRecord {
    let (mse_min_full, mse_min_cut, ed_full, ed_cut) = (0.25, 0.125, 0.875, 0.5);
    ExperimentRecord {
        master_seed: 11,
        realization: 2,
        restart,
        regime,
        ed_full,
        ed_cut,
        mse_min_full,
        mse_min_cut,
        delta_mse: mse_min_full - mse_min_cut,
        delta_ed: ed_full - ed_cut,
        epochs: 300,
        lr: 0.01,
    }
}

#[test]
fn training_rows_round_trip_through_csv() {
    let records = [
        sample_record(Regime::Biased, 0),
        sample_record(Regime::Unbiased, u64::MAX),
        sample_record(Regime::Partial { epsilon: 0.05, delta_data: 0.3125 }, 4),
    ];
    let rows: Vec<TrainingRow> = records.iter().map(|r| TrainingRow::new(r, 0.5, 17, 7)).collect();
    let bytes = to_csv_bytes(&rows).unwrap();
    assert!(bytes.starts_with(b"# schema=1\n"));
    let back: Vec<TrainingRow> = read_csv(bytes.as_slice()).unwrap();
    assert_eq!(back, rows);
    for (row, rec) in back.iter().zip(&records) {
        let r = row.record().unwrap();
        assert_eq!(&r, rec);
        assert!(r.is_consistent());
    }
    assert_eq!(back[1].restart, None);
}

#[test]
fn csv_without_schema_line_is_rejected() {
    let text = "master_seed,realization\n1,2\n";
    assert!(read_csv::<EdRow>(text.as_bytes()).is_err());
}

#[test]
fn run_writes_records_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = load(
        Some("ed-vs-dm-ratio"),
        None,
        &overrides(&["n_realizations=2", "n_param_samples=20", "scan_values=[3,5]"]),
    )
    .unwrap();
    let summary = run(&cfg, dir.path(), 1).unwrap();
    assert_eq!(summary.outcome.tasks, 4);
    assert_eq!(summary.outcome.failed, 0);
    let records = dir.path().join("records.csv");
    let rows: Vec<EdRow> = read_csv_file(&records).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.d_eff.is_finite() && r.n_param_samples == 20));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["preset"], "ed-vs-dm-ratio");
    assert_eq!(manifest["tasks"], 4);
    assert_eq!(
        manifest["records_sha256"].as_str().unwrap(),
        content_hash(&std::fs::read(&records).unwrap())
    );
}

#[test]
fn content_hash_matches_git_blob_hash() {
    // sha256 of "blob 6\0hello\n", as `git hash-object --object-format=sha256` reports it.
    assert_eq!(
        content_hash(b"hello\n"),
        "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4"
    );
}

#[test]
fn binary_validates_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, r#"{"preset": "qnn-layouts", "mask_samples": 2}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_fourier-ed"))
        .args(["validate", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("mask samples: 2"), "{stdout}");
}

#[test]
fn binary_fails_on_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, "{\"preset\": \"scan-m\",\n\"epochz\": 1}").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_fourier-ed"))
        .args(["run", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("line 2") && stderr.contains("epochz"), "{stderr}");
}
