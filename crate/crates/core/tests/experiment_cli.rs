use std::process::Command;

use sflpl::experiment::{
    emit_report, parse_table_csv, read_report, run, run_grid, table_csv, DatasetKind, ExperimentConfig, GridReport,
    Preset, ReportFormat,
};
use sflpl::model::ModelVersion;
use sflpl::poisoning::{AttackKind, AttackName};

/// A few-second configuration on generated ECG-shaped data.
fn tiny(version: ModelVersion) -> ExperimentConfig {
    let mut c = ExperimentConfig::preset(DatasetKind::Synth, version, Preset::Desk);
    c.num_clients = 5;
    c.train_per_client = 24;
    c.test_size = Some(60);
    c.epochs = 2;
    c.seed = 17;
    c
}

#[test]
fn zero_malicious_equals_no_attack() {
    let mut attacked = tiny(ModelVersion::EcgV1);
    attacked.attack = AttackName::UntargetedFixed;
    attacked.flood_label = Some(1);
    let clean = run(&tiny(ModelVersion::EcgV1)).unwrap();
    let zero = run(&attacked).unwrap();
    assert_eq!(zero.resolved_attack, AttackKind::None);
    assert_eq!(zero.model_checksum, clean.model_checksum);
    assert_eq!(zero.final_report().confusion, clean.final_report().confusion);
    assert_eq!(zero.accuracy_drop(), Some(0.0));
}

#[test]
fn malicious_clients_are_lowest_ids() {
    let mut c = tiny(ModelVersion::EcgV1);
    c.num_clients = 10;
    c.malicious_pct = 20;
    c.attack = AttackName::UntargetedFixed;
    c.flood_label = Some(0);
    let record = run(&c).unwrap();
    assert_eq!(record.malicious_clients, vec![0, 1]);
    assert!(record.baseline_accuracy.is_some());
    assert!(record.accuracy_drop().is_some());
}

#[test]
fn auto_selection_uses_baseline_ranking() {
    let mut c = tiny(ModelVersion::EcgV1);
    c.malicious_pct = 40;
    c.attack = AttackName::Targeted;
    let record = run(&c).unwrap();
    let baseline = run(&c.baseline()).unwrap();
    let acc = baseline.final_report().confusion.per_class_accuracy();
    let (s, t) = sflpl::poisoning::auto_select_source_target(&acc).unwrap();
    assert_eq!(record.resolved_attack, AttackKind::Targeted { source: s, target: t });
}

#[test]
fn grid_rows_and_round_trips() {
    let base = tiny(ModelVersion::EcgV1);
    let attacks = [AttackName::UntargetedFixed, AttackName::Targeted, AttackName::Distance];
    let report = run_grid(&base, &[0, 20, 40], &attacks, &[ModelVersion::EcgV1, ModelVersion::EcgV2]).unwrap();
    let rows = report.rows();
    assert_eq!(rows.len(), 2 + 12);
    assert_eq!(rows.iter().filter(|r| r.attack == AttackName::None).count(), 2);
    assert!(rows.iter().filter(|r| r.malicious_pct == 0).all(|r| r.accuracy_drop == 0.0));

    let dir = tempfile::tempdir().unwrap();
    let json = emit_report(&report, ReportFormat::Json, dir.path()).unwrap();
    assert_eq!(read_report(&json).unwrap(), report);
    let csv = emit_report(&report, ReportFormat::Csv, dir.path()).unwrap();
    let parsed = parse_table_csv(&std::fs::read_to_string(csv).unwrap()).unwrap();
    assert_eq!(parsed.len(), rows.len());
    assert_eq!(table_csv(&parsed), table_csv(&rows));
    let md = emit_report(&report, ReportFormat::Markdown, dir.path()).unwrap();
    let md = std::fs::read_to_string(md).unwrap();
    assert!(md.starts_with("| version | pct | attack | A | A_d |"));
    assert_eq!(md.lines().filter(|l| l.starts_with("| ECGv")).count(), 14);
}

#[test]
fn repeated_runs_serialize_identically() {
    let mut c = tiny(ModelVersion::EcgV2);
    c.malicious_pct = 20;
    c.attack = AttackName::Distance;
    let a = GridReport { base_config: c.clone(), records: vec![run(&c).unwrap()] };
    let b = GridReport { base_config: c.clone(), records: vec![run(&c).unwrap()] };
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.records[0].fingerprint, c.fingerprint());
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sflpl"))
}

#[test]
fn cli_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli()
        .args(["run", "--dataset", "synth", "--model-version", "ECGv2", "--clients", "2"])
        .args(["--train-per-client", "20", "--test-size", "30", "--epochs", "1"])
        .args(["--malicious-pct", "50", "--attack", "untargeted-fixed", "--flood-label", "3"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["report.json", "table.csv", "table.md"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let report = read_report(&dir.path().join("report.json")).unwrap();
    assert_eq!(report.records[0].resolved_attack, AttackKind::UntargetedFixed { flood_label: 3 });
}

#[test]
fn cli_errors_are_one_json_line() {
    for args in [
        vec!["run", "--dataset", "mnist", "--model-version", "ECGv1"],
        vec!["run", "--attack", "bogus"],
        vec!["run", "--dataset", "synth", "--malicious-pct", "120"],
    ] {
        let out = cli().args(&args).output().unwrap();
        assert!(!out.status.success());
        let stderr = String::from_utf8(out.stderr).unwrap();
        assert_eq!(stderr.trim_end().lines().count(), 1, "{stderr}");
        let v: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
        assert!(v["error"].is_string() && v["message"].is_string());
    }
}

#[test]
fn cli_reads_environment() {
    let out = cli()
        .args(["run", "--dataset", "synth"])
        .env("SFLPL_MALICIOUS_PCT", "300")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("\"config\""));
}
