use std::path::Path;
use std::process::{Command, Output};

use coopsight_core::io::{read_jsonl, write_jsonl};
use coopsight_core::metrics::ScoreReport;
use coopsight_core::predictors;
use coopsight_core::qra::QraRecord;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coopsight"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Scenes, labels and a 200-record dataset under `dir`.
fn small_pipeline(dir: &Path) {
    ok(
        dir,
        &["--seed", "3", "gen-scenes", "--n", "12", "--out", "scenes.jsonl"],
    );
    ok(
        dir,
        &["label-occlusion", "--scenes", "scenes.jsonl", "--out", "labels.jsonl"],
    );
    ok(
        dir,
        &[
            "--seed",
            "3",
            "gen-qra",
            "--scenes",
            "scenes.jsonl",
            "--labels",
            "labels.jsonl",
            "--n",
            "200",
            "--out",
            "dataset.jsonl",
        ],
    );
}

#[test]
fn gen_scenes_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["--seed", "42", "gen-scenes", "--n", "100", "--out", "a.jsonl"]);
    ok(d, &["--seed", "42", "gen-scenes", "--n", "100", "--out", "b.jsonl"]);
    ok(d, &["--seed", "43", "gen-scenes", "--n", "100", "--out", "c.jsonl"]);
    let read = |f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read("a.jsonl"), read("b.jsonl"));
    assert_eq!(read("a.jsonl.splits.json"), read("b.jsonl.splits.json"));
    assert_ne!(read("a.jsonl"), read("c.jsonl"));
    assert_eq!(read("a.jsonl").iter().filter(|&&b| b == b'\n').count(), 100);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["--bogus"][..], &["frobnicate"], &["gen-scenes", "--n", "ten"], &[]] {
        assert_eq!(run(dir.path(), args).status.code(), Some(2), "{args:?}");
    }
    assert_eq!(run(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn malformed_line_names_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-scenes", "--n", "5", "--out", "scenes.jsonl"]);
    let text = std::fs::read_to_string(d.join("scenes.jsonl")).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[2] = "{\"scene_id\": 7";
    std::fs::write(d.join("broken.jsonl"), lines.join("\n")).unwrap();
    let out = run(d, &["label-occlusion", "--scenes", "broken.jsonl", "--out", "l.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("broken.jsonl:3:"), "{}", stderr(&out));
}

#[test]
fn missing_input_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &["label-occlusion", "--scenes", "nope.jsonl", "--out", "l.jsonl"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nope.jsonl"));
    let out = run(dir.path(), &["label-occlusion", "--out", "l.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn max_reject_controls_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_pipeline(d);
    ok(
        d,
        &[
            "gen-qra",
            "--scenes",
            "scenes.jsonl",
            "--labels",
            "labels.jsonl",
            "--n",
            "200",
            "--out",
            "faulty.jsonl",
            "--inject-faults",
            "12",
        ],
    );
    let base = ["validate-qra", "--dataset", "faulty.jsonl", "--scenes", "scenes.jsonl"];
    let text = ok(d, &base);
    assert!(text.contains("rejected: 12"), "{text}");
    let with = |m: &str| {
        let mut a = base.to_vec();
        a.extend(["--max-reject", m]);
        run(d, &a).status.code()
    };
    assert_eq!(with("12"), Some(0));
    assert_eq!(with("11"), Some(1));

    let csv = ok(
        d,
        &[
            "--format",
            "csv",
            "validate-qra",
            "--dataset",
            "faulty.jsonl",
            "--scenes",
            "scenes.jsonl",
        ],
    );
    assert!(
        csv.starts_with("reason,count\n") && csv.ends_with("total-rejected,12\n"),
        "{csv}"
    );

    ok(
        d,
        &[
            "validate-qra",
            "--dataset",
            "dataset.jsonl",
            "--scenes",
            "scenes.jsonl",
            "--max-reject",
            "0",
            "--accepted-out",
            "kept.jsonl",
        ],
    );
    assert_eq!(
        std::fs::read(d.join("kept.jsonl")).unwrap(),
        std::fs::read(d.join("dataset.jsonl")).unwrap()
    );
}

#[test]
fn oracle_predictions_score_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_pipeline(d);
    let records: Vec<QraRecord> = read_jsonl(&d.join("dataset.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = predictors::oracle(&records)
        .into_iter()
        .map(|p| serde_json::json!({"record_id": p.record_id, "raw_text": p.raw_text}))
        .collect();
    write_jsonl(&d.join("oracle.jsonl"), &lines).unwrap();
    let md = ok(
        d,
        &[
            "score",
            "--predictions",
            "oracle.jsonl",
            "--dataset",
            "dataset.jsonl",
            "--scenes",
            "scenes.jsonl",
            "--labels",
            "labels.jsonl",
            "--out",
            "score.json",
            "--method",
            "oracle",
        ],
    );
    assert!(md.contains("| oracle | 1.00 | 1.00 | 1.00 | 0.00 |"), "{md}");
    let report: ScoreReport = serde_json::from_str(&std::fs::read_to_string(d.join("score.json")).unwrap()).unwrap();
    assert_eq!(report.aggregate.decision_f1, Some(1.0));
    assert_eq!(report.aggregate.miou, Some(1.0));

    let csv = ok(d, &["--format", "csv", "report", "--input", "score.json"]);
    assert_eq!(csv.lines().count(), 5);
    let json = ok(d, &["--format", "json", "report", "--input", "score.json"]);
    assert_eq!(json, std::fs::read_to_string(d.join("score.json")).unwrap());
}

#[test]
fn config_file_round_trips_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("cfg.json"),
        r#"{"seed": 5, "tau": 0.6, "paths": {"scenes": "cfg_scenes.jsonl"}, "generation": {"n_scenes": 6}}"#,
    )
    .unwrap();
    ok(d, &["--config", "cfg.json", "--dump-config", "eff1.json", "gen-scenes"]);
    assert_eq!(
        std::fs::read_to_string(d.join("cfg_scenes.jsonl"))
            .unwrap()
            .lines()
            .count(),
        6
    );
    ok(
        d,
        &[
            "--config",
            "eff1.json",
            "--dump-config",
            "eff2.json",
            "gen-scenes",
            "--out",
            "x.jsonl",
        ],
    );
    assert_eq!(
        std::fs::read_to_string(d.join("eff1.json")).unwrap(),
        std::fs::read_to_string(d.join("eff2.json")).unwrap()
    );
    assert_eq!(
        std::fs::read(d.join("cfg_scenes.jsonl")).unwrap(),
        std::fs::read(d.join("x.jsonl")).unwrap()
    );

    ok(
        d,
        &[
            "--config",
            "cfg.json",
            "--seed",
            "9",
            "--tau",
            "0.8",
            "--dump-config",
            "eff3.json",
            "gen-scenes",
            "--out",
            "y.jsonl",
        ],
    );
    let eff: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("eff3.json")).unwrap()).unwrap();
    assert_eq!(eff["seed"], 9);
    assert_eq!(eff["tau"], 0.8);
    assert_eq!(eff["generation"]["n_scenes"], 6);

    std::fs::write(d.join("bad.json"), r#"{"sed": 1}"#).unwrap();
    assert_eq!(
        run(d, &["--config", "bad.json", "gen-scenes", "--out", "z.jsonl"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn project_writes_boxes_inside_images() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-scenes", "--n", "4", "--out", "s.jsonl"]);
    ok(d, &["project", "--scenes", "s.jsonl", "--out", "b.jsonl"]);
    let boxes: Vec<serde_json::Value> = read_jsonl(&d.join("b.jsonl")).unwrap();
    assert!(!boxes.is_empty());
    for b in boxes {
        let x_max = b["bbox"]["x_max"].as_f64().unwrap();
        let y_max = b["bbox"]["y_max"].as_f64().unwrap();
        assert!(b["bbox"]["x_min"].as_f64().unwrap() >= 0.0 && x_max <= 1920.0);
        assert!(b["bbox"]["y_min"].as_f64().unwrap() >= 0.0 && y_max <= 1200.0);
    }
}

#[test]
fn adapter_check_reads_tensor_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let text = ok(
        d,
        &["adapter-check", "--shape", "3,126,127", "--write-tensor", "t.voxt"],
    );
    assert!(
        text.contains("lidar tokens:     1024 x 32") && text.ends_with("PASS\n"),
        "{text}"
    );
    let json = ok(
        d,
        &[
            "--format",
            "json",
            "adapter-check",
            "--tensor",
            "t.voxt",
            "--img-tokens",
            "5",
            "--txt-tokens",
            "7",
        ],
    );
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["sequence_length"], 5 + 1024 + 7);
    assert_eq!(v["diagnostics"]["input_shape"], serde_json::json!([3, 126, 127]));
    assert_eq!(v["passed"], true);

    std::fs::write(d.join("bad.voxt"), b"NOPE").unwrap();
    assert_eq!(
        run(d, &["adapter-check", "--tensor", "bad.voxt"]).status.code(),
        Some(2)
    );
    let out = run(d, &["adapter-check", "--shape", "3,64,64"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("incompatible grid"), "{}", stderr(&out));
}

#[test]
fn list_flags_need_three_values() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        run(
            d,
            &["gen-scenes", "--n", "10", "--split", "0.5,0.5", "--out", "s.jsonl"]
        )
        .status
        .code(),
        Some(2)
    );
    assert_eq!(run(d, &["adapter-check", "--shape", "3,128"]).status.code(), Some(2));
    ok(
        d,
        &["gen-scenes", "--n", "10", "--split", "0.6,0.2,0.2", "--out", "s.jsonl"],
    );
    let manifest: std::collections::BTreeMap<String, String> =
        serde_json::from_str(&std::fs::read_to_string(d.join("s.jsonl.splits.json")).unwrap()).unwrap();
    assert_eq!(manifest.values().filter(|t| *t == "train").count(), 6);
}
