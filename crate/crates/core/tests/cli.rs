//! The `storebench` binary driven end to end.

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;

use chrono::{TimeZone, Utc};
use common::{bin, fixture, golden, stub};
use storebench::choice::ContainerChoice;
use storebench::dataset::{AnnotationRecord, GroundTruth, ItemImagePair, Provenance};
use storebench::eval::EvalRecord;
use storebench::io::{read_jsonl, write_jsonl};

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run(args: &[&str], env: &[(&str, &str)]) -> Run {
    let mut c = Command::new(bin());
    c.args(args);
    for (k, v) in env {
        c.env(k, v);
    }
    let out = c.output().unwrap();
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn ok(args: &[&str]) -> String {
    let r = run(args, &[]);
    assert_eq!(r.code, 0, "{args:?}\n{}", r.stderr);
    r.stdout
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Builds featurized tables for both fixture scenes; returns the path.
fn tables(dir: &Path) -> PathBuf {
    let raw = dir.join("tables.json");
    let feat = dir.join("features.json");
    ok(&[
        "ingest",
        s(&fixture("example2_detections.json")),
        s(&fixture("example3_detections.json")),
        "--out",
        s(&raw),
    ]);
    ok(&["features", "--tables", s(&raw), "--out", s(&feat)]);
    feat
}

/// Ground-truth container for a pair in the smoke set.
fn truth_for(image_id: &str, item: &str) -> u32 {
    let offset = usize::from(image_id == "example3");
    ((item.len() + offset) % 3 + 1) as u32
}

/// Recovers (image, item) from a structured prompt.
fn parse_prompt(user: &str) -> (&'static str, String) {
    let item = user
        .lines()
        .next()
        .unwrap()
        .trim_start_matches("Item: ")
        .to_string();
    let image = if user.contains("sink") {
        "example2"
    } else {
        "example3"
    };
    (image, item)
}

fn endpoint(dir: &Path, url: &str, name: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(
        &p,
        format!(
            "base_url = \"{url}\"\nmodel_name = \"stub\"\napi_key_env_var = \"SB_CLI_TEST_KEY\"\ninter_call_pause = 0.0\ninitial_retry_delay = 0.0\n"
        ),
    )
    .unwrap();
    p
}

struct Smoke {
    dir: tempfile::TempDir,
    tables: PathBuf,
    pairs: PathBuf,
    truth: PathBuf,
}

fn smoke_set() -> Smoke {
    let dir = tempfile::tempdir().unwrap();
    let tables = tables(dir.path());
    let pairs = dir.path().join("pairs.jsonl");
    let out = ok(&[
        "sample-pairs",
        "--tables",
        s(&tables),
        "--per-item",
        "2",
        "--items",
        "Fork,Mug,Trash Bag,Spoon",
        "--seed",
        "3",
        "--out",
        s(&pairs),
    ]);
    assert!(out.contains("8 pairs"), "{out}");
    let list: Vec<ItemImagePair> = read_jsonl(&pairs).unwrap();
    let truths: Vec<GroundTruth> = list
        .iter()
        .map(|p| GroundTruth {
            pair_id: p.pair_id.clone(),
            container_local_id: Some(truth_for(&p.image_id, &p.item)),
            provenance: Provenance::Unanimous,
        })
        .collect();
    let truth = dir.path().join("truth.jsonl");
    write_jsonl(&truth, &truths).unwrap();
    Smoke {
        dir,
        tables,
        pairs,
        truth,
    }
}

fn predict(sm: &Smoke, answer: fn(&str, &str) -> String, name: &str) -> PathBuf {
    let server = stub::start(move |_, req| {
        let user = req.body["messages"][1]["content"]
            .as_str()
            .unwrap_or("")
            .to_string();
        let (image, item) = parse_prompt(&user);
        (
            200,
            stub::chat(&format!(
                "Item: {item}\nBest container: {}\nReasoning: x",
                answer(image, &item)
            )),
        )
    });
    let cfg = endpoint(sm.dir.path(), &server.url, &format!("{name}.toml"));
    let out = sm.dir.path().join(format!("{name}.jsonl"));
    let r = run(
        &[
            "--fixed-clock",
            "2026-03-01T00:00:00Z",
            "predict",
            "--strategy",
            "structured",
            "--endpoint-config",
            s(&cfg),
            "--tables",
            s(&sm.tables),
            "--pairs",
            s(&sm.pairs),
            "--out",
            s(&out),
            "--workers",
            "2",
        ],
        &[("SB_CLI_TEST_KEY", "secret-key")],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(
        r.stdout.contains("processed 8 skipped 0 errors 0"),
        "{}",
        r.stdout
    );
    assert!(!std::fs::read_to_string(&out)
        .unwrap()
        .contains("secret-key"));
    out
}

/// Accuracy and mean IoU of the single data row of a text report.
fn row_values(report: &str) -> (f64, f64) {
    let mut lines = report.lines();
    let head: Vec<&str> = lines.next().unwrap().split_whitespace().collect();
    let row: Vec<&str> = lines.next().unwrap().split_whitespace().collect();
    assert!(lines.next().is_none(), "{report}");
    let col = |name: &str| -> f64 {
        let i = head
            .iter()
            .position(|h| *h == name)
            .unwrap_or_else(|| panic!("{name} in {head:?}"));
        row[i].parse().unwrap()
    };
    (col("accuracy_iou_eq_1"), col("average_iou"))
}

fn evaluate(sm: &Smoke, preds: &Path, out: &Path) -> (f64, f64) {
    let report = ok(&[
        "evaluate",
        "--predictions",
        s(preds),
        "--truth",
        s(&sm.truth),
        "--tables",
        s(&sm.tables),
        "--threshold",
        "1.0",
        "--out",
        s(out),
    ]);
    row_values(&report)
}

#[test]
fn end_to_end_oracle_and_none_stubs() {
    let sm = smoke_set();
    let oracle = predict(
        &sm,
        |image, item| truth_for(image, item).to_string(),
        "oracle",
    );
    let (acc, iou) = evaluate(&sm, &oracle, &sm.dir.path().join("eval_oracle.jsonl"));
    assert_eq!((acc, iou), (100.0, 1.0));

    let none = predict(&sm, |_, _| "None".to_string(), "none");
    let (acc, iou) = evaluate(&sm, &none, &sm.dir.path().join("eval_none.jsonl"));
    assert_eq!((acc, iou), (0.0, 0.0));
    let recs: Vec<EvalRecord> = read_jsonl(&sm.dir.path().join("eval_none.jsonl")).unwrap();
    assert_eq!(recs.len(), 8);
    assert!(recs.iter().all(|r| !r.parse_failed && r.iou == 0.0));
}

#[test]
fn reruns_with_fixed_clock_are_byte_identical() {
    let sm = smoke_set();
    let a = predict(&sm, |image, item| truth_for(image, item).to_string(), "a");
    let b = predict(&sm, |image, item| truth_for(image, item).to_string(), "b");
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn baseline_report_and_significance() {
    let sm = smoke_set();
    let d = sm.dir.path();
    let oracle = predict(
        &sm,
        |image, item| truth_for(image, item).to_string(),
        "oracle",
    );
    evaluate(&sm, &oracle, &d.join("e1.jsonl"));
    let random = d.join("random.jsonl");
    ok(&[
        "baseline",
        "--kind",
        "random",
        "--tables",
        s(&sm.tables),
        "--pairs",
        s(&sm.pairs),
        "--seed",
        "9",
        "--out",
        s(&random),
    ]);
    ok(&[
        "evaluate",
        "--predictions",
        s(&random),
        "--truth",
        s(&sm.truth),
        "--tables",
        s(&sm.tables),
        "--out",
        s(&d.join("e2.jsonl")),
    ]);

    let csv = ok(&[
        "report",
        "--eval",
        s(&d.join("e1.jsonl")),
        s(&d.join("e2.jsonl")),
        "--format",
        "csv",
    ]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "strategy,n,accuracy_iou_eq_1,accuracy_iou_ge_0.95,accuracy_iou_ge_0.5,average_iou,parse_failures");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("random,8,") || lines[2].starts_with("random,8,"));
    assert!(
        lines.iter().any(|l| l.starts_with("structured,8,100.00,")),
        "{csv}"
    );

    let sig = ok(&[
        "significance",
        "--eval",
        s(&d.join("e1.jsonl")),
        s(&d.join("e2.jsonl")),
    ]);
    let v: serde_json::Value = serde_json::from_str(&sig).unwrap();
    assert_eq!(v["df_between"], 1);
    assert!(v["p"].as_f64().unwrap() < 0.05, "{sig}");
}

#[test]
fn gdino_baselines_read_detector_output() {
    let sm = smoke_set();
    let d = sm.dir.path();
    let dets = d.join("gdino");
    std::fs::create_dir(&dets).unwrap();
    let pairs: Vec<ItemImagePair> = read_jsonl(&sm.pairs).unwrap();
    let doc = |id: &str, boxes: &[(f64, [f64; 4])]| {
        let containers: Vec<_> = boxes
            .iter()
            .map(|(c, b)| serde_json::json!({"label": "drawer", "confidence": c, "polygon": common::rect(b[0], b[1], b[2], b[3])}))
            .collect();
        serde_json::json!({"schema_version": 1, "image_id": id, "width": 2000, "height": 1500, "containers": containers, "anchors": []})
    };
    for p in &pairs {
        let body = doc(
            &p.image_id,
            &[
                (0.3, [0.0, 0.0, 10.0, 10.0]),
                (0.9, [20.0, 20.0, 40.0, 40.0]),
            ],
        );
        std::fs::write(dets.join(format!("{}.json", p.pair_id)), body.to_string()).unwrap();
    }
    let out = d.join("gd.jsonl");
    ok(&[
        "baseline",
        "--kind",
        "gdino_item",
        "--tables",
        s(&sm.tables),
        "--pairs",
        s(&sm.pairs),
        "--detections-dir",
        s(&dets),
        "--out",
        s(&out),
    ]);
    let recs: Vec<storebench::pipeline::PredictionRecord> = read_jsonl(&out).unwrap();
    assert_eq!(recs.len(), 8);
    match &recs[0].choice {
        ContainerChoice::Polygon { polygon } => assert_eq!(polygon.bbox().x_min, 20.0),
        other => panic!("{other:?}"),
    }
    // Per-image files are missing, so every record carries an error.
    let out2 = d.join("gd2.jsonl");
    ok(&[
        "baseline",
        "--kind",
        "gdino_no_item",
        "--tables",
        s(&sm.tables),
        "--pairs",
        s(&sm.pairs),
        "--detections-dir",
        s(&dets),
        "--out",
        s(&out2),
    ]);
    let recs: Vec<storebench::pipeline::PredictionRecord> = read_jsonl(&out2).unwrap();
    assert!(recs.iter().all(|r| r.error.is_some() && r.choice.is_none()));
}

#[test]
fn consolidate_and_agreement() {
    let sm = smoke_set();
    let d = sm.dir.path();
    let pairs: Vec<ItemImagePair> = read_jsonl(&sm.pairs).unwrap();
    let at = |m: u32| Utc.with_ymd_and_hms(2026, 1, 1, 0, m, 0).unwrap();
    let rec = |p: &ItemImagePair, who: &str, k: Option<u32>, m: u32| AnnotationRecord {
        pair_id: p.pair_id.clone(),
        annotator_id: who.into(),
        choice: k.map_or(ContainerChoice::None, ContainerChoice::container),
        submitted_at: at(m),
    };
    let mut anns = Vec::new();
    for (i, p) in pairs.iter().enumerate().take(6) {
        anns.push(rec(p, "a", Some(1), i as u32));
        anns.push(rec(p, "b", Some(1), i as u32));
        anns.push(rec(
            p,
            "c",
            if i % 2 == 0 { Some(1) } else { Some(2) },
            i as u32,
        ));
    }
    anns.push(rec(&pairs[6], "a", None, 30));
    anns.push(rec(&pairs[0], "a", Some(1), 40));
    let a_path = d.join("ann.jsonl");
    write_jsonl(&a_path, &anns).unwrap();

    let gt = d.join("gt.jsonl");
    let excluded = d.join("excluded.txt");
    let out = ok(&[
        "consolidate",
        "--annotations",
        s(&a_path),
        "--pairs",
        s(&sm.pairs),
        "--out",
        s(&gt),
        "--excluded-out",
        s(&excluded),
        "--seed",
        "1",
    ]);
    assert!(out.contains("7 ground-truth labels"), "{out}");
    let truths: Vec<GroundTruth> = read_jsonl(&gt).unwrap();
    assert_eq!(
        truths
            .iter()
            .filter(|t| t.provenance == Provenance::Unanimous)
            .count(),
        3
    );
    assert_eq!(
        truths
            .iter()
            .filter(|t| t.provenance == Provenance::Majority)
            .count(),
        3
    );
    assert_eq!(
        truths
            .iter()
            .filter(|t| t.provenance == Provenance::Single)
            .count(),
        1
    );
    assert_eq!(
        std::fs::read_to_string(&excluded).unwrap(),
        format!("{}\n", pairs[7].pair_id)
    );

    let out = ok(&[
        "agreement",
        "--annotations",
        s(&a_path),
        "--pairs",
        s(&sm.pairs),
        "--tables",
        s(&sm.tables),
    ]);
    assert!(out.starts_with("all\tsubjects=6\tkappa="), "{out}");
    let per = ok(&[
        "agreement",
        "--annotations",
        s(&a_path),
        "--pairs",
        s(&sm.pairs),
        "--tables",
        s(&sm.tables),
        "--per-item",
    ]);
    assert!(per.lines().count() >= 3, "{per}");
}

#[test]
fn describe_and_prompt_match_golden() {
    for scene in ["example2", "example3"] {
        let det = fixture(&format!("{scene}_detections.json"));
        assert_eq!(
            ok(&["describe", "--detections", s(&det)]),
            golden(&format!("describe__{scene}.txt"))
        );
        let out = ok(&[
            "prompt",
            "--detections",
            s(&det),
            "--strategy",
            "story",
            "--item",
            "Mug",
        ]);
        assert_eq!(
            out.trim_end(),
            golden(&format!("story__{scene}__mug.txt")).trim_end()
        );
    }
    let dir = tempfile::tempdir().unwrap();
    let t = tables(dir.path());
    assert_eq!(
        ok(&["describe", "--tables", s(&t), "--image-id", "example3"]),
        golden("describe__example3.txt")
    );
    let json = ok(&[
        "prompt",
        "--tables",
        s(&t),
        "--image-id",
        "example2",
        "--strategy",
        "structured",
        "--item",
        "Fork",
        "--json",
    ]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(
        v["user_text"],
        golden("structured_user__example2__fork.txt")
    );
}

#[test]
fn every_subcommand_has_help() {
    for sub in [
        "ingest",
        "features",
        "describe",
        "prompt",
        "predict",
        "baseline",
        "consolidate",
        "agreement",
        "evaluate",
        "analyze-thresholds",
        "significance",
        "report",
        "sample-pairs",
        "serve",
    ] {
        let r = run(&[sub, "--help"], &[]);
        assert_eq!(r.code, 0, "{sub}");
        assert!(r.stdout.contains("Usage:"), "{sub}");
    }
    assert_eq!(run(&["--help"], &[]).code, 0);
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["no-such-command"], &[]).code, 1);
    assert_eq!(run(&["describe"], &[]).code, 1);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"schema_version\": 1, \"image_id\": ").unwrap();
    let r = run(&["describe", "--detections", s(&bad)], &[]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("bad.json"), "{}", r.stderr);
    assert_eq!(
        run(
            &[
                "describe",
                "--detections",
                s(&dir.path().join("missing.json"))
            ],
            &[]
        )
        .code,
        2
    );
    // Unset key variable is a configuration problem.
    let sm = smoke_set();
    let cfg = endpoint(sm.dir.path(), "http://127.0.0.1:9", "e.toml");
    let r = run(
        &[
            "predict",
            "--strategy",
            "structured",
            "--endpoint-config",
            s(&cfg),
            "--tables",
            s(&sm.tables),
            "--pairs",
            s(&sm.pairs),
            "--out",
            s(&sm.dir.path().join("p.jsonl")),
        ],
        &[],
    );
    assert_eq!(r.code, 1, "{}", r.stderr);
    assert!(r.stderr.contains("SB_CLI_TEST_KEY"));
}

#[test]
fn analyze_thresholds_command() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("q.jsonl");
    let lines = [
        r#"{"pair_id":"a","iou":0.05,"human_score":0}"#,
        r#"{"pair_id":"b","iou":0.17,"human_score":0}"#,
        r#"{"pair_id":"c","iou":0.365,"human_score":1}"#,
        r#"{"pair_id":"d","iou":0.8,"human_score":1}"#,
    ];
    std::fs::write(&p, lines.join("\n")).unwrap();
    let v: serde_json::Value =
        serde_json::from_str(&ok(&["analyze-thresholds", "--records", s(&p)])).unwrap();
    assert_eq!(
        v["cutoff_interval"],
        serde_json::json!({"low": 0.17, "high": 0.365})
    );
}
