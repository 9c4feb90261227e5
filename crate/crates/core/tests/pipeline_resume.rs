//! Checkpointing and resume of the prediction pipeline.

mod common;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use common::example_scene;
use storebench::clock::ManualClock;
use storebench::dataset::ItemImagePair;
use storebench::gateway::{CompletionRequest, CompletionResponse, Responder};
use storebench::pipeline::{
    run_predictions, Checkpoint, PredictionRecord, Predictor, RunConfig, RunPaths,
};
use storebench::prompts::PromptStrategy;
use storebench::scene::ContainerTable;
use storebench::Error;

/// Answers with a container id derived from the item text, failing for any
/// item containing "broken".
struct Scripted {
    calls: AtomicUsize,
}

impl Responder for Scripted {
    fn respond(&self, req: &CompletionRequest) -> storebench::Result<CompletionResponse> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        if req.user_text.contains("broken") {
            return Err(Error::Delivery {
                attempts: 4,
                last: "HTTP 500".into(),
            });
        }
        let n = req.user_text.bytes().map(u32::from).sum::<u32>() % 4;
        let answer = if n == 0 {
            "none".to_string()
        } else {
            n.to_string()
        };
        Ok(CompletionResponse {
            raw_text: format!("Item: x\nBest container: {answer}\nReasoning: r"),
            latency: 0.0,
            attempt_count: 1,
        })
    }
}

fn pairs(n: usize) -> Vec<ItemImagePair> {
    (0..n)
        .map(|i| ItemImagePair::new("example2", format!("item {i}")))
        .collect()
}

struct Fixture {
    table: ContainerTable,
    clock: ManualClock,
    responder: Scripted,
}

impl Fixture {
    fn new() -> Self {
        Self {
            table: example_scene("example2"),
            clock: ManualClock::new(),
            responder: Scripted {
                calls: AtomicUsize::new(0),
            },
        }
    }

    fn run(
        &self,
        pairs: &[ItemImagePair],
        paths: &RunPaths,
        workers: usize,
        stop_after: Option<usize>,
        resume: bool,
    ) -> storebench::Result<storebench::pipeline::RunSummary> {
        let tables: BTreeMap<&str, &ContainerTable> = [("example2", &self.table)].into();
        let mut cfg = RunConfig::new(PromptStrategy::Structured);
        cfg.workers = workers;
        cfg.stop_after = stop_after;
        let predictor = Predictor {
            tables: &tables,
            responder: &self.responder,
            clock: &self.clock,
            config: &cfg,
        };
        run_predictions(pairs, &predictor, paths, resume)
    }
}

fn paths(dir: &std::path::Path, name: &str) -> RunPaths {
    RunPaths::beside(&dir.join(name))
}

#[test]
fn checkpoints_every_fifty_and_at_end() {
    let dir = tempfile::tempdir().unwrap();
    let f = Fixture::new();
    let p = paths(dir.path(), "full.jsonl");
    let s = f.run(&pairs(120), &p, 1, None, false).unwrap();
    assert_eq!(s.checkpoints, vec![50, 100, 120]);
    assert_eq!((s.processed, s.skipped, s.errors), (120, 0, 0));
    assert!(!s.interrupted);
    let cp: Checkpoint =
        serde_json::from_str(&std::fs::read_to_string(&p.checkpoint).unwrap()).unwrap();
    assert_eq!(cp.completed, 120);
    assert_eq!(cp.bytes, std::fs::metadata(&p.predictions).unwrap().len());
    let recs: Vec<PredictionRecord> = storebench::io::read_jsonl(&p.predictions).unwrap();
    let ids: Vec<_> = recs.iter().map(|r| r.pair_id.clone()).collect();
    assert_eq!(
        ids,
        pairs(120)
            .into_iter()
            .map(|p| p.pair_id)
            .collect::<Vec<_>>()
    );
}

#[test]
fn interrupted_run_resumes_to_identical_output() {
    let dir = tempfile::tempdir().unwrap();
    let all = pairs(120);

    let reference = Fixture::new();
    let full = paths(dir.path(), "full.jsonl");
    reference.run(&all, &full, 1, None, false).unwrap();

    let f = Fixture::new();
    let p = paths(dir.path(), "cut.jsonl");
    let first = f.run(&all, &p, 4, Some(60), false).unwrap();
    assert!(first.interrupted);
    assert_eq!(first.processed, 60);
    assert_eq!(first.checkpoints, vec![50]);
    let calls_before = f.responder.calls.load(Ordering::Relaxed);

    let second = f.run(&all, &p, 4, None, true).unwrap();
    assert_eq!(second.skipped, 60);
    assert_eq!(second.processed, 60);
    assert_eq!(second.checkpoints, vec![100, 120]);
    assert_eq!(f.responder.calls.load(Ordering::Relaxed) - calls_before, 60);
    assert_eq!(
        std::fs::read(&p.predictions).unwrap(),
        std::fs::read(&full.predictions).unwrap()
    );
}

#[test]
fn torn_tail_is_discarded_on_resume() {
    let dir = tempfile::tempdir().unwrap();
    let all = pairs(70);
    let f = Fixture::new();
    let p = paths(dir.path(), "torn.jsonl");
    f.run(&all, &p, 1, Some(55), false).unwrap();
    let mut bytes = std::fs::read(&p.predictions).unwrap();
    bytes.extend_from_slice(b"{\"pair_id\":\"half-writ");
    std::fs::write(&p.predictions, &bytes).unwrap();

    let s = f.run(&all, &p, 2, None, true).unwrap();
    assert_eq!(s.skipped, 55);
    let recs: Vec<PredictionRecord> = storebench::io::read_jsonl(&p.predictions).unwrap();
    assert_eq!(recs.len(), 70);
}

#[test]
fn resume_rejects_a_different_pair_list() {
    let dir = tempfile::tempdir().unwrap();
    let f = Fixture::new();
    let p = paths(dir.path(), "x.jsonl");
    f.run(&pairs(60), &p, 1, None, false).unwrap();
    assert!(matches!(
        f.run(&pairs(61), &p, 1, None, true),
        Err(Error::Checkpoint(_))
    ));
}

#[test]
fn resume_rejects_a_tampered_prefix() {
    let dir = tempfile::tempdir().unwrap();
    let f = Fixture::new();
    let p = paths(dir.path(), "x.jsonl");
    f.run(&pairs(60), &p, 1, Some(55), false).unwrap();
    let text = std::fs::read_to_string(&p.predictions)
        .unwrap()
        .replacen("item 0", "item Z", 1);
    std::fs::write(&p.predictions, text).unwrap();
    assert!(matches!(
        f.run(&pairs(60), &p, 1, None, true),
        Err(Error::Checkpoint(_))
    ));
}

#[test]
fn failed_calls_become_error_records() {
    let dir = tempfile::tempdir().unwrap();
    let f = Fixture::new();
    let p = paths(dir.path(), "err.jsonl");
    let mut list = pairs(5);
    list.push(ItemImagePair::new("example2", "broken kettle"));
    list.push(ItemImagePair::new("missing-image", "fork"));
    let s = f.run(&list, &p, 3, None, false).unwrap();
    assert_eq!(s.errors, 2);
    let recs: Vec<PredictionRecord> = storebench::io::read_jsonl(&p.predictions).unwrap();
    assert_eq!(recs.len(), 7);
    assert!(recs[5].error.as_deref().unwrap().contains("HTTP 500"));
    assert!(recs[5].choice.is_none() && recs[5].parse_failed());
    assert!(recs[6].error.is_some());
}

#[test]
fn duplicate_pairs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let f = Fixture::new();
    let mut list = pairs(3);
    list.push(list[0].clone());
    let r = f.run(&list, &paths(dir.path(), "d.jsonl"), 1, None, false);
    assert!(matches!(r, Err(Error::InvalidInput(_))));
}
