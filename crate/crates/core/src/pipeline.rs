//! Runs a prompting strategy over item-image pairs: prompt, query, parse,
//! map the answer to a polygon, and append a record. Output order is the
//! input pair order regardless of how many workers run, and progress is
//! checkpointed so an interrupted run resumes where it stopped.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::choice::{
    extract_bbox_choice, extract_container_choice, ContainerChoice, Extracted, ParseStatus,
};
use crate::clock::Clock;
use crate::dataset::ItemImagePair;
use crate::error::{Error, Result};
use crate::gateway::{CompletionRequest, ImagePayload, Responder};
use crate::geometry::Polygon;
use crate::prompts::{build_prompt, PromptStrategy};
use crate::scene::ContainerTable;
use crate::verbalize::describe_scene;

pub const DEFAULT_CHECKPOINT_EVERY: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub pair_id: String,
    pub image_id: String,
    pub item: String,
    pub strategy: String,
    pub choice: ContainerChoice,
    pub raw_text: String,
    /// Set only for a container id that exists in the table.
    pub resolved_polygon: Option<Polygon>,
    #[serde(default)]
    pub unparsed: bool,
    #[serde(default)]
    pub fallback_parse: bool,
    #[serde(default)]
    pub out_of_range: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub timestamp: DateTime<Utc>,
}

impl PredictionRecord {
    /// True when the answer could not be read, including failed calls.
    pub fn parse_failed(&self) -> bool {
        self.unparsed || self.error.is_some()
    }
}

/// Builds a record from an extracted answer, applying the range check:
/// ids missing from the table become `none` with `out_of_range` set.
pub fn make_record(
    pair: &ItemImagePair,
    table: Option<&ContainerTable>,
    strategy: &str,
    extracted: Extracted,
    raw_text: String,
    timestamp: DateTime<Utc>,
) -> PredictionRecord {
    let mut choice = extracted.choice;
    let mut out_of_range = false;
    let mut resolved_polygon = None;
    if let ContainerChoice::ContainerId { container_local_id } = choice {
        match table.and_then(|t| t.container(container_local_id)) {
            Some(c) => resolved_polygon = Some(c.polygon.clone()),
            None => {
                choice = ContainerChoice::None;
                out_of_range = true;
            }
        }
    }
    PredictionRecord {
        pair_id: pair.pair_id.clone(),
        image_id: pair.image_id.clone(),
        item: pair.item.clone(),
        strategy: strategy.to_string(),
        choice,
        raw_text,
        resolved_polygon,
        unparsed: extracted.status == ParseStatus::Unparsed,
        fallback_parse: extracted.status == ParseStatus::Fallback,
        out_of_range,
        error: None,
        timestamp,
    }
}

fn error_record(
    pair: &ItemImagePair,
    strategy: &str,
    err: String,
    timestamp: DateTime<Utc>,
) -> PredictionRecord {
    PredictionRecord {
        pair_id: pair.pair_id.clone(),
        image_id: pair.image_id.clone(),
        item: pair.item.clone(),
        strategy: strategy.to_string(),
        choice: ContainerChoice::None,
        raw_text: String::new(),
        resolved_polygon: None,
        unparsed: false,
        fallback_parse: false,
        out_of_range: false,
        error: Some(err),
        timestamp,
    }
}

fn is_image_strategy(s: PromptStrategy) -> bool {
    matches!(
        s,
        PromptStrategy::BboxGemini | PromptStrategy::BboxOpenaiStyle | PromptStrategy::Kosmos
    )
}

/// Strategies that go through a language-model endpoint.
pub fn check_strategy(s: PromptStrategy) -> Result<()> {
    match s {
        PromptStrategy::Gdino | PromptStrategy::GdinoNoItem => Err(Error::InvalidInput(format!(
            "strategy `{s}` is a detector baseline; use the baseline command"
        ))),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub strategy: PromptStrategy,
    pub workers: usize,
    pub checkpoint_every: usize,
    /// Root for the tables' relative `image_path`s.
    pub images_dir: Option<PathBuf>,
    /// Stop after this many records are written in total, without a final
    /// checkpoint. Simulates an interruption.
    pub stop_after: Option<usize>,
}

impl RunConfig {
    pub fn new(strategy: PromptStrategy) -> Self {
        Self {
            strategy,
            workers: 1,
            checkpoint_every: DEFAULT_CHECKPOINT_EVERY,
            images_dir: None,
            stop_after: None,
        }
    }
}

pub struct Predictor<'a> {
    pub tables: &'a BTreeMap<&'a str, &'a ContainerTable>,
    pub responder: &'a dyn Responder,
    pub clock: &'a dyn Clock,
    pub config: &'a RunConfig,
}

impl Predictor<'_> {
    pub fn predict(&self, pair: &ItemImagePair) -> PredictionRecord {
        let strategy = self.config.strategy;
        let tag = strategy.as_str();
        match self.try_predict(pair) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("pair {} failed: {e}", pair.pair_id);
                error_record(pair, tag, e.to_string(), self.clock.wall())
            }
        }
    }

    fn try_predict(&self, pair: &ItemImagePair) -> Result<PredictionRecord> {
        let strategy = self.config.strategy;
        let table = *self.tables.get(pair.image_id.as_str()).ok_or_else(|| {
            Error::NotFound(format!("container table for image {}", pair.image_id))
        })?;
        if !table.featurized {
            return Err(Error::InvalidInput(format!(
                "table for image {} is not featurized",
                pair.image_id
            )));
        }
        let image = if is_image_strategy(strategy) {
            let rel = table.image_path.as_deref().ok_or_else(|| {
                Error::InvalidInput(format!("image {} has no image_path", pair.image_id))
            })?;
            let path = match &self.config.images_dir {
                Some(dir) => dir.join(rel),
                None => PathBuf::from(rel),
            };
            Some(ImagePayload::from_file(&path)?)
        } else {
            None
        };
        let descriptions = if is_image_strategy(strategy) {
            Vec::new()
        } else {
            describe_scene(table)?
        };
        let bundle = build_prompt(strategy, &pair.item, &descriptions)?;
        let response = self.responder.respond(&CompletionRequest {
            system_text: bundle.system_text,
            user_text: bundle.user_text,
            image,
        })?;
        let extracted = if is_image_strategy(strategy) {
            extract_bbox_choice(&response.raw_text)
        } else {
            extract_container_choice(&response.raw_text)
        };
        Ok(make_record(
            pair,
            Some(table),
            strategy.as_str(),
            extracted,
            response.raw_text,
            self.clock.wall(),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub strategy: String,
    /// Records written, in pair order.
    pub completed: usize,
    /// Length of the predictions file covering those records.
    pub bytes: u64,
    /// SHA-256 of those bytes.
    pub sha256: String,
    /// SHA-256 of the pair id sequence, so a checkpoint is never applied to
    /// a different pair list.
    pub pairs_hash: String,
}

pub fn pairs_hash(pairs: &[ItemImagePair]) -> String {
    let mut h = Sha256::new();
    for p in pairs {
        h.update(p.pair_id.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunPaths {
    pub predictions: PathBuf,
    pub checkpoint: PathBuf,
}

impl RunPaths {
    /// Checkpoint next to the predictions file: `preds.jsonl.checkpoint.json`.
    pub fn beside(predictions: &Path) -> Self {
        let mut name = predictions.file_name().unwrap_or_default().to_os_string();
        name.push(".checkpoint.json");
        Self {
            predictions: predictions.to_path_buf(),
            checkpoint: predictions.with_file_name(name),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RunSummary {
    pub total: usize,
    /// Records produced in this run.
    pub processed: usize,
    /// Records already present from an earlier run.
    pub skipped: usize,
    /// Record counts at which checkpoints were written in this run.
    pub checkpoints: Vec<usize>,
    pub errors: usize,
    pub interrupted: bool,
}

/// Works out how much of an existing predictions file can be kept: the
/// checkpointed prefix (verified by hash) plus any complete, valid records
/// after it that continue the pair sequence. Returns (records, bytes).
fn recover(
    pairs: &[ItemImagePair],
    strategy: &str,
    paths: &RunPaths,
) -> Result<(usize, u64, Sha256, usize)> {
    let data = match fs::read(&paths.predictions) {
        Ok(d) => d,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(crate::io::with_path(e, &paths.predictions)),
    };
    let (mut count, mut offset) = (0usize, 0usize);
    let mut errors = 0;
    if paths.checkpoint.exists() {
        let cp: Checkpoint = crate::io::read_json(&paths.checkpoint)?;
        if cp.pairs_hash != pairs_hash(pairs) {
            return Err(Error::Checkpoint(
                "pair list differs from the checkpointed run".into(),
            ));
        }
        if cp.strategy != strategy {
            return Err(Error::Checkpoint(format!(
                "checkpoint is for strategy `{}`, not `{strategy}`",
                cp.strategy
            )));
        }
        let end = usize::try_from(cp.bytes).unwrap_or(usize::MAX);
        if end > data.len() || hex::encode(Sha256::digest(&data[..end])) != cp.sha256 {
            return Err(Error::Checkpoint(
                "predictions file does not match the checkpoint hash".into(),
            ));
        }
        count = cp.completed;
        offset = end;
        for line in data[..end].split(|&b| b == b'\n').filter(|l| !l.is_empty()) {
            if serde_json::from_slice::<PredictionRecord>(line).is_ok_and(|r| r.error.is_some()) {
                errors += 1;
            }
        }
    }
    while count < pairs.len() {
        let rest = &data[offset..];
        let Some(nl) = rest.iter().position(|&b| b == b'\n') else {
            break;
        };
        match serde_json::from_slice::<PredictionRecord>(&rest[..nl]) {
            Ok(r) if r.pair_id == pairs[count].pair_id && r.strategy == strategy => {
                if r.error.is_some() {
                    errors += 1;
                }
                count += 1;
                offset += nl + 1;
            }
            _ => break,
        }
    }
    let mut hasher = Sha256::new();
    hasher.update(&data[..offset]);
    Ok((count, offset as u64, hasher, errors))
}

fn write_checkpoint(
    paths: &RunPaths,
    strategy: &str,
    completed: usize,
    bytes: u64,
    hasher: &Sha256,
    pairs_hash: &str,
) -> Result<()> {
    let cp = Checkpoint {
        strategy: strategy.to_string(),
        completed,
        bytes,
        sha256: hex::encode(hasher.clone().finalize()),
        pairs_hash: pairs_hash.to_string(),
    };
    let mut text = serde_json::to_string_pretty(&cp)?;
    text.push('\n');
    crate::io::write_atomic(&paths.checkpoint, text.as_bytes())
}

/// Runs `predictor` over `pairs`, appending to the predictions file.
/// Without `resume` any existing output is replaced.
pub fn run_predictions(
    pairs: &[ItemImagePair],
    predictor: &Predictor<'_>,
    paths: &RunPaths,
    resume: bool,
) -> Result<RunSummary> {
    let cfg = predictor.config;
    check_strategy(cfg.strategy)?;
    let mut seen = HashMap::with_capacity(pairs.len());
    for p in pairs {
        if seen.insert(p.pair_id.as_str(), ()).is_some() {
            return Err(Error::InvalidInput(format!(
                "duplicate pair id {}",
                p.pair_id
            )));
        }
    }
    let strategy = cfg.strategy.as_str();
    let every = cfg.checkpoint_every.max(1);
    let hash_of_pairs = pairs_hash(pairs);

    let (start, mut bytes, mut hasher, prior_errors) = if resume {
        recover(pairs, strategy, paths)?
    } else {
        let _ = fs::remove_file(&paths.checkpoint);
        (0, 0, Sha256::new(), 0)
    };
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .truncate(false)
        .open(&paths.predictions)
        .map_err(|e| crate::io::with_path(e, &paths.predictions))?;
    file.set_len(bytes)?;
    let mut out = BufWriter::new(append_at_end(file)?);

    let mut summary = RunSummary {
        total: pairs.len(),
        skipped: start,
        errors: prior_errors,
        ..Default::default()
    };
    if start > 0 {
        log::info!("resuming after {start} completed pairs");
    }
    let limit = cfg.stop_after.unwrap_or(usize::MAX).max(start);
    let end = pairs.len().min(limit);
    let next = AtomicUsize::new(start);
    let stop = AtomicBool::new(false);
    let workers = cfg.workers.max(1);

    let mut written = start;
    let write_result: Result<()> = std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<(usize, PredictionRecord)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, stop) = (&next, &stop);
            scope.spawn(move || loop {
                if stop.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= end {
                    break;
                }
                let record = predictor.predict(&pairs[i]);
                if tx.send((i, record)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut pending: BTreeMap<usize, PredictionRecord> = BTreeMap::new();
        let result = (|| {
            for (i, record) in rx.iter() {
                pending.insert(i, record);
                while let Some(record) = pending.remove(&written) {
                    let mut line = serde_json::to_vec(&record)?;
                    line.push(b'\n');
                    // Flushed per record so a killed run loses at most the
                    // line being written; fsync waits for checkpoints.
                    out.write_all(&line)?;
                    out.flush()?;
                    hasher.update(&line);
                    bytes += line.len() as u64;
                    written += 1;
                    summary.processed += 1;
                    if record.error.is_some() {
                        summary.errors += 1;
                    }
                    if written % every == 0 {
                        out.flush()?;
                        out.get_ref().sync_data()?;
                        write_checkpoint(paths, strategy, written, bytes, &hasher, &hash_of_pairs)?;
                        summary.checkpoints.push(written);
                    }
                }
            }
            Ok(())
        })();
        stop.store(true, Ordering::Relaxed);
        result
    });
    write_result?;
    out.flush()?;
    out.get_ref().sync_data()?;

    if written < pairs.len() {
        summary.interrupted = true;
        return Ok(summary);
    }
    if summary.checkpoints.last() != Some(&written) {
        write_checkpoint(paths, strategy, written, bytes, &hasher, &hash_of_pairs)?;
        summary.checkpoints.push(written);
    }
    Ok(summary)
}

fn append_at_end(mut file: File) -> Result<File> {
    use std::io::{Seek, SeekFrom};
    file.seek(SeekFrom::End(0))?;
    Ok(file)
}
