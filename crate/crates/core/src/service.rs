//! HTTP backend for the annotation tool.
//!
//! A data directory holds the batch:
//!
//! ```text
//! tables.json         container tables (written by `features`)
//! pairs.jsonl         item-image pairs
//! assignments.json    {"annotator": ["pair_id", ...], ...}
//! annotations.jsonl   appended on every submit
//! conflicts.jsonl     resubmissions that changed the answer
//! images/             image files, addressed by the tables' image_path
//! ```
//!
//! Routes: `GET /api/tasks/next?annotator=ID`, `POST /api/annotations`,
//! `GET /api/progress?annotator=ID`, `GET /images/{image_id}`.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::choice::ContainerChoice;
use crate::clock::Clock;
use crate::dataset::{AnnotationRecord, Conflict, ItemImagePair};
use crate::error::{Error, Result};
use crate::geometry::Polygon;
use crate::io::{read_json, read_jsonl, with_path};
use crate::scene::{ContainerTable, TableSet};

pub const TABLES_FILE: &str = "tables.json";
pub const PAIRS_FILE: &str = "pairs.jsonl";
pub const ASSIGNMENTS_FILE: &str = "assignments.json";
pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";
pub const CONFLICTS_FILE: &str = "conflicts.jsonl";
pub const IMAGES_DIR: &str = "images";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskContainer {
    pub local_id: u32,
    pub label: String,
    pub polygon: Polygon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NextTask {
    Task {
        pair_id: String,
        item: String,
        image_id: String,
        image_url: String,
        image_width: u32,
        image_height: u32,
        containers: Vec<TaskContainer>,
    },
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub annotator_id: String,
    pub pair_id: String,
    pub choice: ContainerChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub status: String,
    /// True when this replaced an earlier, different answer.
    pub conflict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub answered: usize,
    pub remaining: usize,
    pub total: usize,
}

struct Log {
    annotations: File,
    conflicts: File,
    /// annotator -> pair -> latest record.
    latest: HashMap<String, HashMap<String, AnnotationRecord>>,
}

pub struct AnnotationStore {
    root: PathBuf,
    tables: BTreeMap<String, ContainerTable>,
    pairs: BTreeMap<String, ItemImagePair>,
    assignments: BTreeMap<String, Vec<String>>,
    log: Mutex<Log>,
    clock: Arc<dyn Clock>,
}

/// Drops a torn final line (no newline) left by a crash mid-append.
fn open_log(path: &Path) -> Result<File> {
    let mut f = OpenOptions::new()
        .create(true)
        .read(true)
        .append(true)
        .open(path)
        .map_err(|e| with_path(e, path))?;
    let mut data = Vec::new();
    f.read_to_end(&mut data)?;
    if !data.is_empty() && !data.ends_with(b"\n") {
        let keep = data.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        log::warn!("{}: dropping torn trailing line", path.display());
        f.set_len(keep as u64)?;
        f.seek(SeekFrom::End(0))?;
    }
    Ok(f)
}

impl AnnotationStore {
    pub fn open(root: &Path, clock: Arc<dyn Clock>) -> Result<Self> {
        let text = std::fs::read_to_string(root.join(TABLES_FILE))
            .map_err(|e| with_path(e, &root.join(TABLES_FILE)))?;
        let set = TableSet::parse(&text, &root.join(TABLES_FILE))?;
        let tables: BTreeMap<String, ContainerTable> = set
            .tables
            .into_iter()
            .map(|t| (t.image_id.clone(), t))
            .collect();
        let pairs: BTreeMap<String, ItemImagePair> =
            read_jsonl::<ItemImagePair>(&root.join(PAIRS_FILE))?
                .into_iter()
                .map(|p| (p.pair_id.clone(), p))
                .collect();
        let assignments: BTreeMap<String, Vec<String>> = read_json(&root.join(ASSIGNMENTS_FILE))?;
        for (annotator, ids) in &assignments {
            for id in ids {
                let pair = pairs.get(id).ok_or_else(|| {
                    Error::DataIntegrity(format!("{annotator} is assigned unknown pair {id}"))
                })?;
                if !tables.contains_key(&pair.image_id) {
                    return Err(Error::DataIntegrity(format!(
                        "pair {id} refers to image {} with no table",
                        pair.image_id
                    )));
                }
            }
        }
        let ann_path = root.join(ANNOTATIONS_FILE);
        let annotations = open_log(&ann_path)?;
        let conflicts = open_log(&root.join(CONFLICTS_FILE))?;
        let mut latest: HashMap<String, HashMap<String, AnnotationRecord>> = HashMap::new();
        for r in read_jsonl::<AnnotationRecord>(&ann_path)? {
            latest
                .entry(r.annotator_id.clone())
                .or_default()
                .insert(r.pair_id.clone(), r);
        }
        Ok(Self {
            root: root.to_path_buf(),
            tables,
            pairs,
            assignments,
            log: Mutex::new(Log {
                annotations,
                conflicts,
                latest,
            }),
            clock,
        })
    }

    fn queue(&self, annotator: &str) -> Result<&[String]> {
        self.assignments
            .get(annotator)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::NotFound(format!("annotator {annotator}")))
    }

    pub fn next_task(&self, annotator: &str) -> Result<NextTask> {
        let queue = self.queue(annotator)?;
        let log = self.log.lock().expect("store poisoned");
        let answered = log.latest.get(annotator);
        let next = queue
            .iter()
            .find(|id| answered.is_none_or(|a| !a.contains_key(*id)));
        let Some(pair_id) = next else {
            return Ok(NextTask::Done);
        };
        let pair = &self.pairs[pair_id];
        let table = &self.tables[&pair.image_id];
        Ok(NextTask::Task {
            pair_id: pair.pair_id.clone(),
            item: pair.item.clone(),
            image_id: pair.image_id.clone(),
            image_url: format!("/images/{}", pair.image_id),
            image_width: table.image_width,
            image_height: table.image_height,
            containers: table
                .containers
                .iter()
                .map(|c| TaskContainer {
                    local_id: c.local_id,
                    label: c
                        .label
                        .map_or_else(|| c.raw_label.clone(), |l| l.words().to_string()),
                    polygon: c.polygon.clone(),
                })
                .collect(),
        })
    }

    /// Appends the answer and syncs it to disk before returning.
    pub fn submit(&self, s: &Submission) -> Result<Ack> {
        let queue = self.queue(&s.annotator_id)?;
        let pair = self
            .pairs
            .get(&s.pair_id)
            .ok_or_else(|| Error::NotFound(format!("pair {}", s.pair_id)))?;
        if !queue.contains(&s.pair_id) {
            return Err(Error::Forbidden(format!(
                "pair {} is not assigned to {}",
                s.pair_id, s.annotator_id
            )));
        }
        let table = &self.tables[&pair.image_id];
        match &s.choice {
            ContainerChoice::None => {}
            ContainerChoice::ContainerId { container_local_id } => {
                if table.container(*container_local_id).is_none() {
                    return Err(Error::InvalidInput(format!(
                        "container {container_local_id} does not exist; image {} has {}",
                        pair.image_id,
                        table.len()
                    )));
                }
            }
            _ => {
                return Err(Error::InvalidInput(
                    "choice must be a container id or none".into(),
                ))
            }
        }
        let record = AnnotationRecord {
            pair_id: s.pair_id.clone(),
            annotator_id: s.annotator_id.clone(),
            choice: s.choice.clone(),
            submitted_at: self.clock.wall(),
        };
        let mut log = self.log.lock().expect("store poisoned");
        let previous = log
            .latest
            .get(&s.annotator_id)
            .and_then(|m| m.get(&s.pair_id))
            .cloned();
        let mut line = serde_json::to_vec(&record)?;
        line.push(b'\n');
        log.annotations.write_all(&line)?;
        log.annotations.sync_data()?;
        let conflict = previous.as_ref().is_some_and(|p| p.choice != record.choice);
        if let Some(prev) = previous.filter(|_| conflict) {
            let entry = Conflict {
                pair_id: s.pair_id.clone(),
                annotator_id: s.annotator_id.clone(),
                kept: record.clone(),
                dropped: vec![prev],
            };
            let mut line = serde_json::to_vec(&entry)?;
            line.push(b'\n');
            log.conflicts.write_all(&line)?;
            log.conflicts.sync_data()?;
        }
        log.latest
            .entry(s.annotator_id.clone())
            .or_default()
            .insert(s.pair_id.clone(), record);
        Ok(Ack {
            status: "ok".into(),
            conflict,
        })
    }

    pub fn progress(&self, annotator: &str) -> Result<Progress> {
        let queue = self.queue(annotator)?;
        let log = self.log.lock().expect("store poisoned");
        let answered = log
            .latest
            .get(annotator)
            .map_or(0, |m| queue.iter().filter(|id| m.contains_key(*id)).count());
        Ok(Progress {
            answered,
            remaining: queue.len() - answered,
            total: queue.len(),
        })
    }

    /// Image bytes and media type. Paths escaping `images/` are refused.
    pub fn image(&self, image_id: &str) -> Result<(Vec<u8>, &'static str)> {
        let table = self
            .tables
            .get(image_id)
            .ok_or_else(|| Error::NotFound(format!("image {image_id}")))?;
        let rel = table
            .image_path
            .as_deref()
            .ok_or_else(|| Error::NotFound(format!("image {image_id} has no file")))?;
        let rel = Path::new(rel);
        if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
            return Err(Error::Forbidden(format!("image path {}", rel.display())));
        }
        let path = self.root.join(IMAGES_DIR).join(rel);
        let bytes = std::fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => {
                Error::NotFound(format!("image file {}", path.display()))
            }
            _ => with_path(e, &path),
        })?;
        let media = match rel
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("png") => "image/png",
            Some("webp") => "image/webp",
            Some("gif") => "image/gif",
            _ => "image/jpeg",
        };
        Ok((bytes, media))
    }
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
}

struct ApiError(Error);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::Forbidden(_) => StatusCode::FORBIDDEN,
            e if e.is_validation() => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (
            status,
            Json(ErrorBody {
                error: self.0.to_string(),
            }),
        )
            .into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

#[derive(Debug, Deserialize)]
struct AnnotatorQuery {
    annotator: String,
}

async fn next_task(
    State(store): State<Arc<AnnotationStore>>,
    Query(q): Query<AnnotatorQuery>,
) -> std::result::Result<Json<NextTask>, ApiError> {
    Ok(Json(store.next_task(&q.annotator)?))
}

async fn submit(
    State(store): State<Arc<AnnotationStore>>,
    body: std::result::Result<Json<Submission>, axum::extract::rejection::JsonRejection>,
) -> std::result::Result<Json<Ack>, ApiError> {
    let Json(s) = body.map_err(|e| Error::InvalidInput(e.body_text()))?;
    let store = store.clone();
    let ack = tokio::task::spawn_blocking(move || store.submit(&s))
        .await
        .map_err(|e| Error::InvalidInput(format!("submit task failed: {e}")))??;
    Ok(Json(ack))
}

async fn progress(
    State(store): State<Arc<AnnotationStore>>,
    Query(q): Query<AnnotatorQuery>,
) -> std::result::Result<Json<Progress>, ApiError> {
    Ok(Json(store.progress(&q.annotator)?))
}

async fn image(
    State(store): State<Arc<AnnotationStore>>,
    UrlPath(image_id): UrlPath<String>,
) -> std::result::Result<Response, ApiError> {
    let (bytes, media) = store.image(&image_id)?;
    Ok(([(header::CONTENT_TYPE, media)], bytes).into_response())
}

pub fn router(store: Arc<AnnotationStore>) -> Router {
    Router::new()
        .route("/api/tasks/next", get(next_task))
        .route("/api/annotations", post(submit))
        .route("/api/progress", get(progress))
        .route("/images/{image_id}", get(image))
        .with_state(store)
}

/// Serves until the process is stopped.
pub async fn serve(store: Arc<AnnotationStore>, addr: SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("annotation service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(store)).await?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use crate::test_support::table_with;

    fn fixture(dir: &Path) -> (Vec<ItemImagePair>, Arc<AnnotationStore>) {
        let mut t = table_with("img", 12);
        t.image_path = Some("img.png".into());
        std::fs::write(
            dir.join(TABLES_FILE),
            serde_json::to_string(&TableSet::new(vec![t])).unwrap(),
        )
        .unwrap();
        let pairs: Vec<_> = ["mug", "pan", "pot"]
            .iter()
            .map(|i| ItemImagePair::new("img", *i))
            .collect();
        crate::io::write_jsonl(&dir.join(PAIRS_FILE), &pairs).unwrap();
        let ids: Vec<String> = pairs.iter().map(|p| p.pair_id.clone()).collect();
        let assignments: BTreeMap<String, Vec<String>> = [
            ("ann".to_string(), ids.clone()),
            ("other".to_string(), ids[..1].to_vec()),
        ]
        .into();
        crate::io::write_json(&dir.join(ASSIGNMENTS_FILE), &assignments).unwrap();
        std::fs::create_dir(dir.join(IMAGES_DIR)).unwrap();
        std::fs::write(dir.join(IMAGES_DIR).join("img.png"), b"PNG").unwrap();
        let store = AnnotationStore::open(dir, Arc::new(ManualClock::new())).unwrap();
        (pairs, Arc::new(store))
    }

    fn sub(who: &str, pair: &ItemImagePair, choice: ContainerChoice) -> Submission {
        Submission {
            annotator_id: who.into(),
            pair_id: pair.pair_id.clone(),
            choice,
        }
    }

    #[test]
    fn queue_order_and_done() {
        let dir = tempfile::tempdir().unwrap();
        let (pairs, store) = fixture(dir.path());
        for p in &pairs {
            match store.next_task("ann").unwrap() {
                NextTask::Task {
                    pair_id,
                    containers,
                    ..
                } => {
                    assert_eq!(pair_id, p.pair_id);
                    assert_eq!(containers.len(), 12);
                }
                NextTask::Done => panic!("early done"),
            }
            store.submit(&sub("ann", p, ContainerChoice::None)).unwrap();
        }
        assert_eq!(store.next_task("ann").unwrap(), NextTask::Done);
        assert!(matches!(store.next_task("ghost"), Err(Error::NotFound(_))));
    }

    #[test]
    fn validation_and_conflicts() {
        let dir = tempfile::tempdir().unwrap();
        let (pairs, store) = fixture(dir.path());
        assert!(matches!(
            store.submit(&sub("ann", &pairs[0], ContainerChoice::container(99))),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            store.submit(&sub("other", &pairs[1], ContainerChoice::None)),
            Err(Error::Forbidden(_))
        ));
        let unknown = ItemImagePair::new("img", "spoon");
        assert!(matches!(
            store.submit(&sub("ann", &unknown, ContainerChoice::None)),
            Err(Error::NotFound(_))
        ));

        assert!(
            !store
                .submit(&sub("ann", &pairs[0], ContainerChoice::container(2)))
                .unwrap()
                .conflict
        );
        assert!(
            store
                .submit(&sub("ann", &pairs[0], ContainerChoice::container(5)))
                .unwrap()
                .conflict
        );
        let conflicts: Vec<Conflict> = read_jsonl(&dir.path().join(CONFLICTS_FILE)).unwrap();
        assert_eq!(conflicts.len(), 1);
        assert_eq!(
            conflicts[0].dropped[0].choice,
            ContainerChoice::container(2)
        );
        let recs: Vec<AnnotationRecord> = read_jsonl(&dir.path().join(ANNOTATIONS_FILE)).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(
            store.progress("ann").unwrap(),
            Progress {
                answered: 1,
                remaining: 2,
                total: 3
            }
        );
    }

    #[test]
    fn reopen_recovers_state_and_drops_torn_line() {
        let dir = tempfile::tempdir().unwrap();
        let (pairs, store) = fixture(dir.path());
        store
            .submit(&sub("ann", &pairs[0], ContainerChoice::container(1)))
            .unwrap();
        drop(store);
        let path = dir.path().join(ANNOTATIONS_FILE);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"pair_id\":\"trunc").unwrap();
        let store = AnnotationStore::open(dir.path(), Arc::new(ManualClock::new())).unwrap();
        assert_eq!(store.progress("ann").unwrap().answered, 1);
        assert!(std::fs::read_to_string(&path).unwrap().ends_with('\n'));
    }

    #[test]
    fn images() {
        let dir = tempfile::tempdir().unwrap();
        let (_, store) = fixture(dir.path());
        assert_eq!(store.image("img").unwrap(), (b"PNG".to_vec(), "image/png"));
        assert!(matches!(store.image("nope"), Err(Error::NotFound(_))));
    }
}
