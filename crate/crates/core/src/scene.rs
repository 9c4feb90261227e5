//! The container information table: one row per storage container in an
//! image, plus the anchor objects and countertop used to describe them.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, Direction, Point, Polygon};

pub const TABLE_SCHEMA_VERSION: u32 = 1;
pub const DETECTIONS_SCHEMA_VERSION: u32 = 1;
/// Scenes with fewer containers are not eligible for the benchmark.
pub const MIN_BENCHMARK_CONTAINERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContainerLabel {
    Drawer,
    CabinetDoor,
}

impl ContainerLabel {
    pub fn words(&self) -> &'static str {
        match self {
            ContainerLabel::Drawer => "drawer",
            ContainerLabel::CabinetDoor => "cabinet door",
        }
    }
}

impl fmt::Display for ContainerLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.words())
    }
}

/// Outcome of reading a detector's free-text label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParsedLabel {
    Concrete(ContainerLabel),
    /// Both container kinds are named; `first` is the one named first.
    Ambiguous {
        first: ContainerLabel,
    },
}

pub fn parse_raw_label(raw: &str) -> Result<ParsedLabel> {
    let norm = raw.to_lowercase().replace(['_', '-'], " ");
    let mut seen = Vec::new();
    for token in norm.split_whitespace() {
        let label = match token {
            "drawer" | "drawers" => ContainerLabel::Drawer,
            "cabinet" | "cabinets" | "door" | "doors" | "cupboard" => ContainerLabel::CabinetDoor,
            _ => continue,
        };
        if !seen.contains(&label) {
            seen.push(label);
        }
    }
    match seen.as_slice() {
        [] => Err(Error::InvalidLabel(raw.to_string())),
        [only] => Ok(ParsedLabel::Concrete(*only)),
        [first, ..] => Ok(ParsedLabel::Ambiguous { first: *first }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AspectClass {
    WiderThanTall,
    TallerThanWide,
    SquareLike,
}

impl AspectClass {
    pub fn phrase(&self) -> &'static str {
        match self {
            AspectClass::WiderThanTall => "wider than tall",
            AspectClass::TallerThanWide => "taller than wide",
            AspectClass::SquareLike => "square-like",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountertopRelation {
    Above,
    Below,
    #[default]
    Unknown,
}

/// A detector output after validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub raw_label: String,
    pub confidence: f64,
    pub polygon: Polygon,
    pub bbox: BBox,
}

impl Detection {
    pub fn new(raw_label: impl Into<String>, confidence: f64, polygon: Polygon) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::InvalidInput(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        if polygon.area() <= 0.0 {
            return Err(Error::InvalidGeometry(
                "detection polygon has zero area".to_string(),
            ));
        }
        let bbox = polygon.bbox();
        Ok(Self {
            raw_label: raw_label.into(),
            confidence,
            polygon,
            bbox,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorRelation {
    pub anchor_label: String,
    pub direction: Direction,
    pub distance: f64,
    pub is_close: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Container {
    pub global_id: u64,
    pub local_id: u32,
    pub raw_label: String,
    /// `None` while the raw label is ambiguous.
    pub label: Option<ContainerLabel>,
    pub confidence: f64,
    pub polygon: Polygon,
    pub bbox: BBox,
    pub width: f64,
    pub height: f64,
    pub aspect_class: Option<AspectClass>,
    #[serde(default)]
    pub countertop_relation: CountertopRelation,
    #[serde(default)]
    pub neighbor_local_ids: BTreeSet<u32>,
    #[serde(default)]
    pub anchor_relations: Vec<AnchorRelation>,
    #[serde(default)]
    pub closest_to_anchors: BTreeSet<String>,
}

impl Container {
    pub fn is_ambiguous(&self) -> bool {
        self.label.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub label: String,
    pub bbox: BBox,
    pub confidence: f64,
}

impl Anchor {
    pub fn center(&self) -> Point {
        self.bbox.center()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerTable {
    pub schema_version: u32,
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
    pub image_width: u32,
    pub image_height: u32,
    pub containers: Vec<Container>,
    pub anchors: Vec<Anchor>,
    pub countertop: Option<Polygon>,
    #[serde(default)]
    pub featurized: bool,
}

impl ContainerTable {
    pub fn container(&self, local_id: u32) -> Option<&Container> {
        self.containers.iter().find(|c| c.local_id == local_id)
    }

    pub fn len(&self) -> usize {
        self.containers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.containers.is_empty()
    }

    pub fn is_benchmark_eligible(&self) -> bool {
        self.containers.len() >= MIN_BENCHMARK_CONTAINERS
    }

    pub fn diagonal(&self) -> f64 {
        (self.image_width as f64).hypot(self.image_height as f64)
    }

    pub fn frame(&self) -> crate::geometry::Frame {
        crate::geometry::Frame {
            width: self.image_width,
            height: self.image_height,
        }
    }
}

/// Allowed anchor labels, in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnchorVocabulary(Vec<String>);

pub const COUNTERTOP: &str = "countertop";

impl Default for AnchorVocabulary {
    fn default() -> Self {
        Self(
            [
                "sink",
                "oven",
                "stove",
                "dishwasher",
                "refrigerator",
                "microwave",
                "coffee machine",
                "electronic kettle",
                "dish drying rack",
                COUNTERTOP,
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        )
    }
}

impl AnchorVocabulary {
    pub fn new(labels: Vec<String>) -> Self {
        Self(labels.into_iter().map(|l| normalize_anchor(&l)).collect())
    }

    fn index_of(&self, label: &str) -> Option<usize> {
        self.0.iter().position(|l| l == label)
    }

    pub fn labels(&self) -> &[String] {
        &self.0
    }
}

fn normalize_anchor(label: &str) -> String {
    label
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageMeta<'a> {
    pub image_id: &'a str,
    pub image_path: Option<&'a str>,
    pub width: u32,
    pub height: u32,
}

/// Dataset-wide running counter for container global ids.
#[derive(Debug, Clone, Default)]
pub struct GlobalIds {
    next: u64,
}

impl GlobalIds {
    pub fn new() -> Self {
        Self { next: 1 }
    }

    pub fn starting_at(next: u64) -> Self {
        Self { next }
    }

    fn take(&mut self) -> u64 {
        if self.next == 0 {
            self.next = 1;
        }
        let id = self.next;
        self.next += 1;
        id
    }
}

fn detection_order(a: &Detection, b: &Detection) -> Ordering {
    a.bbox
        .y_min
        .total_cmp(&b.bbox.y_min)
        .then(a.bbox.x_min.total_cmp(&b.bbox.x_min))
        .then(a.bbox.y_max.total_cmp(&b.bbox.y_max))
        .then(a.bbox.x_max.total_cmp(&b.bbox.x_max))
        .then_with(|| a.raw_label.cmp(&b.raw_label))
        .then(a.confidence.total_cmp(&b.confidence))
}

/// Builds the table for one image. Containers are ordered top-to-bottom then
/// left-to-right and numbered 1..K; ambiguous labels are left unresolved.
pub fn assemble_table(
    detections: Vec<Detection>,
    anchors: Vec<Detection>,
    countertop: Option<Polygon>,
    meta: ImageMeta<'_>,
    vocabulary: &AnchorVocabulary,
    ids: &mut GlobalIds,
) -> Result<ContainerTable> {
    if meta.width == 0 || meta.height == 0 {
        return Err(Error::InvalidInput(format!(
            "image {} has non-positive dimensions",
            meta.image_id
        )));
    }
    if detections.is_empty() {
        return Err(Error::EmptyScene);
    }

    let mut detections = detections;
    detections.sort_by(detection_order);
    let mut containers = Vec::with_capacity(detections.len());
    for (i, d) in detections.into_iter().enumerate() {
        let label = match parse_raw_label(&d.raw_label)? {
            ParsedLabel::Concrete(l) => Some(l),
            ParsedLabel::Ambiguous { .. } => None,
        };
        containers.push(Container {
            global_id: ids.take(),
            local_id: i as u32 + 1,
            raw_label: d.raw_label,
            label,
            confidence: d.confidence,
            width: d.bbox.width(),
            height: d.bbox.height(),
            polygon: d.polygon,
            bbox: d.bbox,
            aspect_class: None,
            countertop_relation: CountertopRelation::Unknown,
            neighbor_local_ids: BTreeSet::new(),
            anchor_relations: Vec::new(),
            closest_to_anchors: BTreeSet::new(),
        });
    }

    let mut countertop = countertop;
    // Highest-confidence instance per anchor label.
    let mut best: BTreeMap<(usize, String), Detection> = BTreeMap::new();
    let mut anchors = anchors;
    anchors.sort_by(detection_order);
    for a in anchors {
        let label = normalize_anchor(&a.raw_label);
        let idx = vocabulary
            .index_of(&label)
            .ok_or_else(|| Error::InvalidLabel(a.raw_label.clone()))?;
        if label == COUNTERTOP {
            if countertop.is_none() {
                countertop = Some(a.polygon);
            }
            continue;
        }
        match best.get(&(idx, label.clone())) {
            Some(prev) if prev.confidence >= a.confidence => {}
            _ => {
                best.insert((idx, label), a);
            }
        }
    }
    let anchors = best
        .into_iter()
        .map(|((_, label), d)| Anchor {
            label,
            bbox: d.bbox,
            confidence: d.confidence,
        })
        .collect();

    Ok(ContainerTable {
        schema_version: TABLE_SCHEMA_VERSION,
        image_id: meta.image_id.to_string(),
        image_path: meta.image_path.map(str::to_string),
        image_width: meta.width,
        image_height: meta.height,
        containers,
        anchors,
        countertop,
        featurized: false,
    })
}

/// Gives every ambiguous container a concrete label: the strict majority
/// among its labelled neighbours on the same countertop side, otherwise the
/// first kind named in its raw label.
pub fn resolve_ambiguous_labels(mut table: ContainerTable) -> ContainerTable {
    let snapshot: BTreeMap<u32, (Option<ContainerLabel>, CountertopRelation)> = table
        .containers
        .iter()
        .map(|c| (c.local_id, (c.label, c.countertop_relation)))
        .collect();
    for c in table.containers.iter_mut().filter(|c| c.label.is_none()) {
        let mut votes: BTreeMap<ContainerLabel, usize> = BTreeMap::new();
        for n in &c.neighbor_local_ids {
            if let Some((Some(label), side)) = snapshot.get(n) {
                if *side == c.countertop_relation {
                    *votes.entry(*label).or_default() += 1;
                }
            }
        }
        let drawers = votes.get(&ContainerLabel::Drawer).copied().unwrap_or(0);
        let doors = votes
            .get(&ContainerLabel::CabinetDoor)
            .copied()
            .unwrap_or(0);
        let fallback = match parse_raw_label(&c.raw_label) {
            Ok(ParsedLabel::Ambiguous { first }) | Ok(ParsedLabel::Concrete(first)) => first,
            Err(_) => ContainerLabel::CabinetDoor,
        };
        c.label = Some(match drawers.cmp(&doors) {
            Ordering::Greater => ContainerLabel::Drawer,
            Ordering::Less => ContainerLabel::CabinetDoor,
            Ordering::Equal => fallback,
        });
    }
    table
}

/// One detected region as it appears in a detections file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDetection {
    pub label: String,
    pub confidence: f64,
    pub polygon: Vec<[f64; 2]>,
}

impl RawDetection {
    pub fn to_detection(&self) -> Result<Detection> {
        let polygon = Polygon::normalized(self.polygon.iter().map(|&p| Point::from(p)).collect())?;
        Detection::new(self.label.clone(), self.confidence, polygon)
    }
}

/// The detector adapter's per-image output document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionsDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u32>,
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
    pub width: u32,
    pub height: u32,
    pub containers: Vec<RawDetection>,
    #[serde(default)]
    pub anchors: Vec<RawDetection>,
    #[serde(default)]
    pub countertop: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
}

impl DetectionsDoc {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let doc: DetectionsDoc = serde_json::from_str(text).map_err(|e| Error::Schema {
            path: origin.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if let Some(v) = doc.schema_version {
            if v != DETECTIONS_SCHEMA_VERSION {
                return Err(Error::Schema {
                    path: origin.to_path_buf(),
                    line: 1,
                    message: format!(
                        "schema_version: expected {DETECTIONS_SCHEMA_VERSION}, found {v}"
                    ),
                });
            }
        }
        Ok(doc)
    }

    pub fn container_detections(&self) -> Result<Vec<Detection>> {
        self.containers
            .iter()
            .map(RawDetection::to_detection)
            .collect()
    }

    pub fn into_table(
        &self,
        vocabulary: &AnchorVocabulary,
        ids: &mut GlobalIds,
    ) -> Result<ContainerTable> {
        let containers = self.container_detections()?;
        let anchors = self
            .anchors
            .iter()
            .map(RawDetection::to_detection)
            .collect::<Result<Vec<_>>>()?;
        let countertop = match &self.countertop {
            Some(pts) => Some(Polygon::normalized(
                pts.iter().map(|&p| Point::from(p)).collect(),
            )?),
            None => None,
        };
        assemble_table(
            containers,
            anchors,
            countertop,
            ImageMeta {
                image_id: &self.image_id,
                image_path: self.image_path.as_deref(),
                width: self.width,
                height: self.height,
            },
            vocabulary,
            ids,
        )
    }
}

/// A set of tables as written by `ingest` and `features`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSet {
    pub schema_version: u32,
    pub tables: Vec<ContainerTable>,
}

impl TableSet {
    pub fn new(tables: Vec<ContainerTable>) -> Self {
        Self {
            schema_version: TABLE_SCHEMA_VERSION,
            tables,
        }
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let set: TableSet = serde_json::from_str(text).map_err(|e| Error::Schema {
            path: origin.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if set.schema_version != TABLE_SCHEMA_VERSION {
            return Err(Error::Schema {
                path: origin.to_path_buf(),
                line: 1,
                message: format!(
                    "schema_version: expected {TABLE_SCHEMA_VERSION}, found {}",
                    set.schema_version
                ),
            });
        }
        Ok(set)
    }

    pub fn by_image(&self) -> BTreeMap<&str, &ContainerTable> {
        self.tables
            .iter()
            .map(|t| (t.image_id.as_str(), t))
            .collect()
    }
}
