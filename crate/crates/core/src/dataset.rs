//! Item-image pairs, annotations and ground truth: sampling, overlap
//! marking, cleaning, consolidation and splitting.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::choice::ContainerChoice;
use crate::error::{Error, Result};
use crate::scene::{ContainerTable, MIN_BENCHMARK_CONTAINERS};
use crate::seeding::{keyed_rng, sha256_hex};

pub const DEFAULT_ITEMS: [&str; 15] = [
    "bottle opener",
    "Tupperware containers",
    "dish towels",
    "cutting board",
    "bowl",
    "spices",
    "spoon",
    "mug",
    "plate",
    "pot",
    "pan",
    "cutting knife",
    "cooking oil",
    "screwdrivers",
    "painkillers",
];

pub fn default_items() -> Vec<String> {
    DEFAULT_ITEMS.iter().map(|s| s.to_string()).collect()
}

// Guards the 0.16 * 100 = 16.000000000000004 style of float noise.
const CEIL_EPS: f64 = 1e-9;

fn ceil_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64 - CEIL_EPS).ceil().max(0.0) as usize).min(n)
}

fn check_fraction(fraction: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidInput(format!(
            "fraction must lie in [0, 1], got {fraction}"
        )));
    }
    Ok(())
}

/// First 16 hex chars of SHA-256 over `image_id 0x1f item`.
pub fn pair_id(image_id: &str, item: &str) -> String {
    let mut bytes = Vec::with_capacity(image_id.len() + item.len() + 1);
    bytes.extend_from_slice(image_id.as_bytes());
    bytes.push(0x1f);
    bytes.extend_from_slice(item.as_bytes());
    sha256_hex(&bytes)[..16].to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Development,
    Evaluation,
    #[default]
    Unassigned,
}

/// Where a pair's image came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSource {
    #[default]
    Crowd,
    RealWorld,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemImagePair {
    pub pair_id: String,
    pub image_id: String,
    pub item: String,
    #[serde(default)]
    pub split: Split,
    #[serde(default)]
    pub source: PairSource,
}

impl ItemImagePair {
    pub fn new(image_id: impl Into<String>, item: impl Into<String>) -> Self {
        let image_id = image_id.into();
        let item = item.into();
        Self {
            pair_id: pair_id(&image_id, &item),
            image_id,
            item,
            split: Split::Unassigned,
            source: PairSource::Crowd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub pair_id: String,
    pub annotator_id: String,
    pub choice: ContainerChoice,
    pub submitted_at: DateTime<Utc>,
}

impl AnnotationRecord {
    /// Annotators answer with a container id or `none`, nothing else.
    pub fn label(&self) -> Result<Option<u32>> {
        match &self.choice {
            ContainerChoice::ContainerId { container_local_id } => Ok(Some(*container_local_id)),
            ContainerChoice::None => Ok(None),
            _ => Err(Error::InvalidInput(format!(
                "annotation for pair {} must be a container id or none",
                self.pair_id
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Unanimous,
    Majority,
    RandomTiebreak,
    Single,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub pair_id: String,
    /// `None` when the consolidated answer is "not in any container".
    pub container_local_id: Option<u32>,
    pub provenance: Provenance,
}

/// Samples `per_item` distinct eligible images for each item.
pub fn sample_pairs(
    tables: &[ContainerTable],
    items: &[String],
    per_item: usize,
    seed: u64,
) -> Result<Vec<ItemImagePair>> {
    let mut eligible: Vec<&str> = tables
        .iter()
        .filter(|t| t.len() >= MIN_BENCHMARK_CONTAINERS)
        .map(|t| t.image_id.as_str())
        .collect();
    eligible.sort_unstable();
    eligible.dedup();
    let mut out = Vec::with_capacity(items.len() * per_item);
    for item in items {
        if per_item > eligible.len() {
            return Err(Error::Quota {
                item: item.clone(),
                needed: per_item,
                available: eligible.len(),
            });
        }
        let mut rng = keyed_rng("sample_pairs", seed, item);
        let mut picked = index::sample(&mut rng, eligible.len(), per_item).into_vec();
        picked.sort_unstable();
        out.extend(
            picked
                .into_iter()
                .map(|i| ItemImagePair::new(eligible[i], item.as_str())),
        );
    }
    Ok(out)
}

fn by_item(pairs: &[ItemImagePair]) -> BTreeMap<&str, Vec<&str>> {
    let mut groups: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for p in pairs {
        groups.entry(&p.item).or_default().push(&p.pair_id);
    }
    for ids in groups.values_mut() {
        ids.sort_unstable();
        ids.dedup();
    }
    groups
}

/// Marks `ceil(fraction * n)` pairs of each item for triple labeling.
pub fn assign_overlap(
    pairs: &[ItemImagePair],
    fraction: f64,
    seed: u64,
) -> Result<BTreeSet<String>> {
    check_fraction(fraction)?;
    let mut marked = BTreeSet::new();
    for (item, ids) in by_item(pairs) {
        let k = ceil_count(fraction, ids.len());
        let mut rng = keyed_rng("assign_overlap", seed, item);
        for i in index::sample(&mut rng, ids.len(), k) {
            marked.insert(ids[i].to_string());
        }
    }
    Ok(marked)
}

pub const OVERLAP_RATERS: usize = 3;

/// Static batch assignment: overlap pairs go to three annotators, the rest
/// to one, always to whoever currently has the fewest tasks (earlier
/// annotator on ties).
pub fn build_assignments(
    pairs: &[ItemImagePair],
    overlap: &BTreeSet<String>,
    annotators: &[String],
) -> Result<BTreeMap<String, Vec<String>>> {
    let unique: BTreeSet<&String> = annotators.iter().collect();
    if unique.len() != annotators.len() || annotators.is_empty() {
        return Err(Error::InvalidInput(
            "annotator ids must be non-empty and unique".to_string(),
        ));
    }
    if !overlap.is_empty() && annotators.len() < OVERLAP_RATERS {
        return Err(Error::InvalidInput(format!(
            "triple labeling needs at least {OVERLAP_RATERS} annotators, got {}",
            annotators.len()
        )));
    }
    let mut queues: Vec<Vec<String>> = vec![Vec::new(); annotators.len()];
    for p in pairs {
        let k = if overlap.contains(&p.pair_id) {
            OVERLAP_RATERS
        } else {
            1
        };
        let mut order: Vec<usize> = (0..annotators.len()).collect();
        order.sort_by_key(|&i| (queues[i].len(), i));
        for &i in &order[..k] {
            queues[i].push(p.pair_id.clone());
        }
    }
    Ok(annotators.iter().cloned().zip(queues).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conflict {
    pub pair_id: String,
    pub annotator_id: String,
    pub kept: AnnotationRecord,
    pub dropped: Vec<AnnotationRecord>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Deduped {
    pub records: Vec<AnnotationRecord>,
    pub conflicts: Vec<Conflict>,
}

fn choice_key(c: &ContainerChoice) -> (u8, u32) {
    match c {
        ContainerChoice::None => (0, 0),
        ContainerChoice::ContainerId { container_local_id } => (1, *container_local_id),
        ContainerChoice::Bbox { .. } => (2, 0),
        ContainerChoice::Polygon { .. } => (3, 0),
    }
}

/// One record per (pair, annotator). Identical resubmissions collapse to the
/// earliest; differing ones keep the latest and are reported as conflicts.
/// Output is sorted by pair then annotator.
pub fn dedup(records: &[AnnotationRecord]) -> Deduped {
    let mut groups: BTreeMap<(&str, &str), Vec<&AnnotationRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((&r.pair_id, &r.annotator_id))
            .or_default()
            .push(r);
    }
    let mut out = Deduped::default();
    for ((pair, annotator), mut group) in groups {
        group.sort_by(|a, b| {
            a.submitted_at
                .cmp(&b.submitted_at)
                .then_with(|| choice_key(&a.choice).cmp(&choice_key(&b.choice)))
        });
        let distinct: BTreeSet<_> = group.iter().map(|r| choice_key(&r.choice)).collect();
        if distinct.len() == 1 {
            out.records.push(group[0].clone());
            continue;
        }
        let kept = (*group.last().unwrap()).clone();
        let dropped = group[..group.len() - 1]
            .iter()
            .map(|r| (*r).clone())
            .collect();
        out.records.push(kept.clone());
        out.conflicts.push(Conflict {
            pair_id: pair.to_string(),
            annotator_id: annotator.to_string(),
            kept,
            dropped,
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Consolidated {
    pub truths: Vec<GroundTruth>,
    /// Pairs with no annotations at all.
    pub excluded: Vec<String>,
}

/// Reduces each pair's votes to one label. `pair_ids` lists every pair
/// expected to have annotations; missing ones land in `excluded`.
pub fn consolidate(
    annotations: &[AnnotationRecord],
    pair_ids: &[String],
    seed: u64,
) -> Result<Consolidated> {
    let mut votes: BTreeMap<&str, Vec<Option<u32>>> = BTreeMap::new();
    for a in annotations {
        votes.entry(&a.pair_id).or_default().push(a.label()?);
    }
    let expected: BTreeSet<&str> = pair_ids
        .iter()
        .map(String::as_str)
        .chain(votes.keys().copied())
        .collect();
    let mut out = Consolidated::default();
    for pair in expected {
        let Some(v) = votes.get(pair) else {
            out.excluded.push(pair.to_string());
            continue;
        };
        let mut counts: BTreeMap<Option<u32>, usize> = BTreeMap::new();
        for c in v {
            *counts.entry(*c).or_default() += 1;
        }
        let top = *counts.values().max().expect("non-empty votes");
        let leaders: Vec<Option<u32>> = counts
            .iter()
            .filter(|(_, &n)| n == top)
            .map(|(c, _)| *c)
            .collect();
        let (label, provenance) = if v.len() == 1 {
            (v[0], Provenance::Single)
        } else if counts.len() == 1 {
            (v[0], Provenance::Unanimous)
        } else if leaders.len() == 1 && top >= 2 {
            (leaders[0], Provenance::Majority)
        } else {
            let mut rng = keyed_rng("consolidate", seed, pair);
            (
                leaders[rng.random_range(0..leaders.len())],
                Provenance::RandomTiebreak,
            )
        };
        out.truths.push(GroundTruth {
            pair_id: pair.to_string(),
            container_local_id: label,
            provenance,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitRule {
    /// Real-world pairs are evaluation, everything else development.
    BySource,
    /// `ceil(fraction * n)` seeded pairs become evaluation.
    Fraction(f64),
}

pub fn split(pairs: &[ItemImagePair], rule: SplitRule, seed: u64) -> Result<Vec<ItemImagePair>> {
    let mut out = pairs.to_vec();
    match rule {
        SplitRule::BySource => {
            for p in &mut out {
                p.split = match p.source {
                    PairSource::RealWorld => Split::Evaluation,
                    PairSource::Crowd => Split::Development,
                };
            }
        }
        SplitRule::Fraction(fraction) => {
            check_fraction(fraction)?;
            let mut ids: Vec<&str> = pairs.iter().map(|p| p.pair_id.as_str()).collect();
            ids.sort_unstable();
            ids.dedup();
            let k = ceil_count(fraction, ids.len());
            let mut rng = keyed_rng("split", seed, "");
            let eval: BTreeSet<&str> = index::sample(&mut rng, ids.len(), k)
                .into_iter()
                .map(|i| ids[i])
                .collect();
            let eval: BTreeSet<String> = eval.into_iter().map(str::to_string).collect();
            for p in &mut out {
                p.split = if eval.contains(&p.pair_id) {
                    Split::Evaluation
                } else {
                    Split::Development
                };
            }
        }
    }
    Ok(out)
}

/// Checks that every truth refers to a known pair and an existing container.
pub fn validate_truths(
    truths: &[GroundTruth],
    pairs: &BTreeMap<&str, &ItemImagePair>,
    tables: &BTreeMap<&str, &ContainerTable>,
) -> Result<()> {
    for t in truths {
        let pair = pairs
            .get(t.pair_id.as_str())
            .ok_or_else(|| Error::DataIntegrity(format!("truth for unknown pair {}", t.pair_id)))?;
        let table = tables
            .get(pair.image_id.as_str())
            .ok_or_else(|| Error::DataIntegrity(format!("no table for image {}", pair.image_id)))?;
        if let Some(id) = t.container_local_id {
            if table.container(id).is_none() {
                return Err(Error::DataIntegrity(format!(
                    "truth for pair {} names container {id}, image {} has {}",
                    t.pair_id,
                    pair.image_id,
                    table.len()
                )));
            }
        }
    }
    Ok(())
}
