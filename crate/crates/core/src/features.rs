//! Spatial features for every container: aspect, countertop side,
//! neighbours and anchor relations.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{centroid, direction_and_distance, Polygon};
use crate::scene::{
    resolve_ambiguous_labels, AnchorRelation, AspectClass, Container, ContainerTable,
    CountertopRelation,
};

/// Thresholds for the qualitative vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// width/height above this is "wider than tall".
    pub wide_ratio: f64,
    /// width/height below this is "taller than wide".
    pub tall_ratio: f64,
    /// Max bbox gap for neighbours, as a fraction of the image diagonal.
    pub neighbor_gap_fraction: f64,
    /// Max centroid distance for "close", as a fraction of the image diagonal.
    pub close_fraction: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            wide_ratio: 1.25,
            tall_ratio: 0.8,
            neighbor_gap_fraction: 0.02,
            close_fraction: 0.15,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tall_ratio > 0.0 && self.tall_ratio <= 1.0 && self.wide_ratio >= 1.0) {
            return Err(Error::Config(format!(
                "aspect ratios must satisfy 0 < tall_ratio <= 1 <= wide_ratio, got {} / {}",
                self.tall_ratio, self.wide_ratio
            )));
        }
        if self.neighbor_gap_fraction < 0.0 || self.close_fraction < 0.0 {
            return Err(Error::Config("distance fractions must be >= 0".to_string()));
        }
        Ok(())
    }
}

pub fn compute_aspect(c: &Container, cfg: &FeatureConfig) -> AspectClass {
    let ratio = c.width / c.height;
    if ratio > cfg.wide_ratio {
        AspectClass::WiderThanTall
    } else if ratio < cfg.tall_ratio {
        AspectClass::TallerThanWide
    } else {
        AspectClass::SquareLike
    }
}

/// Side of the countertop the container sits on. A centroid inside the
/// countertop's vertical span is decided by which side holds more of the
/// container's box.
pub fn countertop_relation(c: &Container, countertop: Option<&Polygon>) -> CountertopRelation {
    let Some(top) = countertop else {
        return CountertopRelation::Unknown;
    };
    let span = top.bbox();
    let cy = centroid(&c.polygon)
        .map(|p| p.y)
        .unwrap_or_else(|_| c.bbox.center().y);
    if cy < span.y_min {
        return CountertopRelation::Above;
    }
    if cy > span.y_max {
        return CountertopRelation::Below;
    }
    let above = (span.y_min.min(c.bbox.y_max) - c.bbox.y_min).max(0.0) * c.width;
    let below = (c.bbox.y_max - span.y_max.max(c.bbox.y_min)).max(0.0) * c.width;
    match above.partial_cmp(&below) {
        Some(Ordering::Greater) => CountertopRelation::Above,
        Some(Ordering::Less) => CountertopRelation::Below,
        _ => {
            if cy < (span.y_min + span.y_max) / 2.0 {
                CountertopRelation::Above
            } else {
                CountertopRelation::Below
            }
        }
    }
}

/// Fills symmetric neighbour sets: boxes within `neighbor_gap_fraction` of
/// the image diagonal of each other.
pub fn find_neighbors(mut table: ContainerTable, cfg: &FeatureConfig) -> ContainerTable {
    let limit = cfg.neighbor_gap_fraction * table.diagonal();
    let boxes: Vec<_> = table
        .containers
        .iter()
        .map(|c| (c.local_id, c.bbox))
        .collect();
    for c in &mut table.containers {
        c.neighbor_local_ids = boxes
            .iter()
            .filter(|(id, b)| *id != c.local_id && c.bbox.gap(b) <= limit)
            .map(|(id, _)| *id)
            .collect();
    }
    table
}

/// Records direction and distance from every anchor to every container and
/// hands each anchor to its nearest container (lowest local id on ties).
pub fn anchor_relations(mut table: ContainerTable, cfg: &FeatureConfig) -> ContainerTable {
    let close = cfg.close_fraction * table.diagonal();
    let centers: Vec<_> = table
        .containers
        .iter()
        .map(|c| centroid(&c.polygon).unwrap_or_else(|_| c.bbox.center()))
        .collect();
    for c in &mut table.containers {
        c.anchor_relations.clear();
        c.closest_to_anchors = BTreeSet::new();
    }
    for anchor in &table.anchors {
        let origin = anchor.center();
        let mut nearest: Option<(usize, f64)> = None;
        for (i, c) in table.containers.iter_mut().enumerate() {
            let center = centers[i];
            let dist = origin.distance(&center);
            if let Ok((direction, distance)) = direction_and_distance(&origin, &center) {
                c.anchor_relations.push(AnchorRelation {
                    anchor_label: anchor.label.clone(),
                    direction,
                    distance,
                    is_close: distance <= close,
                });
            }
            if nearest.is_none_or(|(_, d)| dist < d) {
                nearest = Some((i, dist));
            }
        }
        if let Some((i, _)) = nearest {
            table.containers[i]
                .closest_to_anchors
                .insert(anchor.label.clone());
        }
    }
    table
}

/// Runs every feature step in dependency order. Neighbours are computed
/// before ambiguous labels are resolved since resolution votes over them.
pub fn featurize(mut table: ContainerTable, cfg: &FeatureConfig) -> Result<ContainerTable> {
    if table.containers.is_empty() {
        return Err(Error::EmptyScene);
    }
    let countertop = table.countertop.clone();
    for c in &mut table.containers {
        c.aspect_class = Some(compute_aspect(c, cfg));
        c.countertop_relation = countertop_relation(c, countertop.as_ref());
    }
    let table = find_neighbors(table, cfg);
    let table = resolve_ambiguous_labels(table);
    let mut table = anchor_relations(table, cfg);
    table.featurized = true;
    Ok(table)
}
