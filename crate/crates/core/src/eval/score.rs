use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::choice::ContainerChoice;
use crate::dataset::GroundTruth;
use crate::error::{Error, Result};
use crate::geometry::{iou, iou_in_frame, Region};
use crate::pipeline::PredictionRecord;
use crate::scene::ContainerTable;

/// Exact match, near match, and the usual detection cutoff.
pub const DEFAULT_THRESHOLDS: [f64; 3] = [1.0, 0.95, 0.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub pair_id: String,
    pub strategy: String,
    pub item: String,
    pub iou: f64,
    /// Keyed by [`threshold_key`].
    pub correct_at: BTreeMap<String, bool>,
    pub parse_failed: bool,
}

/// `1.0` -> `"1"`, `0.95` -> `"0.95"`.
pub fn threshold_key(t: f64) -> String {
    format!("{t}")
}

fn region_iou(a: Region, b: Region, table: &ContainerTable) -> Result<f64> {
    iou_in_frame(&a, &b, table.frame()).or_else(|_| iou(&a, &b))
}

/// Scores one prediction. The truth container matched by id is 1.0 without
/// rasterizing; a "none" truth only matches a clean "none" answer.
pub fn score_prediction(
    pred: &PredictionRecord,
    truth: &GroundTruth,
    table: &ContainerTable,
    thresholds: &[f64],
) -> Result<EvalRecord> {
    if pred.pair_id != truth.pair_id {
        return Err(Error::DataIntegrity(format!(
            "prediction for {} scored against truth for {}",
            pred.pair_id, truth.pair_id
        )));
    }
    let truth_polygon = match truth.container_local_id {
        Some(id) => Some(
            &table
                .container(id)
                .ok_or_else(|| {
                    Error::DataIntegrity(format!(
                        "truth for pair {} names container {id}, missing from image {}",
                        truth.pair_id, table.image_id
                    ))
                })?
                .polygon,
        ),
        None => None,
    };
    let parse_failed = pred.parse_failed();
    let value = if parse_failed {
        0.0
    } else {
        match (truth_polygon, &pred.choice) {
            (None, ContainerChoice::None) if !pred.out_of_range => 1.0,
            (None, _) => 0.0,
            (Some(_), ContainerChoice::None) => 0.0,
            (Some(t), ContainerChoice::ContainerId { container_local_id }) => {
                if Some(*container_local_id) == truth.container_local_id {
                    1.0
                } else {
                    match table.container(*container_local_id) {
                        Some(p) => region_iou(p.polygon.clone().into(), t.clone().into(), table)?,
                        None => 0.0,
                    }
                }
            }
            (Some(t), ContainerChoice::Bbox { bbox }) => {
                region_iou((*bbox).into(), t.clone().into(), table)?
            }
            (Some(t), ContainerChoice::Polygon { polygon }) => {
                region_iou(polygon.clone().into(), t.clone().into(), table)?
            }
        }
    };
    let value = value.clamp(0.0, 1.0);
    Ok(EvalRecord {
        pair_id: pred.pair_id.clone(),
        strategy: pred.strategy.clone(),
        item: pred.item.clone(),
        iou: value,
        correct_at: thresholds
            .iter()
            .map(|&t| (threshold_key(t), value >= t))
            .collect(),
        parse_failed,
    })
}

/// Percentage of records with IoU at or above `threshold`. Abstentions and
/// parse failures count in the denominator. Empty input gives 0.
pub fn accuracy(records: &[EvalRecord], threshold: f64) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let hits = records.iter().filter(|r| r.iou >= threshold).count();
    100.0 * hits as f64 / records.len() as f64
}

pub fn mean_iou(records: &[EvalRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().map(|r| r.iou).sum::<f64>() / records.len() as f64
}
