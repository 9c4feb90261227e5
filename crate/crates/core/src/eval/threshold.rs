use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A prediction a human graded 0 (wrong), 0.5 (partly right) or 1 (right).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityScoredRecord {
    pub pair_id: String,
    pub iou: f64,
    pub human_score: f64,
}

pub const QUALITY_SCORES: [f64; 3] = [0.0, 0.5, 1.0];

impl QualityScoredRecord {
    pub fn validate(&self) -> Result<()> {
        if !QUALITY_SCORES.contains(&self.human_score) {
            return Err(Error::InvalidInput(format!(
                "pair {}: human_score must be 0, 0.5 or 1, got {}",
                self.pair_id, self.human_score
            )));
        }
        if !(0.0..=1.0).contains(&self.iou) {
            return Err(Error::InvalidInput(format!(
                "pair {}: iou {} outside [0, 1]",
                self.pair_id, self.iou
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub score: f64,
    pub count: usize,
    pub min_iou: Option<f64>,
    pub max_iou: Option<f64>,
    pub mean_iou: Option<f64>,
}

/// IoU range a correctness cutoff can sit in: above every wrong answer and
/// at or below every fully right one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffInterval {
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub classes: Vec<ClassStats>,
    /// sum(score * iou) / sum(score).
    pub weighted_average_iou: Option<f64>,
    /// `[max IoU among score 0, min IoU among score 1]`.
    pub cutoff_interval: Option<CutoffInterval>,
}

pub fn threshold_analysis(records: &[QualityScoredRecord]) -> Result<ThresholdReport> {
    for r in records {
        r.validate()?;
    }
    let classes: Vec<ClassStats> = QUALITY_SCORES
        .iter()
        .map(|&score| {
            let ious: Vec<f64> = records
                .iter()
                .filter(|r| r.human_score == score)
                .map(|r| r.iou)
                .collect();
            let n = ious.len();
            ClassStats {
                score,
                count: n,
                min_iou: ious.iter().copied().reduce(f64::min),
                max_iou: ious.iter().copied().reduce(f64::max),
                mean_iou: (n > 0).then(|| ious.iter().sum::<f64>() / n as f64),
            }
        })
        .collect();
    let weight: f64 = records.iter().map(|r| r.human_score).sum();
    let weighted_average_iou =
        (weight > 0.0).then(|| records.iter().map(|r| r.human_score * r.iou).sum::<f64>() / weight);
    let cutoff_interval = match (classes[0].max_iou, classes[2].min_iou) {
        (Some(low), Some(high)) => Some(CutoffInterval { low, high }),
        _ => None,
    };
    Ok(ThresholdReport {
        classes,
        weighted_average_iou,
        cutoff_interval,
    })
}
