//! Non-language-model predictors: uniform random container and the
//! detector's top-confidence box.

use rand::Rng;

use crate::choice::ContainerChoice;
use crate::error::{Error, Result};
use crate::scene::{ContainerTable, Detection};
use crate::seeding::keyed_rng;

/// Uniform pick over the table's containers from a stream keyed by
/// `(seed, pair_id)`.
pub fn random_choice(table: &ContainerTable, seed: u64, pair_id: &str) -> Result<ContainerChoice> {
    if table.containers.is_empty() {
        return Err(Error::EmptyScene);
    }
    let mut rng = keyed_rng("random_baseline", seed, pair_id);
    let i = rng.random_range(0..table.containers.len());
    Ok(ContainerChoice::container(table.containers[i].local_id))
}

/// Index of the most confident detection; the earliest wins ties.
pub fn highest_confidence_index(detections: &[Detection]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, d) in detections.iter().enumerate() {
        if best.is_none_or(|(_, c)| d.confidence > c) {
            best = Some((i, d.confidence));
        }
    }
    best.map(|(i, _)| i)
}

/// The top detection's mask as a polygon choice, or `none` for no detections.
pub fn highest_confidence_choice(detections: &[Detection]) -> ContainerChoice {
    match highest_confidence_index(detections) {
        Some(i) => ContainerChoice::Polygon {
            polygon: detections[i].polygon.clone(),
        },
        None => ContainerChoice::None,
    }
}
