//! A predictor's or annotator's answer, and the parsers that recover it
//! from raw model output.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::geometry::{BBox, Polygon};

/// Which container an answer points at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContainerChoice {
    ContainerId {
        container_local_id: u32,
    },
    Bbox {
        bbox: BBox,
    },
    /// A segmentation mask from an item-conditioned detector run.
    Polygon {
        polygon: Polygon,
    },
    None,
}

impl ContainerChoice {
    pub fn container(id: u32) -> Self {
        ContainerChoice::ContainerId {
            container_local_id: id,
        }
    }

    pub fn container_id(&self) -> Option<u32> {
        match self {
            ContainerChoice::ContainerId { container_local_id } => Some(*container_local_id),
            _ => None,
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, ContainerChoice::None)
    }
}

/// How an answer was recovered from raw text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    /// Found in the requested response format.
    #[default]
    Format,
    /// No format line; took the first standalone integer.
    Fallback,
    /// Nothing usable.
    Unparsed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extracted {
    pub choice: ContainerChoice,
    pub status: ParseStatus,
}

impl Extracted {
    fn new(choice: ContainerChoice, status: ParseStatus) -> Self {
        Self { choice, status }
    }
}

static BEST_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?im)^[^\n]*?best[\s*_]*container[\s*_]*:(?P<rest>[^\n]*)$").unwrap()
});
static ID_OR_NONE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bnone\b|\d+").unwrap());
static STANDALONE_INT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b\d+\b").unwrap());
static BRACKETS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[([^\[\]]*)\]").unwrap());

/// Reads a container id from a `Best container:` answer. Multiple ids on the
/// line resolve to the first; `None` abstains.
pub fn extract_container_choice(raw: &str) -> Extracted {
    if let Some(caps) = BEST_LINE.captures(raw) {
        let rest = &caps["rest"];
        return match ID_OR_NONE.find(rest) {
            Some(m) if m.as_str().eq_ignore_ascii_case("none") => {
                Extracted::new(ContainerChoice::None, ParseStatus::Format)
            }
            Some(m) => match m.as_str().parse::<u32>() {
                Ok(id) => Extracted::new(ContainerChoice::container(id), ParseStatus::Format),
                Err(_) => Extracted::new(ContainerChoice::None, ParseStatus::Unparsed),
            },
            None => Extracted::new(ContainerChoice::None, ParseStatus::Unparsed),
        };
    }
    match STANDALONE_INT
        .find(raw)
        .and_then(|m| m.as_str().parse::<u32>().ok())
    {
        Some(id) => Extracted::new(ContainerChoice::container(id), ParseStatus::Fallback),
        None => Extracted::new(ContainerChoice::None, ParseStatus::Unparsed),
    }
}

fn numbers(group: &str) -> Option<Vec<f64>> {
    group
        .split(',')
        .map(|s| s.trim().parse::<f64>().ok())
        .collect()
}

/// Reads the first bracketed box. `[0, 0, 0, 0]` and `[]` abstain; a list of
/// four `[x, y]` points becomes their enclosing box.
pub fn extract_bbox_choice(raw: &str) -> Extracted {
    let groups: Vec<&str> = BRACKETS
        .captures_iter(raw)
        .map(|c| c.get(1).map_or("", |m| m.as_str()))
        .collect();
    for (i, group) in groups.iter().enumerate() {
        if group.trim().is_empty() {
            return Extracted::new(ContainerChoice::None, ParseStatus::Format);
        }
        let Some(nums) = numbers(group) else {
            continue;
        };
        let coords = match nums.len() {
            4 => [nums[0], nums[1], nums[2], nums[3]],
            2 => {
                let points: Option<Vec<Vec<f64>>> = groups
                    .get(i..i + 4)
                    .map(|g| g.iter().filter_map(|s| numbers(s)).collect());
                match points {
                    Some(p) if p.len() == 4 && p.iter().all(|v| v.len() == 2) => {
                        let xs = p.iter().map(|v| v[0]);
                        let ys = p.iter().map(|v| v[1]);
                        [
                            xs.clone().fold(f64::INFINITY, f64::min),
                            ys.clone().fold(f64::INFINITY, f64::min),
                            xs.fold(f64::NEG_INFINITY, f64::max),
                            ys.fold(f64::NEG_INFINITY, f64::max),
                        ]
                    }
                    _ => continue,
                }
            }
            _ => continue,
        };
        if coords.iter().all(|&v| v == 0.0) {
            return Extracted::new(ContainerChoice::None, ParseStatus::Format);
        }
        return match BBox::new(coords[0], coords[1], coords[2], coords[3]) {
            Ok(bbox) => Extracted::new(ContainerChoice::Bbox { bbox }, ParseStatus::Format),
            Err(_) => Extracted::new(ContainerChoice::None, ParseStatus::Unparsed),
        };
    }
    Extracted::new(ContainerChoice::None, ParseStatus::Unparsed)
}
