//! Global settings file (`--config`, TOML or JSON). Every field is optional.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::default_items;
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::scene::AnchorVocabulary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub features: FeatureConfig,
    /// Anchor labels kept from detector output, in description order.
    pub anchors: Option<Vec<String>>,
    /// Item vocabulary for pair sampling.
    pub items: Vec<String>,
    /// Share of each item's pairs labelled by three annotators.
    pub overlap_fraction: f64,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            features: FeatureConfig::default(),
            anchors: None,
            items: default_items(),
            overlap_fraction: 0.16,
            seed: 0,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::io::with_path(e, path))?;
        let cfg: Config = if path.extension().is_some_and(|e| e == "json") {
            crate::io::parse_json(&text, path)?
        } else {
            crate::io::parse_toml(&text, path)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        if !(0.0..=1.0).contains(&self.overlap_fraction) {
            return Err(Error::Config(format!(
                "overlap_fraction must lie in [0, 1], got {}",
                self.overlap_fraction
            )));
        }
        if self.items.iter().any(|i| i.trim().is_empty()) {
            return Err(Error::Config("item names must be non-empty".into()));
        }
        Ok(())
    }

    pub fn anchor_vocabulary(&self) -> AnchorVocabulary {
        match &self.anchors {
            Some(labels) => AnchorVocabulary::new(labels.clone()),
            None => AnchorVocabulary::default(),
        }
    }
}
