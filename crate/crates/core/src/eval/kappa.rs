use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::AnnotationRecord;
use crate::error::{Error, Result};

/// Fleiss' kappa over a subjects x categories matrix of rating counts.
/// Every row must sum to the same number of raters (at least 2).
pub fn fleiss_kappa(counts: &[Vec<u32>]) -> Result<f64> {
    let first = counts
        .first()
        .ok_or_else(|| Error::InvalidInput("kappa needs at least one subject".into()))?;
    let k = first.len();
    if k < 2 {
        return Err(Error::InvalidInput(
            "kappa needs at least two categories".into(),
        ));
    }
    let n: u32 = first.iter().sum();
    if n < 2 {
        return Err(Error::InvalidInput(
            "kappa needs at least two raters per subject".into(),
        ));
    }
    for (i, row) in counts.iter().enumerate() {
        if row.len() != k {
            return Err(Error::InvalidInput(format!(
                "row {i} has {} categories, expected {k}",
                row.len()
            )));
        }
        let s: u32 = row.iter().sum();
        if s != n {
            return Err(Error::InvalidInput(format!(
                "row {i} sums to {s}, expected {n} raters"
            )));
        }
    }
    let subjects = counts.len() as f64;
    let n = n as f64;
    let mut column = vec![0.0; k];
    let mut p_bar = 0.0;
    for row in counts {
        let mut agree = 0.0;
        for (j, &c) in row.iter().enumerate() {
            let c = c as f64;
            column[j] += c;
            agree += c * (c - 1.0);
        }
        p_bar += agree / (n * (n - 1.0));
    }
    p_bar /= subjects;
    let total = subjects * n;
    let p_e: f64 = column.iter().map(|c| (c / total).powi(2)).sum();
    if (1.0 - p_e).abs() < 1e-12 {
        return Err(Error::UndefinedKappa);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaMode {
    /// One matrix over every pair.
    Global,
    /// One matrix per item.
    PerItem,
}

/// What the matrix builder needs to know about a pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairInfo {
    pub item: String,
    pub container_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaMatrix {
    pub pair_ids: Vec<String>,
    /// `"1"` .. `"K_max"`, then `"none"`.
    pub categories: Vec<String>,
    pub counts: Vec<Vec<u32>>,
}

impl KappaMatrix {
    pub fn kappa(&self) -> Result<f64> {
        fleiss_kappa(&self.counts)
    }
}

pub const KAPPA_RATERS: usize = 3;

/// Rows are triple-labelled pairs (pairs with more ratings use the three
/// earliest; fewer are skipped), columns are container ids 1..K_max plus
/// "none". Key is `"all"` in global mode, the item name otherwise.
pub fn build_kappa_matrix(
    annotations: &[AnnotationRecord],
    pairs: &BTreeMap<String, PairInfo>,
    mode: KappaMode,
) -> Result<BTreeMap<String, KappaMatrix>> {
    let mut by_pair: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
    for a in annotations {
        by_pair.entry(&a.pair_id).or_default().push(a);
    }
    // group key -> (pair id, ratings) rows
    type Rows<'a> = Vec<(&'a str, Vec<Option<u32>>)>;
    let mut groups: BTreeMap<String, Rows> = BTreeMap::new();
    for (pair, mut recs) in by_pair {
        if recs.len() < KAPPA_RATERS {
            continue;
        }
        let info = pairs
            .get(pair)
            .ok_or_else(|| Error::DataIntegrity(format!("annotation for unknown pair {pair}")))?;
        recs.sort_by(|a, b| {
            a.submitted_at
                .cmp(&b.submitted_at)
                .then_with(|| a.annotator_id.cmp(&b.annotator_id))
        });
        let labels = recs[..KAPPA_RATERS]
            .iter()
            .map(|r| {
                let l = r.label()?;
                if let Some(id) = l {
                    if id == 0 || id > info.container_count {
                        return Err(Error::DataIntegrity(format!(
                            "pair {pair} has container {id} of {}",
                            info.container_count
                        )));
                    }
                }
                Ok(l)
            })
            .collect::<Result<Vec<_>>>()?;
        let key = match mode {
            KappaMode::Global => "all".to_string(),
            KappaMode::PerItem => info.item.clone(),
        };
        groups.entry(key).or_default().push((pair, labels));
    }
    Ok(groups
        .into_iter()
        .map(|(key, rows)| {
            let k_max = rows
                .iter()
                .map(|(p, _)| pairs[*p].container_count)
                .max()
                .unwrap_or(0) as usize;
            let mut categories: Vec<String> = (1..=k_max).map(|i| i.to_string()).collect();
            categories.push("none".to_string());
            let counts = rows
                .iter()
                .map(|(_, labels)| {
                    let mut row = vec![0u32; k_max + 1];
                    for l in labels {
                        row[l.map_or(k_max, |id| id as usize - 1)] += 1;
                    }
                    row
                })
                .collect();
            let matrix = KappaMatrix {
                pair_ids: rows.iter().map(|(p, _)| p.to_string()).collect(),
                categories,
                counts,
            };
            (key, matrix)
        })
        .collect())
}
