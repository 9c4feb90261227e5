use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub a: String,
    pub b: String,
    pub t: f64,
    pub p: f64,
    /// `p` times the number of comparisons, capped at 1.
    pub p_adjusted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub f: f64,
    pub p: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub pairwise: Vec<PairwiseTest>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sum_sq(v: &[f64], m: f64) -> f64 {
    v.iter().map(|x| (x - m).powi(2)).sum()
}

/// Upper tail of F(d1, d2) at `f`. Zero within-group variance gives p = 0
/// when the means differ and 1 when they do not.
fn f_tail(between: f64, within: f64, d1: usize, d2: usize) -> Result<(f64, f64)> {
    if within == 0.0 {
        return Ok(if between == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY, 0.0)
        });
    }
    let f = (between / d1 as f64) / (within / d2 as f64);
    let dist = FisherSnedecor::new(d1 as f64, d2 as f64)
        .map_err(|e| Error::InvalidInput(format!("F distribution: {e}")))?;
    Ok((f, dist.sf(f)))
}

/// Two-sided pooled-variance t-test.
fn t_test(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    let (ma, mb) = (mean(a), mean(b));
    let df = a.len() + b.len() - 2;
    let pooled = (sum_sq(a, ma) + sum_sq(b, mb)) / df as f64;
    let se = (pooled * (1.0 / a.len() as f64 + 1.0 / b.len() as f64)).sqrt();
    if se == 0.0 {
        return Ok(if ma == mb {
            (0.0, 1.0)
        } else {
            ((ma - mb).signum() * f64::INFINITY, 0.0)
        });
    }
    let t = (ma - mb) / se;
    let dist = StudentsT::new(0.0, 1.0, df as f64)
        .map_err(|e| Error::InvalidInput(format!("t distribution: {e}")))?;
    Ok((t, (2.0 * dist.sf(t.abs())).min(1.0)))
}

/// One-way ANOVA over per-model 0/1 correctness, then Bonferroni-corrected
/// pairwise t-tests in name order.
pub fn significance(models: &BTreeMap<String, Vec<bool>>) -> Result<SignificanceReport> {
    if models.len() < 2 {
        return Err(Error::InvalidInput(
            "significance needs at least two models".into(),
        ));
    }
    let n = models.values().next().map_or(0, Vec::len);
    if n < 2 || models.values().any(|v| v.len() != n) {
        return Err(Error::InvalidInput(
            "correctness vectors must share one length of at least 2".into(),
        ));
    }
    let groups: Vec<(&String, Vec<f64>)> = models
        .iter()
        .map(|(k, v)| (k, v.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()))
        .collect();
    let all: Vec<f64> = groups.iter().flat_map(|(_, v)| v.iter().copied()).collect();
    let grand = mean(&all);
    let between: f64 = groups
        .iter()
        .map(|(_, v)| v.len() as f64 * (mean(v) - grand).powi(2))
        .sum();
    let within: f64 = groups.iter().map(|(_, v)| sum_sq(v, mean(v))).sum();
    let df_between = groups.len() - 1;
    let df_within = all.len() - groups.len();
    let (f, p) = f_tail(between, within, df_between, df_within)?;

    let comparisons = groups.len() * (groups.len() - 1) / 2;
    let mut pairwise = Vec::with_capacity(comparisons);
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let (t, p) = t_test(&groups[i].1, &groups[j].1)?;
            pairwise.push(PairwiseTest {
                a: groups[i].0.clone(),
                b: groups[j].0.clone(),
                t,
                p,
                p_adjusted: (p * comparisons as f64).min(1.0),
            });
        }
    }
    Ok(SignificanceReport {
        f,
        p,
        df_between,
        df_within,
        pairwise,
    })
}
