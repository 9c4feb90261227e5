use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::score::{accuracy, mean_iou, threshold_key, EvalRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub strategy: String,
    pub n: usize,
    /// Accuracy (%) per threshold, in the order given to [`summarize`].
    pub accuracy: Vec<(f64, f64)>,
    pub mean_iou: f64,
    pub parse_failures: usize,
}

/// One row per strategy, sorted by strategy name.
pub fn summarize(records: &[EvalRecord], thresholds: &[f64]) -> Vec<ReportRow> {
    let mut groups: BTreeMap<&str, Vec<EvalRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(&r.strategy).or_default().push(r.clone());
    }
    groups
        .into_iter()
        .map(|(strategy, recs)| ReportRow {
            strategy: strategy.to_string(),
            n: recs.len(),
            accuracy: thresholds
                .iter()
                .map(|&t| (t, accuracy(&recs, t)))
                .collect(),
            mean_iou: mean_iou(&recs),
            parse_failures: recs.iter().filter(|r| r.parse_failed).count(),
        })
        .collect()
}

fn header(thresholds: &[f64]) -> Vec<String> {
    let mut h = vec!["strategy".to_string(), "n".to_string()];
    h.extend(thresholds.iter().map(|&t| {
        if t == 1.0 {
            "accuracy_iou_eq_1".to_string()
        } else {
            format!("accuracy_iou_ge_{}", threshold_key(t))
        }
    }));
    h.push("average_iou".to_string());
    h.push("parse_failures".to_string());
    h
}

fn cells(row: &ReportRow) -> Vec<String> {
    let mut c = vec![row.strategy.clone(), row.n.to_string()];
    c.extend(row.accuracy.iter().map(|(_, a)| format!("{a:.2}")));
    c.push(format!("{:.3}", row.mean_iou));
    c.push(row.parse_failures.to_string());
    c
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_csv(rows: &[ReportRow], thresholds: &[f64]) -> String {
    let mut out = header(thresholds).join(",");
    out.push('\n');
    for row in rows {
        let line: Vec<String> = cells(row).iter().map(|c| csv_field(c)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Fixed-width table: accuracy in percent, IoU as a ratio.
pub fn render_text(rows: &[ReportRow], thresholds: &[f64]) -> String {
    let head = header(thresholds);
    let body: Vec<Vec<String>> = rows.iter().map(cells).collect();
    let widths: Vec<usize> = (0..head.len())
        .map(|i| {
            body.iter()
                .map(|r| r[i].len())
                .chain([head[i].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let line = |out: &mut String, cols: &[String]| {
        let parts: Vec<String> = cols
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i == 0 {
                    format!("{c:<w$}", w = widths[i])
                } else {
                    format!("{c:>w$}", w = widths[i])
                }
            })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, &head);
    for r in &body {
        line(&mut out, r);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(strategy: &str, iou: f64) -> EvalRecord {
        EvalRecord {
            pair_id: String::new(),
            strategy: strategy.into(),
            item: "mug".into(),
            iou,
            correct_at: BTreeMap::new(),
            parse_failed: iou == 0.0,
        }
    }

    #[test]
    fn two_strategies_two_rows() {
        let t = [1.0, 0.5];
        let rows = summarize(&[rec("b", 1.0), rec("a", 0.6), rec("a", 0.0)], &t);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].strategy, "a");
        assert_eq!(rows[0].accuracy, vec![(1.0, 0.0), (0.5, 50.0)]);
        assert_eq!(rows[0].parse_failures, 1);
        let csv = render_csv(&rows, &t);
        assert_eq!(
            csv,
            "strategy,n,accuracy_iou_eq_1,accuracy_iou_ge_0.5,average_iou,parse_failures\n\
             a,2,0.00,50.00,0.300,1\n\
             b,1,100.00,100.00,1.000,0\n"
        );
        let text = render_text(&rows, &t);
        for (csv_line, text_line) in csv.lines().zip(text.lines()) {
            let a: Vec<&str> = csv_line.split(',').collect();
            let b: Vec<&str> = text_line.split_whitespace().collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn empty_is_header_only() {
        let t = [1.0];
        assert_eq!(render_csv(&[], &t).lines().count(), 1);
        assert_eq!(render_text(&summarize(&[], &t), &t).lines().count(), 1);
    }
}
