//! Scoring predictions against ground truth and the statistics built on top:
//! accuracy, mean IoU, annotator agreement, threshold analysis and
//! significance tests.

mod kappa;
mod report;
mod score;
mod significance;
mod threshold;

pub use kappa::{build_kappa_matrix, fleiss_kappa, KappaMatrix, KappaMode, PairInfo};
pub use report::{render_csv, render_text, summarize, ReportRow};
pub use score::{
    accuracy, mean_iou, score_prediction, threshold_key, EvalRecord, DEFAULT_THRESHOLDS,
};
pub use significance::{significance, PairwiseTest, SignificanceReport};
pub use threshold::{
    threshold_analysis, ClassStats, CutoffInterval, QualityScoredRecord, ThresholdReport,
};
