use std::fmt::Write as _;

use serde::Serialize;

use super::{compute_metrics, confusion, AbstentionMode, ConfusionMatrix, MetricsError, MetricsReport};
use crate::label_domain::LabelDomain;
use crate::sanm::{LatencySummary, PredictionSet};

/// Scores for a prediction set under both abstention modes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub count_as_wrong: MetricsReport,
    /// `None` when every scored utterance abstained.
    pub exclude: Option<MetricsReport>,
    pub confusion: ConfusionMatrix,
    pub skipped: usize,
    pub latency: LatencySummary,
}

impl EvaluationReport {
    pub fn from_predictions(preds: &PredictionSet, dom: &LabelDomain) -> Result<Self, MetricsError> {
        let cm = confusion(preds, dom, AbstentionMode::CountAsWrong)?;
        let count_as_wrong = compute_metrics(&cm)?;
        let exclude = match compute_metrics(&cm.clone().with_mode(AbstentionMode::Exclude)) {
            Ok(r) => Some(r),
            Err(MetricsError::EmptyMatrix) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            count_as_wrong,
            exclude,
            confusion: cm,
            skipped: preds.skipped().count(),
            latency: preds.latency_summary(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn metrics_block(out: &mut String, r: &MetricsReport) {
    let _ = writeln!(
        out,
        "accuracy {:.4}  macro-F1 {:.4}  weighted-F1 {:.4}  (scored {}, abstained {})",
        r.accuracy, r.macro_f1, r.weighted_f1, r.scored, r.abstentions
    );
    if let Some(loss) = r.mean_focal_loss {
        let _ = writeln!(out, "mean focal loss {loss:.6}");
    }
    let _ = writeln!(out, "{:<14} {:>9} {:>9} {:>9} {:>8}", "label", "precision", "recall", "f1", "support");
    for c in &r.per_class {
        let _ = writeln!(
            out,
            "{:<14} {:>9.4} {:>9.4} {:>9.4} {:>8}",
            c.label.as_str(),
            c.precision,
            c.recall,
            c.f1,
            c.support
        );
    }
}

/// Plain-text rendering for terminals.
pub fn render_table(report: &EvaluationReport) -> String {
    let mut out = String::new();
    out.push_str("== abstentions counted as wrong ==\n");
    metrics_block(&mut out, &report.count_as_wrong);
    out.push_str("\n== abstentions excluded ==\n");
    match &report.exclude {
        Some(r) => metrics_block(&mut out, r),
        None => out.push_str("no non-abstained predictions\n"),
    }
    out.push_str("\n== confusion (rows gold, columns predicted) ==\n");
    let labels = report.confusion.domain().labels();
    let _ = write!(out, "{:<14}", "");
    for l in labels {
        let _ = write!(out, " {:>9}", truncate(l.as_str()));
    }
    let _ = writeln!(out, " {:>9}", "outlier");
    for (g, row) in report.confusion.counts().iter().enumerate() {
        let _ = write!(out, "{:<14}", labels[g].as_str());
        for v in row {
            let _ = write!(out, " {v:>9}");
        }
        let _ = writeln!(out, " {:>9}", report.confusion.abstentions()[g]);
    }
    let l = &report.latency;
    let _ = writeln!(
        out,
        "\nskipped {}  latency ms: mean {:.1}  p50 {:.1}  p95 {:.1}",
        report.skipped, l.mean_ms, l.p50_ms, l.p95_ms
    );
    out
}

fn truncate(s: &str) -> &str {
    match s.char_indices().nth(9) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}
