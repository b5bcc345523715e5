//! Classification metrics over negotiation outcomes, focal loss and
//! inverse-frequency class weights.

mod focal;
mod report;
mod weights;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label_domain::{CanonicalLabel, LabelDomain};
use crate::sanm::{Outcome, PredictionSet};

pub use focal::{focal_loss, mean_focal_loss, FocalParams};
pub use report::{render_table, EvaluationReport};
pub use weights::{class_weights, ClassWeights, TWITTER_CLASS_WEIGHTS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("label '{0}' is not in the label domain")]
    DomainMismatch(String),
    #[error("confusion matrices cover different label domains")]
    IncompatibleMatrices,
    #[error("nothing to score")]
    EmptyMatrix,
    #[error("probability {0} is outside (0, 1]")]
    DomainError(f64),
    #[error("probability vector {index} sums to {sum}, not 1")]
    NotNormalized { index: usize, sum: f64 },
    #[error("gold index {gold} out of range for sample {index} with {classes} classes")]
    GoldOutOfRange { index: usize, gold: usize, classes: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("every class has zero support")]
    AllZero,
}

/// How Outlier predictions enter the scores.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbstentionMode {
    /// Abstained samples are dropped from every count and support.
    Exclude,
    /// Abstentions are false negatives of their gold class.
    #[default]
    CountAsWrong,
}

/// Rows are gold labels, columns predictions. Outlier predictions are kept
/// per gold class outside the square.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfusionMatrix {
    #[serde(skip)]
    domain: LabelDomain,
    labels: Vec<CanonicalLabel>,
    counts: Vec<Vec<u64>>,
    abstentions: Vec<u64>,
    mode: AbstentionMode,
}

impl ConfusionMatrix {
    pub fn new(domain: &LabelDomain, mode: AbstentionMode) -> Self {
        let k = domain.len();
        Self {
            domain: domain.clone(),
            labels: domain.labels().to_vec(),
            counts: vec![vec![0; k]; k],
            abstentions: vec![0; k],
            mode,
        }
    }

    /// Builds from `(gold, prediction)` pairs; `None` is an abstention.
    pub fn from_pairs<'a, I>(pairs: I, domain: &LabelDomain, mode: AbstentionMode) -> Result<Self, MetricsError>
    where
        I: IntoIterator<Item = (&'a str, Option<&'a str>)>,
    {
        let mut cm = Self::new(domain, mode);
        for (gold, pred) in pairs {
            cm.record(gold, pred)?;
        }
        Ok(cm)
    }

    pub fn record(&mut self, gold: &str, pred: Option<&str>) -> Result<(), MetricsError> {
        let g = self.index(gold)?;
        match pred {
            Some(p) => {
                let p = self.index(p)?;
                self.counts[g][p] += 1;
            }
            None => self.abstentions[g] += 1,
        }
        Ok(())
    }

    pub fn record_index(&mut self, gold: usize, pred: Option<usize>) {
        match pred {
            Some(p) => self.counts[gold][p] += 1,
            None => self.abstentions[gold] += 1,
        }
    }

    fn index(&self, label: &str) -> Result<usize, MetricsError> {
        self.domain
            .index_of(label)
            .ok_or_else(|| MetricsError::DomainMismatch(label.to_string()))
    }

    pub fn domain(&self) -> &LabelDomain {
        &self.domain
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn abstentions(&self) -> &[u64] {
        &self.abstentions
    }

    pub fn mode(&self) -> AbstentionMode {
        self.mode
    }

    pub fn with_mode(mut self, mode: AbstentionMode) -> Self {
        self.mode = mode;
        self
    }

    /// Scored samples including abstentions.
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum::<u64>() + self.abstentions.iter().sum::<u64>()
    }

    /// Element-wise sum; used to combine partial matrices.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<(), MetricsError> {
        if self.labels != other.labels {
            return Err(MetricsError::IncompatibleMatrices);
        }
        for (row, orow) in self.counts.iter_mut().zip(&other.counts) {
            for (c, o) in row.iter_mut().zip(orow) {
                *c += o;
            }
        }
        for (a, o) in self.abstentions.iter_mut().zip(&other.abstentions) {
            *a += o;
        }
        Ok(())
    }
}

/// Tallies completed negotiations. Aborted traces and traces without gold are
/// not scored.
pub fn confusion(preds: &PredictionSet, dom: &LabelDomain, mode: AbstentionMode) -> Result<ConfusionMatrix, MetricsError> {
    let pairs = preds.scored().map(|(gold, outcome)| {
        let pred = match outcome {
            Outcome::Accepted(l) => Some(l.as_str()),
            Outcome::Outlier => None,
        };
        (gold.as_str(), pred)
    });
    ConfusionMatrix::from_pairs(pairs, dom, mode)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: CanonicalLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub mean_focal_loss: Option<f64>,
    pub abstention_mode: AbstentionMode,
    pub scored: u64,
    pub abstentions: u64,
}

impl MetricsReport {
    pub fn with_focal_loss(mut self, loss: f64) -> Self {
        self.mean_focal_loss = Some(loss);
        self
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport, MetricsError> {
    let k = cm.labels.len();
    let counted = |g: usize| match cm.mode {
        AbstentionMode::CountAsWrong => cm.abstentions[g],
        AbstentionMode::Exclude => 0,
    };
    let total: u64 = (0..k).map(|g| cm.counts[g].iter().sum::<u64>() + counted(g)).sum();
    if total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let mut per_class = Vec::with_capacity(k);
    let mut correct = 0;
    for c in 0..k {
        let tp = cm.counts[c][c];
        let predicted: u64 = (0..k).map(|g| cm.counts[g][c]).sum();
        let support = cm.counts[c].iter().sum::<u64>() + counted(c);
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        correct += tp;
        per_class.push(ClassMetrics {
            label: cm.labels[c].clone(),
            precision,
            recall,
            f1: harmonic(precision, recall),
            support,
        });
    }
    // Both averages are sums of weight * f1 in class order, so equal supports
    // give bit-identical results (support / total rounds to the same 1 / n).
    let present = per_class.iter().filter(|m| m.support > 0).count();
    let macro_f1 = per_class
        .iter()
        .filter(|m| m.support > 0)
        .map(|m| m.f1 * (1.0 / present as f64))
        .sum::<f64>();
    let weighted_f1 = per_class
        .iter()
        .filter(|m| m.support > 0)
        .map(|m| m.f1 * (m.support as f64 / total as f64))
        .sum::<f64>();
    Ok(MetricsReport {
        accuracy: ratio(correct, total),
        macro_f1,
        weighted_f1,
        per_class,
        mean_focal_loss: None,
        abstention_mode: cm.mode,
        scored: total,
        abstentions: cm.abstentions.iter().sum(),
    })
}
