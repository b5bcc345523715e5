use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Normalization tolerance for probability vectors.
const SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalParams {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        Self { alpha: 0.25, gamma: 2.0 }
    }
}

/// `-alpha * (1 - p_t)^gamma * ln(p_t)`.
pub fn focal_loss(p_t: f64, fp: FocalParams) -> Result<f64, MetricsError> {
    if !(p_t > 0.0 && p_t <= 1.0) {
        return Err(MetricsError::DomainError(p_t));
    }
    // -0.0 at p_t = 1 would print oddly
    Ok((-fp.alpha * (1.0 - p_t).powf(fp.gamma) * p_t.ln()).max(0.0))
}

/// Mean loss over `(class probabilities, gold index)` samples.
pub fn mean_focal_loss(samples: &[(Vec<f64>, usize)], fp: FocalParams) -> Result<f64, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut sum = 0.0;
    for (index, (probs, gold)) in samples.iter().enumerate() {
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(MetricsError::NotNormalized { index, sum: total });
        }
        let p_t = *probs.get(*gold).ok_or(MetricsError::GoldOutOfRange {
            index,
            gold: *gold,
            classes: probs.len(),
        })?;
        sum += focal_loss(p_t, fp)?;
    }
    Ok(sum / samples.len() as f64)
}
