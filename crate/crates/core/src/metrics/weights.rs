use log::warn;
use serde::Serialize;

use super::MetricsError;

pub use crate::label_domain::presets::TWITTER_CLASS_WEIGHTS;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassWeights {
    pub weights: Vec<f64>,
    /// Indices of classes with zero support.
    pub zero_support: Vec<usize>,
}

/// Inverse-frequency weights normalized so that equal supports give 1:
/// `total / (K * support_c)`, and 0 for classes never seen.
pub fn class_weights(supports: &[u64]) -> Result<ClassWeights, MetricsError> {
    let total: u64 = supports.iter().sum();
    if total == 0 {
        return Err(MetricsError::AllZero);
    }
    let k = supports.len() as f64;
    let mut zero_support = Vec::new();
    let weights = supports
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            if s == 0 {
                warn!("class {i} has zero support; weight set to 0");
                zero_support.push(i);
                0.0
            } else {
                total as f64 / (k * s as f64)
            }
        })
        .collect();
    Ok(ClassWeights { weights, zero_support })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_points() {
        assert_eq!(class_weights(&[5, 5, 5]).unwrap().weights, vec![1.0; 3]);
        let w = class_weights(&[3, 1]).unwrap().weights;
        assert!((w[0] - 4.0 / 6.0).abs() < 1e-15);
        assert!((w[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_support() {
        let w = class_weights(&[2, 0, 2]).unwrap();
        assert_eq!(w.zero_support, vec![1]);
        assert_eq!(w.weights[1], 0.0);
        assert_eq!(class_weights(&[0, 0]), Err(MetricsError::AllZero));
        assert_eq!(class_weights(&[]), Err(MetricsError::AllZero));
    }
}
