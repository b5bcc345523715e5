//! Monte-Carlo model of the negotiation loop with synthetic agents, and the
//! closed form it must agree with.
//!
//! Each round the generator is correct with probability `p`; the
//! discriminator accepts a correct answer with probability `a` and an
//! incorrect one with probability `b`. Rounds are independent, so a round
//! ends the negotiation with probability `q = p·a + (1 − p)·b`.

use serde::Serialize;
use thiserror::Error;

use crate::rng::StableRng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation parameters: {0}")]
    InvalidParams(String),
    #[error("acceptance probability is zero; conditional on acceptance is undefined")]
    DegenerateParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimParams {
    pub p_correct: f64,
    /// Acceptance probability for a correct proposal.
    pub accept_correct: f64,
    /// Acceptance probability for an incorrect proposal.
    pub accept_incorrect: f64,
    pub max_rounds: u32,
    pub trials: u64,
    pub seed: u64,
}

impl SimParams {
    pub fn validate(&self) -> Result<(), SimError> {
        for (name, v) in [
            ("p_correct", self.p_correct),
            ("accept_correct", self.accept_correct),
            ("accept_incorrect", self.accept_incorrect),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SimError::InvalidParams(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        if self.max_rounds == 0 {
            return Err(SimError::InvalidParams("max_rounds must be at least 1".into()));
        }
        if self.trials == 0 {
            return Err(SimError::InvalidParams("trials must be at least 1".into()));
        }
        Ok(())
    }

    /// Per-round acceptance probability.
    pub fn q(&self) -> f64 {
        self.p_correct * self.accept_correct + (1.0 - self.p_correct) * self.accept_incorrect
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    fn proportion(hits: u64, trials: u64) -> Self {
        let p = hits as f64 / trials as f64;
        Self {
            value: p,
            std_error: (p * (1.0 - p) / trials as f64).sqrt(),
        }
    }

    /// Whether `expected` lies within `k` standard errors. A zero standard
    /// error demands exact equality.
    pub fn within(&self, expected: f64, k: f64) -> bool {
        (self.value - expected).abs() <= k * self.std_error
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub params: SimParams,
    pub p_accepted: Estimate,
    pub p_accepted_correct: Estimate,
    pub p_outlier: Estimate,
    pub mean_rounds: Estimate,
}

/// Exact probabilities for the model in the module docs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimStats {
    pub q: f64,
    pub p_outlier: f64,
    pub p_accepted: f64,
    pub p_accepted_correct: f64,
    /// `p_accept_at_round[n - 1]` is the probability of accepting in round `n`.
    pub p_accept_at_round: Vec<f64>,
    /// `None` when `q == 0`.
    pub p_correct_given_accepted: Option<f64>,
    pub mean_rounds: f64,
}

impl SimStats {
    pub fn correct_given_accepted(&self) -> Result<f64, SimError> {
        self.p_correct_given_accepted.ok_or(SimError::DegenerateParams)
    }
}

pub fn closed_form_consensus(sp: &SimParams) -> Result<SimStats, SimError> {
    sp.validate()?;
    let q = sp.q();
    let miss = 1.0 - q;
    let n_max = sp.max_rounds;
    let p_accept_at_round: Vec<f64> = (1..=n_max).map(|n| miss.powi(n as i32 - 1) * q).collect();
    let p_outlier = miss.powi(n_max as i32);
    let p_accepted: f64 = p_accept_at_round.iter().sum();
    // Accepting a correct answer in round n: n - 1 misses, then correct and accepted.
    let pa = sp.p_correct * sp.accept_correct;
    let p_accepted_correct: f64 = (1..=n_max).map(|n| miss.powi(n as i32 - 1) * pa).sum();
    let mean_rounds = p_accept_at_round
        .iter()
        .enumerate()
        .map(|(i, p)| (i + 1) as f64 * p)
        .sum::<f64>()
        + n_max as f64 * p_outlier;
    Ok(SimStats {
        q,
        p_outlier,
        p_accepted,
        p_accepted_correct,
        p_accept_at_round,
        p_correct_given_accepted: (q > 0.0).then(|| pa / q),
        mean_rounds,
    })
}

pub fn simulate_consensus(sp: &SimParams) -> Result<SimReport, SimError> {
    sp.validate()?;
    let mut rng = StableRng::seed_from_u64(sp.seed);
    let (mut accepted, mut accepted_correct) = (0u64, 0u64);
    let (mut rounds_sum, mut rounds_sq) = (0f64, 0f64);
    for _ in 0..sp.trials {
        let mut rounds = sp.max_rounds;
        for n in 1..=sp.max_rounds {
            let correct = rng.next_f64() < sp.p_correct;
            let threshold = if correct { sp.accept_correct } else { sp.accept_incorrect };
            if rng.next_f64() < threshold {
                accepted += 1;
                accepted_correct += u64::from(correct);
                rounds = n;
                break;
            }
        }
        let r = f64::from(rounds);
        rounds_sum += r;
        rounds_sq += r * r;
    }
    let t = sp.trials as f64;
    let mean = rounds_sum / t;
    let var = if sp.trials > 1 {
        ((rounds_sq - t * mean * mean) / (t - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(SimReport {
        params: *sp,
        p_accepted: Estimate::proportion(accepted, sp.trials),
        p_accepted_correct: Estimate::proportion(accepted_correct, sp.trials),
        p_outlier: Estimate::proportion(sp.trials - accepted, sp.trials),
        mean_rounds: Estimate {
            value: mean,
            std_error: (var / t).sqrt(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(p: f64, a: f64, b: f64, n: u32) -> SimParams {
        SimParams {
            p_correct: p,
            accept_correct: a,
            accept_incorrect: b,
            max_rounds: n,
            trials: 10_000,
            seed: 1,
        }
    }

    #[test]
    fn hand_computed_point() {
        // q = 0.7*0.9 + 0.3*0.2 = 0.69; (1 - 0.69)^3 = 0.029791
        let s = closed_form_consensus(&params(0.7, 0.9, 0.2, 3)).unwrap();
        assert!((s.q - 0.69).abs() < 1e-15);
        assert!((s.p_outlier - 0.029791).abs() < 1e-12);
        assert!((s.p_accepted + s.p_outlier - 1.0).abs() < 1e-12);
        assert!((s.correct_given_accepted().unwrap() - 0.63 / 0.69).abs() < 1e-12);
        // 1*0.69 + 2*0.31*0.69 + 3*0.31^2*0.69 + 3*0.31^3
        let mean = 0.69 + 2.0 * 0.2139 + 3.0 * 0.066309 + 3.0 * 0.029791;
        assert!((s.mean_rounds - mean).abs() < 1e-12);
    }

    #[test]
    fn degenerate_closed_forms() {
        let s = closed_form_consensus(&params(1.0, 1.0, 0.0, 4)).unwrap();
        assert_eq!((s.q, s.p_outlier, s.mean_rounds), (1.0, 0.0, 1.0));
        let s = closed_form_consensus(&params(0.4, 0.0, 0.0, 4)).unwrap();
        assert_eq!((s.q, s.p_outlier, s.mean_rounds), (0.0, 1.0, 4.0));
        assert_eq!(s.correct_given_accepted(), Err(SimError::DegenerateParams));
    }

    #[test]
    fn degenerate_simulations_are_exact() {
        let r = simulate_consensus(&params(1.0, 1.0, 0.0, 3)).unwrap();
        assert_eq!(r.p_accepted_correct.value, 1.0);
        assert_eq!(r.mean_rounds.value, 1.0);
        assert_eq!(r.mean_rounds.std_error, 0.0);
        let r = simulate_consensus(&params(0.3, 0.0, 0.0, 3)).unwrap();
        assert_eq!(r.p_outlier.value, 1.0);
        assert_eq!(r.mean_rounds.value, 3.0);
    }

    #[test]
    fn seeded_and_reproducible() {
        let sp = params(0.6, 0.7, 0.3, 3);
        assert_eq!(simulate_consensus(&sp).unwrap(), simulate_consensus(&sp).unwrap());
        let other = SimParams { seed: 2, ..sp };
        assert_ne!(simulate_consensus(&sp).unwrap(), simulate_consensus(&other).unwrap());
    }

    #[test]
    fn invalid_params() {
        assert!(matches!(
            simulate_consensus(&params(1.2, 0.5, 0.5, 3)),
            Err(SimError::InvalidParams(_))
        ));
        assert!(matches!(
            closed_form_consensus(&params(0.5, 0.5, 0.5, 0)),
            Err(SimError::InvalidParams(_))
        ));
    }

    #[test]
    fn agrees_with_closed_form_at_small_scale() {
        let sp = params(0.7, 0.9, 0.2, 3);
        let r = simulate_consensus(&sp).unwrap();
        let s = closed_form_consensus(&sp).unwrap();
        assert!(r.p_outlier.within(s.p_outlier, 4.0));
        assert!(r.mean_rounds.within(s.mean_rounds, 4.0));
    }
}
