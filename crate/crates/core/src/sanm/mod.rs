//! Self-circular analysis negotiation: one model alternates between proposing
//! a label (generator) and judging that proposal (discriminator) for up to
//! `max_rounds` rounds.
//!
//! Per round `n` under [`ConsensusPolicy::DiscriminatorApproval`]:
//!
//! 1. the generator answers the prompt bundle and a label is extracted;
//! 2. if no domain label was found the round ends without a discriminator call;
//! 3. otherwise the discriminator sees the bundle plus this round's answer and
//!    returns ACCEPT (the label is the judgment) or REJECT (next round).
//!
//! [`ConsensusPolicy::ConsecutiveAgreement`] skips the discriminator and accepts
//! once two consecutive rounds extract the same label. Exhausting the rounds
//! yields [`Outcome::Outlier`].

mod consensus;
mod driver;

use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::backend::{
    Backend, BackendError, BackendRequest, CallRole, ExtractionPolicy, LabelExtractor, RequestTag,
    DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE,
};
use crate::dataset::{HistoryWindow, Utterance, UtteranceRef};
use crate::label_domain::{CanonicalLabel, LabelDomain};
use crate::prompt::{EmotionalDeduction, PromptBuilder, PromptError};

pub use consensus::{closed_form_consensus, simulate_consensus, Estimate, SimError, SimParams, SimReport, SimStats};
pub use driver::{evaluate_corpus, EvalError, LatencySummary, PredictionSet};

pub const TRACE_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_MAX_ROUNDS: u32 = 3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusPolicy {
    #[default]
    DiscriminatorApproval,
    ConsecutiveAgreement,
}

/// Where the emotional deduction for an utterance comes from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeductionSource {
    Off,
    /// One extra backend call per utterance, reused across rounds.
    #[default]
    Live,
    /// The `deduction` field of the corpus record.
    Corpus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegotiationConfig {
    pub max_rounds: u32,
    pub policy: ConsensusPolicy,
    pub deduction: DeductionSource,
    pub extraction: ExtractionPolicy,
    pub history_window: usize,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for NegotiationConfig {
    fn default() -> Self {
        Self {
            max_rounds: DEFAULT_MAX_ROUNDS,
            policy: ConsensusPolicy::default(),
            deduction: DeductionSource::default(),
            extraction: ExtractionPolicy::default(),
            history_window: crate::dataset::DEFAULT_HISTORY_WINDOW,
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("max_rounds must be at least 1")]
    ZeroRounds,
    #[error("temperature must be >= 0")]
    NegativeTemperature,
    #[error("max_tokens must be positive")]
    ZeroMaxTokens,
}

impl NegotiationConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_rounds == 0 {
            return Err(ConfigError::ZeroRounds);
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(ConfigError::NegativeTemperature);
        }
        if self.max_tokens == 0 {
            return Err(ConfigError::ZeroMaxTokens);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Reject,
    NotEvaluated,
}

fn verdict_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| Regex::new(r"(?i)\b(accept|reject)\b").expect("static regex"))
}

/// First whole-word ACCEPT or REJECT decides; neither present counts as REJECT.
pub fn parse_verdict(text: &str) -> Verdict {
    match verdict_pattern().find(text) {
        Some(m) if m.as_str().eq_ignore_ascii_case("accept") => Verdict::Accept,
        _ => Verdict::Reject,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub generator_text: String,
    pub generator_label: Option<CanonicalLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discriminator_text: Option<String>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Accepted(CanonicalLabel),
    Outlier,
}

impl Outcome {
    pub fn label(&self) -> Option<&CanonicalLabel> {
        match self {
            Outcome::Accepted(l) => Some(l),
            Outcome::Outlier => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub outcome: Outcome,
    pub rounds_used: u32,
    /// Sum of backend latencies for this utterance, in milliseconds.
    pub latency_ms: f64,
}

impl Judgment {
    pub fn latency(&self) -> Duration {
        Duration::from_secs_f64(self.latency_ms / 1000.0)
    }
}

/// Round-by-round record of one negotiation. One JSON object per line in
/// trace files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegotiationTrace {
    pub version: u32,
    pub utterance: UtteranceRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<CanonicalLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deduction: Option<EmotionalDeduction>,
    pub rounds: Vec<RoundRecord>,
    /// `None` when a backend error aborted the negotiation.
    pub judgment: Option<Judgment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl NegotiationTrace {
    pub fn is_aborted(&self) -> bool {
        self.judgment.is_none()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("traces serialize")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum NegotiationError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    /// The partial trace records completed rounds and the error text.
    #[error("negotiation for {} aborted: {source}", partial.utterance)]
    Backend {
        partial: Box<NegotiationTrace>,
        #[source]
        source: BackendError,
    },
}

/// Runs negotiations for one label domain with one template set.
#[derive(Debug, Clone)]
pub struct Negotiator {
    config: NegotiationConfig,
    prompts: PromptBuilder,
    domain: LabelDomain,
    extractor: LabelExtractor,
}

impl Negotiator {
    pub fn new(config: NegotiationConfig, prompts: PromptBuilder, domain: LabelDomain) -> Result<Self, ConfigError> {
        config.validate()?;
        let extractor = LabelExtractor::new(&domain, config.extraction);
        Ok(Self {
            config,
            prompts,
            domain,
            extractor,
        })
    }

    pub fn config(&self) -> &NegotiationConfig {
        &self.config
    }

    pub fn prompts(&self) -> &PromptBuilder {
        &self.prompts
    }

    pub fn domain(&self) -> &LabelDomain {
        &self.domain
    }

    fn call(&self, backend: &dyn Backend, prompt: &str, tag: RequestTag) -> Result<(String, Duration), BackendError> {
        let req = BackendRequest::prompt(prompt, tag).with_sampling(self.config.temperature, self.config.max_tokens);
        let resp = backend.complete(&req)?;
        Ok((resp.content, resp.latency))
    }

    pub fn negotiate(
        &self,
        utt: &Utterance,
        history: &HistoryWindow,
        deduction: Option<&EmotionalDeduction>,
        backend: &dyn Backend,
    ) -> Result<NegotiationTrace, NegotiationError> {
        let id = utt.id();
        let tag_id = id.to_string();
        let target = format!("{}: {}", utt.speaker, utt.text);
        let bundle = self.prompts.render_generator_prompt(
            self.prompts.generator_instruction(),
            history,
            &self.domain,
            deduction,
            &target,
        )?;

        let mut trace = NegotiationTrace {
            version: TRACE_SCHEMA_VERSION,
            utterance: id,
            gold: utt.gold_label.clone(),
            deduction: bundle.deduction.clone(),
            rounds: Vec::new(),
            judgment: None,
            error: None,
        };
        let mut latency = Duration::ZERO;
        let mut previous: Option<CanonicalLabel> = None;
        let abort = |mut trace: NegotiationTrace, source: BackendError| {
            trace.error = Some(source.to_string());
            NegotiationError::Backend {
                partial: Box::new(trace),
                source,
            }
        };

        for round in 1..=self.config.max_rounds {
            let (generator_text, spent) =
                match self.call(backend, bundle.text(), RequestTag::new(&tag_id, round, CallRole::Generator)) {
                    Ok(r) => r,
                    Err(e) => return Err(abort(trace, e)),
                };
            latency += spent;
            let generator_label = self.extractor.extract(&generator_text).label;

            let (discriminator_text, verdict, accepted) = match self.config.policy {
                ConsensusPolicy::DiscriminatorApproval => match &generator_label {
                    None => (None, Verdict::NotEvaluated, None),
                    Some(label) => {
                        let disc = self.prompts.render_discriminator_prompt(&bundle, &generator_text)?;
                        let (text, spent) = match self.call(
                            backend,
                            disc.text(),
                            RequestTag::new(&tag_id, round, CallRole::Discriminator),
                        ) {
                            Ok(r) => r,
                            Err(e) => return Err(abort(trace, e)),
                        };
                        latency += spent;
                        let verdict = parse_verdict(&text);
                        let accepted = (verdict == Verdict::Accept).then(|| label.clone());
                        (Some(text), verdict, accepted)
                    }
                },
                ConsensusPolicy::ConsecutiveAgreement => {
                    let agreed = match (&previous, &generator_label) {
                        (Some(prev), Some(cur)) if prev == cur => Some(cur.clone()),
                        _ => None,
                    };
                    (None, Verdict::NotEvaluated, agreed)
                }
            };

            previous = generator_label.clone();
            trace.rounds.push(RoundRecord {
                round,
                generator_text,
                generator_label,
                discriminator_text,
                verdict,
            });
            if let Some(label) = accepted {
                trace.judgment = Some(Judgment {
                    outcome: Outcome::Accepted(label),
                    rounds_used: round,
                    latency_ms: latency.as_secs_f64() * 1000.0,
                });
                return Ok(trace);
            }
        }

        trace.judgment = Some(Judgment {
            outcome: Outcome::Outlier,
            rounds_used: self.config.max_rounds,
            latency_ms: latency.as_secs_f64() * 1000.0,
        });
        Ok(trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockBackend;
    use crate::label_domain::presets::unified_config;

    fn utt() -> Utterance {
        Utterance {
            conversation_id: "u".into(),
            turn_index: 1,
            speaker: "Rachel".into(),
            text: "I can't believe you did that!".into(),
            gold_label: Some(CanonicalLabel::new("anger").unwrap()),
            deduction: None,
        }
    }

    fn negotiator(policy: ConsensusPolicy) -> Negotiator {
        let domain = LabelDomain::new("t", &["joy", "anger", "fear", "neutral"]).unwrap();
        let config = NegotiationConfig {
            policy,
            deduction: DeductionSource::Off,
            ..NegotiationConfig::default()
        };
        Negotiator::new(config, PromptBuilder::default(), domain).unwrap()
    }

    fn run(policy: ConsensusPolicy, mock: &MockBackend) -> NegotiationTrace {
        negotiator(policy)
            .negotiate(&utt(), &HistoryWindow::empty(5), None, mock)
            .unwrap()
    }

    const ID: &str = "u#1";

    #[test]
    fn verdict_parsing() {
        assert_eq!(parse_verdict("ACCEPT - clearly joyful"), Verdict::Accept);
        assert_eq!(parse_verdict("reject. Then again I could accept"), Verdict::Reject);
        assert_eq!(parse_verdict("I'd Accept this."), Verdict::Accept);
        assert_eq!(parse_verdict("Accepted."), Verdict::Reject);
        assert_eq!(parse_verdict("looks fine"), Verdict::Reject);
    }

    #[test]
    fn accept_in_round_one() {
        let mock = MockBackend::new()
            .respond(ID, 1, CallRole::Generator, "joy")
            .respond(ID, 1, CallRole::Discriminator, "ACCEPT it fits");
        let t = run(ConsensusPolicy::DiscriminatorApproval, &mock);
        let j = t.judgment.unwrap();
        assert_eq!(j.outcome, Outcome::Accepted(CanonicalLabel::new("joy").unwrap()));
        assert_eq!(j.rounds_used, 1);
        assert_eq!(t.rounds.len(), 1);
        assert_eq!(t.rounds[0].verdict, Verdict::Accept);
    }

    #[test]
    fn reject_every_round_is_outlier() {
        let mock = MockBackend::new()
            .with_role_default(CallRole::Generator, "anger")
            .with_role_default(CallRole::Discriminator, "REJECT");
        let t = run(ConsensusPolicy::DiscriminatorApproval, &mock);
        let j = t.judgment.unwrap();
        assert_eq!(j.outcome, Outcome::Outlier);
        assert_eq!(j.rounds_used, 3);
        assert_eq!(t.rounds.iter().map(|r| r.round).collect::<Vec<_>>(), [1, 2, 3]);
    }

    #[test]
    fn consecutive_agreement_accepts_in_round_two() {
        let mock = MockBackend::new().with_role_default(CallRole::Generator, "anger");
        let t = run(ConsensusPolicy::ConsecutiveAgreement, &mock);
        let j = t.judgment.unwrap();
        assert_eq!(j.outcome, Outcome::Accepted(CanonicalLabel::new("anger").unwrap()));
        assert_eq!(j.rounds_used, 2);
        assert!(t.rounds.iter().all(|r| r.verdict == Verdict::NotEvaluated && r.discriminator_text.is_none()));
    }

    #[test]
    fn consecutive_agreement_needs_equal_labels() {
        let mock = MockBackend::new()
            .respond(ID, 1, CallRole::Generator, "anger")
            .respond(ID, 2, CallRole::Generator, "fear")
            .respond(ID, 3, CallRole::Generator, "joy");
        let t = run(ConsensusPolicy::ConsecutiveAgreement, &mock);
        assert_eq!(t.judgment.unwrap().outcome, Outcome::Outlier);
    }

    #[test]
    fn no_label_skips_discriminator() {
        let mock = MockBackend::new()
            .respond(ID, 1, CallRole::Generator, "dunno")
            .respond(ID, 2, CallRole::Generator, "fear")
            .with_role_default(CallRole::Discriminator, "ACCEPT");
        let t = run(ConsensusPolicy::DiscriminatorApproval, &mock);
        let j = t.judgment.unwrap();
        assert_eq!(j.outcome, Outcome::Accepted(CanonicalLabel::new("fear").unwrap()));
        assert_eq!(j.rounds_used, 2);
        assert_eq!(t.rounds[0].verdict, Verdict::NotEvaluated);
        assert!(t.rounds[0].generator_label.is_none());
        assert!(t.rounds[0].discriminator_text.is_none());
    }

    #[test]
    fn backend_error_aborts_with_partial_trace() {
        let mock = MockBackend::new()
            .respond(ID, 1, CallRole::Generator, "anger")
            .respond(ID, 1, CallRole::Discriminator, "REJECT");
        let err = negotiator(ConsensusPolicy::DiscriminatorApproval)
            .negotiate(&utt(), &HistoryWindow::empty(5), None, &mock)
            .unwrap_err();
        match err {
            NegotiationError::Backend { partial, source } => {
                assert!(matches!(source, BackendError::ScriptMiss(_)));
                assert_eq!(partial.rounds.len(), 1);
                assert!(partial.is_aborted());
                assert!(partial.error.is_some());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_rounds_rejected() {
        let config = NegotiationConfig {
            max_rounds: 0,
            ..NegotiationConfig::default()
        };
        let domain = unified_config().domain().clone();
        assert_eq!(
            Negotiator::new(config, PromptBuilder::default(), domain).unwrap_err(),
            ConfigError::ZeroRounds
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn response() -> impl Strategy<Value = String> {
            prop::sample::select(vec![
                "joy", "anger", "fear", "neutral", "dunno", "not joy but fear", "ACCEPT", "REJECT",
                "accept: anger", "reject", "maybe",
            ])
            .prop_map(String::from)
        }

        proptest! {
            #[test]
            fn trace_invariants(
                gens in prop::collection::vec(response(), 1..6),
                discs in prop::collection::vec(response(), 1..6),
                rounds in 1u32..6,
                agreement in any::<bool>(),
            ) {
                let mut mock = MockBackend::new().with_default("maybe");
                for (i, g) in gens.iter().enumerate() {
                    mock = mock.respond(ID, i as u32 + 1, CallRole::Generator, g.clone());
                }
                for (i, d) in discs.iter().enumerate() {
                    mock = mock.respond(ID, i as u32 + 1, CallRole::Discriminator, d.clone());
                }
                let policy = if agreement { ConsensusPolicy::ConsecutiveAgreement } else { ConsensusPolicy::DiscriminatorApproval };
                let domain = LabelDomain::new("t", &["joy", "anger", "fear", "neutral"]).unwrap();
                let config = NegotiationConfig { max_rounds: rounds, policy, deduction: DeductionSource::Off, ..NegotiationConfig::default() };
                let n = Negotiator::new(config, PromptBuilder::default(), domain.clone()).unwrap();
                let t = n.negotiate(&utt(), &HistoryWindow::empty(5), None, &mock).unwrap();
                let j = t.judgment.clone().unwrap();
                prop_assert!(j.rounds_used <= rounds);
                prop_assert_eq!(t.rounds.len() as u32, j.rounds_used);
                for (i, r) in t.rounds.iter().enumerate() {
                    prop_assert_eq!(r.round, i as u32 + 1);
                }
                match &j.outcome {
                    Outcome::Accepted(l) => prop_assert!(domain.contains(l.as_str())),
                    Outcome::Outlier => prop_assert_eq!(j.rounds_used, rounds),
                }
            }

            #[test]
            fn always_accepting_discriminator_is_single_call(g in response()) {
                let mock = MockBackend::new()
                    .with_role_default(CallRole::Generator, g.clone())
                    .with_role_default(CallRole::Discriminator, "ACCEPT");
                let t = run(ConsensusPolicy::DiscriminatorApproval, &mock);
                let j = t.judgment.unwrap();
                if let Some(first) = &t.rounds[0].generator_label {
                    prop_assert_eq!(j.outcome, Outcome::Accepted(first.clone()));
                    prop_assert_eq!(j.rounds_used, 1);
                } else {
                    prop_assert_eq!(j.outcome, Outcome::Outlier);
                }
            }
        }
    }
}
