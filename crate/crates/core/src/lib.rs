//! Emotion recognition in conversations with a generator/discriminator
//! negotiation loop over chat-completion backends.
//!
//! The pipeline: load a corpus ([`dataset`]) in a unified label domain
//! ([`label_domain`]), build prompts with dialogue history and an emotional
//! deduction ([`prompt`]), negotiate a label per utterance against a
//! [`backend::Backend`] ([`sanm`]), and score the results ([`metrics`]).
//! [`mix`] builds class-balanced or random training mixes.

pub mod backend;
pub mod cli;
pub mod dataset;
pub mod label_domain;
pub mod metrics;
pub mod mix;
pub mod prompt;
pub mod rng;
pub mod sanm;

pub use backend::{Backend, BackendError, BackendRequest, BackendResponse, MockBackend, OpenAiClient, OpenAiConfig};
pub use dataset::{Conversation, Corpus, DatasetError, Utterance};
pub use label_domain::{CanonicalLabel, LabelDomain, LabelError, MappingConfig};
pub use metrics::{compute_metrics, confusion, AbstentionMode, ConfusionMatrix, MetricsReport};
pub use prompt::{PromptBuilder, TemplateSet};
pub use sanm::{evaluate_corpus, NegotiationConfig, NegotiationTrace, Negotiator, Outcome, PredictionSet};
