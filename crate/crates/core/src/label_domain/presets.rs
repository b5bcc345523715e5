//! Shipped label configurations and reference corpus schemas.

use super::LabelConfig;

pub const UNIFIED_CONFIG_TOML: &str = include_str!("../../config/unified.toml");

/// The 8-label unified domain with its default aliases and sentiment map.
pub fn unified_config() -> LabelConfig {
    LabelConfig::from_toml_str(UNIFIED_CONFIG_TOML).expect("shipped unified config is valid")
}

/// Label inventory of a public source corpus, as published.
#[derive(Debug, Clone, Copy)]
pub struct CorpusSchema {
    pub name: &'static str,
    pub labels: &'static [&'static str],
}

const SEVEN_WITH_LIKE: &[&str] = &["happiness", "sadness", "disgust", "like", "fear", "surprise", "anger"];
const SMP2020: &[&str] = &["neutral", "happy", "angry", "sad", "fear", "surprise"];

/// The fine-grained Chinese emotion corpora merged into the unified domain.
pub const UNIFIED_SOURCE_CORPORA: [CorpusSchema; 9] = [
    CorpusSchema {
        name: "ocemotion",
        labels: &["sadness", "happiness", "disgust", "anger", "like", "surprise", "fear"],
    },
    CorpusSchema {
        name: "chinese-caption-sentiment",
        labels: &["neutral", "happiness", "sadness", "disgust", "anger", "surprise", "fear"],
    },
    CorpusSchema { name: "smp2020-wect", labels: SMP2020 },
    CorpusSchema { name: "smp2020-ewect-covid", labels: SMP2020 },
    CorpusSchema { name: "emotion-corpus-microblog", labels: SEVEN_WITH_LIKE },
    CorpusSchema { name: "nlpcc2014-whole-sentence", labels: SEVEN_WITH_LIKE },
    CorpusSchema { name: "nlpcc2014", labels: SEVEN_WITH_LIKE },
    CorpusSchema { name: "nlpcc2013-whole-sentence", labels: SEVEN_WITH_LIKE },
    CorpusSchema { name: "nlpcc2013", labels: SEVEN_WITH_LIKE },
];

pub fn source_schema(name: &str) -> Option<&'static CorpusSchema> {
    UNIFIED_SOURCE_CORPORA.iter().find(|s| s.name == name)
}

/// Mapping config for one of [`UNIFIED_SOURCE_CORPORA`]. All of them share
/// the unified config; aliases a corpus never uses are simply idle.
pub fn source_config(name: &str) -> Option<LabelConfig> {
    source_schema(name).map(|_| unified_config())
}

/// Published class weights (neutral, positive, negative) for the two Twitter
/// sentiment corpora. Reference data only; their derivation is unknown and
/// [`crate::metrics::class_weights`] does not reproduce them.
pub const TWITTER_CLASS_WEIGHTS: [(&str, [f64; 3]); 2] = [
    ("twitter2015", [0.563, 1.139, 2.884]),
    ("twitter2017", [0.723, 0.786, 2.899]),
];
