use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Deserialize;

use super::{CanonicalLabel, LabelDomain, LabelError, MappingConfig, MatchMode, Polarity, SentimentMap};

/// A parsed mapping config file.
///
/// ```toml
/// [domain]
/// name = "unified"
/// labels = ["neutral", "happiness", "anger"]
/// matching = "word"            # or "substring"
///
/// [aliases]
/// happy = "happiness"
///
/// [ambiguous]
/// labels = ["surprise"]
///
/// [sentiment]
/// exclude = ["surprise"]
///
/// [sentiment.polarity]
/// happiness = "positive"
/// ```
///
/// Only `[domain]` is required. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelConfig {
    pub mapping: MappingConfig,
    pub sentiment: Option<SentimentMap>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    domain: RawDomain,
    #[serde(default)]
    aliases: BTreeMap<String, String>,
    #[serde(default)]
    ambiguous: Option<RawAmbiguous>,
    #[serde(default)]
    sentiment: Option<RawSentiment>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    #[serde(default = "default_domain_name")]
    name: String,
    labels: Vec<String>,
    #[serde(default)]
    matching: MatchMode,
}

fn default_domain_name() -> String {
    "custom".to_string()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAmbiguous {
    labels: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSentiment {
    #[serde(default)]
    exclude: Vec<String>,
    #[serde(default)]
    polarity: BTreeMap<String, Polarity>,
}

impl LabelConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, LabelError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| LabelError::Config(e.to_string()))?;
        let domain = LabelDomain::new(&raw.domain.name, &raw.domain.labels)?
            .with_matching(raw.domain.matching);

        let ambiguous = raw.ambiguous.map(|a| a.labels).unwrap_or_default();
        let mapping = MappingConfig::new(
            domain.clone(),
            raw.aliases.iter().map(|(k, v)| (k.as_str(), v.as_str())),
            ambiguous.iter().map(String::as_str),
        )?;

        let sentiment = match raw.sentiment {
            None => None,
            Some(s) => {
                let member = |raw: &str| {
                    domain.canonical(raw).cloned().ok_or_else(|| {
                        LabelError::Config(format!("sentiment label {raw:?} is not in the domain"))
                    })
                };
                let polarity = s
                    .polarity
                    .iter()
                    .map(|(k, v)| Ok((member(k)?, *v)))
                    .collect::<Result<BTreeMap<CanonicalLabel, Polarity>, LabelError>>()?;
                let excluded = s
                    .exclude
                    .iter()
                    .map(|k| member(k))
                    .collect::<Result<BTreeSet<_>, _>>()?;
                Some(SentimentMap::new(polarity, excluded)?)
            }
        };
        Ok(Self { mapping, sentiment })
    }

    pub fn load(path: &Path) -> Result<Self, LabelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabelError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn domain(&self) -> &LabelDomain {
        self.mapping.target()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config() {
        let cfg = LabelConfig::from_toml_str("[domain]\nlabels = [\"a\", \"b\"]\n").unwrap();
        assert_eq!(cfg.domain().len(), 2);
        assert_eq!(cfg.domain().matching(), MatchMode::Word);
        assert!(cfg.sentiment.is_none());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = LabelConfig::from_toml_str("[domain]\nlabels = [\"a\", \"b\"]\nextra = 1\n");
        assert!(matches!(err, Err(LabelError::Config(_))));
        let err = LabelConfig::from_toml_str("[domain]\nlabels = [\"a\", \"b\"]\n[other]\nx = 1\n");
        assert!(matches!(err, Err(LabelError::Config(_))));
    }

    #[test]
    fn folded_alias_collision_is_a_load_error() {
        let text = "[domain]\nlabels = [\"happiness\", \"anger\"]\n[aliases]\nHappy = \"happiness\"\nhappy = \"anger\"\n";
        assert!(matches!(
            LabelConfig::from_toml_str(text),
            Err(LabelError::AliasCollision { .. })
        ));
    }

    #[test]
    fn substring_matching_for_unsegmented_labels() {
        let text = "[domain]\nlabels = [\"高兴\", \"悲伤\"]\nmatching = \"substring\"\n";
        let cfg = LabelConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.domain().matching(), MatchMode::Substring);
    }

    #[test]
    fn sentiment_labels_must_be_in_domain() {
        let text = "[domain]\nlabels = [\"a\", \"b\"]\n[sentiment.polarity]\nc = \"positive\"\n";
        assert!(matches!(LabelConfig::from_toml_str(text), Err(LabelError::Config(_))));
    }
}
