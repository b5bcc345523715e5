//! Canonical emotion labels, source-label unification and sentiment coarsening.
//!
//! A [`LabelDomain`] is the closed, ordered set of labels a model may emit. Its
//! order is significant: confusion-matrix axes, prompt label lists and
//! histograms all follow it.

mod config;
pub mod presets;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::LabelConfig;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LabelError {
    #[error("label domain needs at least 2 distinct labels, got {0}")]
    EmptyDomain(usize),
    #[error("invalid label {0:?}: labels must be non-empty and contain no whitespace")]
    InvalidLabel(String),
    #[error("label {0:?} is neither aliased nor part of the target domain")]
    UnmappedLabel(String),
    #[error("label {0:?} has no fixed polarity; it must be categorized from the text")]
    AmbiguousLabel(String),
    #[error("aliases {first:?} and {second:?} collide after case-folding")]
    AliasCollision { first: String, second: String },
    #[error("alias {alias:?} points at {target:?}, which is not in the target domain")]
    UnknownAliasTarget { alias: String, target: String },
    #[error("alias {alias:?} is itself a domain label but maps to {target:?}")]
    ShadowedDomainLabel { alias: String, target: String },
    #[error("invalid label configuration: {0}")]
    Config(String),
}

/// Lowercase fold used for every label comparison: trim, then Unicode lowercase.
pub fn fold(raw: &str) -> String {
    raw.trim().to_lowercase()
}

/// A single label of a [`LabelDomain`]: lowercase, non-empty, whitespace-free.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CanonicalLabel(String);

impl CanonicalLabel {
    /// Folds `raw` and validates it.
    pub fn new(raw: &str) -> Result<Self, LabelError> {
        let folded = fold(raw);
        if folded.is_empty() || folded.chars().any(char::is_whitespace) {
            return Err(LabelError::InvalidLabel(raw.to_string()));
        }
        Ok(Self(folded))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for CanonicalLabel {
    type Error = LabelError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        let label = Self::new(&value)?;
        if label.0 != value {
            return Err(LabelError::InvalidLabel(value));
        }
        Ok(label)
    }
}

impl From<CanonicalLabel> for String {
    fn from(value: CanonicalLabel) -> Self {
        value.0
    }
}

impl fmt::Display for CanonicalLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for CanonicalLabel {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// How label mentions are located in free text.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Whole words delimited by Unicode word boundaries.
    #[default]
    Word,
    /// Plain substring search, for scripts written without spaces (e.g. Chinese).
    Substring,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelDomain {
    name: String,
    labels: Vec<CanonicalLabel>,
    #[serde(default)]
    matching: MatchMode,
}

impl LabelDomain {
    /// Builds a domain from raw label text, folding case and dropping repeats
    /// while keeping first-occurrence order. Blank entries are skipped.
    pub fn new<S: AsRef<str>>(name: &str, labels: &[S]) -> Result<Self, LabelError> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for raw in labels {
            let raw = raw.as_ref();
            if raw.trim().is_empty() {
                continue;
            }
            let label = CanonicalLabel::new(raw)?;
            if seen.insert(label.clone()) {
                out.push(label);
            }
        }
        if out.len() < 2 {
            return Err(LabelError::EmptyDomain(out.len()));
        }
        Ok(Self {
            name: name.to_string(),
            labels: out,
            matching: MatchMode::Word,
        })
    }

    pub fn with_matching(mut self, matching: MatchMode) -> Self {
        self.matching = matching;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn labels(&self) -> &[CanonicalLabel] {
        &self.labels
    }

    pub fn matching(&self) -> MatchMode {
        self.matching
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    /// Always false for a constructed domain; present for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        let folded = fold(label);
        self.labels.iter().position(|l| l.as_str() == folded)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index_of(label).is_some()
    }

    pub fn get(&self, index: usize) -> Option<&CanonicalLabel> {
        self.labels.get(index)
    }

    /// Returns the canonical label for `raw` if it is a member of the domain.
    pub fn canonical(&self, raw: &str) -> Option<&CanonicalLabel> {
        self.index_of(raw).map(|i| &self.labels[i])
    }
}

/// Builds an anonymous domain; see [`LabelDomain::new`].
pub fn build_domain<S: AsRef<str>>(labels: &[S]) -> Result<LabelDomain, LabelError> {
    LabelDomain::new("custom", labels)
}

/// Source-label aliases into a target domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingConfig {
    target: LabelDomain,
    aliases: BTreeMap<String, CanonicalLabel>,
    ambiguous: BTreeSet<String>,
}

impl MappingConfig {
    pub fn new<I, A, S>(target: LabelDomain, aliases: I, ambiguous: A) -> Result<Self, LabelError>
    where
        I: IntoIterator<Item = (S, S)>,
        A: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut folded: BTreeMap<String, (String, CanonicalLabel)> = BTreeMap::new();
        for (key, target_label) in aliases {
            let (key, target_label) = (key.as_ref(), target_label.as_ref());
            let canonical = target.canonical(target_label).cloned().ok_or_else(|| {
                LabelError::UnknownAliasTarget {
                    alias: key.to_string(),
                    target: target_label.to_string(),
                }
            })?;
            let fkey = fold(key);
            if fkey.is_empty() {
                return Err(LabelError::InvalidLabel(key.to_string()));
            }
            // Keeps map_label idempotent: a canonical label can only alias to itself.
            if target.contains(&fkey) && fkey != canonical.as_str() {
                return Err(LabelError::ShadowedDomainLabel {
                    alias: key.to_string(),
                    target: canonical.to_string(),
                });
            }
            if let Some((first, _)) = folded.get(&fkey) {
                return Err(LabelError::AliasCollision {
                    first: first.clone(),
                    second: key.to_string(),
                });
            }
            folded.insert(fkey, (key.to_string(), canonical));
        }
        Ok(Self {
            target,
            aliases: folded.into_iter().map(|(k, (_, v))| (k, v)).collect(),
            ambiguous: ambiguous.into_iter().map(|s| fold(s.as_ref())).collect(),
        })
    }

    /// A mapping with no aliases: only in-domain labels are accepted.
    pub fn identity(target: LabelDomain) -> Self {
        Self {
            target,
            aliases: BTreeMap::new(),
            ambiguous: BTreeSet::new(),
        }
    }

    pub fn target(&self) -> &LabelDomain {
        &self.target
    }

    /// Aliases keyed by folded source label.
    pub fn aliases(&self) -> &BTreeMap<String, CanonicalLabel> {
        &self.aliases
    }

    pub fn ambiguous(&self) -> &BTreeSet<String> {
        &self.ambiguous
    }

    pub fn is_ambiguous(&self, raw: &str) -> bool {
        self.ambiguous.contains(&fold(raw))
    }

    /// Maps a source label into the target domain.
    pub fn map_label(&self, raw: &str) -> Result<CanonicalLabel, LabelError> {
        let folded = fold(raw);
        if let Some(label) = self.aliases.get(&folded) {
            return Ok(label.clone());
        }
        self.target
            .canonical(&folded)
            .cloned()
            .ok_or_else(|| LabelError::UnmappedLabel(raw.to_string()))
    }

    /// Checks a multiset of observed source labels against this mapping.
    pub fn validate<'a, I>(&self, observed: I) -> MappingReport
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut unmapped: BTreeMap<String, usize> = BTreeMap::new();
        let mut ambiguous: BTreeMap<String, usize> = BTreeMap::new();
        let mut used_aliases = BTreeSet::new();
        let mut counts = vec![0usize; self.target.len()];
        let mut total = 0;
        for raw in observed {
            total += 1;
            let folded = fold(raw);
            if self.ambiguous.contains(&folded) {
                *ambiguous.entry(folded.clone()).or_default() += 1;
            }
            if self.aliases.contains_key(&folded) {
                used_aliases.insert(folded.clone());
            }
            match self.map_label(raw) {
                Ok(label) => {
                    let idx = self.target.index_of(label.as_str()).expect("mapped label in domain");
                    counts[idx] += 1;
                }
                Err(_) => *unmapped.entry(raw.to_string()).or_default() += 1,
            }
        }
        MappingReport {
            total_observed: total,
            unmapped,
            unused_aliases: self
                .aliases
                .keys()
                .filter(|k| !used_aliases.contains(*k))
                .cloned()
                .collect(),
            counts: self
                .target
                .labels()
                .iter()
                .cloned()
                .zip(counts)
                .collect(),
            ambiguous_observed: ambiguous,
        }
    }
}

/// Free-function form of [`MappingConfig::map_label`].
pub fn map_label(raw: &str, cfg: &MappingConfig) -> Result<CanonicalLabel, LabelError> {
    cfg.map_label(raw)
}

/// Free-function form of [`MappingConfig::validate`].
pub fn validate_mapping<'a, I>(cfg: &MappingConfig, observed: I) -> MappingReport
where
    I: IntoIterator<Item = &'a str>,
{
    cfg.validate(observed)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MappingReport {
    pub total_observed: usize,
    /// Observed labels with no mapping, with their occurrence counts.
    pub unmapped: BTreeMap<String, usize>,
    /// Folded alias keys never hit by an observed label.
    pub unused_aliases: Vec<String>,
    /// Per-label counts after mapping, in domain order.
    pub counts: Vec<(CanonicalLabel, usize)>,
    pub ambiguous_observed: BTreeMap<String, usize>,
}

impl MappingReport {
    pub fn is_clean(&self) -> bool {
        self.unmapped.is_empty()
    }

    pub fn mapped_total(&self) -> usize {
        self.counts.iter().map(|(_, c)| c).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
            Polarity::Neutral => "neutral",
        })
    }
}

/// Emotion → polarity table. Labels in `excluded` have no fixed polarity.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SentimentMap {
    polarity: BTreeMap<CanonicalLabel, Polarity>,
    excluded: BTreeSet<CanonicalLabel>,
}

impl SentimentMap {
    pub fn new(
        polarity: BTreeMap<CanonicalLabel, Polarity>,
        excluded: BTreeSet<CanonicalLabel>,
    ) -> Result<Self, LabelError> {
        if let Some(both) = excluded.iter().find(|l| polarity.contains_key(*l)) {
            return Err(LabelError::Config(format!(
                "sentiment label {both:?} is both mapped and excluded"
            )));
        }
        Ok(Self { polarity, excluded })
    }

    pub fn polarity(&self) -> &BTreeMap<CanonicalLabel, Polarity> {
        &self.polarity
    }

    pub fn excluded(&self) -> &BTreeSet<CanonicalLabel> {
        &self.excluded
    }

    pub fn coarsen(&self, label: &CanonicalLabel) -> Result<Polarity, LabelError> {
        if self.excluded.contains(label) {
            return Err(LabelError::AmbiguousLabel(label.to_string()));
        }
        self.polarity
            .get(label)
            .copied()
            .ok_or_else(|| LabelError::UnmappedLabel(label.to_string()))
    }

    /// True when every domain label is either mapped or explicitly excluded.
    pub fn covers(&self, domain: &LabelDomain) -> bool {
        domain
            .labels()
            .iter()
            .all(|l| self.polarity.contains_key(l) || self.excluded.contains(l))
    }
}

pub fn coarsen_to_sentiment(label: &CanonicalLabel, sm: &SentimentMap) -> Result<Polarity, LabelError> {
    sm.coarsen(label)
}
