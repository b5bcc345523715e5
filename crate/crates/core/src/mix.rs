//! Building training mixes from several corpora in one label domain: uniform
//! random sampling and per-class balanced sampling, plus label histograms.
//!
//! Sampling is at utterance level. Each sampled utterance keeps its
//! conversation as context: the output holds the source conversation up to
//! the last sampled turn, with only sampled turns labeled. Output
//! conversation ids are prefixed with the source corpus name.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Conversation, Corpus, Utterance};
use crate::label_domain::{CanonicalLabel, LabelDomain};
use crate::rng::StableRng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MixError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("corpus has no labeled utterances")]
    NoLabels,
    #[error("corpus name '{0}' appears more than once among the sources")]
    DuplicateSource(String),
    #[error("corpus '{0}' uses a different label domain")]
    DomainMismatch(String),
    #[error("invalid mix spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixStrategy {
    Random,
    EqualCategory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixSpec {
    pub strategy: MixStrategy,
    pub target_size: usize,
    pub seed: u64,
}

/// Identity of a sampled utterance in its source.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct SampleKey {
    pub corpus: String,
    pub conversation_id: String,
    pub turn_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixOutput {
    pub corpus: Corpus,
    /// Sampled utterances in draw order.
    pub selection: Vec<SampleKey>,
    pub warnings: Vec<String>,
}

struct PoolEntry {
    source: usize,
    conv: usize,
    turn: usize,
    class: usize,
}

fn pool(sources: &[Corpus]) -> Result<(LabelDomain, Vec<PoolEntry>), MixError> {
    let first = sources
        .first()
        .ok_or_else(|| MixError::InsufficientData("no source corpora".into()))?;
    let domain = first.domain.clone();
    let mut names = HashSet::new();
    let mut entries = Vec::new();
    for (s, corpus) in sources.iter().enumerate() {
        if !names.insert(corpus.name.as_str()) {
            return Err(MixError::DuplicateSource(corpus.name.clone()));
        }
        if corpus.domain.labels() != domain.labels() {
            return Err(MixError::DomainMismatch(corpus.name.clone()));
        }
        for (c, conv) in corpus.conversations.iter().enumerate() {
            for (t, utt) in conv.utterances.iter().enumerate() {
                if let Some(label) = &utt.gold_label {
                    let class = domain
                        .index_of(label.as_str())
                        .ok_or_else(|| MixError::DomainMismatch(corpus.name.clone()))?;
                    entries.push(PoolEntry { source: s, conv: c, turn: t, class });
                }
            }
        }
    }
    Ok((domain, entries))
}

pub fn mix(spec: &MixSpec, sources: &[Corpus]) -> Result<MixOutput, MixError> {
    match spec.strategy {
        MixStrategy::Random => random_mix(spec, sources),
        MixStrategy::EqualCategory => equal_mix(spec, sources),
    }
}

/// Uniform sample without replacement of `target_size` labeled utterances.
pub fn random_mix(spec: &MixSpec, sources: &[Corpus]) -> Result<MixOutput, MixError> {
    if spec.strategy != MixStrategy::Random {
        return Err(MixError::InvalidSpec("random_mix needs the random strategy".into()));
    }
    if spec.target_size == 0 {
        return Err(MixError::InvalidSpec("target size must be positive".into()));
    }
    let (domain, entries) = pool(sources)?;
    if spec.target_size > entries.len() {
        return Err(MixError::InsufficientData(format!(
            "requested {} utterances but the pool has {} labeled",
            spec.target_size,
            entries.len()
        )));
    }
    let mut rng = StableRng::seed_from_u64(spec.seed);
    let picked: Vec<&PoolEntry> = rng
        .sample_indices(entries.len(), spec.target_size)
        .into_iter()
        .map(|i| &entries[i])
        .collect();
    Ok(assemble(sources, domain, &picked, Vec::new()))
}

/// Samples `floor(target_size / K)` utterances from every class, or as many
/// as the scarcest class allows.
pub fn equal_mix(spec: &MixSpec, sources: &[Corpus]) -> Result<MixOutput, MixError> {
    if spec.strategy != MixStrategy::EqualCategory {
        return Err(MixError::InvalidSpec("equal_mix needs the equal-category strategy".into()));
    }
    let (domain, entries) = pool(sources)?;
    let k = domain.len();
    let mut buckets: Vec<Vec<&PoolEntry>> = vec![Vec::new(); k];
    for e in &entries {
        buckets[e.class].push(e);
    }
    if let Some(empty) = buckets.iter().position(Vec::is_empty) {
        return Err(MixError::InsufficientData(format!(
            "class '{}' has no labeled utterances",
            domain.labels()[empty]
        )));
    }
    let mut quota = spec.target_size / k;
    if quota == 0 {
        return Err(MixError::InvalidSpec(format!(
            "target size {} is smaller than the {k} classes",
            spec.target_size
        )));
    }
    let mut warnings = Vec::new();
    let scarcest = buckets.iter().map(Vec::len).min().unwrap_or(0);
    if scarcest < quota {
        let msg = format!(
            "target {} unreachable: scarcest class has {scarcest} utterances, sampling {scarcest} per class ({} total)",
            spec.target_size,
            scarcest * k
        );
        warn!("{msg}");
        warnings.push(msg);
        quota = scarcest;
    }
    let mut rng = StableRng::seed_from_u64(spec.seed);
    let mut picked = Vec::with_capacity(quota * k);
    for bucket in &buckets {
        picked.extend(rng.sample_indices(bucket.len(), quota).into_iter().map(|i| bucket[i]));
    }
    Ok(assemble(sources, domain, &picked, warnings))
}

fn assemble(sources: &[Corpus], domain: LabelDomain, picked: &[&PoolEntry], warnings: Vec<String>) -> MixOutput {
    let mut chosen: BTreeMap<(usize, usize), BTreeSet<usize>> = BTreeMap::new();
    let mut selection = Vec::with_capacity(picked.len());
    for e in picked {
        chosen.entry((e.source, e.conv)).or_default().insert(e.turn);
        let corpus = &sources[e.source];
        selection.push(SampleKey {
            corpus: corpus.name.clone(),
            conversation_id: corpus.conversations[e.conv].id.clone(),
            turn_index: e.turn,
        });
    }
    let mut conversations: Vec<Conversation> = chosen
        .into_iter()
        .map(|((s, c), turns)| {
            let src = &sources[s].conversations[c];
            let id = format!("{}:{}", sources[s].name, src.id);
            let last = *turns.iter().next_back().expect("non-empty");
            let utterances = src.utterances[..=last]
                .iter()
                .map(|u| Utterance {
                    conversation_id: id.clone(),
                    gold_label: if turns.contains(&u.turn_index) { u.gold_label.clone() } else { None },
                    ..u.clone()
                })
                .collect();
            Conversation { id, utterances }
        })
        .collect();
    conversations.sort_by(|a, b| a.id.cmp(&b.id));
    MixOutput {
        corpus: Corpus {
            name: "mix".into(),
            conversations,
            domain,
        },
        selection,
        warnings,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryHistogram {
    pub labels: Vec<CanonicalLabel>,
    pub counts: Vec<u64>,
    pub proportions: Vec<f64>,
    pub total: u64,
}

impl CategoryHistogram {
    fn from_counts(labels: Vec<CanonicalLabel>, counts: Vec<u64>) -> Result<Self, MixError> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(MixError::NoLabels);
        }
        let proportions = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Ok(Self {
            labels,
            counts,
            proportions,
            total,
        })
    }

    pub fn count(&self, label: &str) -> Option<u64> {
        self.labels.iter().position(|l| l.as_str() == label).map(|i| self.counts[i])
    }

    /// Element-wise sum of two histograms over the same labels.
    pub fn merge(&self, other: &Self) -> Result<Self, MixError> {
        if self.labels != other.labels {
            return Err(MixError::DomainMismatch("histogram".into()));
        }
        let counts = self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect();
        Self::from_counts(self.labels.clone(), counts)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("histogram serializes")
    }

    /// Horizontal bar chart as a standalone SVG document.
    pub fn to_svg(&self, title: &str) -> String {
        const ROW: usize = 24;
        const LABEL_W: usize = 110;
        const BAR_W: f64 = 360.0;
        let height = 40 + ROW * self.labels.len();
        let max = self.counts.iter().copied().max().unwrap_or(1).max(1) as f64;
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{height}" font-family="sans-serif" font-size="12">"#,
            LABEL_W + BAR_W as usize + 90
        );
        let _ = writeln!(svg, r#"<text x="8" y="18" font-weight="bold">{}</text>"#, xml_escape(title));
        for (i, (label, &count)) in self.labels.iter().zip(&self.counts).enumerate() {
            let y = 30 + i * ROW;
            let w = BAR_W * count as f64 / max;
            let _ = writeln!(
                svg,
                r##"<text x="8" y="{}">{}</text><rect x="{LABEL_W}" y="{}" width="{w:.1}" height="{}" fill="#4a78b0"/><text x="{:.1}" y="{}">{count} ({:.1}%)</text>"##,
                y + 14,
                xml_escape(label.as_str()),
                y + 3,
                ROW - 6,
                LABEL_W as f64 + w + 6.0,
                y + 14,
                100.0 * self.proportions[i]
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Label counts over the corpus domain, zero-filled.
pub fn histogram(corpus: &Corpus) -> Result<CategoryHistogram, MixError> {
    let labels = corpus.domain.labels().to_vec();
    let mut counts = vec![0u64; labels.len()];
    for (_, utt) in corpus.labeled() {
        let label = utt.gold_label.as_ref().expect("labeled");
        let i = corpus
            .domain
            .index_of(label.as_str())
            .ok_or_else(|| MixError::DomainMismatch(corpus.name.clone()))?;
        counts[i] += 1;
    }
    CategoryHistogram::from_counts(labels, counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::RawRecord;

    fn dom() -> LabelDomain {
        LabelDomain::new("t", &["a", "b", "c"]).unwrap()
    }

    /// One conversation per `conv_len` labels, cycling through `labels`.
    fn corpus(name: &str, labels: &[&str], conv_len: usize) -> Corpus {
        let records = labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                (
                    i + 1,
                    RawRecord {
                        conversation_id: format!("d{:03}", i / conv_len),
                        turn_index: i % conv_len,
                        speaker: "s".into(),
                        text: format!("u{i}"),
                        label: Some(l.to_string()),
                        deduction: None,
                    },
                )
            })
            .collect();
        Corpus::from_records(name, records, dom(), CanonicalLabel::new).unwrap()
    }

    fn spec(strategy: MixStrategy, target_size: usize, seed: u64) -> MixSpec {
        MixSpec {
            strategy,
            target_size,
            seed,
        }
    }

    #[test]
    fn random_full_pool_is_a_permutation() {
        let src = corpus("x", &["a", "b", "c", "a", "b"], 2);
        let out = random_mix(&spec(MixStrategy::Random, 5, 1), std::slice::from_ref(&src)).unwrap();
        assert_eq!(out.selection.len(), 5);
        let unique: HashSet<_> = out.selection.iter().collect();
        assert_eq!(unique.len(), 5);
        assert_eq!(histogram(&out.corpus).unwrap().counts, histogram(&src).unwrap().counts);
        assert_eq!(out.corpus.conversations[0].id, "x:d000");
    }

    #[test]
    fn random_is_deterministic_and_bounded() {
        let src = [corpus("x", &["a"; 20], 4), corpus("y", &["b"; 20], 5)];
        let s = spec(MixStrategy::Random, 10, 42);
        assert_eq!(random_mix(&s, &src).unwrap(), random_mix(&s, &src).unwrap());
        assert!(matches!(
            random_mix(&spec(MixStrategy::Random, 41, 1), &src),
            Err(MixError::InsufficientData(_))
        ));
    }

    #[test]
    fn context_turns_are_unlabeled() {
        let src = corpus("x", &["a", "b", "c", "a"], 4);
        let out = random_mix(&spec(MixStrategy::Random, 1, 5), std::slice::from_ref(&src)).unwrap();
        let key = &out.selection[0];
        let conv = &out.corpus.conversations[0];
        assert_eq!(conv.utterances.len(), key.turn_index + 1);
        assert_eq!(out.corpus.labeled_count(), 1);
        assert!(conv.utterances[key.turn_index].gold_label.is_some());
    }

    #[test]
    fn equal_quota_and_warning() {
        let labels: Vec<&str> = [vec!["a"; 5], vec!["b"; 4], vec!["c"; 3]].concat();
        let src = [corpus("x", &labels, 3)];
        let out = equal_mix(&spec(MixStrategy::EqualCategory, 9, 3), &src).unwrap();
        assert_eq!(histogram(&out.corpus).unwrap().counts, vec![3, 3, 3]);
        assert!(out.warnings.is_empty());

        let labels: Vec<&str> = [vec!["a"; 5], vec!["b"; 4], vec!["c"; 2]].concat();
        let src = [corpus("x", &labels, 3)];
        let out = equal_mix(&spec(MixStrategy::EqualCategory, 9, 3), &src).unwrap();
        assert_eq!(histogram(&out.corpus).unwrap().counts, vec![2, 2, 2]);
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn equal_rejects_empty_class() {
        let src = [corpus("x", &["a", "b", "a"], 3)];
        assert!(matches!(
            equal_mix(&spec(MixStrategy::EqualCategory, 3, 0), &src),
            Err(MixError::InsufficientData(_))
        ));
    }

    #[test]
    fn source_checks() {
        let a = corpus("x", &["a"], 1);
        assert_eq!(
            random_mix(&spec(MixStrategy::Random, 1, 0), &[a.clone(), a.clone()]),
            Err(MixError::DuplicateSource("x".into()))
        );
        let mut other = corpus("y", &["a"], 1);
        other.domain = LabelDomain::new("t", &["a", "b"]).unwrap();
        assert_eq!(
            random_mix(&spec(MixStrategy::Random, 1, 0), &[a.clone(), other]),
            Err(MixError::DomainMismatch("y".into()))
        );
        assert!(matches!(
            equal_mix(&spec(MixStrategy::Random, 1, 0), &[a]),
            Err(MixError::InvalidSpec(_))
        ));
    }

    #[test]
    fn histogram_basics() {
        let h = histogram(&corpus("x", &["c"], 1)).unwrap();
        assert_eq!(h.counts, vec![0, 0, 1]);
        assert_eq!(h.count("c"), Some(1));
        let x = histogram(&corpus("x", &["a", "b", "b"], 2)).unwrap();
        let y = histogram(&corpus("y", &["c", "b"], 2)).unwrap();
        assert_eq!(x.merge(&y).unwrap().counts, vec![1, 3, 1]);
        assert!((x.proportions.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(histogram(&Corpus::empty("e", dom())), Err(MixError::NoLabels));
        let svg = h.to_svg("labels <x>");
        assert!(svg.starts_with("<svg") && svg.contains("&lt;x&gt;"));
    }

    #[test]
    fn mixes_across_sources_without_repeats() {
        let src = [corpus("x", &["a", "b", "c"].repeat(4), 3), corpus("y", &["c", "b", "a"].repeat(4), 4)];
        for seed in 0..20 {
            let out = mix(&spec(MixStrategy::EqualCategory, 12, seed), &src).unwrap();
            let unique: HashSet<_> = out.selection.iter().collect();
            assert_eq!(unique.len(), 12);
            assert_eq!(histogram(&out.corpus).unwrap().counts, vec![4, 4, 4]);
        }
    }
}
