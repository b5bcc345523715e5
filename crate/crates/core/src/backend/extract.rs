use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::label_domain::{CanonicalLabel, LabelDomain, MatchMode};

/// Which mention wins when model output names several labels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractionPolicy {
    /// Reasoning usually lists candidates before the conclusion.
    #[default]
    Last,
    First,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelExtraction {
    /// `None` means no domain label was found.
    pub label: Option<CanonicalLabel>,
    /// Byte range of the winning mention in the input.
    pub matched_span: Option<(usize, usize)>,
}

impl LabelExtraction {
    pub fn none() -> Self {
        Self {
            label: None,
            matched_span: None,
        }
    }

    pub fn is_no_label(&self) -> bool {
        self.label.is_none()
    }
}

/// Finds domain labels in free text, case-insensitively.
#[derive(Debug, Clone)]
pub struct LabelExtractor {
    labels: Vec<CanonicalLabel>,
    /// Capture group `i + 1` holds label `order[i]`.
    order: Vec<usize>,
    pattern: Regex,
    policy: ExtractionPolicy,
}

impl LabelExtractor {
    pub fn new(domain: &LabelDomain, policy: ExtractionPolicy) -> Self {
        let labels = domain.labels().to_vec();
        // Longer labels first so one label that contains another wins at the same position.
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(labels[i].as_str().chars().count()));
        let alternatives = order
            .iter()
            .map(|&i| format!("({})", regex::escape(labels[i].as_str())))
            .collect::<Vec<_>>()
            .join("|");
        let source = match domain.matching() {
            MatchMode::Word => format!(r"(?i)\b(?:{alternatives})\b"),
            MatchMode::Substring => format!(r"(?i)(?:{alternatives})"),
        };
        let pattern = Regex::new(&source).expect("escaped label alternation compiles");
        Self {
            labels,
            order,
            pattern,
            policy,
        }
    }

    pub fn extract(&self, text: &str) -> LabelExtraction {
        let mut matches = self.pattern.captures_iter(text).map(|caps| {
            let group = (1..caps.len())
                .find(|&g| caps.get(g).is_some())
                .expect("one alternative matched");
            let whole = caps.get(0).expect("group 0");
            (self.order[group - 1], whole.start(), whole.end())
        });
        let hit = match self.policy {
            ExtractionPolicy::First => matches.next(),
            ExtractionPolicy::Last => matches.last(),
        };
        match hit {
            Some((idx, start, end)) => LabelExtraction {
                label: Some(self.labels[idx].clone()),
                matched_span: Some((start, end)),
            },
            None => LabelExtraction::none(),
        }
    }
}

/// One-shot extraction with the default (last mention wins) policy.
pub fn extract_label(text: &str, domain: &LabelDomain) -> LabelExtraction {
    LabelExtractor::new(domain, ExtractionPolicy::Last).extract(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label_domain::presets::unified_config;

    fn unified() -> LabelDomain {
        unified_config().domain().clone()
    }

    fn label(e: &LabelExtraction) -> Option<&str> {
        e.label.as_ref().map(|l| l.as_str())
    }

    #[test]
    fn single_match() {
        let e = extract_label("The emotion is anger.", &unified());
        assert_eq!(label(&e), Some("anger"));
        assert_eq!(e.matched_span, Some((15, 20)));
    }

    #[test]
    fn last_distinct_occurrence_wins() {
        assert_eq!(label(&extract_label("Not sadness but anger", &unified())), Some("anger"));
        let first = LabelExtractor::new(&unified(), ExtractionPolicy::First);
        assert_eq!(label(&first.extract("Not sadness but anger")), Some("sadness"));
    }

    #[test]
    fn no_match() {
        assert!(extract_label("I cannot decide.", &unified()).is_no_label());
    }

    #[test]
    fn whole_words_and_case() {
        let d = unified();
        assert!(extract_label("angered and fearful", &d).is_no_label());
        assert_eq!(label(&extract_label("EMOTION: Fear", &d)), Some("fear"));
        assert!(extract_label("unlikely", &d).is_no_label());
    }

    #[test]
    fn substring_mode_for_unsegmented_scripts() {
        let d = LabelDomain::new("zh", &["高兴", "悲伤", "愤怒"])
            .unwrap()
            .with_matching(MatchMode::Substring);
        let e = extract_label("这句话表达了悲伤的情绪", &d);
        assert_eq!(label(&e), Some("悲伤"));
        let (s, t) = e.matched_span.unwrap();
        assert_eq!(&"这句话表达了悲伤的情绪"[s..t], "悲伤");
        // Word mode cannot see labels embedded in running Chinese text.
        let word = LabelDomain::new("zh", &["高兴", "悲伤"]).unwrap();
        assert!(extract_label("这句话表达了悲伤的情绪", &word).is_no_label());
    }

    #[test]
    fn longer_label_preferred_at_same_position() {
        let d = LabelDomain::new("x", &["joy", "joyful"])
            .unwrap()
            .with_matching(MatchMode::Substring);
        assert_eq!(label(&extract_label("joyful", &d)), Some("joyful"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn result_in_domain_and_span_points_at_it(text in "[A-Za-z .,:]{0,20}(anger|Fear|LIKE|joy|sad)?[A-Za-z .,:]{0,20}") {
                let d = unified();
                let e = extract_label(&text, &d);
                if let Some(l) = &e.label {
                    prop_assert!(d.contains(l.as_str()));
                    let (s, t) = e.matched_span.unwrap();
                    prop_assert_eq!(text[s..t].to_lowercase(), l.as_str());
                } else {
                    prop_assert!(e.matched_span.is_none());
                }
            }
        }
    }
}
