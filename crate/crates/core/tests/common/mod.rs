#![allow(dead_code)]

pub mod stub;

use std::path::PathBuf;

use sentixrl::backend::MockBackend;
use sentixrl::dataset::{parse_corpus, Corpus};
use sentixrl::label_domain::presets::unified_config;
use sentixrl::prompt::PromptBuilder;
use sentixrl::sanm::{evaluate_corpus, ConsensusPolicy, DeductionSource, NegotiationConfig, Negotiator};

pub fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Compares `actual` with a frozen file. `UPDATE_GOLDEN=1` rewrites it.
pub fn check_golden(name: &str, actual: &str) -> Result<(), String> {
    let path = golden_path(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        Ok(())
    } else {
        let line = expected
            .lines()
            .zip(actual.lines())
            .position(|(a, b)| a != b)
            .map_or_else(|| "length".to_string(), |i| format!("line {}", i + 1));
        Err(format!("{name} differs from golden at {line}"))
    }
}

pub const SCENARIO_CORPUS: &str = r#"{"conversation_id":"c1","turn_index":0,"speaker":"Monica","text":"You ate the last piece of cheesecake?","label":"anger"}
{"conversation_id":"c1","turn_index":1,"speaker":"Chandler","text":"It was calling my name.","label":"neutral"}
{"conversation_id":"c1","turn_index":2,"speaker":"Monica","text":"I was saving it for tonight!","label":"sadness"}
{"conversation_id":"c2","turn_index":0,"speaker":"Ross","text":"Guess who got tenure?"}
{"conversation_id":"c2","turn_index":1,"speaker":"Rachel","text":"No way! That's amazing!","label":"happiness"}
{"conversation_id":"c3","turn_index":0,"speaker":"Joey","text":"There's something in the closet.","label":"fear"}
{"conversation_id":"c3","turn_index":1,"speaker":"Phoebe","text":"It's just the vacuum cleaner.","label":"neutral"}
{"conversation_id":"c3","turn_index":2,"speaker":"Joey","text":"It moved, I swear.","label":"fear"}
{"conversation_id":"c3","turn_index":3,"speaker":"Phoebe","text":"Ew, it smells in there too.","label":"disgust"}
"#;

pub fn scenario_corpus() -> Corpus {
    parse_corpus("scenarios", SCENARIO_CORPUS.as_bytes(), unified_config().domain()).unwrap()
}

const DEDUCTION: &str = "SCENE: a shared apartment in the evening\nPERSONS: two close friends\nRELATIONS: friends, roommates";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    AcceptRoundOne,
    RejectAllOutlier,
    ConsecutiveAgreement,
    NoLabelThenAccept,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::AcceptRoundOne,
        Scenario::RejectAllOutlier,
        Scenario::ConsecutiveAgreement,
        Scenario::NoLabelThenAccept,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::AcceptRoundOne => "accept_round_one",
            Scenario::RejectAllOutlier => "reject_all_outlier",
            Scenario::ConsecutiveAgreement => "consecutive_agreement",
            Scenario::NoLabelThenAccept => "no_label_then_accept",
        }
    }

    pub fn golden_file(self) -> String {
        format!("trace_{}.jsonl", self.name())
    }

    pub fn policy(self) -> ConsensusPolicy {
        match self {
            Scenario::ConsecutiveAgreement => ConsensusPolicy::ConsecutiveAgreement,
            _ => ConsensusPolicy::DiscriminatorApproval,
        }
    }

    pub fn script(self) -> String {
        let mut s = format!("[role_defaults]\nded = \"\"\"{DEDUCTION}\"\"\"\n");
        match self {
            Scenario::AcceptRoundOne => {
                s.push_str("gen = \"The speaker sounds hurt. Emotion: sadness\"\n");
                s.push_str("disc = \"ACCEPT. The label fits the utterance.\"\n");
            }
            Scenario::RejectAllOutlier => {
                s.push_str("gen = \"Emotion: anger\"\n");
                s.push_str("disc = \"REJECT. Nothing in the text signals anger.\"\n");
            }
            Scenario::ConsecutiveAgreement => {
                s.push_str("gen = \"Weighing the context, the answer is Emotion: fear\"\n");
            }
            Scenario::NoLabelThenAccept => {
                s.push_str("gen = \"On reflection, Emotion: happiness\"\n");
                s.push_str("disc = \"ACCEPT\"\n");
                for u in scenario_corpus().labeled().map(|(_, u)| u.id().to_string()) {
                    s.push_str(&format!(
                        "\n[[response]]\nutterance = \"{u}\"\nround = 1\nrole = \"gen\"\ncontent = \"Hard to say from this alone.\"\n"
                    ));
                }
            }
        }
        s
    }

    pub fn negotiator(self) -> Negotiator {
        let config = NegotiationConfig {
            policy: self.policy(),
            deduction: DeductionSource::Live,
            max_rounds: 3,
            ..NegotiationConfig::default()
        };
        Negotiator::new(config, PromptBuilder::default(), unified_config().domain().clone()).unwrap()
    }

    /// Trace file contents for the scenario corpus.
    pub fn run(self, workers: usize) -> String {
        let mock = MockBackend::from_toml_str(&self.script()).unwrap();
        evaluate_corpus(&scenario_corpus(), &self.negotiator(), &mock, workers)
            .unwrap()
            .to_jsonl_string()
    }
}
