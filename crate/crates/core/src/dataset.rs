//! Conversation corpora: the line-delimited JSON record format, parsing with
//! turn normalization, and history-window extraction.
//!
//! One record per line:
//!
//! ```json
//! {"conversation_id":"d1","turn_index":0,"speaker":"Ross","text":"Hi.","label":"neutral"}
//! ```
//!
//! `label` may be omitted or `null`. An optional `deduction` object
//! (`scene`, `persons`, `relations`) carries a precomputed emotional deduction.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label_domain::{CanonicalLabel, LabelDomain, LabelError, MappingConfig};
use crate::prompt::EmotionalDeduction;

pub const DEFAULT_HISTORY_WINDOW: usize = 5;

/// JSON Schema for one corpus record, printed by `sentixrl ingest --schema`.
pub const RECORD_SCHEMA: &str = r#"{
  "$schema": "https://json-schema.org/draft/2020-12/schema",
  "title": "sentixrl corpus record (one JSON object per line, UTF-8)",
  "type": "object",
  "required": ["conversation_id", "turn_index", "speaker", "text"],
  "additionalProperties": false,
  "properties": {
    "conversation_id": { "type": "string" },
    "turn_index": { "type": "integer", "minimum": 0 },
    "speaker": { "type": "string" },
    "text": { "type": "string", "minLength": 1 },
    "label": { "type": ["string", "null"] },
    "deduction": {
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "scene": { "type": "string" },
        "persons": { "type": "array", "items": { "type": "string" } },
        "relations": { "type": "array", "items": { "type": "string" } }
      }
    }
  }
}"#;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {cause}")]
    Parse { line: usize, cause: String },
    #[error("line {line}: {source}")]
    Label {
        line: usize,
        #[source]
        source: LabelError,
    },
    #[error("duplicate turn {turn_index} in conversation {conversation_id:?}")]
    DuplicateTurn { conversation_id: String, turn_index: usize },
    #[error("turn {index} out of range for conversation {conversation_id:?} with {len} utterances")]
    Index {
        conversation_id: String,
        index: usize,
        len: usize,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One line of a corpus file before label validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRecord {
    pub conversation_id: String,
    pub turn_index: usize,
    pub speaker: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deduction: Option<EmotionalDeduction>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UtteranceRef {
    pub conversation_id: String,
    pub turn_index: usize,
}

impl fmt::Display for UtteranceRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.conversation_id, self.turn_index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub conversation_id: String,
    pub turn_index: usize,
    pub speaker: String,
    pub text: String,
    pub gold_label: Option<CanonicalLabel>,
    pub deduction: Option<EmotionalDeduction>,
}

impl Utterance {
    pub fn id(&self) -> UtteranceRef {
        UtteranceRef {
            conversation_id: self.conversation_id.clone(),
            turn_index: self.turn_index,
        }
    }

    fn to_record(&self) -> RawRecord {
        RawRecord {
            conversation_id: self.conversation_id.clone(),
            turn_index: self.turn_index,
            speaker: self.speaker.clone(),
            text: self.text.clone(),
            label: self.gold_label.as_ref().map(|l| l.to_string()),
            deduction: self.deduction.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conversation {
    pub id: String,
    /// Ordered; `utterances[i].turn_index == i`.
    pub utterances: Vec<Utterance>,
}

impl Conversation {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn history_window(&self, index: usize, size: usize) -> Result<HistoryWindow, DatasetError> {
        history_window(self, index, size)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryTurn {
    pub speaker: String,
    pub text: String,
}

/// The utterances immediately preceding a target, oldest first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryWindow {
    pub turns: Vec<HistoryTurn>,
    /// Requested window size; `turns.len()` is clipped at the conversation start.
    pub size: usize,
}

impl HistoryWindow {
    pub fn empty(size: usize) -> Self {
        Self { turns: Vec::new(), size }
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }
}

/// Returns utterances `index - size .. index` of `conv`, clipped at the start.
pub fn history_window(conv: &Conversation, index: usize, size: usize) -> Result<HistoryWindow, DatasetError> {
    if index >= conv.len() {
        return Err(DatasetError::Index {
            conversation_id: conv.id.clone(),
            index,
            len: conv.len(),
        });
    }
    let start = index.saturating_sub(size);
    let turns = conv.utterances[start..index]
        .iter()
        .map(|u| HistoryTurn {
            speaker: u.speaker.clone(),
            text: u.text.clone(),
        })
        .collect();
    Ok(HistoryWindow { turns, size })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub name: String,
    /// Sorted by conversation id.
    pub conversations: Vec<Conversation>,
    pub domain: LabelDomain,
}

impl Corpus {
    pub fn empty(name: &str, domain: LabelDomain) -> Self {
        Self {
            name: name.to_string(),
            conversations: Vec::new(),
            domain,
        }
    }

    /// Groups records into conversations, sorts by turn index and renumbers
    /// turns contiguously from zero. `map` turns each raw label into the
    /// corpus domain.
    pub fn from_records<F>(
        name: &str,
        records: Vec<(usize, RawRecord)>,
        domain: LabelDomain,
        mut map: F,
    ) -> Result<Self, DatasetError>
    where
        F: FnMut(&str) -> Result<CanonicalLabel, LabelError>,
    {
        let mut grouped: BTreeMap<String, Vec<(usize, Utterance)>> = BTreeMap::new();
        let mut seen = HashSet::new();
        for (line, rec) in records {
            if rec.text.trim().is_empty() {
                return Err(DatasetError::Parse {
                    line,
                    cause: "utterance text is empty".into(),
                });
            }
            if !seen.insert((rec.conversation_id.clone(), rec.turn_index)) {
                return Err(DatasetError::DuplicateTurn {
                    conversation_id: rec.conversation_id,
                    turn_index: rec.turn_index,
                });
            }
            let gold_label = match rec.label.as_deref() {
                None => None,
                Some(raw) => Some(map(raw).map_err(|source| DatasetError::Label { line, source })?),
            };
            let utt = Utterance {
                conversation_id: rec.conversation_id.clone(),
                turn_index: rec.turn_index,
                speaker: rec.speaker,
                text: rec.text,
                gold_label,
                deduction: rec.deduction,
            };
            grouped.entry(rec.conversation_id).or_default().push((rec.turn_index, utt));
        }
        let conversations = grouped
            .into_iter()
            .map(|(id, mut turns)| {
                turns.sort_by_key(|(idx, _)| *idx);
                let utterances = turns
                    .into_iter()
                    .enumerate()
                    .map(|(i, (_, mut u))| {
                        u.turn_index = i;
                        u
                    })
                    .collect();
                Conversation { id, utterances }
            })
            .collect();
        Ok(Self {
            name: name.to_string(),
            conversations,
            domain,
        })
    }

    pub fn utterances(&self) -> impl Iterator<Item = &Utterance> {
        self.conversations.iter().flat_map(|c| c.utterances.iter())
    }

    pub fn labeled(&self) -> impl Iterator<Item = (&Conversation, &Utterance)> {
        self.conversations
            .iter()
            .flat_map(|c| c.utterances.iter().map(move |u| (c, u)))
            .filter(|(_, u)| u.gold_label.is_some())
    }

    pub fn len(&self) -> usize {
        self.conversations.iter().map(Conversation::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labeled_count(&self) -> usize {
        self.labeled().count()
    }

    pub fn conversation(&self, id: &str) -> Option<&Conversation> {
        self.conversations
            .binary_search_by(|c| c.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.conversations[i])
    }

    /// Writes the corpus in the line-delimited record format.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), DatasetError> {
        for utt in self.utterances() {
            let line = serde_json::to_string(&utt.to_record()).expect("records serialize");
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }
}

/// Reads raw records, returning each with its 1-based line number. Blank
/// lines are skipped.
pub fn read_records<R: BufRead>(source: R) -> Result<Vec<(usize, RawRecord)>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| DatasetError::Parse {
            line: line_no,
            cause: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawRecord = serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            line: line_no,
            cause: e.to_string(),
        })?;
        out.push((line_no, rec));
    }
    Ok(out)
}

/// Parses a corpus whose labels are already in `domain`.
pub fn parse_corpus<R: BufRead>(name: &str, source: R, domain: &LabelDomain) -> Result<Corpus, DatasetError> {
    let records = read_records(source)?;
    Corpus::from_records(name, records, domain.clone(), |raw| {
        domain
            .canonical(raw)
            .cloned()
            .ok_or_else(|| LabelError::UnmappedLabel(raw.to_string()))
    })
}

/// Parses a corpus with source-corpus labels, mapping them through `cfg`.
pub fn parse_and_map<R: BufRead>(name: &str, source: R, cfg: &MappingConfig) -> Result<Corpus, DatasetError> {
    let records = read_records(source)?;
    Corpus::from_records(name, records, cfg.target().clone(), |raw| cfg.map_label(raw))
}
