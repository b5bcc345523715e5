//! Prompt assembly: instruction, history window, label constraint and
//! emotional deduction, rendered through slot templates.
//!
//! Templates are plain text with `{instruction}`, `{history}`, `{labels}`,
//! `{deduction}`, `{target}` and `{prior_response}` slots. `{{` and `}}`
//! produce literal braces. A template is split into paragraphs at blank
//! lines, and a paragraph is left out when any slot in it renders empty; this
//! is how an absent deduction or prior response disappears cleanly.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError, BackendRequest, CallRole, RequestTag};
use crate::dataset::HistoryWindow;
use crate::label_domain::LabelDomain;

/// Per-field character cap applied to deduction text.
pub const DEFAULT_DEDUCTION_CAP: usize = 500;

pub const EMPTY_HISTORY_MARKER: &str = "(no previous utterances)";

const BUILTIN_GENERATOR_INSTRUCTION: &str = include_str!("../templates/generator_instruction.txt");
const BUILTIN_GENERATOR: &str = include_str!("../templates/generator.txt");
const BUILTIN_DISCRIMINATOR_INSTRUCTION: &str = include_str!("../templates/discriminator_instruction.txt");
const BUILTIN_DISCRIMINATOR: &str = include_str!("../templates/discriminator.txt");
const BUILTIN_DEDUCTION: &str = include_str!("../templates/deduction.txt");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("template {template:?} uses unknown slot {{{slot}}}")]
    UnknownSlot { template: String, slot: String },
    #[error("template {template:?} is missing required slot {{{slot}}}")]
    MissingSlot { template: String, slot: &'static str },
    #[error("template {template:?} is empty")]
    EmptyTemplate { template: String },
    #[error("could not read template {path}: {message}")]
    Io { path: String, message: String },
    #[error("target utterance is empty")]
    EmptyTarget,
    #[error("discriminator prompt needs a generator response: {0}")]
    MissingResponse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Slot {
    Instruction,
    History,
    Labels,
    Deduction,
    Target,
    PriorResponse,
}

impl Slot {
    pub const ALL: [Slot; 6] = [
        Slot::Instruction,
        Slot::History,
        Slot::Labels,
        Slot::Deduction,
        Slot::Target,
        Slot::PriorResponse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Slot::Instruction => "instruction",
            Slot::History => "history",
            Slot::Labels => "labels",
            Slot::Deduction => "deduction",
            Slot::Target => "target",
            Slot::PriorResponse => "prior_response",
        }
    }

    fn parse(name: &str) -> Option<Slot> {
        Slot::ALL.into_iter().find(|s| s.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(Slot),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    name: String,
    paragraphs: Vec<Vec<Piece>>,
}

impl Template {
    pub fn parse(name: &str, source: &str) -> Result<Self, PromptError> {
        let source = source.replace("\r\n", "\n");
        let mut paragraphs = Vec::new();
        let mut current: Vec<&str> = Vec::new();
        for line in source.trim_end().lines() {
            if line.trim().is_empty() {
                if !current.is_empty() {
                    paragraphs.push(parse_pieces(name, &current.join("\n"))?);
                    current.clear();
                }
            } else {
                current.push(line);
            }
        }
        if !current.is_empty() {
            paragraphs.push(parse_pieces(name, &current.join("\n"))?);
        }
        if paragraphs.is_empty() {
            return Err(PromptError::EmptyTemplate { template: name.to_string() });
        }
        Ok(Self {
            name: name.to_string(),
            paragraphs,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn slots(&self) -> BTreeSet<Slot> {
        self.paragraphs
            .iter()
            .flatten()
            .filter_map(|p| match p {
                Piece::Slot(s) => Some(*s),
                Piece::Text(_) => None,
            })
            .collect()
    }

    fn require(&self, slots: &[Slot]) -> Result<(), PromptError> {
        let present = self.slots();
        match slots.iter().find(|s| !present.contains(s)) {
            Some(missing) => Err(PromptError::MissingSlot {
                template: self.name.clone(),
                slot: missing.name(),
            }),
            None => Ok(()),
        }
    }

    /// Renders with `value(slot)`; a paragraph is dropped when any of its
    /// slots yields `None` or an empty string.
    pub fn render<'a, F>(&self, value: F) -> String
    where
        F: Fn(Slot) -> Option<&'a str>,
    {
        let mut kept = Vec::with_capacity(self.paragraphs.len());
        'paragraphs: for paragraph in &self.paragraphs {
            let mut out = String::new();
            for piece in paragraph {
                match piece {
                    Piece::Text(t) => out.push_str(t),
                    Piece::Slot(s) => match value(*s) {
                        Some(v) if !v.is_empty() => out.push_str(v),
                        _ => continue 'paragraphs,
                    },
                }
            }
            kept.push(out);
        }
        kept.join("\n\n")
    }
}

fn parse_pieces(template: &str, text: &str) -> Result<Vec<Piece>, PromptError> {
    let mut pieces = Vec::new();
    let mut literal = String::new();
    let mut rest = text;
    while let Some(c) = rest.chars().next() {
        if rest.starts_with("{{") {
            literal.push('{');
            rest = &rest[2..];
        } else if rest.starts_with("}}") {
            literal.push('}');
            rest = &rest[2..];
        } else if c == '{' {
            let ident_len = rest[1..]
                .find(|ch: char| !(ch.is_ascii_lowercase() || ch == '_'))
                .unwrap_or(rest.len() - 1);
            let ident = &rest[1..1 + ident_len];
            if ident_len > 0 && rest[1 + ident_len..].starts_with('}') {
                let slot = Slot::parse(ident).ok_or_else(|| PromptError::UnknownSlot {
                    template: template.to_string(),
                    slot: ident.to_string(),
                })?;
                if !literal.is_empty() {
                    pieces.push(Piece::Text(std::mem::take(&mut literal)));
                }
                pieces.push(Piece::Slot(slot));
                rest = &rest[ident_len + 2..];
            } else {
                literal.push('{');
                rest = &rest[1..];
            }
        } else {
            literal.push(c);
            rest = &rest[c.len_utf8()..];
        }
    }
    if !literal.is_empty() {
        pieces.push(Piece::Text(literal));
    }
    Ok(pieces)
}

/// Task statement. Always carries a `{labels}` slot for the label list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    template: Template,
}

impl Instruction {
    pub fn new(text: &str) -> Result<Self, PromptError> {
        Self::named("instruction", text)
    }

    fn named(name: &str, text: &str) -> Result<Self, PromptError> {
        let template = Template::parse(name, text)?;
        template.require(&[Slot::Labels])?;
        Ok(Self { template })
    }

    pub fn render(&self, domain: &LabelDomain) -> String {
        let labels = label_list(domain);
        self.template.render(|slot| match slot {
            Slot::Labels => Some(labels.as_str()),
            _ => None,
        })
    }
}

/// Inferred scene, characters and relationships around an utterance.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmotionalDeduction {
    #[serde(default)]
    pub scene: String,
    #[serde(default)]
    pub persons: Vec<String>,
    #[serde(default)]
    pub relations: Vec<String>,
}

fn cap_chars(text: &str, cap: usize) -> String {
    text.trim().chars().take(cap).collect()
}

impl EmotionalDeduction {
    pub fn new(scene: &str, persons: &[&str], relations: &[&str]) -> Self {
        Self {
            scene: scene.to_string(),
            persons: persons.iter().map(|s| s.to_string()).collect(),
            relations: relations.iter().map(|s| s.to_string()).collect(),
        }
        .capped(DEFAULT_DEDUCTION_CAP)
    }

    /// Trims every field and truncates it to `cap` characters; drops empty list items.
    pub fn capped(self, cap: usize) -> Self {
        let list = |items: Vec<String>| {
            items
                .into_iter()
                .map(|s| cap_chars(&s, cap))
                .filter(|s| !s.is_empty())
                .collect()
        };
        Self {
            scene: cap_chars(&self.scene, cap),
            persons: list(self.persons),
            relations: list(self.relations),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.scene.is_empty() && self.persons.is_empty() && self.relations.is_empty()
    }

    fn render(&self) -> String {
        let mut lines = Vec::new();
        if !self.scene.is_empty() {
            lines.push(format!("Scene: {}", self.scene));
        }
        if !self.persons.is_empty() {
            lines.push(format!("Persons: {}", self.persons.join(", ")));
        }
        if !self.relations.is_empty() {
            lines.push(format!("Relations: {}", self.relations.join(", ")));
        }
        lines.join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeductionOutcome {
    pub deduction: EmotionalDeduction,
    /// Set when the response carried none of the SCENE/PERSONS/RELATIONS tags.
    pub warning: bool,
    /// Backend-reported latency of the deduction call.
    pub latency: std::time::Duration,
}

/// Parses `SCENE:`, `PERSONS:` and `RELATIONS:` lines (tags case-insensitive,
/// first occurrence wins). Lists are comma separated.
pub fn parse_deduction(response: &str, cap: usize) -> DeductionOutcome {
    let mut scene = None;
    let mut persons = None;
    let mut relations = None;
    for line in response.lines() {
        let line = line.trim().trim_start_matches(['-', '*', '#', ' ']);
        let Some((tag, value)) = line.split_once([':', '：']) else {
            continue;
        };
        let value = value.trim();
        let split = || value.split([',', '，', ';']).map(str::to_string).collect::<Vec<_>>();
        match tag.trim().to_ascii_uppercase().as_str() {
            "SCENE" if scene.is_none() => scene = Some(value.to_string()),
            "PERSONS" if persons.is_none() => persons = Some(split()),
            "RELATIONS" if relations.is_none() => relations = Some(split()),
            _ => {}
        }
    }
    let warning = scene.is_none() && persons.is_none() && relations.is_none();
    DeductionOutcome {
        deduction: EmotionalDeduction {
            scene: scene.unwrap_or_default(),
            persons: persons.unwrap_or_default(),
            relations: relations.unwrap_or_default(),
        }
        .capped(cap),
        warning,
        latency: std::time::Duration::ZERO,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptRole {
    Generator,
    Discriminator,
}

impl fmt::Display for PromptRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptRole::Generator => "generator",
            PromptRole::Discriminator => "discriminator",
        })
    }
}

/// The assembled prompt for one utterance and one role.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub role: PromptRole,
    /// The task instruction. Discriminator bundles keep the generator's.
    pub instruction: Instruction,
    /// The verdict instruction that replaces the task instruction in a
    /// discriminator prompt.
    pub verdict_instruction: Option<Instruction>,
    pub history: HistoryWindow,
    pub labels: LabelDomain,
    pub deduction: Option<EmotionalDeduction>,
    pub target: String,
    pub prior_response: Option<String>,
    text: String,
}

impl PromptBundle {
    pub fn text(&self) -> &str {
        &self.text
    }
}

pub fn render_history(history: &HistoryWindow) -> String {
    if history.is_empty() {
        return EMPTY_HISTORY_MARKER.to_string();
    }
    history
        .turns
        .iter()
        .map(|t| format!("{}: {}", t.speaker, t.text))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn label_list(domain: &LabelDomain) -> String {
    domain
        .labels()
        .iter()
        .map(|l| l.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

/// The five templates the pipeline renders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub generator_instruction: Instruction,
    pub generator: Template,
    pub discriminator_instruction: Instruction,
    pub discriminator: Template,
    pub deduction: Template,
}

impl TemplateSet {
    pub const FILES: [&'static str; 5] = [
        "generator_instruction.txt",
        "generator.txt",
        "discriminator_instruction.txt",
        "discriminator.txt",
        "deduction.txt",
    ];

    pub fn builtin() -> Self {
        Self::from_sources([
            BUILTIN_GENERATOR_INSTRUCTION,
            BUILTIN_GENERATOR,
            BUILTIN_DISCRIMINATOR_INSTRUCTION,
            BUILTIN_DISCRIMINATOR,
            BUILTIN_DEDUCTION,
        ])
        .expect("builtin templates are valid")
    }

    /// Sources in [`TemplateSet::FILES`] order.
    pub fn from_sources(sources: [&str; 5]) -> Result<Self, PromptError> {
        let [gi, g, di, d, ded] = sources;
        let generator = Template::parse(Self::FILES[1], g)?;
        generator.require(&[Slot::Instruction, Slot::History, Slot::Labels, Slot::Target])?;
        let discriminator = Template::parse(Self::FILES[3], d)?;
        discriminator.require(&[
            Slot::Instruction,
            Slot::History,
            Slot::Labels,
            Slot::Target,
            Slot::PriorResponse,
        ])?;
        let deduction = Template::parse(Self::FILES[4], ded)?;
        deduction.require(&[Slot::Target])?;
        Ok(Self {
            generator_instruction: Instruction::named(Self::FILES[0], gi)?,
            generator,
            discriminator_instruction: Instruction::named(Self::FILES[2], di)?,
            discriminator,
            deduction,
        })
    }

    /// Loads templates from `dir`; files that do not exist fall back to the builtin text.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let builtin = [
            BUILTIN_GENERATOR_INSTRUCTION,
            BUILTIN_GENERATOR,
            BUILTIN_DISCRIMINATOR_INSTRUCTION,
            BUILTIN_DISCRIMINATOR,
            BUILTIN_DEDUCTION,
        ];
        let mut texts: Vec<String> = Vec::with_capacity(5);
        for (file, fallback) in Self::FILES.iter().zip(builtin) {
            let path = dir.join(file);
            if path.exists() {
                texts.push(std::fs::read_to_string(&path).map_err(|e| PromptError::Io {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?);
            } else {
                texts.push(fallback.to_string());
            }
        }
        Self::from_sources([&texts[0], &texts[1], &texts[2], &texts[3], &texts[4]])
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptBuilder {
    templates: TemplateSet,
    deduction_cap: usize,
}

impl Default for PromptBuilder {
    fn default() -> Self {
        Self::new(TemplateSet::builtin())
    }
}

impl PromptBuilder {
    pub fn new(templates: TemplateSet) -> Self {
        Self {
            templates,
            deduction_cap: DEFAULT_DEDUCTION_CAP,
        }
    }

    pub fn with_deduction_cap(mut self, cap: usize) -> Self {
        self.deduction_cap = cap;
        self
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn generator_instruction(&self) -> &Instruction {
        &self.templates.generator_instruction
    }

    pub fn render_generator_prompt(
        &self,
        instruction: &Instruction,
        history: &HistoryWindow,
        domain: &LabelDomain,
        deduction: Option<&EmotionalDeduction>,
        target: &str,
    ) -> Result<PromptBundle, PromptError> {
        if target.trim().is_empty() {
            return Err(PromptError::EmptyTarget);
        }
        let deduction = deduction
            .map(|d| d.clone().capped(self.deduction_cap))
            .filter(|d| !d.is_empty());
        let mut bundle = PromptBundle {
            role: PromptRole::Generator,
            instruction: instruction.clone(),
            verdict_instruction: None,
            history: history.clone(),
            labels: domain.clone(),
            deduction,
            target: target.to_string(),
            prior_response: None,
            text: String::new(),
        };
        bundle.text = self.render(&self.templates.generator, &bundle, &bundle.instruction);
        Ok(bundle)
    }

    /// Flips a generator bundle to the discriminator role, embedding the
    /// generator's response. History, labels, deduction and target carry over.
    pub fn render_discriminator_prompt(
        &self,
        base: &PromptBundle,
        generator_response: &str,
    ) -> Result<PromptBundle, PromptError> {
        if base.role != PromptRole::Generator {
            return Err(PromptError::MissingResponse(
                "base bundle is already a discriminator prompt".into(),
            ));
        }
        if generator_response.trim().is_empty() {
            return Err(PromptError::MissingResponse("generator response is empty".into()));
        }
        let verdict = self.templates.discriminator_instruction.clone();
        let mut bundle = PromptBundle {
            role: PromptRole::Discriminator,
            verdict_instruction: Some(verdict.clone()),
            prior_response: Some(generator_response.to_string()),
            text: String::new(),
            ..base.clone()
        };
        bundle.text = self.render(&self.templates.discriminator, &bundle, &verdict);
        Ok(bundle)
    }

    fn render(&self, layout: &Template, bundle: &PromptBundle, instruction: &Instruction) -> String {
        let instruction = instruction.render(&bundle.labels);
        let history = render_history(&bundle.history);
        let labels = label_list(&bundle.labels);
        let deduction = bundle.deduction.as_ref().map(EmotionalDeduction::render);
        layout.render(|slot| match slot {
            Slot::Instruction => Some(instruction.as_str()),
            Slot::History => Some(history.as_str()),
            Slot::Labels => Some(labels.as_str()),
            Slot::Deduction => deduction.as_deref(),
            Slot::Target => Some(bundle.target.as_str()),
            Slot::PriorResponse => bundle.prior_response.as_deref(),
        })
    }

    pub fn render_deduction_prompt(&self, history: &HistoryWindow, target: &str) -> String {
        let history = render_history(history);
        self.templates.deduction.render(|slot| match slot {
            Slot::History => Some(history.as_str()),
            Slot::Target => Some(target),
            _ => None,
        })
    }

    /// One backend call with the deduction template, tagged `(utterance, 0, ded)`.
    pub fn request_deduction(
        &self,
        backend: &dyn Backend,
        history: &HistoryWindow,
        target: &str,
        utterance: &str,
    ) -> Result<DeductionOutcome, BackendError> {
        let prompt = self.render_deduction_prompt(history, target);
        let req = BackendRequest::prompt(prompt, RequestTag::new(utterance, 0, CallRole::Deduction));
        let resp = backend.complete(&req)?;
        let mut outcome = parse_deduction(&resp.content, self.deduction_cap);
        outcome.latency = resp.latency;
        Ok(outcome)
    }
}
