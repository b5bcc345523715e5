use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use super::{DeductionSource, NegotiationError, NegotiationTrace, Negotiator, Outcome};
use crate::backend::{Backend, BackendError};
use crate::dataset::{Conversation, Corpus, Utterance};
use crate::label_domain::CanonicalLabel;
use crate::prompt::PromptError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("corpus has no labeled utterances")]
    EmptyCorpus,
    #[error("all {count} utterances failed; first error: {first}")]
    AllFailed { count: usize, first: BackendError },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("invalid trace line {line}: {cause}")]
    TraceParse { line: usize, cause: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Traces for every labeled utterance, ordered by (conversation id, turn).
/// Aborted negotiations stay in the set with `error` filled in and are
/// excluded from scoring.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionSet {
    pub traces: Vec<NegotiationTrace>,
}

impl PredictionSet {
    /// `(gold, outcome)` pairs for completed negotiations with a gold label.
    pub fn scored(&self) -> impl Iterator<Item = (&CanonicalLabel, &Outcome)> {
        self.traces
            .iter()
            .filter_map(|t| Some((t.gold.as_ref()?, &t.judgment.as_ref()?.outcome)))
    }

    pub fn skipped(&self) -> impl Iterator<Item = &NegotiationTrace> {
        self.traces.iter().filter(|t| t.is_aborted())
    }

    pub fn abstentions(&self) -> usize {
        self.scored().filter(|(_, o)| **o == Outcome::Outlier).count()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for t in &self.traces {
            writeln!(out, "{}", t.to_json_line())?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(source: R) -> Result<Self, EvalError> {
        let mut traces = Vec::new();
        for (i, line) in source.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let trace: NegotiationTrace = serde_json::from_str(&line).map_err(|e| EvalError::TraceParse {
                line: i + 1,
                cause: e.to_string(),
            })?;
            if trace.version != super::TRACE_SCHEMA_VERSION {
                return Err(EvalError::TraceParse {
                    line: i + 1,
                    cause: format!("unsupported trace version {}", trace.version),
                });
            }
            traces.push(trace);
        }
        Ok(Self { traces })
    }

    pub fn latency_summary(&self) -> LatencySummary {
        LatencySummary::from_latencies(
            self.traces
                .iter()
                .filter_map(|t| t.judgment.as_ref().map(|j| j.latency_ms)),
        )
    }
}

/// Per-utterance latency statistics in milliseconds (nearest-rank percentiles).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LatencySummary {
    pub count: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
}

impl LatencySummary {
    pub fn from_latencies<I: IntoIterator<Item = f64>>(values: I) -> Self {
        let mut v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return Self::default();
        }
        v.sort_by(f64::total_cmp);
        let rank = |p: f64| v[((p * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
        Self {
            count: v.len(),
            mean_ms: v.iter().sum::<f64>() / v.len() as f64,
            p50_ms: rank(0.5),
            p95_ms: rank(0.95),
        }
    }
}

fn run_one(
    negotiator: &Negotiator,
    conv: &Conversation,
    utt: &Utterance,
    backend: &dyn Backend,
) -> Result<Result<NegotiationTrace, (NegotiationTrace, BackendError)>, PromptError> {
    let cfg = negotiator.config();
    let history = conv
        .history_window(utt.turn_index, cfg.history_window)
        .expect("utterance belongs to its conversation");
    let target = format!("{}: {}", utt.speaker, utt.text);

    let mut extra_latency = Duration::ZERO;
    let deduction = match cfg.deduction {
        DeductionSource::Off => None,
        DeductionSource::Corpus => utt.deduction.clone(),
        DeductionSource::Live => {
            let id = utt.id().to_string();
            let started_trace = |err: BackendError| {
                let trace = NegotiationTrace {
                    version: super::TRACE_SCHEMA_VERSION,
                    utterance: utt.id(),
                    gold: utt.gold_label.clone(),
                    deduction: None,
                    rounds: Vec::new(),
                    judgment: None,
                    error: Some(err.to_string()),
                };
                (trace, err)
            };
            match negotiator.prompts().request_deduction(backend, &history, &target, &id) {
                Ok(outcome) => {
                    if outcome.warning {
                        log::warn!("{id}: deduction response had no SCENE/PERSONS/RELATIONS tags");
                    }
                    extra_latency = outcome.latency;
                    Some(outcome.deduction)
                }
                Err(e) => return Ok(Err(started_trace(e))),
            }
        }
    };

    match negotiator.negotiate(utt, &history, deduction.as_ref(), backend) {
        Ok(mut trace) => {
            if let Some(j) = trace.judgment.as_mut() {
                j.latency_ms += extra_latency.as_secs_f64() * 1000.0;
            }
            Ok(Ok(trace))
        }
        Err(NegotiationError::Backend { partial, source }) => Ok(Err((*partial, source))),
        Err(NegotiationError::Prompt(e)) => Err(e),
        Err(NegotiationError::Config(_)) => unreachable!("validated at construction"),
    }
}

/// Negotiates every labeled utterance of `corpus` on up to `concurrency`
/// worker threads. Output order never depends on scheduling.
pub fn evaluate_corpus(
    corpus: &Corpus,
    negotiator: &Negotiator,
    backend: &dyn Backend,
    concurrency: usize,
) -> Result<PredictionSet, EvalError> {
    let jobs: Vec<(&Conversation, &Utterance)> = corpus.labeled().collect();
    if jobs.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let workers = concurrency.clamp(1, jobs.len());
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<_>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((conv, utt)) = jobs.get(i) else { break };
                let result = run_one(negotiator, conv, utt, backend);
                results.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(result);
            });
        }
    });

    let mut traces = Vec::with_capacity(jobs.len());
    let mut failures = Vec::new();
    for result in results.into_inner().unwrap_or_else(|e| e.into_inner()) {
        match result.expect("every job ran")? {
            Ok(trace) => traces.push(trace),
            Err((trace, err)) => {
                log::warn!("skipping {}: {err}", trace.utterance);
                traces.push(trace);
                failures.push(err);
            }
        }
    }
    if failures.len() == traces.len() {
        return Err(EvalError::AllFailed {
            count: failures.len(),
            first: failures.swap_remove(0),
        });
    }
    Ok(PredictionSet { traces })
}
