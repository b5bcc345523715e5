//! C ABI over the `sentixrl` core.
//!
//! Every fallible function returns an [`SxStatus`]; on failure the message is
//! available from [`sx_last_error`] on the same thread. Strings handed out
//! through `char **` parameters are owned by the caller and released with
//! [`sx_string_free`]. Handles are opaque and released with their `_free`
//! function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::time::Duration;

use sentixrl::backend::{Backend, ExtractionPolicy, LabelExtractor, MockBackend, OpenAiClient, OpenAiConfig};
use sentixrl::dataset::parse_and_map;
use sentixrl::label_domain::presets::unified_config;
use sentixrl::label_domain::LabelConfig;
use sentixrl::metrics::{focal_loss, EvaluationReport, FocalParams};
use sentixrl::prompt::{PromptBuilder, TemplateSet};
use sentixrl::sanm::{
    closed_form_consensus, evaluate_corpus, simulate_consensus, ConsensusPolicy, DeductionSource, EvalError, Estimate,
    NegotiationConfig, Negotiator, PredictionSet, SimParams,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SxStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    /// Label configuration, mock script or negotiation options rejected.
    Config = 4,
    /// Corpus or trace input rejected.
    Data = 5,
    /// A label is outside the domain and has no alias.
    Unmapped = 6,
    /// Every backend call failed.
    Backend = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SxPolicy {
    DiscriminatorApproval = 0,
    ConsecutiveAgreement = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SxDeduction {
    Off = 0,
    Live = 1,
    Corpus = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SxExtraction {
    Last = 0,
    First = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SxNegotiationOptions {
    pub max_rounds: u32,
    pub policy: SxPolicy,
    pub deduction: SxDeduction,
    pub extraction: SxExtraction,
    pub history_window: usize,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SxConsensus {
    pub q: f64,
    pub p_outlier: f64,
    pub p_accepted: f64,
    pub p_accepted_correct: f64,
    pub mean_rounds: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SxEstimate {
    pub value: f64,
    pub std_error: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SxSimulation {
    pub p_accepted: SxEstimate,
    pub p_accepted_correct: SxEstimate,
    pub p_outlier: SxEstimate,
    pub mean_rounds: SxEstimate,
}

/// Label domain plus alias mapping.
pub struct SxLabelConfig {
    inner: LabelConfig,
}

/// Negotiator bound to a backend and label configuration.
pub struct SxEngine {
    config: LabelConfig,
    negotiator: Negotiator,
    backend: Box<dyn Backend>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(SxStatus, String);

impl Failure {
    fn new(status: SxStatus, msg: impl ToString) -> Self {
        Self(status, msg.to_string())
    }
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            SxStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal panic: {msg}"));
            SxStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(SxStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(SxStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::new(SxStatus::NullArgument, format!("{name} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::new(SxStatus::NullArgument, format!("{name} is null")))
}

fn c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).unwrap_or_default().into_raw()
}

fn estimate(e: Estimate) -> SxEstimate {
    SxEstimate {
        value: e.value,
        std_error: e.std_error,
    }
}

/// Library version as a static NUL-terminated string. Do not free.
#[no_mangle]
pub extern "C" fn sx_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the most recent failure on this thread, or NULL after a
/// success. Valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn sx_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn sx_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sx_label_config_from_toml(toml: *const c_char, out: *mut *mut SxLabelConfig) -> SxStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let inner = LabelConfig::from_toml_str(str_arg(toml, "toml")?).map_err(|e| Failure::new(SxStatus::Config, e))?;
        *out = Box::into_raw(Box::new(SxLabelConfig { inner }));
        Ok(())
    })
}

/// The built-in eight-label unified configuration.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sx_label_config_unified(out: *mut *mut SxLabelConfig) -> SxStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(SxLabelConfig { inner: unified_config() }));
        Ok(())
    })
}

/// # Safety
/// `cfg` must be NULL or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn sx_label_config_free(cfg: *mut SxLabelConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sx_label_config_len(cfg: *const SxLabelConfig, out: *mut usize) -> SxStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(cfg, "cfg")?.inner.domain().len();
        Ok(())
    })
}

/// Canonical label at `index` in domain order.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sx_label_config_label(cfg: *const SxLabelConfig, index: usize, out: *mut *mut c_char) -> SxStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let labels = ref_arg(cfg, "cfg")?.inner.domain().labels();
        let label = labels.get(index).ok_or_else(|| {
            Failure::new(SxStatus::InvalidArgument, format!("index {index} out of range for {} labels", labels.len()))
        })?;
        *out = c_string(label.as_str().to_string());
        Ok(())
    })
}

/// Maps a raw corpus label to its canonical form.
///
/// # Safety
/// `cfg` must be a live handle; `raw` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sx_label_config_map(cfg: *const SxLabelConfig, raw: *const c_char, out: *mut *mut c_char) -> SxStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let cfg = ref_arg(cfg, "cfg")?;
        let label = cfg
            .inner
            .mapping
            .map_label(str_arg(raw, "raw")?)
            .map_err(|e| Failure::new(SxStatus::Unmapped, e))?;
        *out = c_string(label.as_str().to_string());
        Ok(())
    })
}

/// Finds a domain label in model output. Succeeds with `*out == NULL` when
/// the text names no label.
///
/// # Safety
/// `cfg` must be a live handle; `text` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sx_extract_label(
    cfg: *const SxLabelConfig,
    text: *const c_char,
    policy: SxExtraction,
    out: *mut *mut c_char,
) -> SxStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let cfg = ref_arg(cfg, "cfg")?;
        let extractor = LabelExtractor::new(cfg.inner.domain(), extraction(policy));
        if let Some(label) = extractor.extract(str_arg(text, "text")?).label {
            *out = c_string(label.as_str().to_string());
        }
        Ok(())
    })
}

fn extraction(p: SxExtraction) -> ExtractionPolicy {
    match p {
        SxExtraction::Last => ExtractionPolicy::Last,
        SxExtraction::First => ExtractionPolicy::First,
    }
}

#[no_mangle]
pub extern "C" fn sx_negotiation_options_default() -> SxNegotiationOptions {
    let d = NegotiationConfig::default();
    SxNegotiationOptions {
        max_rounds: d.max_rounds,
        policy: match d.policy {
            ConsensusPolicy::DiscriminatorApproval => SxPolicy::DiscriminatorApproval,
            ConsensusPolicy::ConsecutiveAgreement => SxPolicy::ConsecutiveAgreement,
        },
        deduction: match d.deduction {
            DeductionSource::Off => SxDeduction::Off,
            DeductionSource::Live => SxDeduction::Live,
            DeductionSource::Corpus => SxDeduction::Corpus,
        },
        extraction: match d.extraction {
            ExtractionPolicy::Last => SxExtraction::Last,
            ExtractionPolicy::First => SxExtraction::First,
        },
        history_window: d.history_window,
        temperature: d.temperature,
        max_tokens: d.max_tokens,
    }
}

fn negotiation(o: &SxNegotiationOptions) -> NegotiationConfig {
    NegotiationConfig {
        max_rounds: o.max_rounds,
        policy: match o.policy {
            SxPolicy::DiscriminatorApproval => ConsensusPolicy::DiscriminatorApproval,
            SxPolicy::ConsecutiveAgreement => ConsensusPolicy::ConsecutiveAgreement,
        },
        deduction: match o.deduction {
            SxDeduction::Off => DeductionSource::Off,
            SxDeduction::Live => DeductionSource::Live,
            SxDeduction::Corpus => DeductionSource::Corpus,
        },
        extraction: extraction(o.extraction),
        history_window: o.history_window,
        temperature: o.temperature,
        max_tokens: o.max_tokens,
    }
}

unsafe fn build_engine(
    cfg: *const SxLabelConfig,
    options: *const SxNegotiationOptions,
    backend: Box<dyn Backend>,
    out: &mut *mut SxEngine,
) -> Result<(), Failure> {
    let config = ref_arg(cfg, "cfg")?.inner.clone();
    let options = match options.as_ref() {
        Some(o) => *o,
        None => sx_negotiation_options_default(),
    };
    let negotiator = Negotiator::new(
        negotiation(&options),
        PromptBuilder::new(TemplateSet::builtin()),
        config.domain().clone(),
    )
    .map_err(|e| Failure::new(SxStatus::Config, e))?;
    *out = Box::into_raw(Box::new(SxEngine {
        config,
        negotiator,
        backend,
    }));
    Ok(())
}

/// Engine over a scripted mock backend. `options` may be NULL for defaults.
///
/// # Safety
/// `cfg` must be a live handle; `script_toml` NUL-terminated; `options`
/// NULL or readable; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sx_engine_new_mock(
    cfg: *const SxLabelConfig,
    script_toml: *const c_char,
    options: *const SxNegotiationOptions,
    out: *mut *mut SxEngine,
) -> SxStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let mock = MockBackend::from_toml_str(str_arg(script_toml, "script_toml")?)
            .map_err(|e| Failure::new(SxStatus::Config, e))?;
        build_engine(cfg, options, Box::new(mock), out)
    })
}

/// Engine over an OpenAI-compatible endpoint. The API key is read from the
/// environment. A `timeout_secs` or `max_in_flight` of 0 keeps the default.
///
/// # Safety
/// `cfg` must be a live handle; `base_url` and `model` NUL-terminated;
/// `options` NULL or readable; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sx_engine_new_openai(
    cfg: *const SxLabelConfig,
    base_url: *const c_char,
    model: *const c_char,
    options: *const SxNegotiationOptions,
    timeout_secs: u64,
    max_in_flight: usize,
    out: *mut *mut SxEngine,
) -> SxStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let mut oc = OpenAiConfig::new(str_arg(base_url, "base_url")?, str_arg(model, "model")?).with_env_credentials();
        if timeout_secs > 0 {
            oc.timeout = Duration::from_secs(timeout_secs);
        }
        if max_in_flight > 0 {
            oc.max_in_flight = max_in_flight;
        }
        build_engine(cfg, options, Box::new(OpenAiClient::new(oc)), out)
    })
}

/// # Safety
/// `engine` must be NULL or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn sx_engine_free(engine: *mut SxEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Negotiates every labelled utterance of a JSONL corpus and returns the
/// traces as JSONL. Utterances whose backend calls failed appear as skipped
/// traces; the call fails only when all of them did.
///
/// # Safety
/// `engine` must be a live handle; `corpus_jsonl` NUL-terminated;
/// `traces_out` writable.
#[no_mangle]
pub unsafe extern "C" fn sx_engine_evaluate(
    engine: *const SxEngine,
    corpus_jsonl: *const c_char,
    workers: usize,
    traces_out: *mut *mut c_char,
) -> SxStatus {
    guard(|| {
        let out = out_arg(traces_out, "traces_out")?;
        *out = ptr::null_mut();
        let engine = ref_arg(engine, "engine")?;
        if workers == 0 {
            return Err(Failure::new(SxStatus::InvalidArgument, "workers must be at least 1"));
        }
        let text = str_arg(corpus_jsonl, "corpus_jsonl")?;
        let corpus =
            parse_and_map("corpus", text.as_bytes(), &engine.config.mapping).map_err(|e| Failure::new(SxStatus::Data, e))?;
        let preds = evaluate_corpus(&corpus, &engine.negotiator, engine.backend.as_ref(), workers).map_err(|e| match e {
            EvalError::AllFailed { .. } => Failure::new(SxStatus::Backend, e),
            other => Failure::new(SxStatus::Data, other),
        })?;
        *out = c_string(preds.to_jsonl_string());
        Ok(())
    })
}

/// Scores JSONL traces and returns the evaluation report as JSON.
///
/// # Safety
/// `cfg` must be a live handle; `traces_jsonl` NUL-terminated; `report_out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn sx_report_from_traces(
    cfg: *const SxLabelConfig,
    traces_jsonl: *const c_char,
    report_out: *mut *mut c_char,
) -> SxStatus {
    guard(|| {
        let out = out_arg(report_out, "report_out")?;
        *out = ptr::null_mut();
        let cfg = ref_arg(cfg, "cfg")?;
        let preds = PredictionSet::read_jsonl(str_arg(traces_jsonl, "traces_jsonl")?.as_bytes())
            .map_err(|e| Failure::new(SxStatus::Data, e))?;
        let report =
            EvaluationReport::from_predictions(&preds, cfg.inner.domain()).map_err(|e| Failure::new(SxStatus::Data, e))?;
        *out = c_string(report.to_json());
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sx_focal_loss(p_t: f64, alpha: f64, gamma: f64, out: *mut f64) -> SxStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = focal_loss(p_t, FocalParams { alpha, gamma }).map_err(|e| Failure::new(SxStatus::InvalidArgument, e))?;
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sx_consensus_closed_form(
    p_correct: f64,
    accept_correct: f64,
    accept_incorrect: f64,
    max_rounds: u32,
    out: *mut SxConsensus,
) -> SxStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let sp = SimParams {
            p_correct,
            accept_correct,
            accept_incorrect,
            max_rounds,
            trials: 1,
            seed: 0,
        };
        let s = closed_form_consensus(&sp).map_err(|e| Failure::new(SxStatus::InvalidArgument, e))?;
        *out = SxConsensus {
            q: s.q,
            p_outlier: s.p_outlier,
            p_accepted: s.p_accepted,
            p_accepted_correct: s.p_accepted_correct,
            mean_rounds: s.mean_rounds,
        };
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sx_consensus_simulate(
    p_correct: f64,
    accept_correct: f64,
    accept_incorrect: f64,
    max_rounds: u32,
    trials: u64,
    seed: u64,
    out: *mut SxSimulation,
) -> SxStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let sp = SimParams {
            p_correct,
            accept_correct,
            accept_incorrect,
            max_rounds,
            trials,
            seed,
        };
        let r = simulate_consensus(&sp).map_err(|e| Failure::new(SxStatus::InvalidArgument, e))?;
        *out = SxSimulation {
            p_accepted: estimate(r.p_accepted),
            p_accepted_correct: estimate(r.p_accepted_correct),
            p_outlier: estimate(r.p_outlier),
            mean_rounds: estimate(r.mean_rounds),
        };
        Ok(())
    })
}
