//! The `sentixrl` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 backend error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::backend::{Backend, ExtractionPolicy, MockBackend, OpenAiClient, OpenAiConfig, BASE_URL_ENV};
use crate::dataset::{parse_and_map, read_records, Corpus, RECORD_SCHEMA};
use crate::label_domain::presets::{source_config, unified_config, UNIFIED_SOURCE_CORPORA};
use crate::label_domain::LabelConfig;
use crate::metrics::{render_table, EvaluationReport};
use crate::mix::{histogram, mix, CategoryHistogram, MixSpec, MixStrategy};
use crate::prompt::{PromptBuilder, TemplateSet};
use crate::sanm::{
    closed_form_consensus, evaluate_corpus, ConsensusPolicy, DeductionSource, EvalError, NegotiationConfig,
    Negotiator, PredictionSet, SimParams,
};

// Writes to stdout, ignoring a closed pipe (e.g. `| head`).
macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = write!(std::io::stdout().lock(), $($t)*);
    }};
}

macro_rules! outln {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($t)*);
    }};
}

#[derive(Debug, Parser)]
#[command(name = "sentixrl", version, about = "Emotion recognition in conversations with generator/discriminator negotiation")]
pub struct Cli {
    /// Log verbosity on standard error.
    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Warn, env = "SENTIXRL_LOG_LEVEL")]
    pub log_level: LogLevel,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LogLevel {
    Off,
    Error,
    Warn,
    Info,
    Debug,
    Trace,
}

impl LogLevel {
    fn filter(self) -> log::LevelFilter {
        match self {
            LogLevel::Off => log::LevelFilter::Off,
            LogLevel::Error => log::LevelFilter::Error,
            LogLevel::Warn => log::LevelFilter::Warn,
            LogLevel::Info => log::LevelFilter::Info,
            LogLevel::Debug => log::LevelFilter::Debug,
            LogLevel::Trace => log::LevelFilter::Trace,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a corpus file and report label coverage.
    Ingest(IngestArgs),
    /// Rewrite a corpus into the unified (or configured) label domain.
    Map(MapArgs),
    /// Negotiate a label for every labeled utterance and score the results.
    Run(Box<RunArgs>),
    /// Build a random or class-balanced mix from one or more corpora.
    Mix(MixArgs),
    /// Score an existing trace file.
    Report(ReportArgs),
    /// Compare simulated negotiation statistics with their closed form.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Corpus file (one JSON record per line).
    #[arg(long, required_unless_present = "schema")]
    pub corpus: Option<PathBuf>,
    /// Label mapping config (TOML); defaults to the unified domain.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Print the JSON Schema of a corpus record and exit.
    #[arg(long)]
    pub schema: bool,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    /// Corpus file with source labels.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Label mapping config (TOML); defaults to the unified domain.
    #[arg(long, conflicts_with = "source")]
    pub config: Option<PathBuf>,
    /// Use the shipped mapping for a named source corpus.
    #[arg(long, value_parser = source_names())]
    pub source: Option<String>,
    /// Where to write the mapped corpus.
    #[arg(long)]
    pub out: PathBuf,
}

fn source_names() -> clap::builder::PossibleValuesParser {
    clap::builder::PossibleValuesParser::new(UNIFIED_SOURCE_CORPORA.iter().map(|s| s.name))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    /// Stop when the discriminator accepts the generator's label.
    DiscriminatorApproval,
    /// Stop when two consecutive rounds produce the same label.
    ConsecutiveAgreement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DeductionArg {
    Off,
    Live,
    Corpus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExtractionArg {
    Last,
    First,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Table,
    Structured,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Corpus file to evaluate.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Label mapping config (TOML); defaults to the unified domain.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// TOML file with defaults for any of these options (keys use underscores).
    #[arg(long)]
    pub run_config: Option<PathBuf>,
    /// Mock script (TOML) to use as the backend.
    #[arg(long)]
    pub mock: Option<PathBuf>,
    /// Base URL of an OpenAI-compatible server [env: SENTIXRL_BASE_URL].
    #[arg(long, visible_alias = "base-url")]
    pub backend_url: Option<String>,
    /// Model name sent to the server.
    #[arg(long, env = "SENTIXRL_MODEL")]
    pub model: Option<String>,
    /// Maximum negotiation rounds per utterance [default: 3].
    #[arg(long)]
    pub max_rounds: Option<u32>,
    /// Rule that ends a negotiation [default: discriminator-approval].
    #[arg(long, value_enum)]
    pub policy: Option<PolicyArg>,
    /// Source of the emotional deduction [default: live].
    #[arg(long, value_enum)]
    pub deduction: Option<DeductionArg>,
    /// Which label mention wins in generator output [default: last].
    #[arg(long, value_enum)]
    pub extraction: Option<ExtractionArg>,
    /// Number of previous utterances shown as history [default: 5].
    #[arg(long)]
    pub history_window: Option<usize>,
    /// Sampling temperature [default: 0].
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Completion token limit per call [default: 512].
    #[arg(long)]
    pub max_tokens: Option<u32>,
    /// Utterances negotiated in parallel [default: 4].
    #[arg(long, env = "SENTIXRL_CONCURRENCY")]
    pub concurrency: Option<usize>,
    /// Per-request timeout for the network backend in seconds [default: 60].
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    /// Directory with template overrides.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Where to write negotiation traces (JSON lines).
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    /// Where to write the structured metrics report.
    #[arg(long)]
    pub report_out: Option<PathBuf>,
    /// Format of the report printed to standard output.
    #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
    pub format: ReportFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Random,
    Equal,
}

#[derive(Debug, Args)]
pub struct MixArgs {
    /// Source corpus file; repeat for several. Corpus names are file stems.
    #[arg(long = "corpus", required = true)]
    pub corpora: Vec<PathBuf>,
    /// Label mapping config (TOML); defaults to the unified domain.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Sampling strategy.
    #[arg(long, value_enum)]
    pub strategy: StrategyArg,
    /// Number of labeled utterances to draw.
    #[arg(long)]
    pub size: usize,
    /// Seed for all sampling; a random seed is chosen and logged when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Where to write the mixed corpus.
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write the label histogram of the mix (JSON).
    #[arg(long)]
    pub histogram_out: Option<PathBuf>,
    /// Where to write a bar chart of the histogram (SVG).
    #[arg(long)]
    pub chart_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Trace file written by `run`.
    #[arg(long)]
    pub traces: PathBuf,
    /// Label mapping config (TOML); defaults to the unified domain.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
    pub format: ReportFormat,
    /// Also write the structured report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Probability that the generator proposes the gold label.
    #[arg(long)]
    pub p: f64,
    /// Probability that the discriminator accepts a correct proposal.
    #[arg(long)]
    pub a: f64,
    /// Probability that the discriminator accepts an incorrect proposal.
    #[arg(long)]
    pub b: f64,
    /// Maximum rounds.
    #[arg(long, default_value_t = crate::sanm::DEFAULT_MAX_ROUNDS)]
    pub rounds: u32,
    /// Number of simulated negotiations.
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
    /// Seed for all sampling; a random seed is chosen and logged when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output format.
    #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
    pub format: ReportFormat,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Backend(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Backend(m) => m,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn data<E: std::fmt::Display>(context: &Path) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", context.display()))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp
                | clap::error::ErrorKind::DisplayVersion
                | clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(cli.log_level.filter())
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::Map(a) => map(a),
        Command::Run(a) => run_eval(*a),
        Command::Mix(a) => mix_cmd(a),
        Command::Report(a) => report(a),
        Command::Simulate(a) => simulate(a),
    }
}

fn load_config(path: Option<&Path>) -> CliResult<LabelConfig> {
    match path {
        None => Ok(unified_config()),
        Some(p) => {
            if !p.exists() {
                return Err(CliError::Data(format!("{}: file not found", p.display())));
            }
            LabelConfig::load(p).map_err(data(p))
        }
    }
}

fn open(path: &Path) -> CliResult<BufReader<fs::File>> {
    fs::File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn corpus_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".into())
}

fn load_corpus(path: &Path, cfg: &LabelConfig) -> CliResult<Corpus> {
    parse_and_map(&corpus_name(path), open(path)?, &cfg.mapping).map_err(data(path))
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn ingest(a: IngestArgs) -> CliResult<()> {
    if a.schema {
        outln!("{RECORD_SCHEMA}");
        return Ok(());
    }
    let path = a.corpus.expect("required unless --schema");
    let cfg = load_config(a.config.as_deref())?;
    let records = read_records(open(&path)?).map_err(data(&path))?;
    let labels: Vec<&str> = records.iter().filter_map(|(_, r)| r.label.as_deref()).collect();
    let mapping = cfg.mapping.validate(labels.iter().copied());
    let conversations: std::collections::BTreeSet<&str> =
        records.iter().map(|(_, r)| r.conversation_id.as_str()).collect();
    let summary = serde_json::json!({
        "corpus": path.display().to_string(),
        "conversations": conversations.len(),
        "utterances": records.len(),
        "labeled": labels.len(),
        "mapping": mapping,
    });
    outln!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    if !mapping.is_clean() {
        let names: Vec<&str> = mapping.unmapped.keys().map(String::as_str).collect();
        return Err(CliError::Data(format!(
            "{}: unmapped labels: {}",
            path.display(),
            names.join(", ")
        )));
    }
    // Structural checks (duplicate turns, empty text) happen on full parse.
    load_corpus(&path, &cfg).map(|_| ())
}

fn map(a: MapArgs) -> CliResult<()> {
    let cfg = match &a.source {
        Some(name) => source_config(name).expect("validated by clap"),
        None => load_config(a.config.as_deref())?,
    };
    let corpus = load_corpus(&a.corpus, &cfg)?;
    write_file(&a.out, &corpus.to_jsonl_string())?;
    log::info!("wrote {} utterances to {}", corpus.len(), a.out.display());
    Ok(())
}

/// Defaults for `run` read from `--run-config`. Relative paths resolve
/// against the file's directory.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub corpus: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub mock: Option<PathBuf>,
    #[serde(alias = "base_url")]
    pub backend_url: Option<String>,
    pub model: Option<String>,
    pub max_rounds: Option<u32>,
    pub policy: Option<ConsensusPolicy>,
    pub deduction: Option<DeductionSource>,
    pub extraction: Option<ExtractionPolicy>,
    pub history_window: Option<usize>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub concurrency: Option<usize>,
    pub timeout_secs: Option<u64>,
    pub templates: Option<PathBuf>,
    pub trace_out: Option<PathBuf>,
    pub report_out: Option<PathBuf>,
}

impl RunFile {
    fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(data(path))?;
        let mut file: RunFile = toml::from_str(&text).map_err(data(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut file.corpus,
            &mut file.config,
            &mut file.mock,
            &mut file.templates,
            &mut file.trace_out,
            &mut file.report_out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(file)
    }
}

enum BackendChoice {
    Mock(PathBuf),
    Network(String),
}

fn choose_backend(a: &RunArgs, env_url: Option<String>, file: &RunFile) -> CliResult<BackendChoice> {
    let pick = |mock: Option<&PathBuf>, url: Option<&String>, origin: &str| match (mock, url) {
        (Some(_), Some(_)) => Err(CliError::Usage(format!(
            "both a mock script and a base URL are given {origin}; select exactly one backend"
        ))),
        (Some(m), None) => Ok(Some(BackendChoice::Mock(m.clone()))),
        (None, Some(u)) => Ok(Some(BackendChoice::Network(u.clone()))),
        (None, None) => Ok(None),
    };
    if let Some(choice) = pick(a.mock.as_ref(), a.backend_url.as_ref(), "on the command line")? {
        return Ok(choice);
    }
    if let Some(url) = env_url {
        return Ok(BackendChoice::Network(url));
    }
    if let Some(choice) = pick(file.mock.as_ref(), file.backend_url.as_ref(), "in the run config")? {
        return Ok(choice);
    }
    Err(CliError::Usage(format!(
        "no backend selected; pass --mock SCRIPT or --backend-url URL (or set {BASE_URL_ENV})"
    )))
}

fn run_eval(a: RunArgs) -> CliResult<()> {
    let file = match &a.run_config {
        Some(p) => RunFile::load(p)?,
        None => RunFile::default(),
    };
    let env_url = std::env::var(BASE_URL_ENV).ok().filter(|s| !s.is_empty());
    let choice = choose_backend(&a, env_url, &file)?;

    let defaults = NegotiationConfig::default();
    let negotiation = NegotiationConfig {
        max_rounds: a.max_rounds.or(file.max_rounds).unwrap_or(defaults.max_rounds),
        policy: a
            .policy
            .map(|p| match p {
                PolicyArg::DiscriminatorApproval => ConsensusPolicy::DiscriminatorApproval,
                PolicyArg::ConsecutiveAgreement => ConsensusPolicy::ConsecutiveAgreement,
            })
            .or(file.policy)
            .unwrap_or(defaults.policy),
        deduction: a
            .deduction
            .map(|d| match d {
                DeductionArg::Off => DeductionSource::Off,
                DeductionArg::Live => DeductionSource::Live,
                DeductionArg::Corpus => DeductionSource::Corpus,
            })
            .or(file.deduction)
            .unwrap_or(defaults.deduction),
        extraction: a
            .extraction
            .map(|e| match e {
                ExtractionArg::Last => ExtractionPolicy::Last,
                ExtractionArg::First => ExtractionPolicy::First,
            })
            .or(file.extraction)
            .unwrap_or(defaults.extraction),
        history_window: a.history_window.or(file.history_window).unwrap_or(defaults.history_window),
        temperature: a.temperature.or(file.temperature).unwrap_or(defaults.temperature),
        max_tokens: a.max_tokens.or(file.max_tokens).unwrap_or(defaults.max_tokens),
    };
    negotiation.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let concurrency = a.concurrency.or(file.concurrency).unwrap_or(4);
    if concurrency == 0 {
        return Err(CliError::Usage("concurrency must be at least 1".into()));
    }

    let corpus_path = a
        .corpus
        .clone()
        .or(file.corpus.clone())
        .ok_or_else(|| CliError::Usage("no corpus given; pass --corpus PATH".into()))?;
    let cfg = load_config(a.config.as_deref().or(file.config.as_deref()))?;
    let corpus = load_corpus(&corpus_path, &cfg)?;

    let templates = match a.templates.as_deref().or(file.templates.as_deref()) {
        Some(dir) if !dir.is_dir() => {
            return Err(CliError::Data(format!("{}: template directory not found", dir.display())))
        }
        Some(dir) => TemplateSet::load_dir(dir).map_err(data(dir))?,
        None => TemplateSet::builtin(),
    };

    let backend: Box<dyn Backend> = match choice {
        BackendChoice::Mock(path) => Box::new(MockBackend::load(&path).map_err(|e| CliError::Data(e.to_string()))?),
        BackendChoice::Network(url) => {
            let model = a
                .model
                .clone()
                .or(file.model.clone())
                .ok_or_else(|| CliError::Usage("the network backend needs --model (or SENTIXRL_MODEL)".into()))?;
            let mut oc = OpenAiConfig::new(url, model).with_env_credentials();
            if let Some(t) = a.timeout_secs.or(file.timeout_secs) {
                oc.timeout = Duration::from_secs(t);
            }
            oc.max_in_flight = concurrency;
            Box::new(OpenAiClient::new(oc))
        }
    };

    let domain = cfg.domain().clone();
    let negotiator = Negotiator::new(negotiation, PromptBuilder::new(templates), domain.clone())
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let preds = evaluate_corpus(&corpus, &negotiator, backend.as_ref(), concurrency).map_err(|e| match e {
        EvalError::AllFailed { .. } => CliError::Backend(e.to_string()),
        EvalError::EmptyCorpus => CliError::Data(format!("{}: {e}", corpus_path.display())),
        other => CliError::Data(other.to_string()),
    })?;

    if let Some(path) = a.trace_out.as_deref().or(file.trace_out.as_deref()) {
        write_file(path, &preds.to_jsonl_string())?;
    }
    let skipped = preds.skipped().count();
    if skipped > 0 {
        log::warn!("{skipped} utterance(s) failed and are excluded from scoring");
    }
    emit_report(&preds, &domain, a.format, a.report_out.as_deref().or(file.report_out.as_deref()))
}

fn emit_report(preds: &PredictionSet, domain: &crate::label_domain::LabelDomain, format: ReportFormat, out: Option<&Path>) -> CliResult<()> {
    let report = EvaluationReport::from_predictions(preds, domain).map_err(|e| CliError::Data(e.to_string()))?;
    let json = report.to_json();
    match format {
        ReportFormat::Table => out!("{}", render_table(&report)),
        ReportFormat::Structured => outln!("{json}"),
    }
    if let Some(path) = out {
        write_file(path, &format!("{json}\n"))?;
    }
    Ok(())
}

fn report(a: ReportArgs) -> CliResult<()> {
    let cfg = load_config(a.config.as_deref())?;
    let preds = PredictionSet::read_jsonl(open(&a.traces)?).map_err(data(&a.traces))?;
    emit_report(&preds, cfg.domain(), a.format, a.out.as_deref())
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let nanos = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0);
        let seed = nanos ^ u64::from(std::process::id()).rotate_left(32);
        log::warn!("no --seed given; using seed {seed}");
        seed
    })
}

fn mix_cmd(a: MixArgs) -> CliResult<()> {
    let cfg = load_config(a.config.as_deref())?;
    let sources = a
        .corpora
        .iter()
        .map(|p| load_corpus(p, &cfg))
        .collect::<CliResult<Vec<_>>>()?;
    let spec = MixSpec {
        strategy: match a.strategy {
            StrategyArg::Random => MixStrategy::Random,
            StrategyArg::Equal => MixStrategy::EqualCategory,
        },
        target_size: a.size,
        seed: resolve_seed(a.seed),
    };
    let out = mix(&spec, &sources).map_err(|e| match e {
        crate::mix::MixError::InvalidSpec(m) => CliError::Usage(m),
        other => CliError::Data(other.to_string()),
    })?;
    write_file(&a.out, &out.corpus.to_jsonl_string())?;
    let hist = histogram(&out.corpus).map_err(|e| CliError::Data(e.to_string()))?;
    out!("{}", render_histogram(&hist));
    if let Some(p) = &a.histogram_out {
        write_file(p, &format!("{}\n", hist.to_json()))?;
    }
    if let Some(p) = &a.chart_out {
        write_file(p, &hist.to_svg("Label distribution"))?;
    }
    Ok(())
}

fn render_histogram(h: &CategoryHistogram) -> String {
    let mut out = String::new();
    for (i, l) in h.labels.iter().enumerate() {
        let _ = writeln!(out, "{:<14} {:>7} {:>8.4}", l.as_str(), h.counts[i], h.proportions[i]);
    }
    let _ = writeln!(out, "{:<14} {:>7}", "total", h.total);
    out
}

fn simulate(a: SimulateArgs) -> CliResult<()> {
    let params = SimParams {
        p_correct: a.p,
        accept_correct: a.a,
        accept_incorrect: a.b,
        max_rounds: a.rounds,
        trials: a.trials,
        seed: resolve_seed(a.seed),
    };
    let usage = |e: crate::sanm::SimError| CliError::Usage(e.to_string());
    let exact = closed_form_consensus(&params).map_err(usage)?;
    let sim = crate::sanm::simulate_consensus(&params).map_err(usage)?;
    match a.format {
        ReportFormat::Structured => {
            let v = serde_json::json!({ "simulated": sim, "closed_form": exact });
            outln!("{}", serde_json::to_string_pretty(&v).expect("serializes"));
        }
        ReportFormat::Table => {
            outln!(
                "p={} a={} b={} rounds={} trials={} seed={}",
                params.p_correct, params.accept_correct, params.accept_incorrect, params.max_rounds, params.trials, params.seed
            );
            outln!("{:<20} {:>10} {:>10} {:>10} {:>7}", "quantity", "simulated", "std err", "exact", "z");
            for (name, est, value) in [
                ("P(accepted)", sim.p_accepted, exact.p_accepted),
                ("P(accepted,correct)", sim.p_accepted_correct, exact.p_accepted_correct),
                ("P(outlier)", sim.p_outlier, exact.p_outlier),
                ("mean rounds", sim.mean_rounds, exact.mean_rounds),
            ] {
                let z = if est.std_error > 0.0 {
                    format!("{:.2}", (est.value - value) / est.std_error)
                } else {
                    "-".into()
                };
                outln!("{name:<20} {:>10.6} {:>10.6} {value:>10.6} {z:>7}", est.value, est.std_error);
            }
            match exact.p_correct_given_accepted {
                Some(v) => outln!("{:<20} {:>10} {:>10} {v:>10.6}", "P(correct|accepted)", "", ""),
                None => outln!("P(correct|accepted) undefined: acceptance probability is zero"),
            }
        }
    }
    Ok(())
}
