//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::stub::{Reply, StubServer};
use common::{check_golden, Scenario};
use sentixrl::backend::{Backend, BackendError, BackendRequest, CallRole, OpenAiClient, OpenAiConfig, RequestTag, RetryPolicy};
use sentixrl::dataset::{parse_and_map, Corpus, RawRecord};
use sentixrl::label_domain::presets::{source_config, unified_config, UNIFIED_SOURCE_CORPORA};
use sentixrl::label_domain::{CanonicalLabel, LabelDomain};
use sentixrl::metrics::{compute_metrics, focal_loss, AbstentionMode, ConfusionMatrix, FocalParams};
use sentixrl::mix::{equal_mix, histogram, random_mix, MixSpec, MixStrategy};
use sentixrl::rng::StableRng;
use sentixrl::sanm::{closed_form_consensus, simulate_consensus, PredictionSet, SimParams};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(started: Instant, budget: Duration) -> Result<(), String> {
    let spent = started.elapsed();
    ensure(spent < budget, || format!("took {spent:?}, budget {budget:?}"))
}

// SANM trace exactness

fn sanm_traces() -> Check {
    let started = Instant::now();
    for s in Scenario::ALL {
        for run in 0..20 {
            for workers in [1, 8] {
                check_golden(&s.golden_file(), &s.run(workers))
                    .map_err(|e| format!("{} run {run} workers {workers}: {e}", s.name()))?;
            }
        }
    }
    within_budget(started, Duration::from_secs(1))?;
    Ok("4 scenarios x 20 runs x workers {1, 8} byte-identical to golden".into())
}

// Consensus oracle agreement

fn consensus() -> Check {
    let started = Instant::now();
    let points: [(f64, f64, f64, u32); 12] = [
        (0.7, 0.9, 0.2, 3),
        (0.5, 0.5, 0.5, 3),
        (0.9, 0.8, 0.1, 2),
        (0.3, 0.7, 0.4, 5),
        (0.6, 0.95, 0.05, 3),
        (0.2, 0.9, 0.3, 4),
        (0.8, 0.6, 0.6, 1),
        (0.4, 0.3, 0.2, 6),
        (0.55, 0.85, 0.35, 3),
        (0.95, 0.99, 0.5, 2),
        (0.1, 0.5, 0.05, 8),
        (0.65, 0.75, 0.25, 10),
    ];
    let mut worst: f64 = 0.0;
    for (i, &(p, a, b, n)) in points.iter().enumerate() {
        let sp = SimParams {
            p_correct: p,
            accept_correct: a,
            accept_incorrect: b,
            max_rounds: n,
            trials: 100_000,
            seed: i as u64,
        };
        let sim = simulate_consensus(&sp).map_err(|e| e.to_string())?;
        let exact = closed_form_consensus(&sp).map_err(|e| e.to_string())?;
        for (name, est, value) in [
            ("p_accepted", sim.p_accepted, exact.p_accepted),
            ("p_accepted_correct", sim.p_accepted_correct, exact.p_accepted_correct),
            ("p_outlier", sim.p_outlier, exact.p_outlier),
            ("mean_rounds", sim.mean_rounds, exact.mean_rounds),
        ] {
            let z = (est.value - value).abs() / est.std_error;
            worst = worst.max(z);
            ensure(est.within(value, 3.0), || {
                format!("({p}, {a}, {b}, {n}) {name}: simulated {} vs exact {value}, z = {z:.2}", est.value)
            })?;
        }
    }
    for (p, a, b, expect_outlier, rounds) in [(1.0, 1.0, 0.0, 0.0, 1.0), (0.5, 0.0, 0.0, 1.0, 3.0)] {
        let sp = SimParams {
            p_correct: p,
            accept_correct: a,
            accept_incorrect: b,
            max_rounds: 3,
            trials: 100_000,
            seed: 5,
        };
        let sim = simulate_consensus(&sp).map_err(|e| e.to_string())?;
        let exact = closed_form_consensus(&sp).map_err(|e| e.to_string())?;
        ensure(
            sim.p_outlier.value == expect_outlier
                && exact.p_outlier == expect_outlier
                && sim.mean_rounds.value == rounds
                && exact.mean_rounds == rounds
                && sim.p_accepted_correct.value == exact.p_accepted_correct,
            || format!("degenerate point ({p}, {a}, {b}) not exact"),
        )?;
    }
    within_budget(started, Duration::from_secs(30))?;
    Ok(format!("12 points x 4 quantities within 3 SE (max |z| = {worst:.2}); q=1 and q=0 exact"))
}

// Focal loss

fn focal() -> Check {
    for fp in [FocalParams::default(), FocalParams { alpha: 1.0, gamma: 0.0 }, FocalParams { alpha: 3.0, gamma: 5.0 }] {
        ensure(focal_loss(1.0, fp) == Ok(0.0), || format!("loss at p_t = 1 with {fp:?}"))?;
    }
    let mut rng = StableRng::seed_from_u64(31);
    let ce = FocalParams { alpha: 1.0, gamma: 0.0 };
    for _ in 0..100 {
        let p = 1.0 - rng.next_f64(); // (0, 1]
        let got = focal_loss(p, ce).map_err(|e| e.to_string())?;
        ensure((got - -p.ln()).abs() <= 1e-12, || format!("p_t = {p}: {got} vs {}", -p.ln()))?;
    }
    let half = focal_loss(0.5, FocalParams::default()).map_err(|e| e.to_string())?;
    let expected = 0.25 * 0.25 * std::f64::consts::LN_2;
    ensure((half - expected).abs() <= 1e-12, || format!("p_t = 0.5: {half} vs {expected}"))?;
    Ok(format!("zero at p_t = 1, cross-entropy limit on 100 draws, p_t = 0.5 gives {half:.6}"))
}

// Metrics oracle

struct OracleScores {
    accuracy: f64,
    macro_f1: f64,
    weighted_f1: f64,
    per_class: Vec<(f64, f64, f64, u64)>,
}

/// Recomputes every score from the sample list. `None` predictions are
/// abstentions; `exclude` drops them first.
fn oracle(k: usize, samples: &[(usize, Option<usize>)], exclude: bool) -> Option<OracleScores> {
    let kept: Vec<(usize, Option<usize>)> = samples.iter().copied().filter(|(_, p)| !(exclude && p.is_none())).collect();
    if kept.is_empty() {
        return None;
    }
    let n = kept.len() as f64;
    let correct = kept.iter().filter(|(g, p)| *p == Some(*g)).count() as f64;
    let mut per_class = Vec::new();
    for c in 0..k {
        let tp = kept.iter().filter(|(g, p)| *g == c && *p == Some(c)).count() as f64;
        let fp = kept.iter().filter(|(g, p)| *g != c && *p == Some(c)).count() as f64;
        let fneg = kept.iter().filter(|(g, p)| *g == c && *p != Some(c)).count() as f64;
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        per_class.push((precision, recall, f1, (tp + fneg) as u64));
    }
    let present: Vec<_> = per_class.iter().filter(|c| c.3 > 0).collect();
    let macro_f1 = present.iter().map(|c| c.2).sum::<f64>() / present.len() as f64;
    let weighted_f1 = per_class.iter().map(|c| c.3 as f64 * c.2).sum::<f64>() / n;
    Some(OracleScores {
        accuracy: correct / n,
        macro_f1,
        weighted_f1,
        per_class,
    })
}

fn domain_of(k: usize) -> LabelDomain {
    LabelDomain::new("oracle", &(0..k).map(|i| format!("class{i}")).collect::<Vec<_>>()).unwrap()
}

fn compare(k: usize, samples: &[(usize, Option<usize>)]) -> Result<usize, String> {
    let mut checked = 0;
    for (mode, exclude) in [(AbstentionMode::CountAsWrong, false), (AbstentionMode::Exclude, true)] {
        let mut cm = ConfusionMatrix::new(&domain_of(k), mode);
        for &(g, p) in samples {
            cm.record_index(g, p);
        }
        let (got, want) = match (compute_metrics(&cm), oracle(k, samples, exclude)) {
            (Err(_), None) => continue,
            (Ok(got), Some(want)) => (got, want),
            (got, want) => return Err(format!("emptiness disagrees: {got:?} vs oracle {}", want.is_some())),
        };
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;
        ensure(
            close(got.accuracy, want.accuracy) && close(got.macro_f1, want.macro_f1) && close(got.weighted_f1, want.weighted_f1),
            || format!("{mode:?} aggregates differ on {samples:?}"),
        )?;
        for (c, (m, w)) in got.per_class.iter().zip(&want.per_class).enumerate() {
            ensure(
                close(m.precision, w.0) && close(m.recall, w.1) && close(m.f1, w.2) && m.support == w.3,
                || format!("{mode:?} class {c} differs on {samples:?}"),
            )?;
        }
        checked += 1;
    }
    Ok(checked)
}

fn metrics_oracle() -> Check {
    let mut rng = StableRng::seed_from_u64(2024);
    let mut compared = 0;
    for _ in 0..200 {
        let k = 2 + rng.below(4) as usize;
        let n = 1 + rng.below(50) as usize;
        let samples: Vec<(usize, Option<usize>)> = (0..n)
            .map(|_| {
                let g = rng.below(k as u64) as usize;
                let p = if rng.next_f64() < 0.1 { None } else { Some(rng.below(k as u64) as usize) };
                (g, p)
            })
            .collect();
        compared += compare(k, &samples)?;
    }
    let mut balanced = 0;
    for _ in 0..100 {
        let k = 2 + rng.below(4) as usize;
        let per = 1 + rng.below(10) as usize;
        let mut samples = Vec::new();
        for g in 0..k {
            for _ in 0..per {
                let p = if rng.next_f64() < 0.1 { None } else { Some(rng.below(k as u64) as usize) };
                samples.push((g, p));
            }
        }
        compare(k, &samples)?;
        let mut cm = ConfusionMatrix::new(&domain_of(k), AbstentionMode::CountAsWrong);
        for &(g, p) in &samples {
            cm.record_index(g, p);
        }
        let r = compute_metrics(&cm).map_err(|e| e.to_string())?;
        ensure(r.weighted_f1 == r.macro_f1, || {
            format!("balanced instance: weighted {} != macro {}", r.weighted_f1, r.macro_f1)
        })?;
        balanced += 1;
    }
    Ok(format!("{compared} scorings of 200 random instances match the oracle to 1e-9; {balanced} balanced instances have weighted == macro"))
}

// Mixing

fn labeled_corpus(name: &str, labels: &[&str]) -> Corpus {
    let records = labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            (
                i + 1,
                RawRecord {
                    conversation_id: format!("{name}-{:04}", i / 4),
                    turn_index: i % 4,
                    speaker: "S".into(),
                    text: format!("utterance {i}"),
                    label: Some((*l).to_string()),
                    deduction: None,
                },
            )
        })
        .collect();
    let domain = LabelDomain::new("mix", &["a", "b", "c"]).unwrap();
    Corpus::from_records(name, records, domain, CanonicalLabel::new).unwrap()
}

fn mixing() -> Check {
    // pool shares 0.5 / 0.3 / 0.2 across two corpora
    let sources = [
        labeled_corpus("north", &[vec!["a"; 300], vec!["b"; 150], vec!["c"; 50]].concat()),
        labeled_corpus("south", &[vec!["a"; 200], vec!["b"; 150], vec!["c"; 150]].concat()),
    ];
    let pool = 1000.0;
    let shares = [0.5, 0.3, 0.2];
    let draw = 100.0;
    let mut worst: f64 = 0.0;
    let mut mean = [0.0; 3];
    for seed in 0..100 {
        let spec = MixSpec { strategy: MixStrategy::Random, target_size: 100, seed };
        let out = random_mix(&spec, &sources).map_err(|e| e.to_string())?;
        ensure(out == random_mix(&spec, &sources).map_err(|e| e.to_string())?, || format!("random seed {seed} not deterministic"))?;
        let unique: BTreeSet<_> = out.selection.iter().collect();
        ensure(unique.len() == 100, || format!("seed {seed} repeated an utterance"))?;
        let h = histogram(&out.corpus).map_err(|e| e.to_string())?;
        for c in 0..3 {
            let p: f64 = shares[c];
            let sigma = (p * (1.0 - p) / draw * (pool - draw) / (pool - 1.0)).sqrt();
            let z = (h.proportions[c] - p).abs() / sigma;
            worst = worst.max(z);
            mean[c] += h.proportions[c] / 100.0;
            ensure(z <= 3.0, || format!("seed {seed} class {c}: share {} vs {p}, z = {z:.2}", h.proportions[c]))?;
        }
    }
    for seed in 0..100 {
        let spec = MixSpec { strategy: MixStrategy::EqualCategory, target_size: 150, seed };
        let out = equal_mix(&spec, &sources).map_err(|e| e.to_string())?;
        ensure(out == equal_mix(&spec, &sources).map_err(|e| e.to_string())?, || format!("equal seed {seed} not deterministic"))?;
        let h = histogram(&out.corpus).map_err(|e| e.to_string())?;
        let (lo, hi) = (h.counts.iter().min().unwrap(), h.counts.iter().max().unwrap());
        ensure(hi - lo <= 1, || format!("equal seed {seed}: counts {:?}", h.counts))?;
    }
    Ok(format!(
        "random shares within 3 sigma on 100 seeds (max z = {worst:.2}, mean shares {:.3}/{:.3}/{:.3}); equal mixes flat on 100 seeds; deterministic",
        mean[0], mean[1], mean[2]
    ))
}

// Label unification

fn unification() -> Check {
    let unified = unified_config();
    let target: BTreeSet<&str> = unified.domain().labels().iter().map(CanonicalLabel::as_str).collect();
    let mut union = BTreeSet::new();
    for schema in UNIFIED_SOURCE_CORPORA {
        let cfg = source_config(schema.name).ok_or_else(|| format!("no config for {}", schema.name))?;
        let mut text = String::new();
        for (i, label) in schema.labels.iter().enumerate() {
            let _ = writeln!(
                text,
                "{}",
                serde_json::json!({"conversation_id": "c", "turn_index": i, "speaker": "S", "text": format!("text {i}"), "label": label})
            );
        }
        let report = cfg.mapping.validate(schema.labels.iter().copied());
        ensure(report.is_clean(), || format!("{}: unmapped {:?}", schema.name, report.unmapped))?;
        let corpus = parse_and_map(schema.name, text.as_bytes(), &cfg.mapping).map_err(|e| format!("{}: {e}", schema.name))?;
        for (_, u) in corpus.labeled() {
            union.insert(u.gold_label.clone().unwrap().as_str().to_string());
        }
    }
    let union: BTreeSet<&str> = union.iter().map(String::as_str).collect();
    ensure(union == target, || format!("union {union:?} != domain {target:?}"))?;
    Ok(format!("9 schemas map cleanly; union is the {}-label domain", target.len()))
}

// End-to-end smoke

fn end_to_end() -> Check {
    let golds = [
        "neutral", "happiness", "sadness", "anger", "disgust", "fear", "surprise", "like", "neutral", "anger",
        "sadness", "happiness", "fear", "neutral", "like", "surprise", "disgust", "anger", "sadness", "neutral",
    ];
    // (generator answer, discriminator verdict) per utterance
    let mut script = String::from("[role_defaults]\nded = \"SCENE: an office\\nPERSONS: two colleagues\\nRELATIONS: coworkers\"\n");
    let mut corpus = String::new();
    let mut agree = 0;
    for (i, gold) in golds.iter().enumerate() {
        let conv = format!("dlg{:02}", i / 4);
        let turn = i % 4;
        let id = format!("{conv}#{turn}");
        let _ = writeln!(
            corpus,
            "{}",
            serde_json::json!({"conversation_id": conv, "turn_index": turn, "speaker": if turn % 2 == 0 { "A" } else { "B" }, "text": format!("line {i}"), "label": gold})
        );
        // every third utterance is answered wrongly, every seventh is rejected throughout
        let answer = if i % 3 == 0 { if *gold == "neutral" { "anger" } else { "neutral" } } else { gold };
        let verdict = if i % 7 == 6 { "REJECT" } else { "ACCEPT" };
        if i % 7 != 6 && answer == *gold {
            agree += 1;
        }
        let _ = write!(
            script,
            "\n[[response]]\nutterance = \"{id}\"\nrole = \"gen\"\ncontent = \"Emotion: {answer}\"\n\n[[response]]\nutterance = \"{id}\"\nrole = \"disc\"\ncontent = \"{verdict}\"\n"
        );
    }
    let expected = agree as f64 / golds.len() as f64;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    std::fs::write(dir.path().join("corpus.jsonl"), corpus).map_err(|e| e.to_string())?;
    std::fs::write(dir.path().join("script.toml"), script).map_err(|e| e.to_string())?;
    let started = Instant::now();
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_sentixrl"))
        .args([
            "run", "--corpus", "corpus.jsonl", "--mock", "script.toml", "--max-rounds", "3",
            "--trace-out", "traces.jsonl", "--report-out", "report.json",
        ])
        .current_dir(dir.path())
        .env_remove("SENTIXRL_BASE_URL")
        .output()
        .map_err(|e| e.to_string())?;
    let spent = started.elapsed();
    ensure(out.status.success(), || format!("exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)))?;
    ensure(spent < Duration::from_secs(5), || format!("took {spent:?}"))?;
    let traces = std::fs::read(dir.path().join("traces.jsonl")).map_err(|e| e.to_string())?;
    let preds = PredictionSet::read_jsonl(traces.as_slice()).map_err(|e| e.to_string())?;
    ensure(preds.traces.len() == 20 && preds.skipped().count() == 0, || "expected 20 completed traces".into())?;
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let accuracy = report["count_as_wrong"]["accuracy"].as_f64().ok_or("report lacks accuracy")?;
    ensure(accuracy == expected, || format!("accuracy {accuracy} vs hand-computed {expected}"))?;
    Ok(format!("20 utterances in {spent:.2?}; accuracy {accuracy} = {agree}/20"))
}

// Network client

fn network() -> Check {
    let client = |server: &StubServer| {
        let mut cfg = OpenAiConfig::new(server.base_url.clone(), "stub");
        cfg.retry = RetryPolicy { max_attempts: 3, base_delay: Duration::from_millis(5) };
        cfg.timeout = Duration::from_secs(5);
        OpenAiClient::new(cfg)
    };
    let request = |id: &str| BackendRequest::prompt(format!("prompt for {id}"), RequestTag::new(id, 1, CallRole::Generator));

    let flaky = StubServer::start(|n| if n < 2 { Reply::Status(500) } else { Reply::Echo }, Duration::ZERO);
    let resp = client(&flaky).complete(&request("d#0")).map_err(|e| e.to_string())?;
    ensure(resp.attempts == 3 && resp.content == "prompt for d#0", || format!("500-500-200 gave {resp:?}"))?;

    let down = StubServer::start(|_| Reply::Status(500), Duration::ZERO);
    let err = client(&down).complete(&request("d#0")).err();
    ensure(err == Some(BackendError::HttpStatus { status: 500, attempts: 3 }) && down.hits() == 3, || {
        format!("permanent 500 gave {err:?} after {} hits", down.hits())
    })?;

    let slow = StubServer::start(|_| Reply::Echo, Duration::from_millis(200));
    let c = client(&slow);
    let ids: Vec<String> = (0..8).map(|i| format!("conv{i}#{i}")).collect();
    let results: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = ids.iter().map(|id| {
            let c = &c;
            scope.spawn(move || c.complete(&request(id)))
        }).collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    for (id, r) in ids.iter().zip(results) {
        let r = r.map_err(|e| e.to_string())?;
        ensure(r.content == format!("prompt for {id}"), || format!("{id} got {:?}", r.content))?;
    }
    ensure(slow.peak_concurrency() == 8, || format!("peak concurrency {}", slow.peak_concurrency()))?;
    Ok("500-500-200 succeeds on attempt 3; permanent 500 fails after 3; 8 concurrent requests correlate".into())
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("SANM trace exactness", sanm_traces),
        ("Consensus oracle agreement", consensus),
        ("Focal loss", focal),
        ("Metrics oracle", metrics_oracle),
        ("Mixing", mixing),
        ("Label unification", unification),
        ("End-to-end smoke", end_to_end),
        ("Network client", network),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        let spent = started.elapsed();
        match result {
            Ok(detail) => println!("PASS  {name} [{spent:.2?}]: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name} [{spent:.2?}]: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
