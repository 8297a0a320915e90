//! Acceptance suite. Each criterion prints one PASS/FAIL line; tolerances
//! and runtime limits are pinned below. Run with
//! `cargo test -p sdgkit --test acceptance -- --nocapture`.

mod common;

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use common::fixtures::planted_corpus;
use common::mock::{completion_body, serve};
use common::numeric::{sgns_gradient_check, tfidf_hand_check, zero_loss_error};
use common::oracles::{check_fewshot, check_overlap, check_rates, overlap_fixture, random_fewshot, random_records};
use common::fewshot_grid;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sdgkit::analyze::{fewshot_report, overlap_report, Stat};
use sdgkit::classify::{
    compare_methods, evaluate, fit_classifier, fit_pipeline, CompareOptions, Method, TrainConfig,
};
use sdgkit::corpus::{eligibility_filter, split_train_test, toy_corpus, SplitSpec, DEFAULT_MIN_TOKENS};
use sdgkit::llm::*;
use sdgkit::vectorize::{train_doc_embeddings, train_skipgram, FittedVectorizer, SgnsConfig, VectorizerKind};
use sdgkit::{Corpus, LabeledDocument, PrepConfig, SdgLabelSet};

const PERCENT_LIMIT: Duration = Duration::from_secs(1);
const FEWSHOT_LIMIT: Duration = Duration::from_secs(1);
const ORACLE_LIMIT: Duration = Duration::from_secs(10);
const PIPELINE_LIMIT: Duration = Duration::from_secs(10);
const ORACLE_SETS: usize = 1000;
const AVG_TOL: f64 = 0.005;
const TFIDF_TOL: f64 = 1e-9;
const GRAD_TOL: f64 = 1e-4;
const ZERO_LOSS_TOL: f64 = 1e-12;
const GRAD_CONFIGS: usize = 100;
const MIN_ACCURACY: f64 = 0.95;
const MIN_PARSER_CASES: usize = 20;

/// Criteria expected to fail, with the exact failure text. The reference
/// figures pair 2,086 of 2,550 with 81.10%; 2086/2550 is 81.80% and no count
/// rounds to both, so that one pair cannot be reproduced.
const KNOWN_FAILURES: &[(u8, &str)] = &[(1, "(2086, 2550): got 81.80, expected 81.10")];

type Outcome = Result<String, String>;
type Criterion = (u8, &'static str, fn() -> Outcome);

fn within(start: Instant, limit: Duration) -> Result<Duration, String> {
    let took = start.elapsed();
    if took < limit {
        Ok(took)
    } else {
        Err(format!("took {took:?}, limit {limit:?}"))
    }
}

fn percentages() -> Outcome {
    let start = Instant::now();
    let r1 = overlap_report(&overlap_fixture(2389, 1492, 1019, 421, 250, 1773, 472)).map_err(|e| e.to_string())?;
    let r2 = overlap_report(&overlap_fixture(2550, 2086, 1038, 1231, 890, 1796, 3558)).map_err(|e| e.to_string())?;
    let cells: [(&Stat, &str); 8] = [
        (&r1.intersection_including_empty, "62.45"),
        (&r1.detected_a, "42.65"),
        (&r1.detected_b, "17.62"),
        (&r1.intersection_detected, "10.46"),
        (&r2.intersection_including_empty, "81.10"),
        (&r2.detected_a, "40.71"),
        (&r2.detected_b, "48.27"),
        (&r2.intersection_detected, "34.90"),
    ];
    let mismatches: Vec<String> = cells
        .iter()
        .filter(|(s, want)| s.percent_string() != *want)
        .map(|(s, want)| format!("({}, {}): got {}, expected {want}", s.count, s.denominator, s.percent_string()))
        .collect();
    let took = within(start, PERCENT_LIMIT)?;
    if mismatches.is_empty() {
        Ok(format!("8/8 pairs in {took:?}"))
    } else {
        Err(mismatches.join("; "))
    }
}

fn fewshot_replay() -> Outcome {
    let start = Instant::now();
    let (truth, preds) = fewshot_grid::build();
    let rep = fewshot_report(&truth, &preds, fewshot_grid::tags()).map_err(|e| e.to_string())?;
    for &(label, n, tagged, total, ae, correct) in &fewshot_grid::ROWS {
        let row = rep.row(label).ok_or(format!("no row for SDG{label}"))?;
        let got = (row.n, row.total_identification.count, row.as_expected.count, row.correct.count);
        if got != (n, total, ae, correct) || row.as_expected_bracketed == tagged {
            return Err(format!("SDG{label}: {got:?} vs {:?}", (n, total, ae, correct)));
        }
    }
    let t = &rep.totals;
    let got = (
        t.total_identification,
        t.as_expected.count,
        t.as_expected.percent_string(),
        t.correct.count,
        t.correct.percent_string(),
    );
    if got != (195, 90, "45.00".into(), 68, "34.00".into()) {
        return Err(format!("totals {got:?}"));
    }
    if (rep.avg_per_identified - 1.44).abs() > AVG_TOL {
        return Err(format!("average {}", rep.avg_per_identified));
    }
    let took = within(start, FEWSHOT_LIMIT)?;
    Ok(format!("16 rows, totals 195/90/68, avg {:.4} in {took:?}", rep.avg_per_identified))
}

const CONTENT: [&str; 12] = [
    "solar", "turbine", "harbor", "vaccine", "clinic", "river", "wheat", "school", "factory", "forest", "copper",
    "bridge",
];

fn eligibility() -> Outcome {
    let prep = PrepConfig::default();
    for w in CONTENT {
        if sdgkit::textprep::preprocess(w, &prep).len() != 1 {
            return Err(format!("fixture word `{w}` does not survive preprocessing"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut docs = Vec::new();
    let mut planted = Vec::new();
    for i in 0..2576usize {
        use rand::Rng;
        let short = i % 13 == 5 && planted.len() < 187;
        let n = if short {
            rng.gen_range(1..DEFAULT_MIN_TOKENS)
        } else {
            rng.gen_range(DEFAULT_MIN_TOKENS..40)
        };
        // Stopwords and punctuation pad every document without adding tokens.
        let mut text: Vec<&str> = (0..n).map(|_| CONTENT[rng.gen_range(0..CONTENT.len())]).collect();
        text.extend(["the", "and", "of", "-", "a"]);
        let id = format!("e{i:04}");
        if short {
            planted.push(id.clone());
        }
        docs.push(LabeledDocument::new(id, text.join(" ")));
    }
    if planted.len() != 187 {
        return Err(format!("fixture planted {} short documents", planted.len()));
    }
    let corpus = Corpus::from_documents(docs).map_err(|e| e.to_string())?;
    let (eligible, rejected) = eligibility_filter(&corpus, DEFAULT_MIN_TOKENS, &prep);
    let rejected_ids: Vec<String> = rejected.ids().map(str::to_string).collect();
    if (eligible.len(), rejected.len()) != (2389, 187) || rejected_ids != planted {
        return Err(format!("{} eligible / {} rejected", eligible.len(), rejected.len()));
    }
    Ok("2389 eligible / 187 rejected".into())
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    for i in 0..ORACLE_SETS {
        let recs = random_records(&mut rng);
        check_overlap(&recs).map_err(|e| format!("set {i} overlap: {e}"))?;
        check_rates(&recs).map_err(|e| format!("set {i} rates: {e}"))?;
        let (truth, preds, tags) = random_fewshot(&mut rng);
        check_fewshot(&truth, &preds, tags).map_err(|e| format!("set {i} fewshot: {e}"))?;
    }
    let took = within(start, ORACLE_LIMIT)?;
    Ok(format!("{ORACLE_SETS} sets x 3 reports in {took:?}"))
}

fn tfidf_oracle() -> Outcome {
    let err = tfidf_hand_check()?;
    if err < TFIDF_TOL {
        Ok(format!("max abs error {err:.2e}"))
    } else {
        Err(format!("max abs error {err:.2e} >= {TFIDF_TOL:.0e}"))
    }
}

fn gradient_check() -> Outcome {
    let worst = sgns_gradient_check(GRAD_CONFIGS, 99)?;
    let zero = zero_loss_error()?;
    if worst < GRAD_TOL && zero <= ZERO_LOSS_TOL {
        Ok(format!("worst rel error {worst:.2e}, zero-vector loss error {zero:.1e}"))
    } else {
        Err(format!("worst rel error {worst:.2e}, zero-vector loss error {zero:.1e}"))
    }
}

fn small_sgns() -> SgnsConfig {
    SgnsConfig {
        dimension: 24,
        window: 3,
        negatives: 5,
        learning_rate: 0.05,
        epochs: 5,
        seed: 7,
        subsample: 1e-3,
    }
}

fn pipeline() -> Outcome {
    let corpus = planted_corpus(300, 17);
    let start = Instant::now();
    let spec = SplitSpec::new(0.7, 42, true);
    let (train, test) = split_train_test(&corpus, &spec).map_err(|e| e.to_string())?;
    let prep = PrepConfig::default();
    let model = fit_pipeline(
        &train,
        Method::LogisticRegression,
        VectorizerKind::Tfidf,
        &prep,
        &small_sgns(),
        &TrainConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let rep = evaluate(&model, &test).map_err(|e| e.to_string())?;
    let took = within(start, PIPELINE_LIMIT)?;
    if rep.accuracy < MIN_ACCURACY {
        return Err(format!("accuracy {:.4} < {MIN_ACCURACY}", rep.accuracy));
    }

    let options = CompareOptions {
        prep,
        sgns: small_sgns(),
        train: TrainConfig::default(),
    };
    let kinds = [VectorizerKind::Tfidf, VectorizerKind::Word2vec];
    let table = compare_methods(&corpus, &Method::ALL, &kinds, &spec, &options).map_err(|e| e.to_string())?;
    let mut combos: Vec<(String, String)> = table.iter().map(|r| (r.method.clone(), r.vectorizer.clone())).collect();
    combos.sort();
    combos.dedup();
    if table.len() != 6 || combos.len() != 6 {
        return Err(format!("compare-methods returned {} rows", table.len()));
    }
    if !table.windows(2).all(|w| w[0].macro_f1 >= w[1].macro_f1) {
        return Err("compare-methods table is not ranked by macro-F1".into());
    }
    Ok(format!(
        "accuracy {:.4} on {} test docs in {took:?}; 6-row ranked table, best {}+{}",
        rep.accuracy, rep.n_test, table[0].method, table[0].vectorizer
    ))
}

fn conformance() -> Outcome {
    let seen: Arc<Mutex<Vec<ChatRequest>>> = Arc::default();
    let log = seen.clone();
    let server = serve(
        move |_, req| {
            log.lock().unwrap().push(req.clone());
            let n = req.messages[0].content.len() % 17 + 1;
            (200, completion_body(&format!("SDG {n} is relevant. However, SDG 1 is not.")))
        },
        0,
    );
    let transport = HttpTransport::new(&server.url, Some("test-key".into()), Duration::from_secs(10));
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cache_path = dir.path().join("cache.jsonl");
    let mut cache = ResponseCache::open(&cache_path).map_err(|e| e.to_string())?;
    let options = RunOptions::default();
    let n = 7;
    let inputs: Vec<ProtocolInput> = (0..n)
        .map(|i| ProtocolInput {
            id: format!("c{i}"),
            text: format!("Company {i} operates {} wind farms and a recycling plant.", i + 2),
        })
        .collect();
    let sent = |spec: &ProtocolSpec, cache: &mut ResponseCache| -> Result<(usize, Vec<LlmRecord>), String> {
        let before = server.requests.load(std::sync::atomic::Ordering::SeqCst);
        let s = run_protocol(spec, &inputs, Some(&transport), cache, &options).map_err(|e| e.to_string())?;
        if s.failures().count() > 0 {
            return Err(format!("{} failed records", s.failures().count()));
        }
        Ok((server.requests.load(std::sync::atomic::Ordering::SeqCst) - before, s.records))
    };

    let exp1 = ProtocolSpec::experiment1(DEFAULT_MODEL);
    let (r1, recs1) = sent(&exp1, &mut cache)?;
    if r1 != 2 * n {
        return Err(format!("experiment1 sent {r1} requests for {n} docs"));
    }
    if seen.lock().unwrap().iter().any(|r| r.temperature != 0.0 || r.model != DEFAULT_MODEL) {
        return Err("request with non-zero temperature or wrong model".into());
    }
    let exp2 = ProtocolSpec::experiment2(DEFAULT_MODEL);
    let (r2, recs2) = sent(&exp2, &mut cache)?;
    if r2 != n {
        return Err(format!("experiment2 sent {r2} requests for {n} docs"));
    }

    let examples: Vec<FewShotExample> = (0..10)
        .map(|i| FewShotExample {
            text: format!("Example company {i} description"),
            labels: SdgLabelSet::single(if i < 5 { 2 } else { 7 }).unwrap(),
        })
        .collect();
    let tags: SdgLabelSet = [2u8, 7].into_iter().collect();
    let few = ProtocolSpec::fewshot(DEFAULT_MODEL, examples.clone(), tags);
    seen.lock().unwrap().clear();
    let (r3, recs3) = sent(&few, &mut cache)?;
    if r3 != n {
        return Err(format!("fewshot_tag sent {r3} requests for {n} docs"));
    }
    for req in seen.lock().unwrap().iter() {
        let prompt = &req.messages[0].content;
        if !prompt.contains("SDG2, SDG7") {
            return Err("tag list missing from few-shot prompt".into());
        }
        for ex in &examples {
            let block = format!("Text: {}\nTags: SDG{}\n", ex.text, ex.labels.to_vec()[0]);
            if !prompt.contains(&block) {
                return Err(format!("example `{}` missing from few-shot prompt", ex.text));
            }
        }
    }

    let live: Vec<Vec<LlmRecord>> = vec![recs1, recs2, recs3];
    let before = server.requests.load(std::sync::atomic::Ordering::SeqCst);
    let mut reopened = ResponseCache::open(&cache_path).map_err(|e| e.to_string())?;
    let replay_opts = RunOptions {
        replay: true,
        ..RunOptions::default()
    };
    for (spec, recs) in [&exp1, &exp2, &few].into_iter().zip(&live) {
        let s = run_protocol(spec, &inputs, None, &mut reopened, &replay_opts).map_err(|e| e.to_string())?;
        let bytes = |r: &[LlmRecord]| r.iter().map(|x| serde_json::to_string(x).unwrap()).collect::<Vec<_>>();
        if s.requests_sent != 0 || bytes(&s.records) != bytes(recs) {
            return Err(format!("{} replay differs from the live run", spec.kind));
        }
    }
    if server.requests.load(std::sync::atomic::Ordering::SeqCst) != before {
        return Err("replay contacted the server".into());
    }
    Ok(format!("{} / {n} / {n} requests for N = {n}; 10 examples + tags rendered; replay sent 0", 2 * n))
}

#[derive(serde::Deserialize)]
struct ParserCase {
    response: String,
    cleaning: Cleaning,
    expected: SdgLabelSet,
}

fn parser_corpus() -> Outcome {
    let cases: Vec<ParserCase> = include_str!("data/llm_responses.jsonl")
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    if cases.len() < MIN_PARSER_CASES {
        return Err(format!("only {} fixture cases", cases.len()));
    }
    let mut agree = 0;
    for c in &cases {
        if parse_sdg_labels(c.cleaning.apply(&c.response)) == c.expected {
            agree += 1;
        }
        let once = strip_however(&c.response);
        if strip_however(once) != once {
            return Err(format!("strip_however not idempotent on {:?}", c.response));
        }
    }
    if agree == cases.len() {
        Ok(format!("{agree}/{} agree; idempotent", cases.len()))
    } else {
        Err(format!("{agree}/{} agree", cases.len()))
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = toy_corpus();
    let prep = PrepConfig::default();
    let cfg = small_sgns();
    let doc_cfg = SgnsConfig {
        subsample: 1.0,
        ..cfg.clone()
    };
    let mut files = Vec::new();
    for run in 0..2 {
        let err = |e: &dyn std::fmt::Display| e.to_string();
        let path = |name: &str| dir.path().join(format!("{name}-{run}.bin"));
        train_skipgram(&corpus, &prep, &cfg).map_err(|e| err(&e))?.save(path("w2v")).map_err(|e| err(&e))?;
        train_doc_embeddings(&corpus, &prep, &doc_cfg)
            .map_err(|e| err(&e))?
            .save(path("d2v"))
            .map_err(|e| err(&e))?;
        for method in Method::ALL {
            let v = FittedVectorizer::fit(VectorizerKind::Word2vec, &corpus, &prep, &cfg).map_err(|e| err(&e))?;
            fit_classifier(&corpus, method, v, &TrainConfig::default())
                .map_err(|e| err(&e))?
                .save(path(method.name()))
                .map_err(|e| err(&e))?;
        }
        files.push(["w2v", "d2v", "logistic_regression", "multinomial_nb", "linear_svm"].map(path));
    }
    for (a, b) in files[0].iter().zip(&files[1]) {
        let (x, y) = (std::fs::read(a).map_err(|e| e.to_string())?, std::fs::read(b).map_err(|e| e.to_string())?);
        if x != y {
            return Err(format!("{} differs between runs", a.display()));
        }
    }
    Ok("5 model files byte-identical across two runs".into())
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 10] = [
        (1, "overlap percentage reproduction", percentages),
        (2, "few-shot table replay", fewshot_replay),
        (3, "eligibility fixture", eligibility),
        (4, "metrics oracle equivalence", oracle_equivalence),
        (5, "tf-idf oracle", tfidf_oracle),
        (6, "sgns gradient check", gradient_check),
        (7, "desk-scale pipeline", pipeline),
        (8, "protocol conformance", conformance),
        (9, "parser corpus", parser_corpus),
        (10, "determinism", determinism),
    ];
    let mut unexpected = Vec::new();
    for (id, name, run) in criteria {
        let outcome = run();
        let known = KNOWN_FAILURES.iter().find(|(k, _)| *k == id).map(|(_, why)| *why);
        match (&outcome, known) {
            (Ok(detail), None) => println!("criterion {id:>2} PASS  {name}: {detail}"),
            (Err(why), Some(pinned)) if why == pinned => {
                println!("criterion {id:>2} FAIL  {name}: {why} [known]")
            }
            (Err(why), _) => {
                println!("criterion {id:>2} FAIL  {name}: {why}");
                unexpected.push(id);
            }
            (Ok(detail), Some(_)) => {
                println!("criterion {id:>2} PASS  {name}: {detail} [was pinned as failing]");
                unexpected.push(id);
            }
        }
    }
    assert!(unexpected.is_empty(), "criteria with unexpected outcomes: {unexpected:?}");
}
