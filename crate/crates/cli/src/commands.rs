use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use sdgkit::analyze::{detection_rates, fewshot_report, join_results, overlap_report, DetectionRecord, Side};
use sdgkit::classify::{
    compare_methods, comparison_csv, evaluate, fit_pipeline, ClassifierModel, CompareOptions, DecisionThresholds,
    Method, TrainConfig,
};
use sdgkit::corpus::{eligibility_filter, load_corpus, split_train_test, CorpusFormat, SplitSpec};
use sdgkit::llm::{
    inputs_from_corpus, run_protocol, FewShotExample, HttpTransport, ProtocolInput, ProtocolKind, ProtocolSpec,
    ResponseCache, RetryPolicy, RunOptions, Transport, DEFAULT_ENDPOINT, DEFAULT_MODEL,
};
use sdgkit::report::{self, ReportFormat, SideNames};
use sdgkit::taxonomy::{label_by_queries, search, SdgQuery, Taxonomy};
use sdgkit::vectorize::{load_pretrained_embeddings, PretrainedFormat, VectorizerKind};
use sdgkit::{Corpus, SdgLabelSet};

use crate::config::RunConfig;
use crate::*;

struct Ctx {
    cfg: RunConfig,
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

impl Ctx {
    fn corpus_path(&self, c: &CorpusIn) -> Result<PathBuf> {
        c.input
            .clone()
            .or_else(|| self.cfg.paths.corpus.clone())
            .ok_or_else(|| usage("no input corpus: pass --in or set paths.corpus"))
    }

    fn load_corpus(&self, c: &CorpusIn) -> Result<Corpus> {
        let path = self.corpus_path(c)?;
        read_corpus(&path, c.format.as_deref())
    }

    fn model_path(&self, flag: &Option<PathBuf>) -> Result<PathBuf> {
        flag.clone()
            .or_else(|| self.cfg.paths.model.clone())
            .ok_or_else(|| usage("no model path: pass --model or set paths.model"))
    }

    fn out_dir(&self, flag: &Option<PathBuf>) -> Result<PathBuf> {
        let dir = flag
            .clone()
            .or_else(|| self.cfg.paths.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }

    fn split_spec(&self, o: &SplitOpts) -> SplitSpec {
        let d = SplitSpec::default();
        let s = &self.cfg.split;
        SplitSpec::new(
            o.train_fraction.or(s.train_fraction).unwrap_or(d.train_fraction),
            o.seed.or(s.seed).unwrap_or(d.seed),
            !o.no_stratify && s.stratified.unwrap_or(d.stratified),
        )
    }

    fn train_config(&self, o: &TrainOpts) -> TrainConfig {
        let d = TrainConfig::default();
        let t = &self.cfg.train;
        TrainConfig {
            epochs: o.epochs.or(t.epochs).unwrap_or(d.epochs),
            learning_rate: o.learning_rate.or(t.learning_rate).unwrap_or(d.learning_rate),
            l2: o.l2.or(t.l2).unwrap_or(d.l2),
            seed: o.train_seed.or(t.seed).unwrap_or(d.seed),
        }
    }

    fn method(&self, o: &TrainOpts) -> Result<Method> {
        let raw = o.method.clone().or_else(|| self.cfg.train.method.clone());
        match raw {
            Some(m) => m.parse().map_err(|e| usage(format!("{e}"))),
            None => Ok(Method::LogisticRegression),
        }
    }

    fn vectorizer(&self, o: &TrainOpts) -> Result<VectorizerKind> {
        let raw = o.vectorizer.clone().or_else(|| self.cfg.train.vectorizer.clone());
        match raw {
            Some(v) => v.parse().map_err(|e| usage(format!("{e}"))),
            None => Ok(VectorizerKind::Tfidf),
        }
    }
}

fn read_corpus(path: &Path, format: Option<&str>) -> Result<Corpus> {
    let format = match format {
        Some(f) => f.parse::<CorpusFormat>().map_err(|e| usage(e.to_string()))?,
        None => CorpusFormat::from_path(path),
    };
    load_corpus(path, format).with_context(|| format!("loading corpus {}", path.display()))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    report::write_file(path, contents)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn parse_tags(raw: &str) -> Result<SdgLabelSet> {
    let tags = SdgLabelSet::parse_list(raw).map_err(|e| usage(format!("--tags: {e}")))?;
    if tags.is_empty() {
        return Err(usage("--tags is empty"));
    }
    Ok(tags)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let ctx = Ctx { cfg };
    match cli.command {
        Command::Ingest(a) => ingest(&ctx, a),
        Command::Filter(a) => filter(&ctx, a),
        Command::Split(a) => split(&ctx, a),
        Command::TaxoSearch(a) => taxo_search(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Evaluate(a) => evaluate_cmd(&ctx, a),
        Command::CompareMethods(a) => compare_methods_cmd(&ctx, a),
        Command::Predict(a) => predict(&ctx, a),
        Command::LlmRun(a) => llm_run(&ctx, a),
        Command::Compare(a) => compare(&ctx, a),
        Command::Fewshot(a) => fewshot(&ctx, a),
        Command::Report(a) => report_cmd(a),
    }
}

fn ingest(ctx: &Ctx, a: IngestArgs) -> Result<()> {
    let corpus = ctx.load_corpus(&a.corpus)?;
    write(&a.out, &corpus.to_jsonl())?;
    let labeled = corpus.iter().filter(|d| !d.labels.is_empty()).count();
    println!("{} documents ({} labeled)", corpus.len(), labeled);
    Ok(())
}

fn filter(ctx: &Ctx, a: FilterArgs) -> Result<()> {
    if a.min_tokens == 0 {
        return Err(usage("--min-tokens must be positive"));
    }
    let corpus = ctx.load_corpus(&a.corpus)?;
    let (eligible, rejected) = eligibility_filter(&corpus, a.min_tokens, &ctx.cfg.prep()?);
    write(&a.out, &eligible.to_jsonl())?;
    if let Some(p) = &a.rejected_out {
        write(p, &rejected.to_jsonl())?;
    }
    println!("{} eligible, {} rejected", eligible.len(), rejected.len());
    Ok(())
}

fn split(ctx: &Ctx, a: SplitArgs) -> Result<()> {
    let corpus = ctx.load_corpus(&a.corpus)?;
    let (train, test) = split_train_test(&corpus, &ctx.split_spec(&a.split))?;
    write(&a.train_out, &train.to_jsonl())?;
    write(&a.test_out, &test.to_jsonl())?;
    println!("{} train, {} test", train.len(), test.len());
    Ok(())
}

fn taxo_search(ctx: &Ctx, a: TaxoSearchArgs) -> Result<()> {
    let corpus = ctx.load_corpus(&a.corpus)?;
    let prep = ctx.cfg.prep()?;
    if let Some(raw) = &a.query {
        let query = SdgQuery::from_json(raw).map_err(|e| usage(format!("--query: {e}")))?;
        for id in search(&corpus, &query, &prep) {
            println!("{id}");
        }
        return Ok(());
    }
    let mut taxonomy = match a.taxonomy.clone().or_else(|| ctx.cfg.paths.taxonomy.clone()) {
        Some(p) => Taxonomy::load(&p).with_context(|| format!("loading taxonomy {}", p.display()))?,
        None => Taxonomy::seed(),
    };
    if let Some(p) = &a.embeddings {
        let table = load_pretrained_embeddings(p, PretrainedFormat::Word2vecText)
            .with_context(|| format!("loading embeddings {}", p.display()))?;
        taxonomy = taxonomy.expand(&table, a.k, a.min_sim, &prep)?;
    }
    if let Some(p) = &a.taxonomy_out {
        taxonomy.save_csv(p)?;
    }
    let labels = label_by_queries(&corpus, &taxonomy.compile(&prep), &prep);
    let csv = report::detections_csv(corpus.iter().map(|d| (d.id.as_str(), labels[&d.id])));
    match &a.out {
        Some(p) => write(p, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn train(ctx: &Ctx, a: TrainArgs) -> Result<()> {
    let corpus = ctx.load_corpus(&a.corpus)?;
    let path = ctx.model_path(&a.model)?;
    let (method, kind) = (ctx.method(&a.train)?, ctx.vectorizer(&a.train)?);
    let mut model = fit_pipeline(
        &corpus,
        method,
        kind,
        &ctx.cfg.prep()?,
        &ctx.cfg.sgns(),
        &ctx.train_config(&a.train),
    )?;
    if let Some(t) = a.threshold.or(ctx.cfg.train.threshold) {
        model.thresholds = DecisionThresholds::uniform(t).map_err(|e| usage(e.to_string()))?;
    }
    model.save(&path)?;
    println!("trained {} + {} on {} documents -> {}", method.name(), kind.name(), corpus.len(), path.display());
    Ok(())
}

fn evaluate_cmd(ctx: &Ctx, a: EvaluateArgs) -> Result<()> {
    let model = ClassifierModel::load(ctx.model_path(&a.model)?)?;
    let test = ctx.load_corpus(&a.corpus)?;
    let rep = evaluate(&model, &test)?;
    let dir = ctx.out_dir(&a.out_dir)?;
    write(&dir.join("eval.csv"), &rep.to_csv())?;
    write(&dir.join("eval.json"), &report::to_json(&rep))?;
    println!(
        "accuracy {:.4}  micro-F1 {:.4}  macro-F1 {:.4}  (n = {})",
        rep.accuracy, rep.micro_f1, rep.macro_f1, rep.n_test
    );
    Ok(())
}

fn parse_list<T: std::str::FromStr>(raw: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| usage(e.to_string())))
        .collect()
}

fn compare_methods_cmd(ctx: &Ctx, a: CompareMethodsArgs) -> Result<()> {
    let corpus = ctx.load_corpus(&a.corpus)?;
    let methods: Vec<Method> = match &a.methods {
        Some(m) => parse_list(m)?,
        None => Method::ALL.to_vec(),
    };
    let vectorizers: Vec<VectorizerKind> = match &a.vectorizers {
        Some(v) => parse_list(v)?,
        None => vec![VectorizerKind::Tfidf, VectorizerKind::Word2vec],
    };
    let options = CompareOptions {
        prep: ctx.cfg.prep()?,
        sgns: ctx.cfg.sgns(),
        train: ctx.train_config(&a.train),
    };
    let reports = compare_methods(&corpus, &methods, &vectorizers, &ctx.split_spec(&a.split), &options)?;
    let dir = ctx.out_dir(&a.out_dir)?;
    let csv = comparison_csv(&reports);
    write(&dir.join("comparison.csv"), &csv)?;
    write(&dir.join("comparison.json"), &report::to_json(&reports))?;
    print!("{csv}");
    Ok(())
}

fn predict(ctx: &Ctx, a: PredictArgs) -> Result<()> {
    let model = ClassifierModel::load(ctx.model_path(&a.model)?)?;
    let corpus = ctx.load_corpus(&a.corpus)?;
    let thresholds = match a.threshold {
        Some(t) => DecisionThresholds::uniform(t).map_err(|e| usage(e.to_string()))?,
        None => model.thresholds.clone(),
    };
    let rows: Vec<(&str, SdgLabelSet)> = corpus
        .iter()
        .map(|d| (d.id.as_str(), model.predict_labels_with(&thresholds, &d.text)))
        .collect();
    write(&a.out, &report::detections_csv(rows))?;
    Ok(())
}

fn read_names(path: &Path) -> Result<Vec<ProtocolInput>> {
    let raw = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for name in raw.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if !seen.insert(name.to_string()) {
            bail!("{}: duplicate name `{name}`", path.display());
        }
        out.push(ProtocolInput {
            id: name.to_string(),
            text: name.to_string(),
        });
    }
    Ok(out)
}

fn llm_run(ctx: &Ctx, a: LlmRunArgs) -> Result<()> {
    let l = &ctx.cfg.llm;
    let kind: ProtocolKind = a.protocol.parse().map_err(|e: LlmError| usage(e.to_string()))?;
    let model = a.model_name.clone().or_else(|| l.model.clone()).unwrap_or_else(|| DEFAULT_MODEL.into());
    let mut spec = match kind {
        ProtocolKind::Experiment1 if a.local_however => ProtocolSpec::experiment1_local(&model),
        ProtocolKind::Experiment1 => ProtocolSpec::experiment1(&model),
        ProtocolKind::Experiment2 => ProtocolSpec::experiment2(&model),
        ProtocolKind::FewshotTag => {
            let (Some(ex), Some(tags)) = (&a.examples, &a.tags) else {
                return Err(usage("fewshot_tag needs --examples and --tags"));
            };
            let examples = read_corpus(ex, None)?
                .iter()
                .map(|d| FewShotExample {
                    text: d.text.clone(),
                    labels: d.labels,
                })
                .collect();
            ProtocolSpec::fewshot(&model, examples, parse_tags(tags)?)
        }
    };
    if a.local_however && kind != ProtocolKind::Experiment1 {
        return Err(usage("--local-however only applies to experiment1"));
    }
    if let Some(t) = a.temperature.or(l.temperature) {
        spec.temperature = t;
    }
    spec.max_tokens = a.max_tokens;
    if let Some(b) = a.token_budget.or(l.token_budget) {
        spec.token_budget = b;
    }
    spec.validate().map_err(|e| usage(e.to_string()))?;

    let inputs = match &a.names {
        Some(p) => read_names(p)?,
        None => inputs_from_corpus(&ctx.load_corpus(&a.corpus)?),
    };
    let cache_path = a
        .cache
        .clone()
        .or_else(|| ctx.cfg.paths.cache.clone())
        .ok_or_else(|| usage("no cache path: pass --cache or set paths.cache"))?;
    let mut cache = ResponseCache::open(&cache_path)?;
    let options = RunOptions {
        workers: a.workers.or(l.workers).unwrap_or(4),
        requests_per_second: a.requests_per_second.or(l.requests_per_second),
        retry: RetryPolicy {
            max_retries: a.max_retries.or(l.max_retries).unwrap_or(RetryPolicy::default().max_retries),
            ..RetryPolicy::default()
        },
        replay: a.replay,
    };
    let transport = if a.replay {
        None
    } else {
        let endpoint = a.endpoint.clone().or_else(|| l.endpoint.clone()).unwrap_or_else(|| DEFAULT_ENDPOINT.into());
        Some(HttpTransport::from_env(endpoint, Duration::from_secs(l.timeout_secs.unwrap_or(60)))?)
    };
    let summary = run_protocol(
        &spec,
        &inputs,
        transport.as_ref().map(|t| t as &dyn Transport),
        &mut cache,
        &options,
    )?;

    let mut jsonl = String::new();
    for r in &summary.records {
        jsonl.push_str(&serde_json::to_string(r)?);
        jsonl.push('\n');
    }
    write(&a.out, &jsonl)?;
    if let Some(p) = &a.detections_out {
        let ok = summary.records.iter().filter(|r| r.is_ok());
        write(p, &report::detections_csv(ok.map(|r| (r.id.as_str(), r.labels))))?;
    }
    let failed = summary.failures().count();
    println!(
        "{} records, {} requests, {} cache hits, {} failed",
        summary.records.len(),
        summary.requests_sent,
        summary.cache_hits,
        failed
    );
    for r in summary.failures() {
        eprintln!("failed {}: {}", r.id, r.error.as_deref().unwrap_or(""));
    }
    if summary.transport_failures > 0 {
        return Err(TransportFailures(summary.transport_failures).into());
    }
    if failed > 0 {
        bail!("{failed} input(s) failed");
    }
    Ok(())
}

fn joined(a: &Path, b: &Path) -> Result<Vec<DetectionRecord>> {
    let ra = report::read_detections(a)?;
    let rb = report::read_detections(b)?;
    let (records, unmatched) = join_results(&ra, &rb)?;
    if !unmatched.is_empty() {
        log::warn!("{} id(s) present in only one result set, ignored", unmatched.len());
    }
    Ok(records)
}

fn compare(ctx: &Ctx, a: CompareArgs) -> Result<()> {
    let records = joined(&a.sides.a, &a.b)?;
    let rep = overlap_report(&records)?;
    let names = SideNames {
        a: a.sides.name_a.clone(),
        b: a.sides.name_b.clone(),
        items: a.items.clone(),
    };
    let dir = ctx.out_dir(&a.out_dir)?;
    let csv = report::overlap_csv(&rep, &names, a.include_empty);
    write(&dir.join("overlap.csv"), &csv)?;
    write(&dir.join("overlap.json"), &report::overlap_json(&rep, &names, a.include_empty))?;
    let ta = detection_rates(&records, Side::A)?;
    let tb = detection_rates(&records, Side::B)?;
    let sides = [(names.a.as_str(), &ta), (names.b.as_str(), &tb)];
    write(&dir.join("rates.csv"), &report::rates_comparison_csv(&sides))?;
    write(&dir.join("rates_a.csv"), &report::rates_csv(&ta))?;
    write(&dir.join("rates_b.csv"), &report::rates_csv(&tb))?;
    write(&dir.join("rates.json"), &report::rates_json(&sides))?;
    write(&dir.join("rates.svg"), &report::rates_svg("Detection Rate by SDG", &sides))?;
    print!("{csv}");
    Ok(())
}

fn fewshot(ctx: &Ctx, a: FewshotArgs) -> Result<()> {
    let truth = read_corpus(&a.truth, None)?;
    let preds: BTreeMap<String, SdgLabelSet> = report::read_detections(&a.pred)?.into_iter().collect();
    let rep = fewshot_report(&truth, &preds, parse_tags(&a.tags)?)?;
    let dir = ctx.out_dir(&a.out_dir)?;
    let csv = report::fewshot_csv(&rep);
    write(&dir.join("fewshot.csv"), &csv)?;
    write(&dir.join("fewshot.json"), &report::to_json(&rep))?;
    print!("{csv}");
    Ok(())
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    let format: ReportFormat = a.format.parse().map_err(|e: report::ReportError| usage(e.to_string()))?;
    let ra = report::read_detections(&a.sides.a)?;
    let mut tables = vec![(a.sides.name_a.clone(), sdgkit::analyze::detection_rates_of(ra.iter().map(|(_, l)| l))?)];
    if let Some(b) = &a.b {
        let rb = report::read_detections(b)?;
        tables.push((a.sides.name_b.clone(), sdgkit::analyze::detection_rates_of(rb.iter().map(|(_, l)| l))?));
    }
    let sides: Vec<(&str, &_)> = tables.iter().map(|(n, t)| (n.as_str(), t)).collect();
    let out = match format {
        ReportFormat::Csv => report::rates_comparison_csv(&sides),
        ReportFormat::Json => report::rates_json(&sides),
        ReportFormat::SvgBars => report::rates_svg(&a.title, &sides),
    };
    write(&a.out, &out)
}
