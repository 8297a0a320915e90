use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sgns::sgns_target;
use super::{Result, VectorizeError};
use crate::container::ModelFile;
use crate::corpus::Corpus;
use crate::textprep::{preprocess, tokenize_corpus, PrepConfig, TermIndex, Vocabulary};

/// Hyperparameters shared by skip-gram and PV-DBOW training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgnsConfig {
    pub dimension: usize,
    pub window: usize,
    pub negatives: usize,
    /// Initial learning rate, decayed linearly to `1e-4` of itself.
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Frequent-word subsampling threshold.
    pub subsample: f64,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        SgnsConfig {
            dimension: 100,
            window: 5,
            negatives: 5,
            learning_rate: 0.025,
            epochs: 5,
            seed: 1,
            subsample: 1e-3,
        }
    }
}

impl SgnsConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(VectorizeError::InvalidConfig(format!("{what} must be positive")));
        if self.dimension == 0 {
            return bad("dimension");
        }
        if self.window == 0 {
            return bad("window");
        }
        if self.negatives == 0 {
            return bad("negatives");
        }
        if self.epochs == 0 {
            return bad("epochs");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate");
        }
        if !(self.subsample > 0.0 && self.subsample.is_finite()) {
            return bad("subsample threshold");
        }
        Ok(())
    }
}

/// Mean loss per positive pair for each epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingStats {
    pub epoch_losses: Vec<f64>,
}

/// Word vectors: `input` holds the center vectors, `output` the context
/// vectors (present only for tables trained here).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub words: TermIndex,
    /// Training-corpus frequencies; zero for loaded pretrained tables.
    pub counts: Vec<u64>,
    pub dimension: usize,
    pub input: Vec<f32>,
    pub output: Option<Vec<f32>>,
}

#[derive(Serialize, Deserialize)]
struct EmbeddingMeta {
    dimension: usize,
    words: TermIndex,
    counts: Vec<u64>,
    has_output: bool,
}

impl EmbeddingTable {
    pub fn new(words: Vec<String>, dimension: usize, input: Vec<f32>) -> Result<Self> {
        let n = words.len();
        let words = TermIndex::from_terms(words);
        if words.len() != n {
            return Err(VectorizeError::Corrupt("duplicate word".into()));
        }
        if dimension == 0 {
            return Err(VectorizeError::InvalidConfig("dimension must be ≥ 1".into()));
        }
        if input.len() != n * dimension {
            return Err(VectorizeError::DimensionMismatch {
                expected: n * dimension,
                found: input.len(),
            });
        }
        if input.iter().any(|x| !x.is_finite()) {
            return Err(VectorizeError::NonFinite);
        }
        Ok(EmbeddingTable {
            words,
            counts: vec![0; n],
            dimension,
            input,
            output: None,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn vector(&self, word: &str) -> Option<&[f32]> {
        self.words.get(word).map(|i| self.row(i))
    }

    pub fn row(&self, idx: usize) -> &[f32] {
        &self.input[idx * self.dimension..(idx + 1) * self.dimension]
    }

    /// Mean of the in-vocabulary token vectors, zero when all are OOV.
    pub fn mean_vector<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        let mut acc = vec![0.0f64; self.dimension];
        let mut n = 0usize;
        for tok in tokens {
            if let Some(v) = self.vector(tok.as_ref()) {
                for (a, &x) in acc.iter_mut().zip(v) {
                    *a += x as f64;
                }
                n += 1;
            }
        }
        if n > 0 {
            acc.iter_mut().for_each(|a| *a /= n as f64);
        }
        acc
    }

    /// Writes word2vec text format: a `V d` header line, then one line per
    /// word with `d` space-separated components.
    pub fn save_word2vec_text(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |source| VectorizeError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        writeln!(out, "{} {}", self.len(), self.dimension).map_err(io)?;
        for (i, word) in self.words.terms().iter().enumerate() {
            write!(out, "{word}").map_err(io)?;
            for x in self.row(i) {
                write!(out, " {x}").map_err(io)?;
            }
            writeln!(out).map_err(io)?;
        }
        out.flush().map_err(io)
    }

    pub fn to_model_file(&self) -> Result<ModelFile> {
        let mut file = ModelFile::new(
            "embeddings",
            &EmbeddingMeta {
                dimension: self.dimension,
                words: self.words.clone(),
                counts: self.counts.clone(),
                has_output: self.output.is_some(),
            },
        )?;
        file.push_f32("input", self.input.clone());
        if let Some(out) = &self.output {
            file.push_f32("output", out.clone());
        }
        Ok(file)
    }

    pub fn from_model_file(file: &ModelFile) -> Result<Self> {
        file.expect_kind("embeddings")?;
        let meta: EmbeddingMeta = file.meta()?;
        let n = meta.words.len() * meta.dimension;
        if meta.counts.len() != meta.words.len() {
            return Err(VectorizeError::Corrupt("counts length differs from vocabulary".into()));
        }
        let input = file.f32_section("input", n)?.to_vec();
        let output = if meta.has_output {
            Some(file.f32_section("output", n)?.to_vec())
        } else {
            None
        };
        Ok(EmbeddingTable {
            words: meta.words,
            counts: meta.counts,
            dimension: meta.dimension,
            input,
            output,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(self.to_model_file()?.save(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_model_file(&ModelFile::load(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PretrainedFormat {
    Word2vecText,
}

pub fn load_pretrained_embeddings(path: impl AsRef<Path>, format: PretrainedFormat) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| VectorizeError::Io {
        path: path.display().to_string(),
        source,
    })?;
    match format {
        PretrainedFormat::Word2vecText => read_word2vec_text(BufReader::new(file)),
    }
}

pub fn read_word2vec_text(reader: impl BufRead) -> Result<EmbeddingTable> {
    let parse_err = |line: usize, message: String| VectorizeError::Parse { line, message };
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "missing header".into()))?;
    let header = header.map_err(|e| parse_err(1, e.to_string()))?;
    let mut fields = header.split_whitespace();
    let (Some(v), Some(d), None) = (fields.next(), fields.next(), fields.next()) else {
        return Err(parse_err(1, format!("expected `V d` header, found `{header}`")));
    };
    let n_words: usize = v.parse().map_err(|_| parse_err(1, format!("bad word count `{v}`")))?;
    let dim: usize = d.parse().map_err(|_| parse_err(1, format!("bad dimension `{d}`")))?;
    if dim == 0 {
        return Err(parse_err(1, "dimension must be ≥ 1".into()));
    }

    let mut words = Vec::with_capacity(n_words);
    let mut input = Vec::with_capacity(n_words * dim);
    for (i, line) in lines {
        let line_no = i + 1;
        let line = line.map_err(|e| parse_err(line_no, e.to_string()))?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if words.len() == n_words {
            return Err(parse_err(line_no, format!("more than the declared {n_words} words")));
        }
        let mut parts = line.split(' ').filter(|p| !p.is_empty());
        let word = parts.next().expect("nonempty line");
        let mut count = 0;
        for part in parts {
            let x: f32 = part
                .parse()
                .map_err(|_| parse_err(line_no, format!("non-numeric component `{part}`")))?;
            input.push(x);
            count += 1;
        }
        if count != dim {
            return Err(parse_err(line_no, format!("`{word}` has {count} components, expected {dim}")));
        }
        words.push(word.to_string());
    }
    if words.len() != n_words {
        return Err(parse_err(
            0,
            format!("header declares {n_words} words, file has {}", words.len()),
        ));
    }
    EmbeddingTable::new(words, dim, input)
}

/// Mean-of-words document vector.
pub fn embed_document(table: &EmbeddingTable, text: &str, config: &PrepConfig) -> Vec<f64> {
    table.mean_vector(&preprocess(text, config))
}

pub(crate) struct NegativeSampler {
    dist: WeightedIndex<f64>,
}

impl NegativeSampler {
    /// Unigram distribution raised to the 3/4 power.
    pub fn new(counts: &[u64]) -> Result<Self> {
        let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
        let dist = WeightedIndex::new(&weights).map_err(|_| VectorizeError::EmptyVocabulary)?;
        Ok(NegativeSampler { dist })
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        self.dist.sample(rng)
    }
}

/// Keep probability for frequent-word subsampling.
pub(crate) fn keep_probability(count: u64, total: u64, threshold: f64) -> f64 {
    let f = count as f64 / total as f64;
    if f <= 0.0 {
        return 1.0;
    }
    ((f / threshold).sqrt() + 1.0) * threshold / f
}

pub(crate) struct LinearDecay {
    start: f64,
    total: f64,
}

impl LinearDecay {
    pub fn new(start: f64, total_steps: u64) -> Self {
        LinearDecay {
            start,
            total: total_steps.max(1) as f64,
        }
    }

    pub fn at(&self, step: u64) -> f64 {
        (self.start * (1.0 - step as f64 / (self.total + 1.0))).max(self.start * 1e-4)
    }
}

/// Deterministic initial center vectors, uniform in ±0.5/d.
pub(crate) fn init_vectors(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> Vec<f32> {
    let scale = 1.0 / dim as f32;
    (0..rows * dim).map(|_| (rng.gen::<f32>() - 0.5) * scale).collect()
}

pub(crate) fn token_ids(docs: &[Vec<String>], vocab: &Vocabulary) -> Vec<Vec<usize>> {
    docs.iter()
        .map(|d| d.iter().filter_map(|t| vocab.index_of(t)).collect())
        .collect()
}

pub fn train_skipgram(corpus: &Corpus, prep: &PrepConfig, config: &SgnsConfig) -> Result<EmbeddingTable> {
    train_skipgram_with_stats(corpus, prep, config).map(|(t, _)| t)
}

/// Single-threaded skip-gram training. Fully determined by the corpus,
/// preprocessing and `config` (including its seed).
pub fn train_skipgram_with_stats(
    corpus: &Corpus,
    prep: &PrepConfig,
    config: &SgnsConfig,
) -> Result<(EmbeddingTable, TrainingStats)> {
    config.validate()?;
    let docs = tokenize_corpus(corpus, prep);
    if docs.is_empty() || docs.iter().all(Vec::is_empty) {
        return Err(VectorizeError::EmptyVocabulary);
    }
    let vocab = Vocabulary::from_token_docs(&docs)?;
    let total_tokens = vocab.total_tokens();
    if total_tokens < config.window as u64 {
        return Err(VectorizeError::TooFewTokens {
            tokens: total_tokens,
            window: config.window,
        });
    }
    let ids = token_ids(&docs, &vocab);
    let dim = config.dimension;
    let v = vocab.len();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut input = init_vectors(&mut rng, v, dim);
    let mut output = vec![0.0f32; v * dim];
    let sampler = NegativeSampler::new(&vocab.counts)?;
    let keep: Vec<f64> = vocab
        .counts
        .iter()
        .map(|&c| keep_probability(c, total_tokens, config.subsample))
        .collect();
    let schedule = LinearDecay::new(config.learning_rate, config.epochs as u64 * total_tokens);

    let mut stats = TrainingStats::default();
    let mut step = 0u64;
    let mut grad = vec![0.0f32; dim];
    let mut sentence = Vec::new();
    for _ in 0..config.epochs {
        let mut loss_sum = 0.0;
        let mut pairs = 0u64;
        for doc in &ids {
            sentence.clear();
            for &w in doc {
                if keep[w] >= 1.0 || rng.gen::<f64>() < keep[w] {
                    sentence.push(w);
                }
            }
            for (pos, &center) in sentence.iter().enumerate() {
                let lr = schedule.at(step) as f32;
                step += 1;
                let reach = config.window - rng.gen_range(0..config.window);
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(sentence.len() - 1);
                for (ctx_pos, &ctx) in sentence.iter().enumerate().take(hi + 1).skip(lo) {
                    if ctx_pos == pos {
                        continue;
                    }
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    let center_vec = &input[center * dim..(center + 1) * dim];
                    let mut loss = sgns_target(
                        center_vec,
                        &mut output[ctx * dim..(ctx + 1) * dim],
                        true,
                        lr,
                        &mut grad,
                    );
                    for _ in 0..config.negatives {
                        let neg = sampler.sample(&mut rng);
                        if neg == ctx {
                            continue;
                        }
                        loss += sgns_target(
                            center_vec,
                            &mut output[neg * dim..(neg + 1) * dim],
                            false,
                            lr,
                            &mut grad,
                        );
                    }
                    for (x, g) in input[center * dim..(center + 1) * dim].iter_mut().zip(&grad) {
                        *x += g;
                    }
                    loss_sum += loss;
                    pairs += 1;
                }
            }
        }
        stats
            .epoch_losses
            .push(if pairs > 0 { loss_sum / pairs as f64 } else { 0.0 });
    }

    let table = EmbeddingTable {
        words: vocab.terms,
        counts: vocab.counts,
        dimension: dim,
        input,
        output: Some(output),
    };
    Ok((table, stats))
}
