//! PV-DBOW document embeddings: each document vector plays the role of
//! the skip-gram center word and predicts the document's own tokens.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sgns::{sgns_accumulate, sgns_target};
use super::word2vec::{init_vectors, keep_probability, token_ids, LinearDecay, NegativeSampler, SgnsConfig, TrainingStats};
use super::{Result, VectorizeError};
use crate::container::ModelFile;
use crate::corpus::Corpus;
use crate::textprep::{preprocess, tokenize_corpus, PrepConfig, TermIndex, Vocabulary};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocEmbeddingMode {
    #[default]
    PvDbow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocEmbeddingModel {
    pub mode: DocEmbeddingMode,
    pub doc_ids: Vec<String>,
    pub dimension: usize,
    /// One row per training document.
    pub doc_vectors: Vec<f32>,
    pub words: TermIndex,
    pub counts: Vec<u64>,
    /// Word output vectors learned jointly with the document vectors.
    pub output: Vec<f32>,
    pub prep: PrepConfig,
    pub config: SgnsConfig,
}

#[derive(Serialize, Deserialize)]
struct DocMeta {
    mode: DocEmbeddingMode,
    doc_ids: Vec<String>,
    dimension: usize,
    words: TermIndex,
    counts: Vec<u64>,
    prep: PrepConfig,
    config: SgnsConfig,
}

pub fn train_doc_embeddings(corpus: &Corpus, prep: &PrepConfig, config: &SgnsConfig) -> Result<DocEmbeddingModel> {
    train_doc_embeddings_with_stats(corpus, prep, config).map(|(m, _)| m)
}

pub fn train_doc_embeddings_with_stats(
    corpus: &Corpus,
    prep: &PrepConfig,
    config: &SgnsConfig,
) -> Result<(DocEmbeddingModel, TrainingStats)> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(VectorizeError::EmptyCorpus);
    }
    let docs = tokenize_corpus(corpus, prep);
    if docs.iter().all(Vec::is_empty) {
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

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut doc_vectors = init_vectors(&mut rng, ids.len(), dim);
    let mut output = vec![0.0f32; vocab.len() * dim];
    let sampler = NegativeSampler::new(&vocab.counts)?;
    let keep: Vec<f64> = vocab
        .counts
        .iter()
        .map(|&c| keep_probability(c, total_tokens, config.subsample))
        .collect();
    let schedule = LinearDecay::new(config.learning_rate, config.epochs as u64 * total_tokens);

    let mut stats = TrainingStats::default();
    let mut order: Vec<usize> = (0..ids.len()).collect();
    let mut grad = vec![0.0f32; dim];
    let mut step = 0u64;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut pairs = 0u64;
        for &d in &order {
            for &word in &ids[d] {
                let lr = schedule.at(step) as f32;
                step += 1;
                if keep[word] < 1.0 && rng.gen::<f64>() >= keep[word] {
                    continue;
                }
                let doc_vec = &mut doc_vectors[d * dim..(d + 1) * dim];
                loss_sum += predict_word(
                    doc_vec,
                    word,
                    &mut Outputs::Train(&mut output),
                    &sampler,
                    &mut rng,
                    config.negatives,
                    lr,
                    &mut grad,
                );
                pairs += 1;
            }
        }
        stats
            .epoch_losses
            .push(if pairs > 0 { loss_sum / pairs as f64 } else { 0.0 });
    }

    let model = DocEmbeddingModel {
        mode: DocEmbeddingMode::PvDbow,
        doc_ids: corpus.ids().map(str::to_string).collect(),
        dimension: dim,
        doc_vectors,
        words: vocab.terms,
        counts: vocab.counts,
        output,
        prep: prep.clone(),
        config: config.clone(),
    };
    Ok((model, stats))
}

/// Word output vectors, trainable or frozen.
enum Outputs<'a> {
    Train(&'a mut [f32]),
    Frozen(&'a [f32]),
}

impl Outputs<'_> {
    fn apply(&mut self, doc_vec: &[f32], word: usize, positive: bool, lr: f32, grad: &mut [f32]) -> f64 {
        let dim = doc_vec.len();
        let range = word * dim..(word + 1) * dim;
        match self {
            Outputs::Train(out) => sgns_target(doc_vec, &mut out[range], positive, lr, grad),
            Outputs::Frozen(out) => sgns_accumulate(doc_vec, &out[range], positive, lr, grad).0,
        }
    }
}

/// One positive word plus negatives for a document vector. Updates the
/// document vector in place.
#[allow(clippy::too_many_arguments)]
fn predict_word(
    doc_vec: &mut [f32],
    word: usize,
    outputs: &mut Outputs<'_>,
    sampler: &NegativeSampler,
    rng: &mut ChaCha8Rng,
    negatives: usize,
    lr: f32,
    grad: &mut [f32],
) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = outputs.apply(doc_vec, word, true, lr, grad);
    for _ in 0..negatives {
        let neg = sampler.sample(rng);
        if neg == word {
            continue;
        }
        loss += outputs.apply(doc_vec, neg, false, lr, grad);
    }
    for (x, g) in doc_vec.iter_mut().zip(grad.iter()) {
        *x += g;
    }
    loss
}

impl DocEmbeddingModel {
    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn vector(&self, doc_id: &str) -> Option<&[f32]> {
        let i = self.doc_ids.iter().position(|d| d == doc_id)?;
        Some(&self.doc_vectors[i * self.dimension..(i + 1) * self.dimension])
    }

    /// Fits a vector for unseen text against the frozen word output
    /// vectors. Deterministic: the RNG is seeded from the training seed.
    pub fn infer_vector(&self, text: &str) -> Vec<f64> {
        let dim = self.dimension;
        let ids: Vec<usize> = preprocess(text, &self.prep)
            .iter()
            .filter_map(|t| self.words.get(t))
            .collect();
        if ids.is_empty() {
            return vec![0.0; dim];
        }
        let Ok(sampler) = NegativeSampler::new(&self.counts) else {
            return vec![0.0; dim];
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut vec = init_vectors(&mut rng, 1, dim);
        let mut outputs = Outputs::Frozen(&self.output);
        let mut grad = vec![0.0f32; dim];
        let schedule = LinearDecay::new(self.config.learning_rate, (self.config.epochs * ids.len()) as u64);
        let mut step = 0u64;
        for _ in 0..self.config.epochs {
            for &w in &ids {
                let lr = schedule.at(step) as f32;
                step += 1;
                predict_word(
                    &mut vec,
                    w,
                    &mut outputs,
                    &sampler,
                    &mut rng,
                    self.config.negatives,
                    lr,
                    &mut grad,
                );
            }
        }
        vec.into_iter().map(f64::from).collect()
    }

    pub fn to_model_file(&self) -> Result<ModelFile> {
        let mut file = ModelFile::new(
            "doc_embeddings",
            &DocMeta {
                mode: self.mode,
                doc_ids: self.doc_ids.clone(),
                dimension: self.dimension,
                words: self.words.clone(),
                counts: self.counts.clone(),
                prep: self.prep.clone(),
                config: self.config.clone(),
            },
        )?;
        file.push_f32("doc_vectors", self.doc_vectors.clone());
        file.push_f32("output", self.output.clone());
        Ok(file)
    }

    pub fn from_model_file(file: &ModelFile) -> Result<Self> {
        file.expect_kind("doc_embeddings")?;
        let meta: DocMeta = file.meta()?;
        if meta.counts.len() != meta.words.len() {
            return Err(VectorizeError::Corrupt("counts length differs from vocabulary".into()));
        }
        let doc_vectors = file
            .f32_section("doc_vectors", meta.doc_ids.len() * meta.dimension)?
            .to_vec();
        let output = file.f32_section("output", meta.words.len() * meta.dimension)?.to_vec();
        Ok(DocEmbeddingModel {
            mode: meta.mode,
            doc_ids: meta.doc_ids,
            dimension: meta.dimension,
            doc_vectors,
            words: meta.words,
            counts: meta.counts,
            output,
            prep: meta.prep,
            config: meta.config,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(self.to_model_file()?.save(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_model_file(&ModelFile::load(path)?)
    }
}
