use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Result, SparseVector, VectorizeError};
use crate::container::ModelFile;
use crate::corpus::Corpus;
use crate::textprep::{preprocess, tokenize_corpus, PrepConfig, Vocabulary};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    L2,
    None,
}

/// Fitted TF-IDF weighting.
///
/// `idf(t) = ln((1 + N) / (1 + df(t))) + 1`, always ≥ 1 for terms seen
/// in training. Weights are raw term counts times idf, then optionally
/// L2-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct TfidfModel {
    pub vocabulary: Vocabulary,
    pub idf: Vec<f64>,
    pub norm: Norm,
    pub prep: PrepConfig,
}

pub fn smoothed_idf(n_docs: usize, df: u32) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

pub fn fit_tfidf(corpus: &Corpus, config: &PrepConfig) -> Result<TfidfModel> {
    fit_tfidf_with_norm(corpus, config, Norm::L2)
}

pub fn fit_tfidf_with_norm(corpus: &Corpus, config: &PrepConfig, norm: Norm) -> Result<TfidfModel> {
    let vocabulary = Vocabulary::from_token_docs(&tokenize_corpus(corpus, config))?;
    Ok(TfidfModel::from_vocabulary(vocabulary, norm, config.clone()))
}

#[derive(Serialize, Deserialize)]
struct TfidfMeta {
    vocabulary: Vocabulary,
    norm: Norm,
    prep: PrepConfig,
}

impl TfidfModel {
    pub fn from_vocabulary(vocabulary: Vocabulary, norm: Norm, prep: PrepConfig) -> Self {
        let idf = vocabulary
            .df
            .iter()
            .map(|&df| smoothed_idf(vocabulary.n_docs, df))
            .collect();
        TfidfModel {
            vocabulary,
            idf,
            norm,
            prep,
        }
    }

    pub fn dim(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn transform(&self, text: &str) -> SparseVector {
        self.transform_tokens(&preprocess(text, &self.prep))
    }

    pub fn transform_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> SparseVector {
        // Ordered so the norm sums in a fixed order.
        let mut tf: BTreeMap<usize, u32> = BTreeMap::new();
        for tok in tokens {
            if let Some(i) = self.vocabulary.index_of(tok.as_ref()) {
                *tf.entry(i).or_default() += 1;
            }
        }
        let mut pairs: Vec<(u32, f64)> = tf
            .into_iter()
            .map(|(i, c)| (i as u32, c as f64 * self.idf[i]))
            .collect();
        if self.norm == Norm::L2 {
            let norm = pairs.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
            if norm > 0.0 {
                pairs.iter_mut().for_each(|(_, w)| *w /= norm);
            }
        }
        SparseVector::from_pairs(pairs)
    }

    /// Stores the vocabulary in the header and idf as an `f32` section.
    /// Loading recomputes idf from the stored document frequencies, so a
    /// reloaded model transforms bit-identically.
    pub fn to_model_file(&self) -> Result<ModelFile> {
        let mut file = ModelFile::new(
            "tfidf",
            &TfidfMeta {
                vocabulary: self.vocabulary.clone(),
                norm: self.norm,
                prep: self.prep.clone(),
            },
        )?;
        file.push_f32("idf", self.idf.iter().map(|&x| x as f32).collect());
        Ok(file)
    }

    pub fn from_model_file(file: &ModelFile) -> Result<Self> {
        file.expect_kind("tfidf")?;
        let meta: TfidfMeta = file.meta()?;
        let n = meta.vocabulary.len();
        if meta.vocabulary.df.len() != n || meta.vocabulary.counts.len() != n {
            return Err(VectorizeError::Corrupt("vocabulary arrays disagree in length".into()));
        }
        file.f32_section("idf", n)?;
        Ok(Self::from_vocabulary(meta.vocabulary, meta.norm, meta.prep))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(self.to_model_file()?.save(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_model_file(&ModelFile::load(path)?)
    }
}
