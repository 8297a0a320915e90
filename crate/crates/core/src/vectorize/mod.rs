//! Text-to-vector models: TF-IDF, skip-gram word embeddings with negative
//! sampling, mean-of-words document vectors and PV-DBOW document vectors.
//!
//! Training is single-threaded and seeded; two runs with the same inputs
//! produce bit-identical matrices.

mod doc2vec;
mod sgns;
mod sparse;
mod tfidf;
mod word2vec;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::container::{ContainerError, EmbeddedHeader, ModelFile};
use crate::corpus::Corpus;
use crate::textprep::{preprocess, PrepConfig, PrepError};

pub use doc2vec::{
    train_doc_embeddings, train_doc_embeddings_with_stats, DocEmbeddingMode, DocEmbeddingModel,
};
pub use sgns::{log_sigmoid, sgns_gradients, sgns_loss, sgns_step, sigmoid, SgnsGradients, SgnsUpdate};
pub use sparse::{cosine, SparseVector};
pub use tfidf::{fit_tfidf, fit_tfidf_with_norm, smoothed_idf, Norm, TfidfModel};
pub use word2vec::{
    embed_document, load_pretrained_embeddings, read_word2vec_text, train_skipgram,
    train_skipgram_with_stats, EmbeddingTable, PretrainedFormat, SgnsConfig, TrainingStats,
};

#[derive(Debug, thiserror::Error)]
pub enum VectorizeError {
    #[error(transparent)]
    Prep(#[from] PrepError),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("corpus has {tokens} tokens, fewer than the window size {window}")]
    TooFewTokens { tokens: u64, window: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite value in input vectors")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("corrupt model: {0}")]
    Corrupt(String),
    #[error("unknown vectorizer `{0}` (expected tfidf, word2vec or doc2vec)")]
    UnknownKind(String),
}

pub type Result<T, E = VectorizeError> = std::result::Result<T, E>;

/// Which text representation feeds a classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorizerKind {
    Tfidf,
    /// Mean of skip-gram word vectors.
    Word2vec,
    /// PV-DBOW inferred document vectors.
    Doc2vec,
}

impl VectorizerKind {
    pub const ALL: [VectorizerKind; 3] = [VectorizerKind::Tfidf, VectorizerKind::Word2vec, VectorizerKind::Doc2vec];

    pub fn name(self) -> &'static str {
        match self {
            VectorizerKind::Tfidf => "tfidf",
            VectorizerKind::Word2vec => "word2vec",
            VectorizerKind::Doc2vec => "doc2vec",
        }
    }
}

impl fmt::Display for VectorizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VectorizerKind {
    type Err = VectorizeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tfidf" | "tf-idf" => Ok(VectorizerKind::Tfidf),
            "word2vec" | "w2v" | "skipgram" => Ok(VectorizerKind::Word2vec),
            "doc2vec" | "pv-dbow" | "pv_dbow" | "d2v" => Ok(VectorizerKind::Doc2vec),
            other => Err(VectorizeError::UnknownKind(other.to_string())),
        }
    }
}

/// A fitted vectorizer producing classifier features.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedVectorizer {
    Tfidf(TfidfModel),
    MeanEmbedding { table: EmbeddingTable, prep: PrepConfig },
    DocEmbedding(DocEmbeddingModel),
}

impl FittedVectorizer {
    pub fn fit(kind: VectorizerKind, corpus: &Corpus, prep: &PrepConfig, sgns: &SgnsConfig) -> Result<Self> {
        Ok(match kind {
            VectorizerKind::Tfidf => FittedVectorizer::Tfidf(fit_tfidf(corpus, prep)?),
            VectorizerKind::Word2vec => FittedVectorizer::MeanEmbedding {
                table: train_skipgram(corpus, prep, sgns)?,
                prep: prep.clone(),
            },
            VectorizerKind::Doc2vec => FittedVectorizer::DocEmbedding(train_doc_embeddings(corpus, prep, sgns)?),
        })
    }

    pub fn kind(&self) -> VectorizerKind {
        match self {
            FittedVectorizer::Tfidf(_) => VectorizerKind::Tfidf,
            FittedVectorizer::MeanEmbedding { .. } => VectorizerKind::Word2vec,
            FittedVectorizer::DocEmbedding(_) => VectorizerKind::Doc2vec,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FittedVectorizer::Tfidf(m) => m.dim(),
            FittedVectorizer::MeanEmbedding { table, .. } => table.dimension,
            FittedVectorizer::DocEmbedding(m) => m.dimension,
        }
    }

    pub fn prep(&self) -> &PrepConfig {
        match self {
            FittedVectorizer::Tfidf(m) => &m.prep,
            FittedVectorizer::MeanEmbedding { prep, .. } => prep,
            FittedVectorizer::DocEmbedding(m) => &m.prep,
        }
    }

    /// True when every feature is non-negative by construction.
    pub fn non_negative(&self) -> bool {
        matches!(self, FittedVectorizer::Tfidf(_))
    }

    pub fn transform(&self, text: &str) -> SparseVector {
        match self {
            FittedVectorizer::Tfidf(m) => m.transform(text),
            FittedVectorizer::MeanEmbedding { table, prep } => {
                SparseVector::from_dense(&table.mean_vector(&preprocess(text, prep)))
            }
            FittedVectorizer::DocEmbedding(m) => SparseVector::from_dense(&m.infer_vector(text)),
        }
    }

    pub fn to_model_file(&self) -> Result<ModelFile> {
        match self {
            FittedVectorizer::Tfidf(m) => m.to_model_file(),
            FittedVectorizer::MeanEmbedding { table, prep } => {
                let mut file = table.to_model_file()?;
                file.meta["prep"] = serde_json::to_value(prep).map_err(|e| VectorizeError::Corrupt(e.to_string()))?;
                file.kind = "mean_embedding".into();
                Ok(file)
            }
            FittedVectorizer::DocEmbedding(m) => m.to_model_file(),
        }
    }

    pub fn from_model_file(file: &ModelFile) -> Result<Self> {
        match file.kind.as_str() {
            "tfidf" => Ok(FittedVectorizer::Tfidf(TfidfModel::from_model_file(file)?)),
            "mean_embedding" => {
                let prep: PrepConfig = serde_json::from_value(file.meta["prep"].clone())
                    .map_err(|e| VectorizeError::Corrupt(e.to_string()))?;
                let mut inner = file.clone();
                inner.kind = "embeddings".into();
                Ok(FittedVectorizer::MeanEmbedding {
                    table: EmbeddingTable::from_model_file(&inner)?,
                    prep,
                })
            }
            "doc_embeddings" => Ok(FittedVectorizer::DocEmbedding(DocEmbeddingModel::from_model_file(file)?)),
            other => Err(VectorizeError::UnknownKind(other.to_string())),
        }
    }

    pub(crate) fn embed_into(&self, file: &mut ModelFile, prefix: &str) -> Result<EmbeddedHeader> {
        Ok(file.embed(prefix, &self.to_model_file()?))
    }

    pub(crate) fn extract_from(file: &ModelFile, prefix: &str, header: &EmbeddedHeader) -> Result<Self> {
        Self::from_model_file(&file.extract(prefix, header))
    }
}
