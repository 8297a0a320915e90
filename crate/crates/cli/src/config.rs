//! Optional TOML run configuration. Every key is optional; command-line
//! flags override values found here.
//!
//! ```toml
//! [paths]
//! corpus = "data/companies.jsonl"
//! taxonomy = "data/terms.csv"
//! model = "out/model.sdgm"
//! cache = "out/llm_cache.jsonl"
//! out_dir = "out"
//!
//! [llm]
//! endpoint = "https://api.openai.com/v1/chat/completions"
//! model = "gpt-3.5-turbo"
//! temperature = 0.0
//! workers = 4
//! max_retries = 5
//! requests_per_second = 3.0
//! token_budget = 4096
//! timeout_secs = 60
//!
//! [prep]
//! lowercase = true
//! strip_punctuation = true
//! min_token_len = 2
//! stopwords_file = "stopwords.txt"
//!
//! [split]
//! train_fraction = 0.7
//! seed = 42
//! stratified = true
//!
//! [train]
//! method = "logistic_regression"
//! vectorizer = "tfidf"
//! epochs = 50
//! learning_rate = 0.5
//! l2 = 0.0001
//! seed = 42
//! threshold = 0.5
//!
//! [sgns]
//! dimension = 100
//! window = 5
//! negatives = 5
//! learning_rate = 0.025
//! epochs = 5
//! seed = 1
//! subsample = 0.001
//! ```

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sdgkit::vectorize::SgnsConfig;
use sdgkit::PrepConfig;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub paths: PathsConfig,
    #[serde(default)]
    pub llm: LlmConfig,
    #[serde(default)]
    pub prep: PrepSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub sgns: SgnsSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub corpus: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmConfig {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub workers: Option<usize>,
    pub max_retries: Option<u32>,
    pub requests_per_second: Option<f64>,
    pub token_budget: Option<usize>,
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrepSection {
    pub lowercase: Option<bool>,
    pub strip_punctuation: Option<bool>,
    pub min_token_len: Option<usize>,
    pub stopwords_file: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub train_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub stratified: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub method: Option<String>,
    pub vectorizer: Option<String>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub l2: Option<f64>,
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgnsSection {
    pub dimension: Option<usize>,
    pub window: Option<usize>,
    pub negatives: Option<usize>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub subsample: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&raw).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn prep(&self) -> Result<PrepConfig> {
        let mut prep = PrepConfig::default();
        let p = &self.prep;
        if let Some(v) = p.lowercase {
            prep.lowercase = v;
        }
        if let Some(v) = p.strip_punctuation {
            prep.strip_punctuation = v;
        }
        if let Some(v) = p.min_token_len {
            prep.min_token_len = v;
        }
        if let Some(path) = &p.stopwords_file {
            prep = prep
                .with_stopword_file(path)
                .with_context(|| format!("loading stopwords {}", path.display()))?;
        }
        Ok(prep)
    }

    pub fn sgns(&self) -> SgnsConfig {
        let d = SgnsConfig::default();
        let s = &self.sgns;
        SgnsConfig {
            dimension: s.dimension.unwrap_or(d.dimension),
            window: s.window.unwrap_or(d.window),
            negatives: s.negatives.unwrap_or(d.negatives),
            learning_rate: s.learning_rate.unwrap_or(d.learning_rate),
            epochs: s.epochs.unwrap_or(d.epochs),
            seed: s.seed.unwrap_or(d.seed),
            subsample: s.subsample.unwrap_or(d.subsample),
        }
    }
}
