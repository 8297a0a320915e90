//! Text normalization, tokenization and vocabulary construction.
//!
//! Every vectorizer and the inverted index tokenize through [`preprocess`],
//! so a single [`PrepConfig`] fully determines how text becomes tokens.
//! The pipeline is: optional lowercasing, splitting on whitespace (and on
//! any non-alphanumeric character when punctuation stripping is on),
//! dropping tokens shorter than `min_token_len` characters, and removing
//! stopwords. There is no stemming.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::Corpus;

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

#[derive(Debug, thiserror::Error)]
pub enum PrepError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("every document preprocesses to zero tokens")]
    NoTokens,
    #[error("cannot read stopword file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepConfig {
    pub lowercase: bool,
    pub strip_punctuation: bool,
    /// Stored lowercase; matching is case-insensitive.
    pub stopwords: BTreeSet<String>,
    pub min_token_len: usize,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            lowercase: true,
            strip_punctuation: true,
            stopwords: parse_stopword_list(DEFAULT_STOPWORDS),
            min_token_len: 2,
        }
    }
}

impl PrepConfig {
    /// Default settings with an empty stopword list.
    pub fn without_stopwords() -> Self {
        PrepConfig {
            stopwords: BTreeSet::new(),
            ..Self::default()
        }
    }

    pub fn with_stopword_file(mut self, path: impl AsRef<Path>) -> Result<Self, PrepError> {
        self.stopwords = load_stopwords(path)?;
        Ok(self)
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        if self.stopwords.is_empty() {
            return false;
        }
        if self.stopwords.contains(token) {
            return true;
        }
        let lower = token.to_lowercase();
        lower != token && self.stopwords.contains(&lower)
    }
}

/// The bundled English stopword list.
pub fn default_stopwords() -> BTreeSet<String> {
    parse_stopword_list(DEFAULT_STOPWORDS)
}

/// Reads a one-term-per-line stopword file. Blank lines and lines starting
/// with `#` are skipped.
pub fn load_stopwords(path: impl AsRef<Path>) -> Result<BTreeSet<String>, PrepError> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|source| PrepError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(parse_stopword_list(&raw))
}

fn parse_stopword_list(raw: &str) -> BTreeSet<String> {
    raw.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

/// Turns text into a token sequence. Never fails; empty output is legal.
pub fn preprocess(text: &str, config: &PrepConfig) -> Vec<String> {
    let normalized;
    let text = if config.lowercase {
        normalized = text.to_lowercase();
        normalized.as_str()
    } else {
        text
    };
    let min_len = config.min_token_len.max(1);
    let keep = |tok: &str| tok.chars().count() >= min_len && !config.is_stopword(tok);
    if config.strip_punctuation {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty() && keep(t))
            .map(str::to_string)
            .collect()
    } else {
        text.split_whitespace()
            .filter(|t| keep(t))
            .map(str::to_string)
            .collect()
    }
}

/// Bidirectional term ↔ contiguous index map.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TermIndex {
    terms: Vec<String>,
    index: HashMap<String, usize>,
}

impl TermIndex {
    /// Builds an index in the given order. Duplicates keep the first slot.
    pub fn from_terms(terms: impl IntoIterator<Item = String>) -> Self {
        let mut out = TermIndex::default();
        for t in terms {
            if !out.index.contains_key(&t) {
                out.index.insert(t.clone(), out.terms.len());
                out.terms.push(t);
            }
        }
        out
    }

    pub fn get(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, idx: usize) -> &str {
        &self.terms[idx]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn contains(&self, term: &str) -> bool {
        self.index.contains_key(term)
    }
}

impl Serialize for TermIndex {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.terms.serialize(s)
    }
}

impl<'de> Deserialize<'de> for TermIndex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let terms = Vec::<String>::deserialize(d)?;
        let n = terms.len();
        let idx = TermIndex::from_terms(terms);
        if idx.len() != n {
            return Err(serde::de::Error::custom("duplicate term in vocabulary"));
        }
        Ok(idx)
    }
}

/// Corpus vocabulary with document and occurrence frequencies.
///
/// Terms are indexed `0..V` in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub terms: TermIndex,
    /// Number of documents containing each term.
    pub df: Vec<u32>,
    /// Total occurrences of each term.
    pub counts: Vec<u64>,
    /// Number of documents the vocabulary was built from.
    pub n_docs: usize,
}

impl Vocabulary {
    /// Builds a vocabulary from already tokenized documents.
    pub fn from_token_docs<S: AsRef<str>>(docs: &[Vec<S>]) -> Result<Self, PrepError> {
        if docs.is_empty() {
            return Err(PrepError::EmptyCorpus);
        }
        let mut stats: HashMap<&str, (u32, u64)> = HashMap::new();
        for doc in docs {
            let mut seen = BTreeSet::new();
            for tok in doc {
                let tok = tok.as_ref();
                let entry = stats.entry(tok).or_insert((0, 0));
                entry.1 += 1;
                if seen.insert(tok) {
                    entry.0 += 1;
                }
            }
        }
        if stats.is_empty() {
            return Err(PrepError::NoTokens);
        }
        let mut sorted: Vec<_> = stats.into_iter().collect();
        sorted.sort_unstable_by(|a, b| a.0.cmp(b.0));
        let df = sorted.iter().map(|(_, (df, _))| *df).collect();
        let counts = sorted.iter().map(|(_, (_, c))| *c).collect();
        let terms = TermIndex::from_terms(sorted.into_iter().map(|(t, _)| t.to_string()));
        Ok(Vocabulary {
            terms,
            df,
            counts,
            n_docs: docs.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.terms.get(term)
    }

    pub fn df_of(&self, term: &str) -> u32 {
        self.index_of(term).map_or(0, |i| self.df[i])
    }

    pub fn total_tokens(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Tokenizes every document of a corpus.
pub fn tokenize_corpus(corpus: &Corpus, config: &PrepConfig) -> Vec<Vec<String>> {
    corpus.texts().map(|t| preprocess(t, config)).collect()
}

pub fn build_vocabulary(corpus: &Corpus, config: &PrepConfig) -> Result<Vocabulary, PrepError> {
    if corpus.is_empty() {
        return Err(PrepError::EmptyCorpus);
    }
    Vocabulary::from_token_docs(&tokenize_corpus(corpus, config))
}
