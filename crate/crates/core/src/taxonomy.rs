//! SDG terminology: term expansion over word embeddings, OR-of-AND query
//! compilation and inverted-index search.
//!
//! Query JSON form:
//!
//! ```json
//! {"sdg": 7, "clauses": [["solar", "energy"], ["photovoltaic"]]}
//! ```
//!
//! A document matches when every term of at least one clause occurs among
//! its preprocessed tokens. Clause terms are compared verbatim against
//! tokens, so they should already be normalized; [`Taxonomy::compile`]
//! takes care of that.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, SdgLabelSet};
use crate::textprep::{preprocess, PrepConfig};
use crate::vectorize::{cosine, EmbeddingTable};

#[derive(Debug, thiserror::Error)]
pub enum TaxonomyError {
    #[error("k must be at least 1")]
    InvalidK,
    #[error("min_sim must lie in [0, 1], got {0}")]
    InvalidMinSim(f64),
    #[error("SDG {0} is outside 1..=17")]
    InvalidSdg(i64),
    #[error("query has no clauses")]
    EmptyQuery,
    #[error("query clause {0} is empty")]
    EmptyClause(usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid query JSON: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = TaxonomyError> = std::result::Result<T, E>;

fn check_sdg(sdg: i64) -> Result<u8> {
    if SdgLabelSet::is_valid(sdg) {
        Ok(sdg as u8)
    } else {
        Err(TaxonomyError::InvalidSdg(sdg))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expansion {
    pub word: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermEntry {
    pub sdg: u8,
    pub term: String,
    /// Sorted by similarity descending, then word ascending.
    #[serde(default)]
    pub expansions: Vec<Expansion>,
}

impl TermEntry {
    pub fn new(sdg: u8, term: impl Into<String>) -> Result<Self> {
        Ok(TermEntry {
            sdg: check_sdg(i64::from(sdg))?,
            term: term.into(),
            expansions: Vec::new(),
        })
    }
}

/// Adds up to `k` nearest vocabulary words (cosine ≥ `min_sim`) to the
/// entry. Multiword terms are represented by the mean of their token
/// vectors; the term's own tokens are never proposed. If any token is
/// missing from the table the entry comes back unchanged.
pub fn expand_terms(
    entry: &TermEntry,
    embeddings: &EmbeddingTable,
    k: usize,
    min_sim: f64,
    prep: &PrepConfig,
) -> Result<TermEntry> {
    if k == 0 {
        return Err(TaxonomyError::InvalidK);
    }
    if !(0.0..=1.0).contains(&min_sim) {
        return Err(TaxonomyError::InvalidMinSim(min_sim));
    }
    let tokens = preprocess(&entry.term, prep);
    if tokens.is_empty() || tokens.iter().any(|t| embeddings.vector(t).is_none()) {
        log::warn!(
            "term `{}` (SDG {}) not covered by the embedding vocabulary; left unexpanded",
            entry.term,
            entry.sdg
        );
        return Ok(entry.clone());
    }
    let query = embeddings.mean_vector(&tokens);
    let mut hits: Vec<Expansion> = embeddings
        .words
        .terms()
        .iter()
        .enumerate()
        .filter(|(_, w)| !tokens.contains(w))
        .filter_map(|(i, w)| {
            let row: Vec<f64> = embeddings.row(i).iter().map(|&x| f64::from(x)).collect();
            let similarity = cosine(&query, &row);
            (similarity >= min_sim).then(|| Expansion {
                word: w.clone(),
                similarity,
            })
        })
        .collect();
    hits.sort_by(|a, b| b.similarity.total_cmp(&a.similarity).then_with(|| a.word.cmp(&b.word)));
    hits.truncate(k);
    let mut out = entry.clone();
    out.expansions = hits;
    Ok(out)
}

/// A disjunction of conjunctions of terms for one SDG.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SdgQuery {
    pub sdg: u8,
    pub clauses: Vec<Vec<String>>,
}

impl SdgQuery {
    pub fn new(sdg: u8, clauses: Vec<Vec<String>>) -> Result<Self> {
        let q = SdgQuery { sdg, clauses };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        check_sdg(i64::from(self.sdg))?;
        if self.clauses.is_empty() {
            return Err(TaxonomyError::EmptyQuery);
        }
        if let Some(i) = self.clauses.iter().position(Vec::is_empty) {
            return Err(TaxonomyError::EmptyClause(i));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("queries always serialize")
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        let q: SdgQuery = serde_json::from_str(raw)?;
        q.validate()?;
        Ok(q)
    }

    /// Direct evaluation against one token list.
    pub fn matches_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> bool {
        self.clauses
            .iter()
            .any(|clause| clause.iter().all(|t| tokens.iter().any(|x| x.as_ref() == t)))
    }
}

/// A term list grouped by SDG.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Taxonomy {
    pub entries: Vec<TermEntry>,
}

impl Taxonomy {
    /// The bundled illustrative seed list.
    pub fn seed() -> Self {
        Self::read_csv(include_str!("../data/sdg_seed_terms.csv").as_bytes()).expect("bundled taxonomy is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| TaxonomyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read_csv(file)
    }

    /// CSV with header `sdg,term`.
    pub fn read_csv(reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let parse_err = |line: usize, message: String| TaxonomyError::Parse { line, message };
        let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.eq_ignore_ascii_case(name))
                .ok_or_else(|| parse_err(1, format!("missing `{name}` column")))
        };
        let (sdg_col, term_col) = (col("sdg")?, col("term")?);
        let mut entries = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
            let raw_sdg = rec.get(sdg_col).unwrap_or("");
            let sdg: i64 = raw_sdg
                .trim_start_matches(|c: char| c.is_ascii_alphabetic())
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("bad sdg `{raw_sdg}`")))?;
            let sdg = check_sdg(sdg).map_err(|e| parse_err(line, e.to_string()))?;
            let term = rec.get(term_col).unwrap_or("").to_string();
            if term.is_empty() {
                return Err(parse_err(line, "empty term".into()));
            }
            entries.push(TermEntry {
                sdg,
                term,
                expansions: Vec::new(),
            });
        }
        Ok(Taxonomy { entries })
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e: std::io::Error| TaxonomyError::Io {
            path: path.display().to_string(),
            source: e,
        };
        let mut w = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
        w.write_record(["sdg", "term"]).map_err(|e| io(e.into()))?;
        for e in &self.entries {
            w.write_record([e.sdg.to_string(), e.term.clone()]).map_err(|e| io(e.into()))?;
        }
        w.flush().map_err(io)
    }

    pub fn expand(&self, embeddings: &EmbeddingTable, k: usize, min_sim: f64, prep: &PrepConfig) -> Result<Self> {
        Ok(Taxonomy {
            entries: self
                .entries
                .iter()
                .map(|e| expand_terms(e, embeddings, k, min_sim, prep))
                .collect::<Result<_>>()?,
        })
    }

    /// One query per SDG: each term and each expansion word becomes a
    /// conjunction of its preprocessed tokens. Duplicate clauses are
    /// dropped; SDGs whose terms all preprocess to nothing are omitted.
    pub fn compile(&self, prep: &PrepConfig) -> Vec<SdgQuery> {
        let mut by_sdg: BTreeMap<u8, Vec<Vec<String>>> = BTreeMap::new();
        for e in &self.entries {
            let phrases = std::iter::once(e.term.as_str()).chain(e.expansions.iter().map(|x| x.word.as_str()));
            for phrase in phrases {
                let clause = preprocess(phrase, prep);
                if clause.is_empty() {
                    continue;
                }
                let clauses = by_sdg.entry(e.sdg).or_default();
                if !clauses.contains(&clause) {
                    clauses.push(clause);
                }
            }
        }
        by_sdg
            .into_iter()
            .map(|(sdg, clauses)| SdgQuery { sdg, clauses })
            .collect()
    }
}

/// Term → posting list of document ordinals (positions in the indexed
/// corpus, ascending and deduplicated).
#[derive(Debug, Clone, Default)]
pub struct InvertedIndex {
    doc_ids: Vec<String>,
    postings: HashMap<String, Vec<u32>>,
}

impl InvertedIndex {
    pub fn build(corpus: &Corpus, prep: &PrepConfig) -> Self {
        let mut postings: HashMap<String, Vec<u32>> = HashMap::new();
        for (i, doc) in corpus.iter().enumerate() {
            for tok in preprocess(&doc.text, prep) {
                let list = postings.entry(tok).or_default();
                // Documents are visited in order, so a duplicate can only
                // be the last element.
                if list.last() != Some(&(i as u32)) {
                    list.push(i as u32);
                }
            }
        }
        InvertedIndex {
            doc_ids: corpus.ids().map(str::to_string).collect(),
            postings,
        }
    }

    pub fn postings(&self, term: &str) -> &[u32] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn doc_id(&self, ordinal: u32) -> &str {
        &self.doc_ids[ordinal as usize]
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    /// Matching ordinals, ascending.
    pub fn evaluate(&self, query: &SdgQuery) -> Vec<u32> {
        let mut result: Vec<u32> = Vec::new();
        for clause in &query.clauses {
            let mut lists: Vec<&[u32]> = clause.iter().map(|t| self.postings(t)).collect();
            lists.sort_by_key(|l| l.len());
            let Some((first, rest)) = lists.split_first() else {
                continue;
            };
            let mut acc = first.to_vec();
            for l in rest {
                if acc.is_empty() {
                    break;
                }
                acc = intersect(&acc, l);
            }
            result = union(&result, &acc);
        }
        result
    }

    /// Matching document ids in corpus order.
    pub fn search(&self, query: &SdgQuery) -> Vec<String> {
        self.evaluate(query).into_iter().map(|i| self.doc_id(i).to_string()).collect()
    }
}

fn intersect(a: &[u32], b: &[u32]) -> Vec<u32> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(a.len().min(b.len()));
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

fn union(a: &[u32], b: &[u32]) -> Vec<u32> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(a.len() + b.len());
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) if x == y => {
                i += 1;
                j += 1;
                x
            }
            (Some(&x), Some(&y)) if x < y => {
                i += 1;
                x
            }
            (Some(_), Some(&y)) => {
                j += 1;
                y
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, Some(&y)) => {
                j += 1;
                y
            }
            (None, None) => unreachable!(),
        };
        out.push(next);
    }
    out
}

/// Builds an index over `corpus` and returns the ids matching `query`.
pub fn search(corpus: &Corpus, query: &SdgQuery, prep: &PrepConfig) -> Vec<String> {
    InvertedIndex::build(corpus, prep).search(query)
}

/// Runs every query and returns, per document id, the SDGs whose query it
/// matched.
pub fn label_by_queries(corpus: &Corpus, queries: &[SdgQuery], prep: &PrepConfig) -> BTreeMap<String, SdgLabelSet> {
    let index = InvertedIndex::build(corpus, prep);
    let mut out: BTreeMap<String, SdgLabelSet> = corpus.ids().map(|id| (id.to_string(), SdgLabelSet::empty())).collect();
    for q in queries {
        for i in index.evaluate(q) {
            let _ = out.get_mut(index.doc_id(i)).expect("indexed id").insert(q.sdg);
        }
    }
    out
}
