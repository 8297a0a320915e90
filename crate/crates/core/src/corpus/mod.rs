//! Document collections: the canonical data model, JSONL/CSV ingest,
//! eligibility filtering and seeded train/test splitting.
//!
//! Canonical storage is JSONL, one document per line:
//!
//! ```text
//! {"id":"c-001","text":"Solar panels for ...","labels":[7,9],"source":"prescribed"}
//! ```
//!
//! CSV import expects the columns `id,text,labels,source`, with `labels`
//! holding semicolon-joined integers (`7;9`). `labels` and `source` may be
//! omitted in either format; they default to the empty set and `other`.

mod labels;
mod split;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::textprep::{self, PrepConfig};

pub use labels::{InvalidSdg, ParseLabelError, SdgLabelSet, SDG_MAX, SDG_MIN};
pub use split::{split_train_test, SplitSpec};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate document id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("document `{id}`: label {label} is outside 1..=17")]
    LabelOutOfRange { id: String, label: i64 },
    #[error("document id must be nonempty (line {line})")]
    EmptyId { line: usize },
    #[error("corpus is empty")]
    Empty,
    #[error("cannot stratify: class {class} has only {count} document(s)")]
    StratificationImpossible { class: String, count: usize },
    #[error("train fraction {0} is not in (0, 1)")]
    BadFraction(f64),
    #[error("unknown corpus format `{0}` (expected jsonl or csv)")]
    UnknownFormat(String),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// Where a document came from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    /// Company description supplied by an external data provider.
    Prescribed,
    /// Description produced by a language model.
    Generated,
    /// Journal article abstract.
    Abstract,
    #[default]
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledDocument {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub labels: SdgLabelSet,
    #[serde(default)]
    pub source: Source,
}

impl LabeledDocument {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        LabeledDocument {
            id: id.into(),
            text: text.into(),
            labels: SdgLabelSet::empty(),
            source: Source::Other,
        }
    }

    pub fn with_labels(mut self, labels: SdgLabelSet) -> Self {
        self.labels = labels;
        self
    }

    pub fn with_source(mut self, source: Source) -> Self {
        self.source = source;
        self
    }
}

/// An ordered collection of documents with unique ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<LabeledDocument>,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl FromStr for CorpusFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            other => Err(CorpusError::UnknownFormat(other.to_string())),
        }
    }
}

impl CorpusFormat {
    /// Guesses the format from a file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => CorpusFormat::Csv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a corpus, rejecting empty or duplicate ids.
    pub fn from_documents(documents: Vec<LabeledDocument>) -> Result<Self> {
        let mut corpus = Corpus::new();
        let mut seen = HashSet::new();
        for (i, doc) in documents.into_iter().enumerate() {
            insert_unique(&mut corpus, &mut seen, doc.id, doc.text, doc.labels, doc.source, i + 1)?;
        }
        Ok(corpus)
    }

    pub fn push(&mut self, doc: LabeledDocument) -> Result<()> {
        let line = self.documents.len() + 1;
        if doc.id.is_empty() {
            return Err(CorpusError::EmptyId { line });
        }
        if self.documents.iter().any(|d| d.id == doc.id) {
            return Err(CorpusError::DuplicateId { line, id: doc.id });
        }
        self.documents.push(doc);
        Ok(())
    }

    /// Internal constructor for subsets of an already validated corpus.
    fn from_validated(documents: Vec<LabeledDocument>, metadata: BTreeMap<String, String>) -> Self {
        Corpus {
            documents,
            metadata,
        }
    }

    pub fn documents(&self) -> &[LabeledDocument] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LabeledDocument> {
        self.documents.iter()
    }

    pub fn get(&self, id: &str) -> Option<&LabeledDocument> {
        self.documents.iter().find(|d| d.id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.documents.iter().map(|d| d.id.as_str())
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.documents.iter().map(|d| d.text.as_str())
    }

    /// Union of all labels present in the corpus.
    pub fn label_universe(&self) -> SdgLabelSet {
        self.documents
            .iter()
            .fold(SdgLabelSet::empty(), |acc, d| acc.union(&d.labels))
    }

    pub fn load(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Self> {
        load_corpus(path, format)
    }

    /// Writes canonical JSONL.
    pub fn save_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io_err = |source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut file = std::io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
        file.write_all(self.to_jsonl().as_bytes()).map_err(io_err)?;
        file.flush().map_err(io_err)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for doc in &self.documents {
            out.push_str(&serde_json::to_string(doc).expect("documents always serialize"));
            out.push('\n');
        }
        out
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let csv_err = |e: csv::Error| CorpusError::Io {
            path: path.display().to_string(),
            source: e.into(),
        };
        let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
        writer
            .write_record(["id", "text", "labels", "source"])
            .map_err(csv_err)?;
        for doc in &self.documents {
            writer
                .write_record([
                    doc.id.as_str(),
                    doc.text.as_str(),
                    doc.labels.to_semicolon_string().as_str(),
                    source_name(doc.source),
                ])
                .map_err(csv_err)?;
        }
        writer.flush().map_err(|e| CorpusError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a LabeledDocument;
    type IntoIter = std::slice::Iter<'a, LabeledDocument>;

    fn into_iter(self) -> Self::IntoIter {
        self.documents.iter()
    }
}

fn source_name(source: Source) -> &'static str {
    match source {
        Source::Prescribed => "prescribed",
        Source::Generated => "generated",
        Source::Abstract => "abstract",
        Source::Other => "other",
    }
}

fn parse_source(raw: &str, line: usize) -> Result<Source> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "" | "other" => Ok(Source::Other),
        "prescribed" => Ok(Source::Prescribed),
        "generated" => Ok(Source::Generated),
        "abstract" => Ok(Source::Abstract),
        other => Err(CorpusError::Malformed {
            line,
            message: format!("unknown source `{other}`"),
        }),
    }
}

#[derive(Deserialize)]
struct RawJsonRecord {
    id: String,
    text: String,
    #[serde(default)]
    labels: Vec<i64>,
    #[serde(default)]
    source: Option<String>,
}

/// Loads a corpus, preserving input order.
/// The bundled 120-document toy corpus (three topics; "sun" and "solar"
/// occur in identical contexts).
pub fn toy_corpus() -> Corpus {
    read_jsonl(include_str!("../../data/toy_corpus.jsonl").as_bytes()).expect("bundled toy corpus is valid")
}

pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Corpus> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    match format {
        CorpusFormat::Jsonl => read_jsonl(BufReader::new(file)),
        CorpusFormat::Csv => read_csv(file),
    }
}

pub fn read_jsonl(reader: impl BufRead) -> Result<Corpus> {
    let mut corpus = Corpus::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawJsonRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
        let labels = labels_from_ints(&raw.id, &raw.labels)?;
        let source = parse_source(raw.source.as_deref().unwrap_or(""), line_no)?;
        insert_unique(&mut corpus, &mut seen, raw.id, raw.text, labels, source, line_no)?;
    }
    Ok(corpus)
}

pub fn read_csv(reader: impl std::io::Read) -> Result<Corpus> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CorpusError::Malformed {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(id_col), Some(text_col)) = (col("id"), col("text")) else {
        return Err(CorpusError::Malformed {
            line: 1,
            message: "CSV header must contain `id` and `text` columns".into(),
        });
    };
    let labels_col = col("labels");
    let source_col = col("source");

    let mut corpus = Corpus::new();
    let mut seen = HashSet::new();
    for record in rdr.records() {
        let record = record.map_err(|e| CorpusError::Malformed {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line_no = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |idx: usize| record.get(idx).unwrap_or("");
        let id = field(id_col).to_string();
        let labels = match labels_col {
            Some(c) => parse_csv_labels(&id, field(c), line_no)?,
            None => SdgLabelSet::empty(),
        };
        let source = match source_col {
            Some(c) => parse_source(field(c), line_no)?,
            None => Source::Other,
        };
        insert_unique(
            &mut corpus,
            &mut seen,
            id,
            field(text_col).to_string(),
            labels,
            source,
            line_no,
        )?;
    }
    Ok(corpus)
}

fn parse_csv_labels(id: &str, raw: &str, line: usize) -> Result<SdgLabelSet> {
    let mut ints = Vec::new();
    for part in raw.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let value: i64 = part.parse().map_err(|_| CorpusError::Malformed {
            line,
            message: format!("label `{part}` is not an integer"),
        })?;
        ints.push(value);
    }
    labels_from_ints(id, &ints)
}

fn labels_from_ints(id: &str, ints: &[i64]) -> Result<SdgLabelSet> {
    SdgLabelSet::try_from(ints).map_err(|InvalidSdg(label)| CorpusError::LabelOutOfRange {
        id: id.to_string(),
        label,
    })
}

fn insert_unique(
    corpus: &mut Corpus,
    seen: &mut HashSet<String>,
    id: String,
    text: String,
    labels: SdgLabelSet,
    source: Source,
    line: usize,
) -> Result<()> {
    if id.is_empty() {
        return Err(CorpusError::EmptyId { line });
    }
    if !seen.insert(id.clone()) {
        return Err(CorpusError::DuplicateId { line, id });
    }
    corpus.documents.push(LabeledDocument {
        id,
        text,
        labels,
        source,
    });
    Ok(())
}

/// Partitions a corpus by post-preprocessing token count.
///
/// A document is eligible iff it has at least `min_tokens` tokens after
/// [`textprep::preprocess`]. Both halves keep input order.
pub fn eligibility_filter(corpus: &Corpus, min_tokens: usize, config: &PrepConfig) -> (Corpus, Corpus) {
    let min_tokens = min_tokens.max(1);
    let (eligible, rejected): (Vec<_>, Vec<_>) = corpus
        .documents
        .iter()
        .cloned()
        .partition(|doc| textprep::preprocess(&doc.text, config).len() >= min_tokens);
    (
        Corpus::from_validated(eligible, corpus.metadata.clone()),
        Corpus::from_validated(rejected, corpus.metadata.clone()),
    )
}

/// Default minimum token count for [`eligibility_filter`].
pub const DEFAULT_MIN_TOKENS: usize = 10;

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn jsonl_record_with_two_labels() {
        let corpus = read_jsonl(Cursor::new(
            r#"{"id":"a","text":"solar","labels":[7,9],"source":"prescribed"}"#,
        ))
        .unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(corpus.documents()[0].labels.to_vec(), vec![7, 9]);
        assert_eq!(corpus.documents()[0].source, Source::Prescribed);
    }

    #[test]
    fn empty_input_is_empty_corpus() {
        assert!(read_jsonl(Cursor::new("")).unwrap().is_empty());
        assert!(read_csv(Cursor::new("id,text,labels,source\n")).unwrap().is_empty());
    }

    #[test]
    fn label_18_names_the_document() {
        let err = read_jsonl(Cursor::new(r#"{"id":"bad-doc","text":"x","labels":[18]}"#)).unwrap_err();
        match err {
            CorpusError::LabelOutOfRange { id, label } => {
                assert_eq!(id, "bad-doc");
                assert_eq!(label, 18);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let input = "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"b\"}\n";
        match read_jsonl(Cursor::new(input)).unwrap_err() {
            CorpusError::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let input = "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}\n";
        assert!(matches!(
            read_jsonl(Cursor::new(input)),
            Err(CorpusError::DuplicateId { line: 2, .. })
        ));
    }

    #[test]
    fn csv_import() {
        let input = "id,text,labels,source\nx1,\"Clean water, for all\",6;3,abstract\nx2,nothing,,\n";
        let corpus = read_csv(Cursor::new(input)).unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(corpus.documents()[0].labels.to_vec(), vec![3, 6]);
        assert_eq!(corpus.documents()[0].source, Source::Abstract);
        assert_eq!(corpus.documents()[0].text, "Clean water, for all");
        assert!(corpus.documents()[1].labels.is_empty());
        assert_eq!(corpus.documents()[1].source, Source::Other);
    }

    #[test]
    fn canonical_jsonl_round_trip_is_byte_identical() {
        let canonical = concat!(
            r#"{"id":"a","text":"Héllo \"quoted\"\nnewline","labels":[1,17],"source":"generated"}"#,
            "\n",
            r#"{"id":"b","text":"","labels":[],"source":"other"}"#,
            "\n"
        );
        let corpus = read_jsonl(Cursor::new(canonical)).unwrap();
        assert_eq!(corpus.to_jsonl(), canonical);
    }

    #[test]
    fn eligibility_boundary_is_inclusive() {
        let cfg = PrepConfig::default();
        let ten = "alpha bravo charlie delta echo foxtrot golf hotel india juliet";
        let three = "alpha bravo charlie";
        let corpus = Corpus::from_documents(vec![
            LabeledDocument::new("ten", ten),
            LabeledDocument::new("three", three),
        ])
        .unwrap();
        let (eligible, rejected) = eligibility_filter(&corpus, 10, &cfg);
        assert_eq!(eligible.ids().collect::<Vec<_>>(), vec!["ten"]);
        assert_eq!(rejected.ids().collect::<Vec<_>>(), vec!["three"]);
    }
}
