//! Toolkit for detecting UN Sustainable Development Goals (SDGs) in text.
//!
//! The crate covers the full path from raw documents to comparison
//! statistics:
//!
//! * [`corpus`] loads, filters and splits labeled document collections.
//! * [`textprep`] normalizes and tokenizes text and builds vocabularies.
//! * [`taxonomy`] expands SDG term lists and runs boolean queries over an
//!   inverted index.
//! * [`vectorize`] provides TF-IDF, skip-gram word embeddings and PV-DBOW
//!   document embeddings.
//! * [`classify`] trains one-vs-rest classifiers and evaluates them.
//! * [`llm`] drives chat-completion prompt protocols with a replayable cache
//!   and parses SDG labels out of free-text responses.
//! * [`analyze`] computes overlap, detection-rate and few-shot statistics.
//! * [`report`] renders those statistics as CSV, JSON and SVG.

pub mod analyze;
pub mod classify;
pub mod container;
pub mod corpus;
pub mod llm;
pub mod report;
pub mod taxonomy;
pub mod textprep;
pub mod vectorize;

pub use corpus::{Corpus, LabeledDocument, SdgLabelSet, Source};
pub use textprep::{PrepConfig, Vocabulary};
