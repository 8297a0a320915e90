//! Deterministic extraction of SDG labels from free-text model responses.
//!
//! Grammar (case-insensitive):
//!
//! ```text
//! mention  := marker sep* number (list-sep marker? sep* number)*
//! marker   := "sdg" | "sdgs" | "goal" | "goals"      (not preceded by a letter or digit)
//! sep      := " " | "-" | "#" | ":" | "_"
//! number   := digits ("." digits)?                    ("8.2" counts as 8)
//! list-sep := "," | "&" | "/" | "and" | "or" | whitespace, in any mix
//! ```
//!
//! Numbers outside 1..=17 are skipped but do not end the list. A response
//! whose letters spell exactly "NA" (e.g. "NA", "N/A", "na.") is a
//! deliberate empty answer.

use serde::{Deserialize, Serialize};

use crate::corpus::SdgLabelSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedLabels {
    pub labels: SdgLabelSet,
    /// Set when nothing was found and the response was not an explicit NA.
    pub warning: bool,
}

pub fn parse_sdg_labels(text: &str) -> SdgLabelSet {
    parse_sdg_response(text).labels
}

/// True when the alphabetic content of `text` is exactly "na".
pub fn is_na(text: &str) -> bool {
    let mut letters = text.chars().filter(|c| c.is_alphabetic()).flat_map(char::to_lowercase);
    letters.next() == Some('n') && letters.next() == Some('a') && letters.next().is_none()
}

pub fn parse_sdg_response(text: &str) -> ParsedLabels {
    if is_na(text) {
        return ParsedLabels {
            labels: SdgLabelSet::empty(),
            warning: false,
        };
    }
    let lower: Vec<char> = text.chars().flat_map(char::to_lowercase).collect();
    let mut labels = SdgLabelSet::empty();
    let mut i = 0;
    while i < lower.len() {
        match marker_at(&lower, i) {
            Some(end) => i = read_list(&lower, end, &mut labels),
            None => i += 1,
        }
    }
    ParsedLabels {
        labels,
        warning: labels.is_empty(),
    }
}

fn starts_with(s: &[char], at: usize, word: &str) -> bool {
    let w: Vec<char> = word.chars().collect();
    s.len() >= at + w.len() && s[at..at + w.len()] == w[..]
}

/// End index of a marker starting at `i`, if one starts there.
fn marker_at(s: &[char], i: usize) -> Option<usize> {
    if i > 0 && s[i - 1].is_alphanumeric() {
        return None;
    }
    for word in ["sdgs", "sdg", "goals", "goal"] {
        if starts_with(s, i, word) {
            let end = i + word.chars().count();
            // "goalkeeper", "sdgx": the marker must end the word or run
            // straight into a digit.
            if s.get(end).is_some_and(|c| c.is_alphabetic()) {
                return None;
            }
            return Some(end);
        }
    }
    None
}

fn skip(s: &[char], mut i: usize, pred: impl Fn(char) -> bool) -> usize {
    while i < s.len() && pred(s[i]) {
        i += 1;
    }
    i
}

fn is_sep(c: char) -> bool {
    matches!(c, ' ' | '-' | '#' | ':' | '_' | '\u{2013}' | '\u{2014}') || c.is_whitespace()
}

/// Reads `digits(.digits)?` at `i`; returns the integer part and end index.
fn number_at(s: &[char], i: usize) -> Option<(u64, usize)> {
    let end = skip(s, i, |c| c.is_ascii_digit());
    if end == i {
        return None;
    }
    let value = s[i..end]
        .iter()
        .fold(0u64, |acc, c| acc.saturating_mul(10).saturating_add(c.to_digit(10).unwrap() as u64));
    let mut stop = end;
    if s.get(end) == Some(&'.') && s.get(end + 1).is_some_and(|c| c.is_ascii_digit()) {
        stop = skip(s, end + 1, |c| c.is_ascii_digit());
    }
    // "7th", "3rd": a number glued to letters is not a goal id.
    if s.get(stop).is_some_and(|c| c.is_alphabetic()) {
        return None;
    }
    Some((value, stop))
}

fn add(labels: &mut SdgLabelSet, value: u64) {
    if (1..=17).contains(&value) {
        let _ = labels.insert(value as u8);
    }
}

fn read_list(s: &[char], after_marker: usize, labels: &mut SdgLabelSet) -> usize {
    let Some((first, mut i)) = number_at(s, skip(s, after_marker, is_sep)) else {
        return after_marker;
    };
    add(labels, first);
    loop {
        let mut j = i;
        let mut saw_sep = false;
        loop {
            let k = skip(s, j, |c| c.is_whitespace() || matches!(c, ',' | '&' | '/' | ';'));
            if k > j {
                saw_sep = true;
                j = k;
                continue;
            }
            let word_end = ["and", "or"]
                .iter()
                .find(|w| starts_with(s, j, w) && !s.get(j + w.len()).is_some_and(|c| c.is_alphanumeric()))
                .map(|w| j + w.len());
            match word_end {
                Some(e) if saw_sep => j = e,
                _ => break,
            }
        }
        if !saw_sep {
            return i;
        }
        if let Some(end) = marker_at(s, j) {
            j = skip(s, end, is_sep);
        }
        match number_at(s, j) {
            Some((value, end)) => {
                add(labels, value);
                i = end;
            }
            None => return i,
        }
    }
}

/// The prefix before the first standalone, case-insensitive "however"; the
/// whole text when there is none.
pub fn strip_however(text: &str) -> &str {
    const WORD: &str = "however";
    let bytes = text.as_bytes();
    let mut from = 0;
    while let Some(off) = find_ascii_ci(&bytes[from..], WORD.as_bytes()) {
        let at = from + off;
        let end = at + WORD.len();
        let before_ok = text[..at].chars().next_back().is_none_or(|c| !c.is_alphanumeric());
        let after_ok = text[end..].chars().next().is_none_or(|c| !c.is_alphanumeric());
        if before_ok && after_ok {
            return &text[..at];
        }
        from = at + 1;
    }
    text
}

fn find_ascii_ci(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w.eq_ignore_ascii_case(needle))
}
