//! Comparison statistics over pairs of detection result sets.
//!
//! Percentages are `100 * count / denominator` rounded half-up to two
//! decimals using integer arithmetic, so printed values never depend on
//! binary floating-point ties.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, SdgLabelSet, SDG_MAX, SDG_MIN};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnalyzeError {
    #[error("no records to analyze")]
    Empty,
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("no prediction for `{0}`")]
    MissingPrediction(String),
    #[error("item `{id}` has {count} true labels; exactly one is required")]
    NotSingleLabel { id: String, count: usize },
}

pub type Result<T, E = AnalyzeError> = std::result::Result<T, E>;

/// `100 * count / denominator` in hundredths, rounded half-up.
pub fn percent_hundredths(count: u64, denominator: u64) -> u64 {
    if denominator == 0 {
        return 0;
    }
    let (c, d) = (count as u128, denominator as u128);
    ((20_000 * c + d) / (2 * d)) as u64
}

pub fn percent(count: u64, denominator: u64) -> f64 {
    percent_hundredths(count, denominator) as f64 / 100.0
}

/// Two-decimal rendering that goes through the integer form.
pub fn format_percent(count: u64, denominator: u64) -> String {
    let h = percent_hundredths(count, denominator);
    format!("{}.{:02}", h / 100, h % 100)
}

/// A count with its rounded share of a denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub count: u64,
    pub denominator: u64,
    pub percent: f64,
}

impl Stat {
    pub fn new(count: u64, denominator: u64) -> Self {
        Stat {
            count,
            denominator,
            percent: percent(count, denominator),
        }
    }

    /// Unrounded `100 * count / denominator`.
    pub fn exact(&self) -> f64 {
        if self.denominator == 0 {
            0.0
        } else {
            100.0 * self.count as f64 / self.denominator as f64
        }
    }

    pub fn percent_string(&self) -> String {
        format_percent(self.count, self.denominator)
    }
}

/// Two sets overlap when they share a goal; with `include_empty`, two empty
/// sets also count as agreement.
pub fn nonrestrictive_overlap(a: SdgLabelSet, b: SdgLabelSet, include_empty: bool) -> bool {
    !a.intersection(&b).is_empty() || (include_empty && a.is_empty() && b.is_empty())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub id: String,
    pub a: SdgLabelSet,
    pub b: SdgLabelSet,
}

impl DetectionRecord {
    pub fn new(id: impl Into<String>, a: SdgLabelSet, b: SdgLabelSet) -> Self {
        DetectionRecord { id: id.into(), a, b }
    }

    pub fn side(&self, side: Side) -> SdgLabelSet {
        match side {
            Side::A => self.a,
            Side::B => self.b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

/// Joins two id → labels maps on their common ids, in `a`'s id order.
/// Ids present on only one side are returned separately.
pub fn join_results(
    a: &[(String, SdgLabelSet)],
    b: &[(String, SdgLabelSet)],
) -> Result<(Vec<DetectionRecord>, Vec<String>)> {
    let index_b = unique_map(b)?;
    unique_map(a)?;
    let mut joined = Vec::with_capacity(a.len());
    let mut unmatched = Vec::new();
    let mut seen = HashSet::new();
    for (id, la) in a {
        match index_b.get(id.as_str()) {
            Some(lb) => {
                joined.push(DetectionRecord::new(id.clone(), *la, *lb));
                seen.insert(id.as_str());
            }
            None => unmatched.push(id.clone()),
        }
    }
    unmatched.extend(b.iter().filter(|(id, _)| !seen.contains(id.as_str())).map(|(id, _)| id.clone()));
    Ok((joined, unmatched))
}

fn unique_map(rows: &[(String, SdgLabelSet)]) -> Result<BTreeMap<&str, SdgLabelSet>> {
    let mut map = BTreeMap::new();
    for (id, labels) in rows {
        if map.insert(id.as_str(), *labels).is_some() {
            return Err(AnalyzeError::DuplicateId(id.clone()));
        }
    }
    Ok(map)
}

fn check_records(records: &[DetectionRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(AnalyzeError::Empty);
    }
    let mut ids = HashSet::with_capacity(records.len());
    for r in records {
        if !ids.insert(r.id.as_str()) {
            return Err(AnalyzeError::DuplicateId(r.id.clone()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub total: u64,
    pub intersection_including_empty: Stat,
    pub detected_a: Stat,
    pub detected_b: Stat,
    pub intersection_detected: Stat,
    /// Labels per item, over items where the side detected something.
    pub avg_per_detected_a: f64,
    pub avg_per_detected_b: f64,
    /// Labels per item, over all items.
    pub avg_per_item_a: f64,
    pub avg_per_item_b: f64,
    pub labels_a: u64,
    pub labels_b: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn overlap_report(records: &[DetectionRecord]) -> Result<OverlapReport> {
    check_records(records)?;
    let total = records.len() as u64;
    let (mut with_empty, mut both, mut det_a, mut det_b, mut sum_a, mut sum_b) = (0, 0, 0, 0, 0, 0);
    for r in records {
        with_empty += nonrestrictive_overlap(r.a, r.b, true) as u64;
        both += nonrestrictive_overlap(r.a, r.b, false) as u64;
        det_a += !r.a.is_empty() as u64;
        det_b += !r.b.is_empty() as u64;
        sum_a += r.a.len() as u64;
        sum_b += r.b.len() as u64;
    }
    Ok(OverlapReport {
        total,
        intersection_including_empty: Stat::new(with_empty, total),
        detected_a: Stat::new(det_a, total),
        detected_b: Stat::new(det_b, total),
        intersection_detected: Stat::new(both, total),
        avg_per_detected_a: ratio(sum_a, det_a),
        avg_per_detected_b: ratio(sum_b, det_b),
        avg_per_item_a: ratio(sum_a, total),
        avg_per_item_b: ratio(sum_b, total),
        labels_a: sum_a,
        labels_b: sum_b,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub sdg: u8,
    pub count: u64,
    /// Rounded percent of all items.
    pub rate: f64,
}

/// Per-SDG detection counts for one side; always 17 rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRateTable {
    pub total: u64,
    pub rows: Vec<RateRow>,
}

impl DetectionRateTable {
    pub fn count(&self, sdg: u8) -> u64 {
        self.rows.iter().find(|r| r.sdg == sdg).map_or(0, |r| r.count)
    }

    pub fn exact_rate(&self, sdg: u8) -> f64 {
        100.0 * ratio(self.count(sdg), self.total)
    }

    /// SDGs by count descending, ties by SDG ascending; zero counts omitted.
    pub fn ranking(&self) -> Vec<u8> {
        let mut rows: Vec<&RateRow> = self.rows.iter().filter(|r| r.count > 0).collect();
        rows.sort_by(|x, y| y.count.cmp(&x.count).then(x.sdg.cmp(&y.sdg)));
        rows.into_iter().map(|r| r.sdg).collect()
    }

    pub fn top(&self, n: usize) -> Vec<u8> {
        self.ranking().into_iter().take(n).collect()
    }
}

pub fn detection_rates_of<'a>(sets: impl IntoIterator<Item = &'a SdgLabelSet>) -> Result<DetectionRateTable> {
    let mut counts = [0u64; SDG_MAX as usize + 1];
    let mut total = 0u64;
    for set in sets {
        total += 1;
        for s in set.iter() {
            counts[s as usize] += 1;
        }
    }
    if total == 0 {
        return Err(AnalyzeError::Empty);
    }
    let rows = (SDG_MIN..=SDG_MAX)
        .map(|sdg| RateRow {
            sdg,
            count: counts[sdg as usize],
            rate: percent(counts[sdg as usize], total),
        })
        .collect();
    Ok(DetectionRateTable { total, rows })
}

pub fn detection_rates(records: &[DetectionRecord], side: Side) -> Result<DetectionRateTable> {
    let sets: Vec<SdgLabelSet> = records.iter().map(|r| r.side(side)).collect();
    detection_rates_of(&sets)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotRow {
    pub sdg: u8,
    /// Items whose true label is `sdg`.
    pub n: u64,
    /// `{sdg}` when `sdg` is one of the offered tags, else empty.
    pub expected: SdgLabelSet,
    /// Predictions containing `sdg` over all items; percent of `n`.
    pub total_identification: Stat,
    pub as_expected: Stat,
    /// True when the expected output is empty (printed in brackets).
    pub as_expected_bracketed: bool,
    pub correct: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotTotals {
    pub n: u64,
    pub total_identification: u64,
    /// Items with at least one predicted label, percent of `n`.
    pub items_with_any: Stat,
    pub as_expected: Stat,
    pub correct: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotReport {
    pub expected_tags: SdgLabelSet,
    /// One row per SDG 1..=17.
    pub rows: Vec<FewShotRow>,
    pub totals: FewShotTotals,
    /// Identifications per item with at least one prediction.
    pub avg_per_identified: f64,
}

impl FewShotReport {
    pub fn row(&self, sdg: u8) -> Option<&FewShotRow> {
        self.rows.iter().find(|r| r.sdg == sdg)
    }

    /// Rows with at least one true item.
    pub fn compact_rows(&self) -> impl Iterator<Item = &FewShotRow> {
        self.rows.iter().filter(|r| r.n > 0)
    }
}

pub fn fewshot_report(
    truth: &Corpus,
    predictions: &BTreeMap<String, SdgLabelSet>,
    expected_tags: SdgLabelSet,
) -> Result<FewShotReport> {
    if truth.is_empty() {
        return Err(AnalyzeError::Empty);
    }
    let k = SDG_MAX as usize + 1;
    let (mut n, mut ident, mut as_exp, mut correct) = (vec![0u64; k], vec![0u64; k], vec![0u64; k], vec![0u64; k]);
    let mut with_any = 0u64;
    for doc in truth {
        if doc.labels.len() != 1 {
            return Err(AnalyzeError::NotSingleLabel {
                id: doc.id.clone(),
                count: doc.labels.len(),
            });
        }
        let y = doc.labels.iter().next().unwrap();
        let pred = *predictions
            .get(&doc.id)
            .ok_or_else(|| AnalyzeError::MissingPrediction(doc.id.clone()))?;
        n[y as usize] += 1;
        for s in pred.iter() {
            ident[s as usize] += 1;
        }
        with_any += !pred.is_empty() as u64;
        let hit = pred.contains(y);
        correct[y as usize] += hit as u64;
        let expected_hit = if expected_tags.contains(y) { hit } else { pred.is_empty() };
        as_exp[y as usize] += expected_hit as u64;
    }
    let rows: Vec<FewShotRow> = (SDG_MIN..=SDG_MAX)
        .map(|sdg| {
            let i = sdg as usize;
            let tagged = expected_tags.contains(sdg);
            FewShotRow {
                sdg,
                n: n[i],
                expected: if tagged { SdgLabelSet::single(sdg).unwrap() } else { SdgLabelSet::empty() },
                total_identification: Stat::new(ident[i], n[i]),
                as_expected: Stat::new(as_exp[i], n[i]),
                as_expected_bracketed: !tagged,
                correct: Stat::new(correct[i], n[i]),
            }
        })
        .collect();
    let total_n = truth.len() as u64;
    let total_ident: u64 = ident.iter().sum();
    Ok(FewShotReport {
        expected_tags,
        rows,
        totals: FewShotTotals {
            n: total_n,
            total_identification: total_ident,
            items_with_any: Stat::new(with_any, total_n),
            as_expected: Stat::new(as_exp.iter().sum(), total_n),
            correct: Stat::new(correct.iter().sum(), total_n),
        },
        avg_per_identified: ratio(total_ident, with_any),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[u8]) -> SdgLabelSet {
        v.iter().copied().collect()
    }

    #[test]
    fn half_up_rounding() {
        assert_eq!(format_percent(1, 8), "12.50");
        assert_eq!(format_percent(1, 3), "33.33");
        assert_eq!(format_percent(2, 3), "66.67");
        // 100/1600 = 6.25 exactly; 1/800 = 0.125 -> 0.13 half-up.
        assert_eq!(format_percent(1, 800), "0.13");
        assert_eq!(format_percent(60, 15), "400.00");
        assert_eq!(format_percent(0, 0), "0.00");
    }

    #[test]
    fn overlap_examples() {
        assert!(nonrestrictive_overlap(set(&[7, 9]), set(&[7]), false));
        assert!(nonrestrictive_overlap(set(&[]), set(&[]), true));
        assert!(!nonrestrictive_overlap(set(&[]), set(&[]), false));
        assert!(!nonrestrictive_overlap(set(&[3]), set(&[12]), true));
    }

    #[test]
    fn overlap_report_errors() {
        assert_eq!(overlap_report(&[]), Err(AnalyzeError::Empty));
        let r = DetectionRecord::new("x", set(&[1]), set(&[]));
        assert_eq!(
            overlap_report(&[r.clone(), r]),
            Err(AnalyzeError::DuplicateId("x".into()))
        );
    }

    #[test]
    fn rates_saturate_and_rank() {
        let recs: Vec<_> = (0..4).map(|i| DetectionRecord::new(format!("{i}"), set(&[1]), set(&[9]))).collect();
        let a = detection_rates(&recs, Side::A).unwrap();
        assert_eq!(a.rows[0].rate, 100.0);
        assert_eq!(a.rows.len(), 17);
        assert_eq!(a.ranking(), vec![1]);
        let b = detection_rates(&recs, Side::B).unwrap();
        assert!(b.rows.iter().all(|r| (r.sdg == 9) == (r.count > 0)));
    }

    #[test]
    fn join_keeps_order_and_reports_unmatched() {
        let a = vec![("x".to_string(), set(&[1])), ("y".to_string(), set(&[]))];
        let b = vec![("y".to_string(), set(&[2])), ("z".to_string(), set(&[3]))];
        let (joined, unmatched) = join_results(&a, &b).unwrap();
        assert_eq!(joined, vec![DetectionRecord::new("y", set(&[]), set(&[2]))]);
        assert_eq!(unmatched, vec!["x".to_string(), "z".to_string()]);
    }
}
