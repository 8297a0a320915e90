//! Brute-force recounts for the analysis reports, written against plain
//! vectors and independent of the library's counting code.

use std::collections::BTreeMap;

use rand::Rng;
use sdgkit::analyze::*;
use sdgkit::{Corpus, LabeledDocument, SdgLabelSet};

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

const A_EXTRA: [u8; 7] = [1, 2, 4, 5, 6, 7, 8];
const B_EXTRA: [u8; 7] = [10, 11, 13, 14, 15, 16, 17];

/// Records with prescribed marginal counts. Sharing pairs are {9}/{9},
/// disjoint pairs {3}/{12}; extra labels drawn from disjoint pools top the
/// label sums up without changing any overlap.
pub fn overlap_fixture(
    total: usize,
    incl_empty: usize,
    det_a: usize,
    det_b: usize,
    shared: usize,
    sum_a: usize,
    sum_b: usize,
) -> Vec<DetectionRecord> {
    let neither = incl_empty - shared;
    let union = total - neither;
    let both = det_a + det_b - union;
    let s = |v: &[u8]| -> SdgLabelSet { v.iter().copied().collect() };
    let mut recs = Vec::with_capacity(total);
    let mut push = |a: SdgLabelSet, b: SdgLabelSet| {
        let id = format!("r{:05}", recs.len());
        recs.push(DetectionRecord::new(id, a, b));
    };
    for _ in 0..shared {
        push(s(&[9]), s(&[9]));
    }
    for _ in shared..both {
        push(s(&[3]), s(&[12]));
    }
    for _ in both..det_a {
        push(s(&[3]), s(&[]));
    }
    for _ in both..det_b {
        push(s(&[]), s(&[12]));
    }
    for _ in 0..neither {
        push(s(&[]), s(&[]));
    }
    let mut top_up = |pool: &[u8; 7], mut left: usize, is_a: bool| {
        for &extra in pool {
            for r in recs.iter_mut() {
                let side = if is_a { &mut r.a } else { &mut r.b };
                if left > 0 && !side.is_empty() {
                    side.insert(extra).unwrap();
                    left -= 1;
                }
            }
        }
        assert_eq!(left, 0);
    };
    top_up(&A_EXTRA, sum_a - det_a, true);
    top_up(&B_EXTRA, sum_b - det_b, false);
    recs
}

/// Exact check of half-up rounding: h/100 is the rounding of 100c/d iff
/// 2dh - d <= 20000c < 2dh + d.
pub fn rounding_ok(s: &Stat) -> bool {
    if s.denominator == 0 {
        return s.percent == 0.0;
    }
    let (c, d) = (s.count as i128, s.denominator as i128);
    let h = (s.percent * 100.0).round() as i128;
    2 * d * h - d <= 20_000 * c && 20_000 * c < 2 * d * h + d
}

pub fn random_set(rng: &mut impl Rng, density: f64) -> SdgLabelSet {
    (1..=17u8).filter(|_| rng.gen_bool(density)).collect()
}

pub fn random_records(rng: &mut impl Rng) -> Vec<DetectionRecord> {
    let n = rng.gen_range(1..60);
    let (da, db) = (rng.gen_range(0.0..0.3), rng.gen_range(0.0..0.3));
    (0..n)
        .map(|i| DetectionRecord::new(format!("x{i}"), random_set(rng, da), random_set(rng, db)))
        .collect()
}

pub fn random_fewshot(rng: &mut impl Rng) -> (Corpus, BTreeMap<String, SdgLabelSet>, SdgLabelSet) {
    let n = rng.gen_range(1..80);
    let tags = random_set(rng, 0.2);
    let mut docs = Vec::new();
    let mut preds = BTreeMap::new();
    for i in 0..n {
        let y = rng.gen_range(1..=17u8);
        let id = format!("f{i}");
        docs.push(LabeledDocument::new(id.clone(), "t").with_labels(SdgLabelSet::single(y).unwrap()));
        let mut p = random_set(rng, 0.1);
        if rng.gen_bool(0.3) {
            p.insert(y).unwrap();
        }
        preds.insert(id, p);
    }
    (Corpus::from_documents(docs).unwrap(), preds, tags)
}

fn vec_of(s: SdgLabelSet) -> Vec<u8> {
    s.iter().collect()
}

fn check_stat(what: &str, stat: &Stat, count: u64, n: u64) -> Result<(), String> {
    ensure!((stat.count, stat.denominator) == (count, n), "{what}: {}/{} vs {count}/{n}", stat.count, stat.denominator);
    if n > 0 {
        let exact = 100.0 * count as f64 / n as f64;
        ensure!((stat.exact() - exact).abs() < 1e-9, "{what}: ratio {} vs {exact}", stat.exact());
    }
    ensure!(rounding_ok(stat), "{what}: {} is not {count}/{n} rounded", stat.percent);
    Ok(())
}

pub fn check_overlap(recs: &[DetectionRecord]) -> Result<(), String> {
    let rep = overlap_report(recs).map_err(|e| e.to_string())?;
    let (mut incl, mut both, mut da, mut db, mut sa, mut sb) = (0u64, 0u64, 0u64, 0u64, 0u64, 0u64);
    for r in recs {
        let (a, b) = (vec_of(r.a), vec_of(r.b));
        let share = a.iter().any(|x| b.contains(x));
        if share || (a.is_empty() && b.is_empty()) {
            incl += 1;
        }
        if share {
            both += 1;
        }
        da += u64::from(!a.is_empty());
        db += u64::from(!b.is_empty());
        sa += a.len() as u64;
        sb += b.len() as u64;
    }
    let n = recs.len() as u64;
    ensure!(rep.total == n, "total {} vs {n}", rep.total);
    check_stat("intersection incl. empty", &rep.intersection_including_empty, incl, n)?;
    check_stat("intersection", &rep.intersection_detected, both, n)?;
    check_stat("detected a", &rep.detected_a, da, n)?;
    check_stat("detected b", &rep.detected_b, db, n)?;
    let avg = |s: u64, d: u64| if d == 0 { 0.0 } else { s as f64 / d as f64 };
    for (what, got, want) in [
        ("avg a", rep.avg_per_detected_a, avg(sa, da)),
        ("avg b", rep.avg_per_detected_b, avg(sb, db)),
        ("avg a (all)", rep.avg_per_item_a, avg(sa, n)),
        ("avg b (all)", rep.avg_per_item_b, avg(sb, n)),
    ] {
        ensure!((got - want).abs() < 1e-9, "{what}: {got} vs {want}");
    }
    Ok(())
}

pub fn check_rates(recs: &[DetectionRecord]) -> Result<(), String> {
    let n = recs.len() as u64;
    for side in [Side::A, Side::B] {
        let t = detection_rates(recs, side).map_err(|e| e.to_string())?;
        ensure!(t.rows.len() == 17, "{} rows", t.rows.len());
        for sdg in 1..=17u8 {
            let count = recs.iter().filter(|r| vec_of(r.side(side)).contains(&sdg)).count() as u64;
            let stat = Stat {
                count: t.count(sdg),
                denominator: n,
                percent: t.rows[sdg as usize - 1].rate,
            };
            check_stat(&format!("rate SDG{sdg}"), &stat, count, n)?;
            let exact = 100.0 * count as f64 / n as f64;
            ensure!((t.exact_rate(sdg) - exact).abs() < 1e-9, "exact rate SDG{sdg}");
        }
        let rank = t.ranking();
        ensure!(
            rank.windows(2).all(|w| {
                let (x, y) = (t.count(w[0]), t.count(w[1]));
                x > y || (x == y && w[0] < w[1])
            }),
            "ranking out of order: {rank:?}"
        );
    }
    Ok(())
}

pub fn check_fewshot(truth: &Corpus, preds: &BTreeMap<String, SdgLabelSet>, tags: SdgLabelSet) -> Result<(), String> {
    let rep = fewshot_report(truth, preds, tags).map_err(|e| e.to_string())?;
    let items: Vec<(u8, Vec<u8>)> = truth
        .iter()
        .map(|d| (d.labels.iter().next().unwrap(), vec_of(preds[&d.id])))
        .collect();
    let (mut sum_ident, mut sum_ae, mut sum_c) = (0, 0, 0);
    for row in &rep.rows {
        let y = row.sdg;
        let mine: Vec<&Vec<u8>> = items.iter().filter(|(t, _)| *t == y).map(|(_, p)| p).collect();
        let n = mine.len() as u64;
        let ident = items.iter().filter(|(_, p)| p.contains(&y)).count() as u64;
        let correct = mine.iter().filter(|p| p.contains(&y)).count() as u64;
        let tagged = vec_of(tags).contains(&y);
        let ae = if tagged { correct } else { mine.iter().filter(|p| p.is_empty()).count() as u64 };
        ensure!(row.n == n, "SDG{y}: n {} vs {n}", row.n);
        check_stat(&format!("SDG{y} total identification"), &row.total_identification, ident, n)?;
        check_stat(&format!("SDG{y} correct"), &row.correct, correct, n)?;
        check_stat(&format!("SDG{y} as expected"), &row.as_expected, ae, n)?;
        ensure!(row.as_expected_bracketed == !tagged, "SDG{y}: bracket flag");
        sum_ident += ident;
        sum_ae += ae;
        sum_c += correct;
    }
    let t = &rep.totals;
    let n = items.len() as u64;
    ensure!(t.n == n, "total n {} vs {n}", t.n);
    ensure!(t.total_identification == sum_ident, "total identification {} vs {sum_ident}", t.total_identification);
    check_stat("total as expected", &t.as_expected, sum_ae, n)?;
    check_stat("total correct", &t.correct, sum_c, n)?;
    let with_any = items.iter().filter(|(_, p)| !p.is_empty()).count() as u64;
    check_stat("items with any", &t.items_with_any, with_any, n)?;
    let avg = if with_any == 0 { 0.0 } else { sum_ident as f64 / with_any as f64 };
    ensure!((rep.avg_per_identified - avg).abs() < 1e-9, "avg {} vs {avg}", rep.avg_per_identified);
    Ok(())
}
