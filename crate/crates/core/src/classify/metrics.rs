use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::SdgLabelSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub sdg: u8,
    /// Test items carrying this label.
    pub support: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub vectorizer: String,
    pub split_seed: Option<u64>,
    pub n_test: usize,
    pub per_class: Vec<ClassMetrics>,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
    /// Fraction of items whose predicted set equals the true set.
    pub accuracy: f64,
    /// Fraction of items whose highest-scoring class is a true label.
    pub top1_accuracy: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Multi-label metrics over `(truth, predicted, top1)` triples. Classes are
/// `extra_classes` plus every label seen in truth or predictions.
pub fn compute_metrics(
    items: &[(SdgLabelSet, SdgLabelSet, Option<u8>)],
    extra_classes: &[u8],
) -> (Vec<ClassMetrics>, [f64; 6]) {
    let mut classes: BTreeSet<u8> = extra_classes.iter().copied().collect();
    for (t, p, _) in items {
        classes.extend(t.iter());
        classes.extend(p.iter());
    }
    let n = items.len();
    let mut per_class = Vec::with_capacity(classes.len());
    let (mut tp_all, mut fp_all, mut fn_all) = (0, 0, 0);
    for &c in &classes {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (t, p, _) in items {
            match (t.contains(c), p.contains(c)) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        per_class.push(ClassMetrics {
            sdg: c,
            support: tp + fn_,
            tp,
            fp,
            fn_,
            tn: n - tp - fp - fn_,
            precision,
            recall,
            f1: f1(precision, recall),
        });
    }
    let micro_p = ratio(tp_all, tp_all + fp_all);
    let micro_r = ratio(tp_all, tp_all + fn_all);
    let macro_f1 = if per_class.is_empty() {
        0.0
    } else {
        per_class.iter().map(|m| m.f1).sum::<f64>() / per_class.len() as f64
    };
    let exact = items.iter().filter(|(t, p, _)| t == p).count();
    let top1 = items
        .iter()
        .filter(|(t, _, best)| best.is_some_and(|b| t.contains(b)))
        .count();
    (
        per_class,
        [micro_p, micro_r, f1(micro_p, micro_r), macro_f1, ratio(exact, n), ratio(top1, n)],
    )
}

impl EvalReport {
    pub fn from_items(
        method: &str,
        vectorizer: &str,
        split_seed: Option<u64>,
        items: &[(SdgLabelSet, SdgLabelSet, Option<u8>)],
        classes: &[u8],
    ) -> Self {
        let (per_class, [micro_precision, micro_recall, micro_f1, macro_f1, accuracy, top1_accuracy]) =
            compute_metrics(items, classes);
        EvalReport {
            method: method.to_string(),
            vectorizer: vectorizer.to_string(),
            split_seed,
            n_test: items.len(),
            per_class,
            micro_precision,
            micro_recall,
            micro_f1,
            macro_f1,
            accuracy,
            top1_accuracy,
        }
    }

    /// One row per class followed by summary rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,support,tp,fp,fn,tn,precision,recall,f1\n");
        for m in &self.per_class {
            let _ = writeln!(
                out,
                "SDG{},{},{},{},{},{},{:.6},{:.6},{:.6}",
                m.sdg, m.support, m.tp, m.fp, m.fn_, m.tn, m.precision, m.recall, m.f1
            );
        }
        let _ = writeln!(
            out,
            "micro,,,,,,{:.6},{:.6},{:.6}",
            self.micro_precision, self.micro_recall, self.micro_f1
        );
        let _ = writeln!(out, "macro,,,,,,,,{:.6}", self.macro_f1);
        let _ = writeln!(out, "accuracy,,,,,,,,{:.6}", self.accuracy);
        let _ = writeln!(out, "top1_accuracy,,,,,,,,{:.6}", self.top1_accuracy);
        out
    }
}

/// Ranked comparison table: one row per method × vectorizer.
pub fn comparison_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("rank,method,vectorizer,macro_f1,micro_f1,accuracy,top1_accuracy,n_test\n");
    for (i, r) in reports.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{}",
            i + 1,
            r.method,
            r.vectorizer,
            r.macro_f1,
            r.micro_f1,
            r.accuracy,
            r.top1_accuracy,
            r.n_test
        );
    }
    out
}
