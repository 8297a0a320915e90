//! A 200-item single-label fixture whose predictions reproduce the row
//! reference few-shot identification counts.

use std::collections::BTreeMap;

use sdgkit::{Corpus, LabeledDocument, SdgLabelSet};

/// (label, N, tagged, total identifications, as expected, correct)
pub const ROWS: [(u8, u64, bool, u64, u64, u64); 16] = [
    (1, 12, false, 6, 4, 4),
    (2, 15, true, 60, 15, 15),
    (3, 11, false, 14, 6, 5),
    (4, 16, false, 5, 11, 3),
    (5, 11, false, 6, 6, 4),
    (6, 15, false, 14, 3, 9),
    (7, 10, true, 32, 10, 10),
    (8, 12, false, 6, 3, 3),
    (9, 9, false, 1, 5, 0),
    (10, 18, false, 5, 12, 0),
    (11, 7, false, 5, 0, 0),
    (12, 9, false, 3, 1, 2),
    (13, 13, false, 16, 2, 5),
    (14, 14, false, 15, 2, 7),
    (15, 16, false, 5, 5, 0),
    (16, 12, false, 2, 5, 1),
];

pub fn tags() -> SdgLabelSet {
    [2, 7].into_iter().collect()
}

/// Builds the items and predictions. Each row's items are, in order:
/// `correct` items predicting their own label, items predicting nothing
/// (untagged rows only), and the rest, which must predict something else.
/// The remaining identifications of each label are then spread over items
/// with other true labels, filling items that still need a label first.
pub fn build() -> (Corpus, BTreeMap<String, SdgLabelSet>) {
    struct Item {
        id: String,
        label: u8,
        pred: SdgLabelSet,
        needs_other: bool,
    }
    let mut items = Vec::new();
    for &(label, n, tagged, _, as_expected, correct) in &ROWS {
        let empty = if tagged { 0 } else { as_expected };
        for i in 0..n {
            let pred = if i < correct { SdgLabelSet::single(label).unwrap() } else { SdgLabelSet::empty() };
            items.push(Item {
                id: format!("t6-{label:02}-{i:02}"),
                label,
                pred,
                needs_other: i >= correct + empty,
            });
        }
    }
    let mut extras: Vec<(u8, u64)> = ROWS.iter().map(|&(l, _, _, total, _, correct)| (l, total - correct)).collect();
    extras.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    for (label, mut left) in extras {
        // Pass 1: items still owed a label; pass 2: already non-empty items.
        for pass in 0..2 {
            for it in items.iter_mut() {
                if left == 0 {
                    break;
                }
                let eligible = it.label != label
                    && !it.pred.contains(label)
                    && if pass == 0 { it.needs_other && it.pred.is_empty() } else { !it.pred.is_empty() };
                if eligible {
                    it.pred.insert(label).unwrap();
                    left -= 1;
                }
            }
        }
        assert_eq!(left, 0, "could not place SDG{label}");
    }
    assert!(items.iter().all(|it| !it.needs_other || !it.pred.is_empty()));
    let corpus = Corpus::from_documents(
        items
            .iter()
            .map(|it| {
                LabeledDocument::new(it.id.clone(), format!("abstract {}", it.id))
                    .with_labels(SdgLabelSet::single(it.label).unwrap())
            })
            .collect(),
    )
    .unwrap();
    let preds = items.into_iter().map(|it| (it.id, it.pred)).collect();
    (corpus, preds)
}
