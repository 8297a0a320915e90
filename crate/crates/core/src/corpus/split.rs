use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, Result};

/// Parameters of a seeded train/test split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    /// Stratify on each document's full label set.
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.70,
            seed: 42,
            stratified: true,
        }
    }
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64, stratified: bool) -> Self {
        SplitSpec {
            train_fraction,
            seed,
            stratified,
        }
    }
}

/// Splits a corpus into disjoint train and test halves.
///
/// The train size is `round(fraction * N)`. In stratified mode the train
/// quota is apportioned across strata by largest remainder, so each
/// stratum gets `floor` or `ceil` of its exact share. Both halves keep the
/// input order of the documents they contain.
pub fn split_train_test(corpus: &Corpus, spec: &SplitSpec) -> Result<(Corpus, Corpus)> {
    if corpus.is_empty() {
        return Err(CorpusError::Empty);
    }
    let fraction = spec.train_fraction;
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CorpusError::BadFraction(fraction));
    }
    let n = corpus.len();
    let target = (fraction * n as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut in_train = vec![false; n];
    if spec.stratified {
        let mut strata: BTreeMap<_, Vec<usize>> = BTreeMap::new();
        for (i, doc) in corpus.documents.iter().enumerate() {
            strata.entry(doc.labels).or_default().push(i);
        }
        if let Some((labels, members)) = strata.iter().find(|(_, m)| m.len() < 2) {
            return Err(CorpusError::StratificationImpossible {
                class: labels.to_string(),
                count: members.len(),
            });
        }
        let quotas = apportion(
            &strata.values().map(Vec::len).collect::<Vec<_>>(),
            fraction,
            target,
        );
        for (members, quota) in strata.values_mut().zip(quotas) {
            members.shuffle(&mut rng);
            for &i in &members[..quota] {
                in_train[i] = true;
            }
        }
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for &i in &order[..target] {
            in_train[i] = true;
        }
    }

    let (train, test): (Vec<_>, Vec<_>) = corpus
        .documents
        .iter()
        .zip(&in_train)
        .map(|(doc, &t)| (doc.clone(), t))
        .partition(|(_, t)| *t);
    Ok((
        Corpus::from_validated(train.into_iter().map(|(d, _)| d).collect(), corpus.metadata.clone()),
        Corpus::from_validated(test.into_iter().map(|(d, _)| d).collect(), corpus.metadata.clone()),
    ))
}

/// Largest-remainder allocation of `target` slots across groups.
fn apportion(sizes: &[usize], fraction: f64, target: usize) -> Vec<usize> {
    let exact: Vec<f64> = sizes.iter().map(|&s| s as f64 * fraction).collect();
    let mut quotas: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    // Stable sort keeps stratum order as the tie-break.
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut remaining = target.saturating_sub(assigned);
    for &g in order.iter().cycle().take(sizes.len() * 2) {
        if remaining == 0 {
            break;
        }
        if quotas[g] < sizes[g] {
            quotas[g] += 1;
            remaining -= 1;
        }
    }
    quotas
}
