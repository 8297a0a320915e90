//! Independent numeric oracles for the vectorizers.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdgkit::vectorize::{fit_tfidf, sgns_gradients, sgns_step};
use sdgkit::{Corpus, LabeledDocument, PrepConfig};

// Plain re-statement of the objective, no shared code.
pub fn oracle_loss(c: &[f64], u: &[f64], negs: &[Vec<f64>]) -> f64 {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let mut l = -sig(dot(u, c)).ln();
    for n in negs {
        l -= sig(-dot(n, c)).ln();
    }
    l
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

pub fn numeric_grad(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let h = 1e-5;
    (0..x.len())
        .map(|i| {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[i] += h;
            m[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect()
}

/// Worst relative error between analytic and central-difference gradients
/// over `configs` random (dimension, negatives, scale) draws.
pub fn sgns_gradient_check(configs: usize, seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..configs {
        let d = rng.gen_range(1..=12);
        let k = rng.gen_range(0..=6);
        let scale = rng.gen_range(0.1..2.0);
        let mut v = || (0..d).map(|_| rng.gen_range(-scale..scale)).collect::<Vec<f64>>();
        let c = v();
        let u = v();
        let negs: Vec<Vec<f64>> = (0..k).map(|_| v()).collect();
        let neg_refs: Vec<&[f64]> = negs.iter().map(Vec::as_slice).collect();

        let g = sgns_gradients(&c, &u, &neg_refs).map_err(|e| e.to_string())?;
        let want = oracle_loss(&c, &u, &negs);
        if (g.loss - want).abs() >= 1e-12 {
            return Err(format!("loss {} vs {want}", g.loss));
        }

        let num_c = numeric_grad(|x| oracle_loss(x, &u, &negs), &c);
        let num_u = numeric_grad(|x| oracle_loss(&c, x, &negs), &u);
        worst = worst.max(rel_err(&g.center, &num_c)).max(rel_err(&g.context, &num_u));
        for j in 0..k {
            let num_n = numeric_grad(
                |x| {
                    let mut n2 = negs.clone();
                    n2[j] = x.to_vec();
                    oracle_loss(&c, &u, &n2)
                },
                &negs[j],
            );
            worst = worst.max(rel_err(&g.negatives[j], &num_n));
        }

        // The step itself must be the same gradient scaled by the rate.
        let lr = 1e-3;
        let up = sgns_step(&c, &u, &neg_refs, lr).map_err(|e| e.to_string())?;
        let implied: Vec<f64> = c.iter().zip(&up.center).map(|(a, b)| (a - b) / lr).collect();
        worst = worst.max(rel_err(&implied, &num_c));
    }
    Ok(worst)
}

/// Largest |loss - (1+k) ln 2| at all-zero vectors for k = 0..8.
pub fn zero_loss_error() -> Result<f64, String> {
    let mut worst = 0.0f64;
    for k in 0..8 {
        let z = vec![0.0f64; 5];
        let negs: Vec<&[f64]> = (0..k).map(|_| z.as_slice()).collect();
        let loss = sgns_step(&z, &z, &negs, 0.1).map_err(|e| e.to_string())?.loss;
        worst = worst.max((loss - (1 + k) as f64 * std::f64::consts::LN_2).abs());
    }
    Ok(worst)
}

pub const TFIDF_TEXTS: [&str; 5] = [
    "solar energy powers homes",
    "wind energy and solar farms",
    "clean water for rural homes",
    "water sanitation improves health",
    "health care access in rural clinics",
];

/// Max abs difference between the fitted TF-IDF rows and
/// tf * (ln((1+n)/(1+df)) + 1), L2-normalized, computed by hand.
pub fn tfidf_hand_check() -> Result<f64, String> {
    let texts = TFIDF_TEXTS;
    let corpus = Corpus::from_documents(
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| LabeledDocument::new(format!("d{i}"), *t))
            .collect(),
    )
    .map_err(|e| e.to_string())?;
    let model = fit_tfidf(&corpus, &PrepConfig::without_stopwords()).map_err(|e| e.to_string())?;

    let docs: Vec<Vec<&str>> = texts.iter().map(|t| t.split(' ').collect()).collect();
    let n = docs.len() as f64;
    let mut df: BTreeMap<&str, f64> = BTreeMap::new();
    for d in &docs {
        for t in d.iter().collect::<BTreeSet<_>>() {
            *df.entry(t).or_default() += 1.0;
        }
    }
    if model.dim() != df.len() {
        return Err(format!("vocabulary {} vs {}", model.dim(), df.len()));
    }
    let mut max_err = 0.0f64;
    for (d, text) in docs.iter().zip(&texts) {
        let mut w: BTreeMap<&str, f64> = BTreeMap::new();
        for t in d {
            *w.entry(t).or_default() += 1.0;
        }
        for (t, x) in w.iter_mut() {
            *x *= ((1.0 + n) / (1.0 + df[t])).ln() + 1.0;
        }
        let norm = w.values().map(|x| x * x).sum::<f64>().sqrt();
        let row = model.transform(text);
        for t in df.keys() {
            let expected = w.get(t).map_or(0.0, |x| x / norm);
            let idx = model.vocabulary.index_of(t).ok_or_else(|| format!("`{t}` missing from vocabulary"))?;
            max_err = max_err.max((expected - row.get(idx)).abs());
        }
    }
    Ok(max_err)
}
