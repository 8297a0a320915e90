//! Synthetic corpora and result sets shared by the integration tests.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdgkit::{Corpus, LabeledDocument, SdgLabelSet};

const FILLER: [&str; 40] = [
    "company", "provides", "services", "market", "customers", "platform", "global", "solutions", "team",
    "product", "develops", "offers", "business", "digital", "network", "partners", "quality", "growth",
    "industry", "design", "systems", "support", "operations", "brand", "value", "technology", "regional",
    "office", "consulting", "software", "management", "projects", "delivery", "clients", "experience",
    "modern", "local", "international", "founded", "based",
];

pub const PLANTED: [(u8, [&str; 5]); 3] = [
    (3, ["vaccine", "clinic", "patients", "diagnosis", "therapy"]),
    (7, ["solar", "photovoltaic", "renewable", "turbine", "battery"]),
    (14, ["ocean", "marine", "fisheries", "coral", "seafood"]),
];

/// `n` single-label documents cycling through three classes; each has
/// 10–14 filler words and 2–3 of its class keywords.
pub fn planted_corpus(n: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let docs = (0..n)
        .map(|i| {
            let (sdg, keys) = PLANTED[i % 3];
            let mut words: Vec<&str> = (0..rng.gen_range(10..=14))
                .map(|_| *FILLER.choose(&mut rng).unwrap())
                .collect();
            for _ in 0..rng.gen_range(2..=3) {
                let at = rng.gen_range(0..=words.len());
                words.insert(at, keys.choose(&mut rng).unwrap());
            }
            LabeledDocument::new(format!("p{i:04}"), words.join(" ")).with_labels(SdgLabelSet::single(sdg).unwrap())
        })
        .collect();
    Corpus::from_documents(docs).unwrap()
}

/// A random label set over 1..=17 with roughly `density` chance per SDG.
pub fn random_labels(rng: &mut impl Rng, density: f64) -> SdgLabelSet {
    (1..=17u8).filter(|_| rng.gen_bool(density)).collect()
}
