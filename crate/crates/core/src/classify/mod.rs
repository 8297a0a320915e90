//! One-vs-rest SDG classifiers over vectorized text, per-class decision
//! thresholds, evaluation metrics and method comparison.
//!
//! Training:
//!
//! * logistic regression: per-class SGD on the log loss, inputs visited in a
//!   seeded shuffled order, rate `learning_rate / (1 + epoch / 10)`;
//! * linear SVM: the same loop on the hinge loss; scores are `σ(margin)`;
//! * multinomial naive Bayes: Laplace-smoothed (α = 1) feature likelihoods
//!   per class; scores are the posterior normalized over classes.
//!
//! Weights are stored as f64 so a saved model reproduces its predictions
//! bit for bit.

mod metrics;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::container::{ContainerError, EmbeddedHeader, ModelFile};
use crate::corpus::{split_train_test, Corpus, CorpusError, SdgLabelSet, SplitSpec};
use crate::textprep::PrepConfig;
use crate::vectorize::{sigmoid, FittedVectorizer, SgnsConfig, SparseVector, VectorizeError, VectorizerKind};

pub use metrics::{comparison_csv, compute_metrics, ClassMetrics, EvalReport};

#[derive(Debug, thiserror::Error)]
pub enum ClassifyError {
    #[error("training document `{0}` has no labels")]
    Unlabeled(String),
    #[error("training data has {0} class(es); at least 2 are required")]
    TooFewClasses(usize),
    #[error("vectorizer produces no features")]
    EmptyFeatures,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("threshold for SDG {sdg} is {value}, outside [0, 1]")]
    BadThreshold { sdg: u8, value: f64 },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown method `{0}` (expected logreg, nb or svm)")]
    UnknownMethod(String),
    #[error("no method × vectorizer combinations given")]
    NothingToCompare,
    #[error(transparent)]
    Vectorize(#[from] VectorizeError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("corrupt classifier model: {0}")]
    Corrupt(String),
}

pub type Result<T, E = ClassifyError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LogisticRegression,
    MultinomialNb,
    LinearSvm,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::LogisticRegression, Method::MultinomialNb, Method::LinearSvm];

    pub fn name(self) -> &'static str {
        match self {
            Method::LogisticRegression => "logistic_regression",
            Method::MultinomialNb => "multinomial_nb",
            Method::LinearSvm => "linear_svm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = ClassifyError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "logistic_regression" | "logreg" | "lr" => Ok(Method::LogisticRegression),
            "multinomial_nb" | "nb" | "naive_bayes" => Ok(Method::MultinomialNb),
            "linear_svm" | "svm" => Ok(Method::LinearSvm),
            other => Err(ClassifyError::UnknownMethod(other.to_string())),
        }
    }
}

/// Settings for the SGD-trained heads. Naive Bayes ignores all but `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// L2 penalty, applied as a weight shrink once per epoch.
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            learning_rate: 0.5,
            l2: 1e-4,
            seed: 42,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(ClassifyError::InvalidConfig("epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ClassifyError::InvalidConfig("learning rate must be positive".into()));
        }
        if !(self.l2 >= 0.0 && self.l2 < 1.0) {
            return Err(ClassifyError::InvalidConfig("l2 must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Per-class score thresholds; classes without an override use `default`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionThresholds {
    pub default: f64,
    #[serde(default)]
    pub per_class: BTreeMap<u8, f64>,
}

impl Default for DecisionThresholds {
    fn default() -> Self {
        DecisionThresholds {
            default: 0.5,
            per_class: BTreeMap::new(),
        }
    }
}

impl DecisionThresholds {
    pub fn uniform(tau: f64) -> Result<Self> {
        let t = DecisionThresholds {
            default: tau,
            per_class: BTreeMap::new(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn get(&self, sdg: u8) -> f64 {
        self.per_class.get(&sdg).copied().unwrap_or(self.default)
    }

    pub fn set(&mut self, sdg: u8, tau: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(ClassifyError::BadThreshold { sdg, value: tau });
        }
        self.per_class.insert(sdg, tau);
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.default) {
            return Err(ClassifyError::BadThreshold {
                sdg: 0,
                value: self.default,
            });
        }
        for (&sdg, &value) in &self.per_class {
            if !(0.0..=1.0).contains(&value) {
                return Err(ClassifyError::BadThreshold { sdg, value });
            }
        }
        Ok(())
    }
}

/// `{c : score_c ≥ τ_c}`.
pub fn labels_from_scores(scores: &[(u8, f64)], thresholds: &DecisionThresholds) -> SdgLabelSet {
    scores
        .iter()
        .filter(|&&(c, s)| s >= thresholds.get(c))
        .map(|&(c, _)| c)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub method: Method,
    /// Ascending.
    pub classes: Vec<u8>,
    pub vectorizer: FittedVectorizer,
    pub dim: usize,
    /// Row-major `classes × dim`. For naive Bayes these are log feature
    /// likelihoods.
    pub weights: Vec<f64>,
    /// Biases, or log priors for naive Bayes.
    pub biases: Vec<f64>,
    /// Naive Bayes only: per-feature offset added before scoring so that
    /// signed embedding features become non-negative counts.
    pub feature_shift: Option<Vec<f64>>,
    pub thresholds: DecisionThresholds,
    pub config: TrainConfig,
}

#[derive(Serialize, Deserialize)]
struct ClassifierMeta {
    method: Method,
    classes: Vec<u8>,
    dim: usize,
    vectorizer_id: VectorizerKind,
    vectorizer: EmbeddedHeader,
    prep: PrepConfig,
    thresholds: DecisionThresholds,
    config: TrainConfig,
    shifted: bool,
}

struct TrainingSet {
    features: Vec<SparseVector>,
    labels: Vec<SdgLabelSet>,
    classes: Vec<u8>,
}

fn training_set(train: &Corpus, vectorizer: &FittedVectorizer) -> Result<TrainingSet> {
    if vectorizer.dim() == 0 {
        return Err(ClassifyError::EmptyFeatures);
    }
    if let Some(doc) = train.iter().find(|d| d.labels.is_empty()) {
        return Err(ClassifyError::Unlabeled(doc.id.clone()));
    }
    let classes = train.label_universe().to_vec();
    if classes.len() < 2 {
        return Err(ClassifyError::TooFewClasses(classes.len()));
    }
    Ok(TrainingSet {
        features: train.iter().map(|d| vectorizer.transform(&d.text)).collect(),
        labels: train.iter().map(|d| d.labels).collect(),
        classes,
    })
}

/// Fits a classifier on features from an already fitted vectorizer.
pub fn fit_classifier(
    train: &Corpus,
    method: Method,
    vectorizer: FittedVectorizer,
    config: &TrainConfig,
) -> Result<ClassifierModel> {
    config.validate()?;
    let set = training_set(train, &vectorizer)?;
    let dim = vectorizer.dim();
    let (weights, biases, feature_shift) = match method {
        Method::MultinomialNb => fit_nb(&set, dim, !vectorizer.non_negative()),
        Method::LogisticRegression | Method::LinearSvm => {
            let (w, b) = fit_sgd(&set, dim, method, config);
            (w, b, None)
        }
    };
    Ok(ClassifierModel {
        method,
        classes: set.classes,
        vectorizer,
        dim,
        weights,
        biases,
        feature_shift,
        thresholds: DecisionThresholds::default(),
        config: config.clone(),
    })
}

/// Fits the vectorizer on `train` and then the classifier.
pub fn fit_pipeline(
    train: &Corpus,
    method: Method,
    vectorizer: VectorizerKind,
    prep: &PrepConfig,
    sgns: &SgnsConfig,
    config: &TrainConfig,
) -> Result<ClassifierModel> {
    let v = FittedVectorizer::fit(vectorizer, train, prep, sgns)?;
    fit_classifier(train, method, v, config)
}

fn fit_sgd(set: &TrainingSet, dim: usize, method: Method, config: &TrainConfig) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut weights = vec![0.0; set.classes.len() * dim];
    let mut biases = vec![0.0; set.classes.len()];
    let mut order: Vec<usize> = (0..set.features.len()).collect();
    for (ci, &c) in set.classes.iter().enumerate() {
        let w = &mut weights[ci * dim..(ci + 1) * dim];
        let b = &mut biases[ci];
        for epoch in 0..config.epochs {
            order.shuffle(&mut rng);
            let lr = config.learning_rate / (1.0 + epoch as f64 / 10.0);
            for &i in &order {
                let x = &set.features[i];
                let y = if set.labels[i].contains(c) { 1.0 } else { 0.0 };
                let margin = x.dot_dense(w) + *b;
                let step = match method {
                    Method::LogisticRegression => y - sigmoid(margin),
                    _ => {
                        let s = 2.0 * y - 1.0;
                        if s * margin < 1.0 {
                            s
                        } else {
                            0.0
                        }
                    }
                };
                if step != 0.0 {
                    for (j, v) in x.iter() {
                        w[j] += lr * step * v;
                    }
                    *b += lr * step;
                }
            }
            let shrink = 1.0 - lr * config.l2;
            w.iter_mut().for_each(|v| *v *= shrink);
        }
    }
    (weights, biases)
}

fn fit_nb(set: &TrainingSet, dim: usize, shift: bool) -> (Vec<f64>, Vec<f64>, Option<Vec<f64>>) {
    let offset = shift.then(|| {
        let mut min = vec![0.0f64; dim];
        for x in &set.features {
            for (j, v) in x.iter() {
                min[j] = min[j].min(v);
            }
        }
        min.into_iter().map(|m| -m).collect::<Vec<f64>>()
    });
    let k = set.classes.len();
    let mut totals = vec![0.0f64; k * dim];
    let mut docs = vec![0.0f64; k];
    for (x, labels) in set.features.iter().zip(&set.labels) {
        let dense = shifted(x, dim, offset.as_deref());
        for (ci, &c) in set.classes.iter().enumerate() {
            if labels.contains(c) {
                docs[ci] += 1.0;
                for (t, v) in totals[ci * dim..(ci + 1) * dim].iter_mut().zip(&dense) {
                    *t += v;
                }
            }
        }
    }
    let n: f64 = docs.iter().sum();
    let mut weights = vec![0.0; k * dim];
    for ci in 0..k {
        let row = &totals[ci * dim..(ci + 1) * dim];
        let denom = row.iter().sum::<f64>() + dim as f64;
        for (w, t) in weights[ci * dim..(ci + 1) * dim].iter_mut().zip(row) {
            *w = ((t + 1.0) / denom).ln();
        }
    }
    let biases = docs.iter().map(|d| (d / n).ln()).collect();
    (weights, biases, offset)
}

fn shifted(x: &SparseVector, dim: usize, offset: Option<&[f64]>) -> Vec<f64> {
    let mut dense = x.to_dense(dim);
    if let Some(off) = offset {
        for (d, o) in dense.iter_mut().zip(off) {
            *d += o;
        }
    }
    dense
}

impl ClassifierModel {
    pub fn features(&self, text: &str) -> SparseVector {
        self.vectorizer.transform(text)
    }

    /// Raw per-class head outputs: margins for the linear methods,
    /// unnormalized log joint probabilities for naive Bayes.
    pub fn raw_scores(&self, x: &SparseVector) -> Vec<f64> {
        let dim = self.dim;
        match (&self.method, &self.feature_shift) {
            (Method::MultinomialNb, Some(off)) => {
                let dense = shifted(x, dim, Some(off));
                (0..self.classes.len())
                    .map(|ci| {
                        let w = &self.weights[ci * dim..(ci + 1) * dim];
                        self.biases[ci] + dense.iter().zip(w).map(|(a, b)| a * b).sum::<f64>()
                    })
                    .collect()
            }
            _ => (0..self.classes.len())
                .map(|ci| x.dot_dense(&self.weights[ci * dim..(ci + 1) * dim]) + self.biases[ci])
                .collect(),
        }
    }

    /// Per-class scores in [0, 1], in class order.
    pub fn scores_for(&self, x: &SparseVector) -> Vec<(u8, f64)> {
        let raw = self.raw_scores(x);
        let scores: Vec<f64> = match self.method {
            Method::MultinomialNb => {
                let m = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exp: Vec<f64> = raw.iter().map(|r| (r - m).exp()).collect();
                let z: f64 = exp.iter().sum();
                exp.into_iter().map(|e| e / z).collect()
            }
            _ => raw.into_iter().map(sigmoid).collect(),
        };
        self.classes.iter().copied().zip(scores).collect()
    }

    pub fn predict_scores(&self, text: &str) -> Vec<(u8, f64)> {
        self.scores_for(&self.features(text))
    }

    pub fn predict_labels_with(&self, thresholds: &DecisionThresholds, text: &str) -> SdgLabelSet {
        labels_from_scores(&self.predict_scores(text), thresholds)
    }

    pub fn predict_labels(&self, text: &str) -> SdgLabelSet {
        self.predict_labels_with(&self.thresholds, text)
    }

    pub fn to_model_file(&self) -> Result<ModelFile> {
        let mut file = ModelFile::new("classifier", &serde_json::Value::Null)?;
        file.push_f64("weights", self.weights.clone());
        file.push_f64("biases", self.biases.clone());
        if let Some(off) = &self.feature_shift {
            file.push_f64("feature_shift", off.clone());
        }
        let header = self.vectorizer.embed_into(&mut file, "vectorizer")?;
        file.meta = serde_json::to_value(ClassifierMeta {
            method: self.method,
            classes: self.classes.clone(),
            dim: self.dim,
            vectorizer_id: self.vectorizer.kind(),
            vectorizer: header,
            prep: self.vectorizer.prep().clone(),
            thresholds: self.thresholds.clone(),
            config: self.config.clone(),
            shifted: self.feature_shift.is_some(),
        })
        .map_err(|e| ClassifyError::Corrupt(e.to_string()))?;
        Ok(file)
    }

    pub fn from_model_file(file: &ModelFile) -> Result<Self> {
        file.expect_kind("classifier")?;
        let meta: ClassifierMeta = file.meta()?;
        let k = meta.classes.len();
        if k < 2 || meta.classes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ClassifyError::Corrupt("class list must be ascending with ≥ 2 entries".into()));
        }
        meta.thresholds.validate()?;
        let vectorizer = FittedVectorizer::extract_from(file, "vectorizer", &meta.vectorizer)?;
        if vectorizer.dim() != meta.dim {
            return Err(ClassifyError::Corrupt("vectorizer dimension differs from header".into()));
        }
        Ok(ClassifierModel {
            method: meta.method,
            weights: file.f64_section("weights", k * meta.dim)?.to_vec(),
            biases: file.f64_section("biases", k)?.to_vec(),
            feature_shift: if meta.shifted {
                Some(file.f64_section("feature_shift", meta.dim)?.to_vec())
            } else {
                None
            },
            classes: meta.classes,
            vectorizer,
            dim: meta.dim,
            thresholds: meta.thresholds,
            config: meta.config,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(self.to_model_file()?.save(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_model_file(&ModelFile::load(path)?)
    }
}

/// Scores every test document with the model's thresholds.
pub fn evaluate(model: &ClassifierModel, test: &Corpus) -> Result<EvalReport> {
    evaluate_with_seed(model, test, None)
}

pub fn evaluate_with_seed(model: &ClassifierModel, test: &Corpus, split_seed: Option<u64>) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(ClassifyError::EmptyTestSet);
    }
    let items: Vec<(SdgLabelSet, SdgLabelSet, Option<u8>)> = test
        .iter()
        .map(|d| {
            let scores = model.predict_scores(&d.text);
            let best = scores
                .iter()
                .fold(None::<(u8, f64)>, |acc, &(c, s)| match acc {
                    Some((_, bs)) if bs >= s => acc,
                    _ => Some((c, s)),
                })
                .map(|(c, _)| c);
            (d.labels, labels_from_scores(&scores, &model.thresholds), best)
        })
        .collect();
    Ok(EvalReport::from_items(
        model.method.name(),
        model.vectorizer.kind().name(),
        split_seed,
        &items,
        &model.classes,
    ))
}

/// Picks, per class, the grid threshold maximizing that class's F1 on
/// `validation` (ties go to the value closest to 0.5, then the lower one).
pub fn tune_thresholds(model: &ClassifierModel, validation: &Corpus, grid: &[f64]) -> Result<DecisionThresholds> {
    if validation.is_empty() {
        return Err(ClassifyError::EmptyTestSet);
    }
    let scored: Vec<(SdgLabelSet, Vec<(u8, f64)>)> =
        validation.iter().map(|d| (d.labels, model.predict_scores(&d.text))).collect();
    let mut out = DecisionThresholds::default();
    for (ci, &c) in model.classes.iter().enumerate() {
        let mut best: Option<(f64, f64)> = None;
        for &tau in grid {
            if !(0.0..=1.0).contains(&tau) {
                return Err(ClassifyError::BadThreshold { sdg: c, value: tau });
            }
            let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
            for (truth, scores) in &scored {
                match (truth.contains(c), scores[ci].1 >= tau) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (true, false) => fn_ += 1,
                    _ => {}
                }
            }
            let f1 = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
            let better = match best {
                None => true,
                Some((bf, bt)) => {
                    f1 > bf || (f1 == bf && ((tau - 0.5).abs() < (bt - 0.5).abs() || ((tau - 0.5).abs() == (bt - 0.5).abs() && tau < bt)))
                }
            };
            if better {
                best = Some((f1, tau));
            }
        }
        if let Some((_, tau)) = best {
            out.set(c, tau)?;
        }
    }
    Ok(out)
}

/// Options shared by every combination in [`compare_methods`].
#[derive(Debug, Clone, Default)]
pub struct CompareOptions {
    pub prep: PrepConfig,
    pub sgns: SgnsConfig,
    pub train: TrainConfig,
}

/// Trains and evaluates every method × vectorizer on one shared split and
/// returns reports ranked by macro-F1, then micro-F1, then method name.
pub fn compare_methods(
    corpus: &Corpus,
    methods: &[Method],
    vectorizers: &[VectorizerKind],
    spec: &SplitSpec,
    options: &CompareOptions,
) -> Result<Vec<EvalReport>> {
    if methods.is_empty() || vectorizers.is_empty() {
        return Err(ClassifyError::NothingToCompare);
    }
    let (train, test) = split_train_test(corpus, spec)?;
    let mut reports = Vec::with_capacity(methods.len() * vectorizers.len());
    for &kind in vectorizers {
        let v = FittedVectorizer::fit(kind, &train, &options.prep, &options.sgns)?;
        for &method in methods {
            let model = fit_classifier(&train, method, v.clone(), &options.train)?;
            reports.push(evaluate_with_seed(&model, &test, Some(spec.seed))?);
        }
    }
    reports.sort_by(|a, b| {
        b.macro_f1
            .total_cmp(&a.macro_f1)
            .then(b.micro_f1.total_cmp(&a.micro_f1))
            .then(a.method.cmp(&b.method))
            .then(a.vectorizer.cmp(&b.vectorizer))
    });
    Ok(reports)
}
