//! Binary query classifier: speech/quote queries versus plain visual
//! descriptions.
//!
//! The trained model is a small recurrent network over word tokens (see
//! [`lstm`]); [`rules`] holds the hard-coded fallback detector. Training is
//! single-threaded and fully determined by the data and `Hyperparams::seed`.

pub mod lstm;
pub mod rules;
pub mod tokenize;

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledText, QueryKind};
use crate::rng::seeded;
use lstm::{Adam, Shape, Trace, CLASSES};

pub use rules::{rule_based_detect, RuleDetector, DEFAULT_REPORTING_VERBS};
pub use tokenize::{tokenize_query, QUOTE_MARK};

pub const MODEL_MAGIC: &[u8; 5] = b"AVQC1";
pub const UNKNOWN_TOKEN: &str = "<unk>";
pub const DEFAULT_THRESHOLD: f64 = 0.5;
/// Output order of the network.
pub const LABEL_ORDER: [QueryKind; CLASSES] = [QueryKind::Visual, QueryKind::SpeechQuote];

#[derive(Debug, thiserror::Error)]
pub enum ClassifierError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training set has only {0} examples; both labels are required")]
    SingleClass(QueryKind),
    #[error("invalid hyperparameter: {0}")]
    BadHyperparams(String),
    #[error("training diverged (non-finite parameters)")]
    Diverged,
    #[error("not a classifier model file (bad magic)")]
    BadMagic,
    #[error("invalid model: {0}")]
    BadModel(String),
    #[error("model decode: {0}")]
    Decode(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub learning_rate: f64,
    /// Longer inputs keep only their last `max_len` tokens.
    pub max_len: usize,
    /// Global gradient-norm clip per batch.
    pub clip_norm: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            embed_dim: 16,
            hidden_dim: 16,
            epochs: 7,
            batch_size: 32,
            seed: 42,
            learning_rate: 0.005,
            max_len: 48,
            clip_norm: 5.0,
        }
    }
}

impl Hyperparams {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        let ints = [
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("max_len", self.max_len),
        ];
        if let Some((name, _)) = ints.iter().find(|(_, v)| *v == 0) {
            return Err(ClassifierError::BadHyperparams(format!("{name} must be positive")));
        }
        for (name, v) in [("learning_rate", self.learning_rate), ("clip_norm", self.clip_norm)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ClassifierError::BadHyperparams(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Token to index map. Index 0 is the unknown token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Vocabulary of every token in `texts`, indexed in sorted order after
    /// the unknown token.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let distinct: BTreeSet<String> = texts.into_iter().flat_map(tokenize_query).collect();
        let tokens = std::iter::once(UNKNOWN_TOKEN.to_owned())
            .chain(distinct)
            .collect();
        Self::from_tokens(tokens)
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn encode(&self, text: &str, max_len: usize) -> Vec<usize> {
        let ids: Vec<usize> = tokenize_query(text).iter().map(|t| self.lookup(t)).collect();
        let skip = ids.len().saturating_sub(max_len);
        ids[skip..].to_vec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: QueryKind,
    /// Probability of the returned label.
    pub confidence: f64,
    pub speech_probability: f64,
}

impl Prediction {
    /// Thresholds the speech probability of `logits` (ordered as
    /// [`LABEL_ORDER`]). An exact tie between the two logits goes to visual.
    pub fn from_logits(logits: [f64; CLASSES], threshold: f64) -> Self {
        let probs = lstm::softmax(logits);
        let speech = probs[1];
        let label = if speech >= threshold && logits[1] != logits[0] {
            QueryKind::SpeechQuote
        } else {
            QueryKind::Visual
        };
        let confidence = match label {
            QueryKind::SpeechQuote => speech,
            QueryKind::Visual => probs[0],
        };
        Self {
            label,
            confidence,
            speech_probability: speech,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    vocabulary: Vocabulary,
    hyperparams: Hyperparams,
    threshold: f64,
    params: Vec<f64>,
}

impl ClassifierModel {
    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hyperparams
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    fn shape(&self) -> Shape {
        Shape {
            vocab: self.vocabulary.len(),
            embed: self.hyperparams.embed_dim,
            hidden: self.hyperparams.hidden_dim,
        }
    }

    /// Raw output scores, ordered as [`LABEL_ORDER`].
    pub fn logits(&self, text: &str) -> [f64; CLASSES] {
        let seq = self.vocabulary.encode(text, self.hyperparams.max_len);
        lstm::forward(self.shape(), &self.params, &seq, &mut Trace::default())
    }

    pub fn predict(&self, text: &str) -> Prediction {
        self.predict_with_threshold(text, self.threshold)
    }

    /// Empty (token-free) text is always visual; its confidence is the
    /// network's visual probability for the empty sequence.
    pub fn predict_with_threshold(&self, text: &str, threshold: f64) -> Prediction {
        let logits = self.logits(text);
        if tokenize_query(text).is_empty() {
            let probs = lstm::softmax(logits);
            return Prediction {
                label: QueryKind::Visual,
                confidence: probs[0],
                speech_probability: probs[1],
            };
        }
        Prediction::from_logits(logits, threshold)
    }

    pub fn write(&self, out: &mut impl Write) -> Result<(), ClassifierError> {
        let io = |source| ClassifierError::Io {
            path: PathBuf::new(),
            source,
        };
        out.write_all(MODEL_MAGIC).map_err(io)?;
        let file = ModelFile {
            version: 1,
            label_order: LABEL_ORDER.to_vec(),
            vocabulary: self.vocabulary.tokens.clone(),
            hyperparams: self.hyperparams,
            threshold: self.threshold,
            params: self.params.clone(),
        };
        serde_json::to_writer(&mut *out, &file)?;
        Ok(())
    }

    pub fn read(input: &mut impl Read) -> Result<Self, ClassifierError> {
        let mut magic = [0u8; 5];
        input
            .read_exact(&mut magic)
            .map_err(|_| ClassifierError::BadMagic)?;
        if &magic != MODEL_MAGIC {
            return Err(ClassifierError::BadMagic);
        }
        let file: ModelFile = serde_json::from_reader(input)?;
        file.hyperparams.validate()?;
        if file.label_order != LABEL_ORDER {
            return Err(ClassifierError::BadModel("unexpected label order".into()));
        }
        if file.vocabulary.first().map(String::as_str) != Some(UNKNOWN_TOKEN) {
            return Err(ClassifierError::BadModel("index 0 must be the unknown token".into()));
        }
        let model = Self {
            vocabulary: Vocabulary::from_tokens(file.vocabulary),
            hyperparams: file.hyperparams,
            threshold: file.threshold,
            params: file.params,
        };
        if model.params.len() != model.shape().len() {
            return Err(ClassifierError::BadModel(format!(
                "expected {} parameters, found {}",
                model.shape().len(),
                model.params.len()
            )));
        }
        if model.params.iter().any(|x| !x.is_finite()) {
            return Err(ClassifierError::BadModel("non-finite parameter".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClassifierError> {
        let path = path.as_ref();
        let io = |source| ClassifierError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        self.write(&mut out)?;
        out.flush().map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClassifierError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| ClassifierError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read(&mut BufReader::new(file))
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    label_order: Vec<QueryKind>,
    vocabulary: Vec<String>,
    hyperparams: Hyperparams,
    threshold: f64,
    params: Vec<f64>,
}

fn class_index(kind: QueryKind) -> usize {
    match kind {
        QueryKind::Visual => 0,
        QueryKind::SpeechQuote => 1,
    }
}

/// Trains the classifier with mini-batch Adam on cross-entropy.
pub fn fit(train: &[LabeledText], hp: &Hyperparams) -> Result<ClassifierModel, ClassifierError> {
    hp.validate()?;
    if train.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    let first = train[0].label;
    if train.iter().all(|x| x.label == first) {
        return Err(ClassifierError::SingleClass(first));
    }

    let vocabulary = Vocabulary::build(train.iter().map(|x| x.text.as_str()));
    let shape = Shape {
        vocab: vocabulary.len(),
        embed: hp.embed_dim,
        hidden: hp.hidden_dim,
    };
    let examples: Vec<(Vec<usize>, usize)> = train
        .iter()
        .map(|x| (vocabulary.encode(&x.text, hp.max_len), class_index(x.label)))
        .collect();

    let mut rng = seeded(hp.seed);
    let mut params = lstm::init_params(shape, &mut rng);
    let mut adam = Adam::new(params.len(), hp.learning_rate);
    let mut grad = vec![0.0; params.len()];
    let mut trace = Trace::default();
    let mut order: Vec<usize> = (0..examples.len()).collect();

    for _ in 0..hp.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hp.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let (seq, target) = &examples[i];
                lstm::loss_and_grad(shape, &params, seq, *target, &mut trace, &mut grad);
            }
            let scale = 1.0 / batch.len() as f64;
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt() * scale;
            let clip = if norm > hp.clip_norm { hp.clip_norm / norm } else { 1.0 };
            grad.iter_mut().for_each(|g| *g *= scale * clip);
            adam.update(&mut params, &grad);
        }
        if params.iter().any(|x| !x.is_finite()) {
            return Err(ClassifierError::Diverged);
        }
    }

    Ok(ClassifierModel {
        vocabulary,
        hyperparams: *hp,
        threshold: DEFAULT_THRESHOLD,
        params,
    })
}

/// Fraction of `test` whose predicted label matches; `None` for an empty set.
pub fn evaluate_accuracy(model: &ClassifierModel, test: &[LabeledText]) -> Option<f64> {
    accuracy_of(test, |text| model.predict(text).label)
}

/// Accuracy of any labelling function over `test`.
pub fn accuracy_of(test: &[LabeledText], mut predict: impl FnMut(&str) -> QueryKind) -> Option<f64> {
    if test.is_empty() {
        return None;
    }
    let correct = test.iter().filter(|x| predict(&x.text) == x.label).count();
    Some(correct as f64 / test.len() as f64)
}
