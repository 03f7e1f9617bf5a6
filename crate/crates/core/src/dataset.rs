//! Seeded construction of the derived datasets: the customised training set
//! (human captions partly replaced by ASR transcripts), the mixed evaluation
//! set, and the labelled corpus for the query classifier.
//!
//! Every function here is a pure function of its inputs and seed.

use std::collections::HashSet;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{Caption, CaptionOrigin, Corpus, Split};
use crate::rng::seeded;

/// Reporting templates used when none are supplied.
pub const DEFAULT_TEMPLATES: &[&str] = &[
    "{q}, said the speaker.",
    "She said: {q}",
    "According to the speaker, {q}",
    "He remarked, {q}",
];

pub const PLACEHOLDER: &str = "{q}";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BuildError {
    #[error("replace_min must be at least 1 (got {0})")]
    ReplaceMinTooSmall(usize),
    #[error("replace_min {min} exceeds replace_max {max}")]
    EmptyRange { min: usize, max: usize },
    #[error("replace_max {max} exceeds the {captions} captions of clip {clip_id}")]
    ReplaceMaxTooLarge {
        max: usize,
        captions: usize,
        clip_id: String,
    },
    #[error("fraction {0} is outside [0, 1]")]
    BadFraction(f64),
    #[error("split ratio {0} is outside (0, 1)")]
    BadSplitRatio(f64),
    #[error("test split is empty")]
    EmptyTestSplit,
    #[error("need {needed} clips with transcripts, found {available} (shortfall {shortfall})")]
    InsufficientEligible {
        needed: usize,
        available: usize,
        shortfall: usize,
    },
    #[error("clip {0} has no human caption to draw a visual query from")]
    NoHumanCaption(String),
    #[error("template {template:?} must contain {PLACEHOLDER} exactly once (found {found})")]
    BadTemplate { template: String, found: usize },
    #[error("quotes given but the template list is empty")]
    NoTemplates,
    #[error("class {0} has no examples")]
    EmptyClass(QueryKind),
}

/// Binary query label: a plain visual description, or speech / a quote.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    Visual,
    SpeechQuote,
}

impl QueryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            QueryKind::Visual => "visual",
            QueryKind::SpeechQuote => "speech_quote",
        }
    }
}

impl std::fmt::Display for QueryKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalPair {
    pub query_text: String,
    pub gt_clip_id: String,
    pub query_kind: QueryKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledText {
    pub text: String,
    pub label: QueryKind,
}

impl LabeledText {
    pub fn new(text: impl Into<String>, label: QueryKind) -> Self {
        Self {
            text: text.into(),
            label,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentOptions {
    pub replace_min: usize,
    pub replace_max: usize,
    pub seed: u64,
    /// Return the corpus unchanged (the range is not checked).
    pub no_op: bool,
}

impl AugmentOptions {
    pub fn new(replace_min: usize, replace_max: usize, seed: u64) -> Self {
        Self {
            replace_min,
            replace_max,
            seed,
            no_op: false,
        }
    }
}

/// Builds the customised training set: for every train clip with usable
/// speech, draws `r` uniformly from `[replace_min, replace_max]` and replaces
/// `r` distinct captions (chosen uniformly) with the transcript.
pub fn augment_training_captions(corpus: &Corpus, opts: AugmentOptions) -> Result<Corpus, BuildError> {
    if opts.no_op {
        return Ok(corpus.clone());
    }
    let AugmentOptions {
        replace_min: min,
        replace_max: max,
        ..
    } = opts;
    if min < 1 {
        return Err(BuildError::ReplaceMinTooSmall(min));
    }
    if min > max {
        return Err(BuildError::EmptyRange { min, max });
    }
    let eligible = |c: &&crate::corpus::ClipRecord| c.split == Split::Train && c.speech().is_some();
    if let Some(clip) = corpus
        .clips
        .iter()
        .filter(eligible)
        .find(|c| c.captions.len() < max)
    {
        return Err(BuildError::ReplaceMaxTooLarge {
            max,
            captions: clip.captions.len(),
            clip_id: clip.clip_id.clone(),
        });
    }

    let mut rng = seeded(opts.seed);
    let mut out = corpus.clone();
    for clip in out.clips.iter_mut() {
        if !eligible(&&*clip) {
            continue;
        }
        let speech = clip.speech().unwrap_or_default().to_owned();
        let r = rng.gen_range(min..=max);
        for pos in index::sample(&mut rng, clip.captions.len(), r) {
            clip.captions[pos] = Caption {
                text: speech.clone(),
                origin: CaptionOrigin::AsrReplacement,
            };
        }
    }
    Ok(out)
}

/// One ground-truth pair per test clip. Exactly `round(fraction * N)` pairs,
/// chosen uniformly among clips with usable speech, use the transcript as the
/// query; the rest use one human caption chosen uniformly.
pub fn build_mixed_test_set(corpus: &Corpus, fraction: f64, seed: u64) -> Result<Vec<EvalPair>, BuildError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(BuildError::BadFraction(fraction));
    }
    let test: Vec<_> = corpus.split(Split::Test).collect();
    if test.is_empty() {
        return Err(BuildError::EmptyTestSplit);
    }
    let needed = (fraction * test.len() as f64).round() as usize;
    let eligible: Vec<usize> = test
        .iter()
        .enumerate()
        .filter(|(_, c)| c.speech().is_some())
        .map(|(i, _)| i)
        .collect();
    if eligible.len() < needed {
        return Err(BuildError::InsufficientEligible {
            needed,
            available: eligible.len(),
            shortfall: needed - eligible.len(),
        });
    }

    let mut rng = seeded(seed);
    let mut speech = vec![false; test.len()];
    for pick in index::sample(&mut rng, eligible.len(), needed) {
        speech[eligible[pick]] = true;
    }

    test.iter()
        .zip(speech)
        .map(|(clip, use_speech)| {
            if use_speech {
                return Ok(EvalPair {
                    query_text: clip.speech().unwrap_or_default().to_owned(),
                    gt_clip_id: clip.clip_id.clone(),
                    query_kind: QueryKind::SpeechQuote,
                });
            }
            let human: Vec<&Caption> = clip.human_captions().collect();
            let caption = human
                .choose(&mut rng)
                .ok_or_else(|| BuildError::NoHumanCaption(clip.clip_id.clone()))?;
            Ok(EvalPair {
                query_text: caption.text.clone(),
                gt_clip_id: clip.clip_id.clone(),
                query_kind: QueryKind::Visual,
            })
        })
        .collect()
}

/// Wraps `quote` in double quotation marks and substitutes it for the single
/// `{q}` placeholder in `template`.
pub fn apply_reporting_template(quote: &str, template: &str) -> Result<String, BuildError> {
    let found = template.matches(PLACEHOLDER).count();
    if found != 1 {
        return Err(BuildError::BadTemplate {
            template: template.to_owned(),
            found,
        });
    }
    Ok(template.replacen(PLACEHOLDER, &format!("\"{quote}\""), 1))
}

#[derive(Debug, Clone)]
pub struct ClassifierSources {
    pub quotes: Vec<String>,
    pub transcripts: Vec<String>,
    pub visual_captions: Vec<String>,
    pub templates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassifierSplit {
    pub train: Vec<LabeledText>,
    pub test: Vec<LabeledText>,
}

/// Labelled corpus for the query classifier. Quotes are wrapped with a
/// randomly chosen template and, together with raw transcripts, form the
/// speech/quote class; captions form the visual class. The set is
/// de-duplicated by text, shuffled, then split per class so both halves keep
/// the class proportions.
pub fn build_classifier_corpus(
    sources: &ClassifierSources,
    split_ratio: f64,
    seed: u64,
) -> Result<ClassifierSplit, BuildError> {
    if !(split_ratio > 0.0 && split_ratio < 1.0) {
        return Err(BuildError::BadSplitRatio(split_ratio));
    }
    if !sources.quotes.is_empty() && sources.templates.is_empty() {
        return Err(BuildError::NoTemplates);
    }
    for t in &sources.templates {
        apply_reporting_template("", t)?;
    }

    let mut rng = seeded(seed);
    let mut all = Vec::with_capacity(
        sources.quotes.len() + sources.transcripts.len() + sources.visual_captions.len(),
    );
    for quote in &sources.quotes {
        let template = sources.templates.choose(&mut rng).expect("templates checked");
        all.push(LabeledText::new(
            apply_reporting_template(quote, template)?,
            QueryKind::SpeechQuote,
        ));
    }
    all.extend(
        sources
            .transcripts
            .iter()
            .map(|t| LabeledText::new(t.clone(), QueryKind::SpeechQuote)),
    );
    all.extend(
        sources
            .visual_captions
            .iter()
            .map(|t| LabeledText::new(t.clone(), QueryKind::Visual)),
    );

    let mut seen = HashSet::new();
    all.retain(|item| !item.text.trim().is_empty() && seen.insert(item.text.clone()));
    all.shuffle(&mut rng);

    let mut to_train = vec![false; all.len()];
    for kind in [QueryKind::Visual, QueryKind::SpeechQuote] {
        let members: Vec<usize> = (0..all.len()).filter(|&i| all[i].label == kind).collect();
        if members.is_empty() {
            return Err(BuildError::EmptyClass(kind));
        }
        let n_train = (split_ratio * members.len() as f64).round() as usize;
        for &i in &members[..n_train] {
            to_train[i] = true;
        }
    }
    let (train, test): (Vec<_>, Vec<_>) = all.into_iter().zip(to_train).partition(|(_, t)| *t);
    Ok(ClassifierSplit {
        train: train.into_iter().map(|(x, _)| x).collect(),
        test: test.into_iter().map(|(x, _)| x).collect(),
    })
}
