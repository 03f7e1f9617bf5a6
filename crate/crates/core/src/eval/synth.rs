//! Desk-scale stand-in for a captioned video dataset with ASR transcripts.
//!
//! Every clip has captions built from a common visual vocabulary plus one
//! clip-unique visual token; a fraction of clips also has a transcript built
//! from a disjoint speech vocabulary plus one clip-unique speech token. Clip
//! embeddings come from the hashing embedder: the baseline space sees only
//! the captions, the customised space sees captions and transcript. Because
//! the vocabularies are disjoint, a transcript query carries almost no signal
//! in the baseline space, which is the failure mode classifier routing fixes.

use std::collections::HashSet;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;

use super::lexicon::{self, pseudo_word, SPEECH_WORDS, VISUAL_WORDS};
use crate::corpus::{Caption, ClipRecord, Corpus, Split, Transcript};
use crate::dataset::{ClassifierSources, DEFAULT_TEMPLATES};
use crate::engine::QueryEmbedder;
use crate::rng::{seeded, Rng};
use crate::vector::{hash_embed, hash_slot, EmbeddingMatrix, VectorError, MIN_HASH_DIM};

pub const TRANSCRIPT_SOURCE_TAG: &str = "synthetic-asr";
/// Common words each vocabulary must keep besides the clip-unique tokens.
pub const MIN_COMMON_WORDS: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("n_clips must be at least 10 (got {0})")]
    TooFewClips(usize),
    #[error("{what} must lie in [0, 1] (got {value})")]
    BadFraction { what: &'static str, value: f64 },
    #[error("{which} vocabulary of {size} cannot give {unique} unique tokens plus {MIN_COMMON_WORDS} common words")]
    VocabTooSmall {
        which: &'static str,
        size: usize,
        unique: usize,
    },
    #[error("captions_per_clip must be positive")]
    NoCaptions,
    #[error(transparent)]
    Vector(#[from] VectorError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub n_clips: usize,
    pub transcript_fraction: f64,
    pub dim: usize,
    pub visual_vocab_size: usize,
    pub speech_vocab_size: usize,
    pub seed: u64,
    pub captions_per_clip: usize,
    pub test_fraction: f64,
}

impl SynthParams {
    /// Twenty captions per clip, half the clips in the test split, and 80
    /// common words per vocabulary.
    pub fn new(n_clips: usize, transcript_fraction: f64, dim: usize, seed: u64) -> Self {
        let n_speech = (transcript_fraction * n_clips as f64).round() as usize;
        Self {
            n_clips,
            transcript_fraction,
            dim,
            visual_vocab_size: n_clips + 80,
            speech_vocab_size: n_speech + 80,
            seed,
            captions_per_clip: 20,
            test_fraction: 0.5,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.n_clips < 10 {
            return Err(SynthError::TooFewClips(self.n_clips));
        }
        for (what, value) in [
            ("transcript_fraction", self.transcript_fraction),
            ("test_fraction", self.test_fraction),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(SynthError::BadFraction { what, value });
            }
        }
        if self.captions_per_clip == 0 {
            return Err(SynthError::NoCaptions);
        }
        if self.dim < MIN_HASH_DIM {
            return Err(VectorError::DimTooSmall(self.dim).into());
        }
        let n_speech = self.n_transcripts();
        for (which, size, unique) in [
            ("visual", self.visual_vocab_size, self.n_clips),
            ("speech", self.speech_vocab_size, n_speech),
        ] {
            if size < unique + MIN_COMMON_WORDS {
                return Err(SynthError::VocabTooSmall { which, size, unique });
            }
        }
        Ok(())
    }

    fn n_test(&self) -> usize {
        (self.test_fraction * self.n_clips as f64).round() as usize
    }

    fn n_transcripts(&self) -> usize {
        (self.transcript_fraction * self.n_clips as f64).round() as usize
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSet {
    pub params: SynthParams,
    pub corpus: Corpus,
    /// Clip embeddings from captions only.
    pub baseline: EmbeddingMatrix,
    /// Clip embeddings from captions and transcript.
    pub customised: EmbeddingMatrix,
    /// Query encoder matching both embedding spaces.
    pub embedder: QueryEmbedder,
    pub visual_common: Vec<String>,
    pub speech_common: Vec<String>,
}

impl SyntheticSet {
    /// All captions of a clip joined into one visual description.
    pub fn visual_text(clip: &ClipRecord) -> String {
        clip.captions
            .iter()
            .map(|c| c.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Draws words from `make` until `n` are accepted. A word is accepted when it
/// is unused and, while `buckets` still has room, its hash bucket is unused.
fn unique_words(
    n: usize,
    dim: usize,
    used: &mut HashSet<String>,
    buckets: &mut HashSet<usize>,
    rng: &mut Rng,
) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    let mut strict = buckets.len() + n <= dim;
    let mut misses = 0;
    while out.len() < n {
        let w = pseudo_word(rng);
        if used.contains(&w) {
            continue;
        }
        let bucket = hash_slot(&w, dim).0;
        if strict && buckets.contains(&bucket) {
            misses += 1;
            if misses > 100_000 {
                strict = false;
            }
            continue;
        }
        used.insert(w.clone());
        buckets.insert(bucket);
        out.push(w);
    }
    out
}

fn common_words(
    bank: &[&str],
    n: usize,
    used: &mut HashSet<String>,
    rng: &mut Rng,
) -> Vec<String> {
    let mut out: Vec<String> = bank.iter().take(n).map(|w| w.to_string()).collect();
    used.extend(out.iter().cloned());
    while out.len() < n {
        let w = pseudo_word(rng);
        if used.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// Sentence of `len` random common words with `unique` inserted at a random
/// position.
fn sentence(common: &[String], unique: &str, len: usize, rng: &mut Rng) -> String {
    let mut words: Vec<&str> = (0..len)
        .map(|_| common.choose(rng).unwrap().as_str())
        .collect();
    let at = rng.gen_range(0..=words.len());
    words.insert(at, unique);
    words.join(" ")
}

pub fn generate_synthetic_corpus(p: &SynthParams) -> Result<SyntheticSet, SynthError> {
    p.validate()?;
    let mut rng = seeded(p.seed);
    let n = p.n_clips;
    let n_test = p.n_test();
    let n_speech = p.n_transcripts();

    let mut is_test = vec![false; n];
    for i in index::sample(&mut rng, n, n_test) {
        is_test[i] = true;
    }
    let test_ids: Vec<usize> = (0..n).filter(|&i| is_test[i]).collect();
    let train_ids: Vec<usize> = (0..n).filter(|&i| !is_test[i]).collect();

    // transcripts split across train and test in proportion
    let speech_test = ((p.transcript_fraction * n_test as f64).round() as usize).min(n_speech);
    let speech_train = (n_speech - speech_test).min(train_ids.len());
    let speech_test = n_speech - speech_train;
    let mut has_speech = vec![false; n];
    for i in index::sample(&mut rng, test_ids.len(), speech_test) {
        has_speech[test_ids[i]] = true;
    }
    for i in index::sample(&mut rng, train_ids.len(), speech_train) {
        has_speech[train_ids[i]] = true;
    }

    let mut used = HashSet::new();
    let visual_common = common_words(VISUAL_WORDS, p.visual_vocab_size - n, &mut used, &mut rng);
    let speech_common = common_words(
        SPEECH_WORDS,
        p.speech_vocab_size - n_speech,
        &mut used,
        &mut rng,
    );

    // Unique tokens of test clips get hash buckets of their own (when dim
    // allows), so within the test gallery they only ever match their clip.
    let mut visual_buckets: HashSet<usize> =
        visual_common.iter().map(|w| hash_slot(w, p.dim).0).collect();
    let visual_test = unique_words(test_ids.len(), p.dim, &mut used, &mut visual_buckets, &mut rng);
    let visual_train = unique_words(
        train_ids.len(),
        p.dim,
        &mut used,
        &mut HashSet::new(),
        &mut rng,
    );
    let mut speech_buckets: HashSet<usize> =
        speech_common.iter().map(|w| hash_slot(w, p.dim).0).collect();
    let speech_unique = unique_words(n_speech, p.dim, &mut used, &mut speech_buckets, &mut rng);

    let mut visual_unique = vec![String::new(); n];
    for (i, w) in test_ids.iter().zip(visual_test) {
        visual_unique[*i] = w;
    }
    for (i, w) in train_ids.iter().zip(visual_train) {
        visual_unique[*i] = w;
    }

    // test clips take the first speech tokens so their buckets are distinct
    let speech_order: Vec<usize> = test_ids
        .iter()
        .chain(&train_ids)
        .copied()
        .filter(|&i| has_speech[i])
        .collect();
    let mut speech_token: Vec<Option<String>> = vec![None; n];
    for (i, w) in speech_order.into_iter().zip(speech_unique) {
        speech_token[i] = Some(w);
    }

    let width = n.to_string().len().max(4);
    let mut clips = Vec::with_capacity(n);
    for i in 0..n {
        let captions = (0..p.captions_per_clip)
            .map(|_| {
                let len = rng.gen_range(5..=8);
                Caption::human(sentence(&visual_common, &visual_unique[i], len, &mut rng))
            })
            .collect();
        let transcript = speech_token[i].as_ref().map(|token| {
            let len = rng.gen_range(15..=25);
            Transcript {
                text: sentence(&speech_common, token, len, &mut rng),
                source_tag: TRANSCRIPT_SOURCE_TAG.to_owned(),
            }
        });
        clips.push(ClipRecord {
            clip_id: format!("clip{i:0width$}"),
            split: if is_test[i] { Split::Test } else { Split::Train },
            captions,
            transcript,
        });
    }

    let mut baseline = Vec::with_capacity(n);
    let mut customised = Vec::with_capacity(n);
    for clip in &clips {
        let visual = SyntheticSet::visual_text(clip);
        let enriched = match clip.speech() {
            Some(speech) => format!("{visual} {speech}"),
            None => visual.clone(),
        };
        baseline.push((clip.clip_id.clone(), hash_embed(&visual, p.dim)?));
        customised.push((clip.clip_id.clone(), hash_embed(&enriched, p.dim)?));
    }

    Ok(SyntheticSet {
        params: *p,
        corpus: Corpus::new(clips),
        baseline: EmbeddingMatrix::from_vectors(p.dim, baseline)?,
        customised: EmbeddingMatrix::from_vectors(p.dim, customised)?,
        embedder: QueryEmbedder::Hash { dim: p.dim },
        visual_common,
        speech_common,
    })
}

/// Classifier inputs drawn from a synthetic set: `n_quotes` quotes in the
/// common speech vocabulary, every train-split transcript, and up to
/// `n_captions` train-split captions.
pub fn synthetic_classifier_sources(
    set: &SyntheticSet,
    n_quotes: usize,
    n_captions: usize,
    seed: u64,
) -> ClassifierSources {
    let mut rng = seeded(seed);
    let quotes = lexicon::distinct(n_quotes, &mut rng, |rng| {
        let len = rng.gen_range(4..=10);
        (0..len)
            .map(|_| set.speech_common.choose(rng).unwrap().as_str())
            .collect::<Vec<_>>()
            .join(" ")
    });
    let train: Vec<&ClipRecord> = set.corpus.split(Split::Train).collect();
    let transcripts = train
        .iter()
        .filter_map(|c| c.speech().map(str::to_owned))
        .collect();
    let mut captions: Vec<String> = train
        .iter()
        .flat_map(|c| c.human_captions().map(|cap| cap.text.clone()))
        .collect();
    captions.shuffle(&mut rng);
    captions.truncate(n_captions);
    ClassifierSources {
        quotes,
        transcripts,
        visual_captions: captions,
        templates: DEFAULT_TEMPLATES.iter().map(|t| t.to_string()).collect(),
    }
}

/// English classifier inputs: `n_quotes` quotes, `n_transcripts` spoken
/// sentences and `n_captions` visual captions, all distinct.
pub fn english_classifier_sources(
    n_quotes: usize,
    n_transcripts: usize,
    n_captions: usize,
    seed: u64,
) -> ClassifierSources {
    let mut rng = seeded(seed);
    ClassifierSources {
        quotes: lexicon::distinct(n_quotes, &mut rng, lexicon::english_quote),
        transcripts: lexicon::distinct(n_transcripts, &mut rng, lexicon::english_speech),
        visual_captions: lexicon::distinct(n_captions, &mut rng, lexicon::english_caption),
        templates: DEFAULT_TEMPLATES.iter().map(|t| t.to_string()).collect(),
    }
}
