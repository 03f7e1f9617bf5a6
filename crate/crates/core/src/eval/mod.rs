//! Retrieval metrics and the method x test-set comparison behind the
//! evaluation report.

pub mod lexicon;
pub mod synth;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::classifier::{fit, ClassifierError, ClassifierModel, Hyperparams, RuleDetector};
use crate::corpus::{Corpus, Split};
use crate::dataset::{build_classifier_corpus, build_mixed_test_set, BuildError, EvalPair};
use crate::engine::{route_for, Engine, EngineConfig, QueryEmbedder, RouteDecision, Router};
use crate::fulltext::{Bm25Params, FulltextIndex};
use crate::vector::{EmbeddingMatrix, ScoredHit};
use synth::{generate_synthetic_corpus, synthetic_classifier_sources, SynthError, SynthParams};

pub const DEFAULT_K_LIST: [usize; 3] = [1, 5, 10];

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no queries to score")]
    NoQueries,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("the gallery (test split) is empty")]
    EmptyGallery,
    #[error("routing mode classifier needs a trained model")]
    MissingModel,
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

/// 1-based rank of `gt` in `hits`, if it is there.
pub fn rank_of(hits: &[ScoredHit], gt: &str) -> Option<usize> {
    hits.iter().find(|h| h.clip_id == gt).map(|h| h.rank)
}

/// Fraction of queries whose ground truth ranks within the top `k`. A missing
/// rank counts as a miss.
pub fn recall_at_k(ranks: &[Option<usize>], k: usize) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    if ranks.is_empty() {
        return Err(EvalError::NoQueries);
    }
    let hits = ranks.iter().filter(|r| matches!(r, Some(r) if *r <= k)).count();
    Ok(hits as f64 / ranks.len() as f64)
}

/// Median rank, with a missing rank counted as `gallery_size + 1`. An even
/// count averages the two middle ranks.
pub fn median_rank(ranks: &[Option<usize>], gallery_size: usize) -> Result<f64, EvalError> {
    if ranks.is_empty() {
        return Err(EvalError::NoQueries);
    }
    let mut r: Vec<usize> = ranks.iter().map(|r| r.unwrap_or(gallery_size + 1)).collect();
    r.sort_unstable();
    let mid = r.len() / 2;
    Ok(if r.len() % 2 == 1 {
        r[mid] as f64
    } else {
        (r[mid - 1] + r[mid]) as f64 / 2.0
    })
}

/// A recall fraction as a percentage with one decimal, e.g. 0.542 -> 54.2.
pub fn percent(fraction: f64) -> f64 {
    (fraction * 1000.0).round() / 10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutingMode {
    Classifier,
    RuleBased,
    Oracle,
}

impl fmt::Display for RoutingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RoutingMode::Classifier => "classifier",
            RoutingMode::RuleBased => "rule_based",
            RoutingMode::Oracle => "oracle",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Vector search over embeddings from the original training data.
    Baseline,
    /// Vector search over embeddings from the augmented training data.
    Customised,
    /// Per-query routing between BM25 and the baseline embeddings.
    ClassifierRouted,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Baseline, Method::Customised, Method::ClassifierRouted];

    pub fn training_variant(self) -> &'static str {
        match self {
            Method::Customised => "customised",
            Method::Baseline | Method::ClassifierRouted => "original",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: Method,
    pub training_variant: String,
    pub test_set: String,
    /// Recall as a fraction in [0, 1], keyed by K.
    pub recall: BTreeMap<usize, f64>,
    pub median_rank: Option<f64>,
    /// Routing used by the run; only the classifier-routed rows depend on it.
    pub routing_mode: RoutingMode,
    pub n_queries: usize,
    /// Queries sent down a path other than the one their label calls for.
    pub misrouted: Option<usize>,
    /// Set when the cell could not be computed, e.g. a missing artifact.
    pub error: Option<String>,
}

impl EvalRow {
    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.recall.get(&k).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub seed: u64,
    pub corpus_size: usize,
    pub gallery_size: usize,
    pub k_list: Vec<usize>,
    pub routing_mode: RoutingMode,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metadata: ReportMetadata,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn row(&self, method: Method, test_set: &str) -> Option<&EvalRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.test_set == test_set)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Everything one comparison run reads. Absent embeddings or model leave
/// the affected cells with an error instead of aborting the run.
pub struct Comparison<'a> {
    pub corpus: &'a Corpus,
    pub baseline: Option<&'a EmbeddingMatrix>,
    pub customised: Option<&'a EmbeddingMatrix>,
    pub embedder: &'a QueryEmbedder,
    pub model: Option<&'a ClassifierModel>,
    pub test_sets: Vec<(String, Vec<EvalPair>)>,
    pub k_list: Vec<usize>,
    pub routing_mode: RoutingMode,
    pub threshold: f64,
    pub seed: u64,
}

struct Scored {
    ranks: Vec<Option<usize>>,
    misrouted: Option<usize>,
}

impl Comparison<'_> {
    /// Clips of the test split, which every query is ranked against.
    fn gallery_ids(&self) -> Vec<&str> {
        self.corpus
            .split(Split::Test)
            .map(|c| c.clip_id.as_str())
            .collect()
    }

    pub fn run(&self, timestamp: String) -> Result<EvalReport, EvalError> {
        if self.k_list.contains(&0) {
            return Err(EvalError::ZeroK);
        }
        let gallery: std::collections::HashSet<&str> = self.gallery_ids().into_iter().collect();
        if gallery.is_empty() {
            return Err(EvalError::EmptyGallery);
        }
        let restrict = |m: &EmbeddingMatrix| m.filtered(|id| gallery.contains(id));
        let baseline = self.baseline.map(restrict);
        let customised = self.customised.map(restrict);
        let fulltext = FulltextIndex::build(
            self.corpus
                .split(Split::Test)
                .filter_map(|c| c.speech().map(|s| (c.clip_id.clone(), s.to_owned()))),
            Bm25Params::default(),
        )
        .expect("clip ids are unique and parameters are the defaults");

        let mut rows = Vec::new();
        for (name, pairs) in &self.test_sets {
            for method in Method::ALL {
                let scored = match method {
                    Method::Baseline => self.score_vector(baseline.as_ref(), "baseline", pairs),
                    Method::Customised => self.score_vector(customised.as_ref(), "customised", pairs),
                    Method::ClassifierRouted => self.score_routed(baseline.as_ref(), &fulltext, pairs),
                };
                let mut row = EvalRow {
                    method,
                    training_variant: method.training_variant().to_owned(),
                    test_set: name.clone(),
                    recall: BTreeMap::new(),
                    median_rank: None,
                    routing_mode: self.routing_mode,
                    n_queries: pairs.len(),
                    misrouted: None,
                    error: None,
                };
                match scored.and_then(|s| {
                    let recall = self
                        .k_list
                        .iter()
                        .map(|&k| Ok((k, recall_at_k(&s.ranks, k)?)))
                        .collect::<Result<BTreeMap<_, _>, EvalError>>()
                        .map_err(|e| e.to_string())?;
                    let medr = median_rank(&s.ranks, gallery.len()).map_err(|e| e.to_string())?;
                    Ok((recall, medr, s.misrouted))
                }) {
                    Ok((recall, medr, misrouted)) => {
                        row.recall = recall;
                        row.median_rank = Some(medr);
                        row.misrouted = misrouted;
                    }
                    Err(e) => row.error = Some(e),
                }
                rows.push(row);
            }
        }

        Ok(EvalReport {
            metadata: ReportMetadata {
                seed: self.seed,
                corpus_size: self.corpus.len(),
                gallery_size: gallery.len(),
                k_list: self.k_list.clone(),
                routing_mode: self.routing_mode,
                timestamp,
            },
            rows,
        })
    }

    fn score_vector(
        &self,
        vectors: Option<&EmbeddingMatrix>,
        what: &str,
        pairs: &[EvalPair],
    ) -> Result<Scored, String> {
        let vectors = vectors.ok_or_else(|| format!("{what} embeddings not provided"))?;
        let ranks = pairs
            .iter()
            .map(|p| {
                // a query without an embedding retrieves nothing
                let Ok(q) = self.embedder.embed(&p.query_text) else {
                    return Ok(None);
                };
                let hits = vectors.search(&q, vectors.len()).map_err(|e| e.to_string())?;
                Ok(rank_of(&hits, &p.gt_clip_id))
            })
            .collect::<Result<_, String>>()?;
        Ok(Scored {
            ranks,
            misrouted: None,
        })
    }

    fn score_routed(
        &self,
        baseline: Option<&EmbeddingMatrix>,
        fulltext: &FulltextIndex,
        pairs: &[EvalPair],
    ) -> Result<Scored, String> {
        let vectors = baseline.ok_or("baseline embeddings not provided")?;
        let router = match self.routing_mode {
            RoutingMode::Classifier => Router::Trained(
                self.model
                    .ok_or_else(|| EvalError::MissingModel.to_string())?
                    .clone(),
            ),
            // oracle decisions bypass the router entirely
            RoutingMode::RuleBased | RoutingMode::Oracle => Router::RuleBased(RuleDetector::default()),
        };
        let config = EngineConfig {
            threshold: self.threshold,
            fallback_on_empty: false,
            ..EngineConfig::default()
        };
        let engine = Engine::new(
            router,
            fulltext.clone(),
            vectors.clone(),
            self.embedder.clone(),
            config,
        )
        .map_err(|e| e.to_string())?;
        let k = vectors.len();
        let mut misrouted = 0;
        let mut ranks = Vec::with_capacity(pairs.len());
        for p in pairs {
            let wanted = route_for(p.query_kind);
            let decision = match self.routing_mode {
                RoutingMode::Oracle => RouteDecision {
                    route: wanted,
                    label_confidence: 1.0,
                    fallback_used: false,
                },
                _ => engine.route_query(&p.query_text),
            };
            if decision.route != wanted {
                misrouted += 1;
            }
            let rank = match engine.search_decided(decision, &p.query_text, k) {
                Ok((_, hits)) => rank_of(&hits, &p.gt_clip_id),
                Err(crate::engine::EngineError::NoQueryEmbedding(_)) => None,
                Err(e) => return Err(e.to_string()),
            };
            ranks.push(rank);
        }
        Ok(Scored {
            ranks,
            misrouted: Some(misrouted),
        })
    }
}

/// Settings of a full synthetic experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticExperiment {
    pub synth: SynthParams,
    pub routing_mode: RoutingMode,
    /// Share of speech/quote pairs in the mixed test set.
    pub mixed_fraction: f64,
    pub classifier: Hyperparams,
    pub n_quotes: usize,
    pub n_captions: usize,
}

impl SyntheticExperiment {
    pub fn new(synth: SynthParams, routing_mode: RoutingMode) -> Self {
        Self {
            synth,
            routing_mode,
            mixed_fraction: 0.5,
            classifier: Hyperparams::with_seed(synth.seed),
            n_quotes: 1000,
            n_captions: 2000,
        }
    }
}

pub const VISUAL_TEST_SET: &str = "visual";
pub const MIXED_TEST_SET: &str = "mixed";

/// Generates a synthetic corpus, builds the visual-only and mixed test sets,
/// trains the router if needed and runs the comparison.
pub fn run_synthetic_experiment(
    exp: &SyntheticExperiment,
    k_list: &[usize],
    timestamp: String,
) -> Result<EvalReport, EvalError> {
    let set = generate_synthetic_corpus(&exp.synth)?;
    let seed = exp.synth.seed;
    let visual = build_mixed_test_set(&set.corpus, 0.0, seed)?;
    let mixed = build_mixed_test_set(&set.corpus, exp.mixed_fraction, seed)?;
    let model = match exp.routing_mode {
        RoutingMode::Classifier => {
            let sources = synthetic_classifier_sources(&set, exp.n_quotes, exp.n_captions, seed);
            let split = build_classifier_corpus(&sources, 0.8, seed)?;
            Some(fit(&split.train, &exp.classifier)?)
        }
        _ => None,
    };
    Comparison {
        corpus: &set.corpus,
        baseline: Some(&set.baseline),
        customised: Some(&set.customised),
        embedder: &set.embedder,
        model: model.as_ref(),
        test_sets: vec![
            (VISUAL_TEST_SET.to_owned(), visual),
            (MIXED_TEST_SET.to_owned(), mixed),
        ],
        k_list: k_list.to_vec(),
        routing_mode: exp.routing_mode,
        threshold: crate::classifier::DEFAULT_THRESHOLD,
        seed,
    }
    .run(timestamp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hit(id: &str, rank: usize) -> ScoredHit {
        ScoredHit {
            clip_id: id.to_owned(),
            score: 1.0 / rank as f64,
            rank,
        }
    }

    #[test]
    fn recall_counts_hits_within_k() {
        let ranks = [Some(1), Some(3), None, Some(6)];
        assert_eq!(recall_at_k(&ranks, 1).unwrap(), 0.25);
        assert_eq!(recall_at_k(&ranks, 5).unwrap(), 0.5);
        assert_eq!(recall_at_k(&ranks, 10).unwrap(), 0.75);
        assert!(matches!(recall_at_k(&[], 5), Err(EvalError::NoQueries)));
        assert!(matches!(recall_at_k(&ranks, 0), Err(EvalError::ZeroK)));
    }

    #[test]
    fn percent_rounds_to_one_decimal() {
        let ranks: Vec<Option<usize>> = (0..1000).map(|i| (i < 542).then_some(1)).collect();
        assert_eq!(percent(recall_at_k(&ranks, 1).unwrap()), 54.2);
    }

    #[test]
    fn median_rank_counts_misses_past_the_gallery() {
        assert_eq!(median_rank(&[Some(1), Some(3), Some(9)], 10).unwrap(), 3.0);
        assert_eq!(median_rank(&[Some(2), None], 10).unwrap(), 6.5);
    }

    #[test]
    fn rank_of_finds_the_ground_truth() {
        let hits = [hit("a", 1), hit("b", 2)];
        assert_eq!(rank_of(&hits, "b"), Some(2));
        assert_eq!(rank_of(&hits, "c"), None);
    }

    #[test]
    fn missing_artifacts_fail_single_cells() {
        let set = generate_synthetic_corpus(&SynthParams::new(40, 0.5, 64, 5)).unwrap();
        let pairs = build_mixed_test_set(&set.corpus, 0.5, 5).unwrap();
        let report = Comparison {
            corpus: &set.corpus,
            baseline: Some(&set.baseline),
            customised: None,
            embedder: &set.embedder,
            model: None,
            test_sets: vec![("mixed".into(), pairs)],
            k_list: DEFAULT_K_LIST.to_vec(),
            routing_mode: RoutingMode::Classifier,
            threshold: 0.5,
            seed: 5,
        }
        .run("t".into())
        .unwrap();
        assert_eq!(report.rows.len(), 3);
        assert!(report.row(Method::Baseline, "mixed").unwrap().error.is_none());
        assert!(report.row(Method::Customised, "mixed").unwrap().error.is_some());
        assert!(report.row(Method::ClassifierRouted, "mixed").unwrap().error.is_some());
    }
}
