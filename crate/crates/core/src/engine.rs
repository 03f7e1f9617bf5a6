//! Classifier-routed retrieval: each query is labelled speech/quote or
//! visual, then answered by the transcript index or the embedding index.
//! Results from the two paths are never merged.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierModel, RuleDetector, DEFAULT_THRESHOLD};
use crate::dataset::QueryKind;
pub use crate::datafication::Route;
use crate::fulltext::FulltextIndex;
use crate::vector::{hash_embed, EmbeddingMatrix, ScoredHit, VectorError};

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("no query embedding available for {0:?}")]
    NoQueryEmbedding(String),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("threshold {0} must be non-negative")]
    BadThreshold(f64),
    #[error("classifier mode is trained but no model was supplied")]
    MissingModel,
    #[error("query embedder dimension {embedder} does not match index dimension {index}")]
    DimMismatch { embedder: usize, index: usize },
    #[error(transparent)]
    Vector(#[from] VectorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierMode {
    Trained,
    RuleBased,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub threshold: f64,
    pub k_default: usize,
    pub fallback_on_empty: bool,
    pub classifier_mode: ClassifierMode,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            k_default: 10,
            fallback_on_empty: true,
            classifier_mode: ClassifierMode::Trained,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteDecision {
    pub route: Route,
    pub label_confidence: f64,
    pub fallback_used: bool,
}

impl RouteDecision {
    fn from_label(label: QueryKind, confidence: f64) -> Self {
        Self {
            route: route_for(label),
            label_confidence: confidence,
            fallback_used: false,
        }
    }
}

pub fn route_for(label: QueryKind) -> Route {
    match label {
        QueryKind::SpeechQuote => Route::Fulltext,
        QueryKind::Visual => Route::Vector,
    }
}

#[derive(Debug, Clone)]
pub enum Router {
    Trained(ClassifierModel),
    RuleBased(RuleDetector),
}

/// Turns query text into a vector in the clip embedding space.
#[derive(Debug, Clone)]
pub enum QueryEmbedder {
    /// Feature-hashing simulator.
    Hash { dim: usize },
    /// Precomputed query vectors keyed by exact query text.
    Lookup { dim: usize, vectors: HashMap<String, Vec<f64>> },
}

impl QueryEmbedder {
    pub fn dim(&self) -> usize {
        match self {
            QueryEmbedder::Hash { dim } | QueryEmbedder::Lookup { dim, .. } => *dim,
        }
    }

    pub fn embed(&self, text: &str) -> Result<Vec<f64>, EngineError> {
        match self {
            QueryEmbedder::Hash { dim } => hash_embed(text, *dim).map_err(|e| match e {
                VectorError::EmptyText => EngineError::NoQueryEmbedding(text.to_owned()),
                other => other.into(),
            }),
            QueryEmbedder::Lookup { vectors, .. } => vectors
                .get(text)
                .cloned()
                .ok_or_else(|| EngineError::NoQueryEmbedding(text.to_owned())),
        }
    }
}

/// Immutable bundle of router, both indexes and configuration.
#[derive(Debug, Clone)]
pub struct Engine {
    router: Router,
    fulltext: FulltextIndex,
    vectors: EmbeddingMatrix,
    embedder: QueryEmbedder,
    config: EngineConfig,
}

impl Engine {
    pub fn new(
        router: Router,
        fulltext: FulltextIndex,
        vectors: EmbeddingMatrix,
        embedder: QueryEmbedder,
        mut config: EngineConfig,
    ) -> Result<Self, EngineError> {
        // thresholds above 1 are allowed and disable the full-text route
        if !(config.threshold >= 0.0) {
            return Err(EngineError::BadThreshold(config.threshold));
        }
        if embedder.dim() != vectors.dim() {
            return Err(EngineError::DimMismatch {
                embedder: embedder.dim(),
                index: vectors.dim(),
            });
        }
        config.classifier_mode = match router {
            Router::Trained(_) => ClassifierMode::Trained,
            Router::RuleBased(_) => ClassifierMode::RuleBased,
        };
        Ok(Self {
            router,
            fulltext,
            vectors,
            embedder,
            config,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn fulltext(&self) -> &FulltextIndex {
        &self.fulltext
    }

    pub fn vectors(&self) -> &EmbeddingMatrix {
        &self.vectors
    }

    pub fn embedder(&self) -> &QueryEmbedder {
        &self.embedder
    }

    pub fn router(&self) -> &Router {
        &self.router
    }

    pub fn route_query(&self, query: &str) -> RouteDecision {
        match &self.router {
            Router::Trained(model) => {
                let p = model.predict_with_threshold(query, self.config.threshold);
                RouteDecision::from_label(p.label, p.confidence)
            }
            Router::RuleBased(rules) => RouteDecision::from_label(rules.detect(query), 1.0),
        }
    }

    /// Searches one path directly, bypassing classification.
    pub fn search_route(&self, route: Route, query: &str, k: usize) -> Result<Vec<ScoredHit>, EngineError> {
        if k == 0 {
            return Err(EngineError::ZeroK);
        }
        match route {
            Route::Fulltext => Ok(self.fulltext.search(query, k)),
            Route::Vector => {
                let q = self.embedder.embed(query)?;
                Ok(self.vectors.search(&q, k)?)
            }
        }
    }

    pub fn search(&self, query: &str, k: usize) -> Result<(RouteDecision, Vec<ScoredHit>), EngineError> {
        let decision = self.route_query(query);
        self.search_decided(decision, query, k)
    }

    /// Dispatches an already-made routing decision, applying the empty
    /// full-text fallback when configured.
    pub fn search_decided(
        &self,
        mut decision: RouteDecision,
        query: &str,
        k: usize,
    ) -> Result<(RouteDecision, Vec<ScoredHit>), EngineError> {
        let hits = self.search_route(decision.route, query, k)?;
        if hits.is_empty() && decision.route == Route::Fulltext && self.config.fallback_on_empty {
            decision.route = Route::Vector;
            decision.fallback_used = true;
            let hits = self.search_route(Route::Vector, query, k)?;
            return Ok((decision, hits));
        }
        Ok((decision, hits))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fulltext::Bm25Params;

    const DIM: usize = 64;

    fn engine(router: Router, fallback: bool) -> Engine {
        let transcripts = [
            ("c1", "we will rebuild the bridge next year"),
            ("c2", "thank you all for coming tonight"),
        ];
        let visual = [
            ("c1", "a man rides a horse on a beach"),
            ("c2", "a choir sings in a church"),
            ("c3", "a dog chases a ball in a park"),
        ];
        let fulltext = FulltextIndex::build(transcripts, Bm25Params::default()).unwrap();
        let vectors = EmbeddingMatrix::from_vectors(
            DIM,
            visual.iter().map(|(id, t)| (*id, hash_embed(t, DIM).unwrap())),
        )
        .unwrap();
        let config = EngineConfig {
            fallback_on_empty: fallback,
            ..EngineConfig::default()
        };
        Engine::new(router, fulltext, vectors, QueryEmbedder::Hash { dim: DIM }, config).unwrap()
    }

    fn rules() -> Router {
        Router::RuleBased(RuleDetector::default())
    }

    #[test]
    fn rule_routing() {
        let e = engine(rules(), true);
        assert_eq!(e.route_query("\"hello\", she said").route, Route::Fulltext);
        assert_eq!(e.route_query("a man rides a horse").route, Route::Vector);
        assert_eq!(e.config().classifier_mode, ClassifierMode::RuleBased);
    }

    #[test]
    fn quote_query_hits_transcript() {
        let e = engine(rules(), true);
        let (d, hits) = e.search("\"we will rebuild\", said the mayor", 5).unwrap();
        assert_eq!(d.route, Route::Fulltext);
        assert!(!d.fallback_used);
        assert_eq!(hits[0].clip_id, "c1");
        assert_eq!(hits[0].rank, 1);
    }

    #[test]
    fn empty_fulltext_falls_back_to_vector() {
        let e = engine(rules(), true);
        let q = "\"zebra crossing\", she said";
        let (d, hits) = e.search(q, 2).unwrap();
        assert_eq!(d.route, Route::Vector);
        assert!(d.fallback_used);
        assert_eq!(hits, e.search_route(Route::Vector, q, 2).unwrap());

        let e = engine(rules(), false);
        let (d, hits) = e.search(q, 2).unwrap();
        assert_eq!(d.route, Route::Fulltext);
        assert!(!d.fallback_used);
        assert!(hits.is_empty());
    }

    #[test]
    fn visual_query_equals_direct_vector_search() {
        let e = engine(rules(), true);
        let q = "a dog plays with a ball";
        let (d, hits) = e.search(q, 3).unwrap();
        assert_eq!(d.route, Route::Vector);
        let direct = e.vectors().search(&hash_embed(q, DIM).unwrap(), 3).unwrap();
        assert_eq!(hits, direct);
        assert_eq!(hits[0].clip_id, "c3");
    }

    #[test]
    fn missing_query_embedding_is_an_error() {
        let e = engine(rules(), true);
        assert!(matches!(
            e.search("!!!", 3),
            Err(EngineError::NoQueryEmbedding(_))
        ));
        assert!(matches!(e.search("a dog", 0), Err(EngineError::ZeroK)));

        let lookup = QueryEmbedder::Lookup {
            dim: DIM,
            vectors: HashMap::from([("known".to_owned(), hash_embed("a dog", DIM).unwrap())]),
        };
        assert!(lookup.embed("known").is_ok());
        assert!(matches!(
            lookup.embed("other"),
            Err(EngineError::NoQueryEmbedding(_))
        ));
    }

    #[test]
    fn embedder_dim_must_match() {
        let vectors = EmbeddingMatrix::empty(DIM).unwrap();
        let fulltext = FulltextIndex::build(Vec::<(String, String)>::new(), Bm25Params::default()).unwrap();
        assert!(matches!(
            Engine::new(
                rules(),
                fulltext,
                vectors,
                QueryEmbedder::Hash { dim: 32 },
                EngineConfig::default()
            ),
            Err(EngineError::DimMismatch { .. })
        ));
    }
}
