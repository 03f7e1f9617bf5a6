//! Loads everything a running service needs into one read-only bundle.

use anyhow::{bail, Context};
use avarchive_core::classifier::{ClassifierModel, RuleDetector};
use avarchive_core::corpus::{load_corpus, Corpus};
use avarchive_core::datafication::DescriptorStore;
use avarchive_core::engine::{ClassifierMode, Engine, QueryEmbedder, Router};
use avarchive_core::fulltext::{Bm25Params, FulltextIndex};
use avarchive_core::vector::load_embeddings;

use crate::config::ServiceConfig;

pub struct Loaded {
    pub engine: Engine,
    pub corpus: Corpus,
    pub descriptors: DescriptorStore,
}

/// BM25 index over the transcripts of every clip with usable speech.
pub fn transcript_index(corpus: &Corpus, params: Bm25Params) -> anyhow::Result<FulltextIndex> {
    Ok(FulltextIndex::build(
        corpus
            .clips
            .iter()
            .filter_map(|c| c.speech().map(|s| (c.clip_id.clone(), s.to_owned()))),
        params,
    )?)
}

pub fn load(cfg: &ServiceConfig) -> anyhow::Result<Loaded> {
    cfg.check()?;
    let corpus_path = cfg.corpus.as_ref().expect("checked");
    let corpus = load_corpus(corpus_path).with_context(|| format!("loading corpus {}", corpus_path.display()))?;
    let emb_path = cfg.embeddings.as_ref().expect("checked");
    let vectors = load_embeddings(emb_path).with_context(|| format!("loading embeddings {}", emb_path.display()))?;
    if let Some(id) = vectors.ids().iter().find(|id| corpus.get(id).is_none()) {
        bail!("embeddings mention clip {id}, which is not in the corpus");
    }
    let fulltext = match &cfg.fulltext {
        Some(p) => FulltextIndex::load(p).with_context(|| format!("loading full-text snapshot {}", p.display()))?,
        None => transcript_index(&corpus, Bm25Params::default())?,
    };
    let router = match cfg.engine.classifier_mode {
        ClassifierMode::RuleBased => Router::RuleBased(RuleDetector::default()),
        ClassifierMode::Trained => {
            let Some(p) = &cfg.classifier else {
                bail!("classifier_mode is trained but no classifier path is configured");
            };
            Router::Trained(ClassifierModel::load(p).with_context(|| format!("loading classifier {}", p.display()))?)
        }
    };
    let mut descriptors = match &cfg.descriptors {
        Some(p) => DescriptorStore::load(p).with_context(|| format!("loading descriptors {}", p.display()))?,
        None => DescriptorStore::new(),
    };
    if let Some(d) = descriptors
        .records()
        .iter()
        .find(|d| d.clip_id.as_deref().is_some_and(|id| corpus.get(id).is_none()))
    {
        bail!("descriptor {} refers to a clip that is not in the corpus", d.descriptor_id);
    }
    descriptors.attach_corpus(corpus.clips.iter().map(|c| c.clip_id.as_str()));
    let embedder = QueryEmbedder::Hash { dim: vectors.dim() };
    let engine = Engine::new(router, fulltext, vectors, embedder, cfg.engine)?;
    Ok(Loaded {
        engine,
        corpus,
        descriptors,
    })
}
