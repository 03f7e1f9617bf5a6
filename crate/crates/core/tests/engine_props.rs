//! Engine composition and evaluation metrics over a synthetic corpus.

use avarchive_core::classifier::{evaluate_accuracy, fit, Hyperparams, RuleDetector};
use avarchive_core::corpus::Split;
use avarchive_core::dataset::{build_classifier_corpus, build_mixed_test_set, QueryKind};
use avarchive_core::engine::{route_for, Engine, EngineConfig, Route, Router};
use avarchive_core::eval::synth::{english_classifier_sources, generate_synthetic_corpus, SynthParams, SyntheticSet};
use avarchive_core::eval::{rank_of, recall_at_k};
use avarchive_core::fulltext::{Bm25Params, FulltextIndex};
use proptest::prelude::*;

fn synthetic() -> SyntheticSet {
    generate_synthetic_corpus(&SynthParams::new(80, 0.5, 128, 4)).unwrap()
}

fn engine(set: &SyntheticSet, router: Router, config: EngineConfig) -> Engine {
    let fulltext = FulltextIndex::build(
        set.corpus
            .clips
            .iter()
            .filter_map(|c| c.speech().map(|s| (c.clip_id.clone(), s.to_owned()))),
        Bm25Params::default(),
    )
    .unwrap();
    Engine::new(router, fulltext, set.baseline.clone(), set.embedder.clone(), config).unwrap()
}

#[test]
fn engine_results_equal_the_chosen_path() {
    let set = synthetic();
    let e = engine(&set, Router::RuleBased(RuleDetector::default()), EngineConfig::default());
    let pairs = build_mixed_test_set(&set.corpus, 0.5, 4).unwrap();
    let quoted = pairs
        .iter()
        .map(|p| match p.query_kind {
            QueryKind::SpeechQuote => format!("\"{}\" she said", p.query_text),
            QueryKind::Visual => p.query_text.clone(),
        });
    for q in quoted {
        let (d, hits) = e.search(&q, 7).unwrap();
        assert!(!d.fallback_used);
        assert_eq!(hits, e.search_route(d.route, &q, 7).unwrap());
        let direct = match d.route {
            Route::Fulltext => e.fulltext().search(&q, 7),
            Route::Vector => e.vectors().search(&set.embedder.embed(&q).unwrap(), 7).unwrap(),
        };
        assert_eq!(hits, direct);
    }
}

#[test]
fn threshold_extremes_force_a_route() {
    let set = synthetic();
    let sources = english_classifier_sources(300, 150, 300, 3);
    let split = build_classifier_corpus(&sources, 0.8, 3).unwrap();
    let model = fit(&split.train, &Hyperparams::with_seed(3)).unwrap();
    let with = |threshold| {
        engine(
            &set,
            Router::Trained(model.clone()),
            EngineConfig {
                threshold,
                ..EngineConfig::default()
            },
        )
    };
    let high = with(1.01);
    let low = with(0.0);
    for x in split.test.iter().take(50) {
        assert_eq!(high.route_query(&x.text).route, Route::Vector);
        let logits = model.logits(&x.text);
        if logits[0] != logits[1] {
            assert_eq!(low.route_query(&x.text).route, Route::Fulltext);
        }
    }
}

#[test]
fn english_classifier_reaches_target_accuracy() {
    let sources = english_classifier_sources(2000, 1000, 2000, 42);
    let split = build_classifier_corpus(&sources, 0.8, 42).unwrap();
    let hp = Hyperparams::with_seed(42);
    let a = fit(&split.train, &hp).unwrap();
    let acc = evaluate_accuracy(&a, &split.test).unwrap();
    assert!(acc >= 0.90, "accuracy {acc}");
    let b = fit(&split.train, &hp).unwrap();
    assert_eq!(a.params(), b.params());
}

#[test]
fn classifier_routes_match_labels_on_synthetic_queries() {
    let set = synthetic();
    let sources = avarchive_core::eval::synth::synthetic_classifier_sources(&set, 400, 800, 4);
    let split = build_classifier_corpus(&sources, 0.8, 4).unwrap();
    let model = fit(&split.train, &Hyperparams::with_seed(4)).unwrap();
    let e = engine(&set, Router::Trained(model), EngineConfig::default());
    let pairs = build_mixed_test_set(&set.corpus, 0.5, 4).unwrap();
    let right = pairs
        .iter()
        .filter(|p| e.route_query(&p.query_text).route == route_for(p.query_kind))
        .count();
    assert!(right as f64 >= 0.9 * pairs.len() as f64, "{right}/{}", pairs.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn recall_is_monotone_in_k(seed in any::<u64>(), k in 1usize..40) {
        let set = generate_synthetic_corpus(&SynthParams::new(40, 0.5, 32, seed)).unwrap();
        let gallery = set.baseline.filtered(|id| set.corpus.get(id).unwrap().split == Split::Test);
        let pairs = build_mixed_test_set(&set.corpus, 0.5, seed).unwrap();
        let ranks: Vec<Option<usize>> = pairs
            .iter()
            .map(|p| {
                let q = set.embedder.embed(&p.query_text).ok()?;
                rank_of(&gallery.search(&q, gallery.len()).unwrap(), &p.gt_clip_id)
            })
            .collect();
        let a = recall_at_k(&ranks, k).unwrap();
        let b = recall_at_k(&ranks, k + 1).unwrap();
        prop_assert!(a <= b);
        prop_assert_eq!(recall_at_k(&ranks, gallery.len()).unwrap(),
            ranks.iter().filter(|r| r.is_some()).count() as f64 / ranks.len() as f64);
    }
}
