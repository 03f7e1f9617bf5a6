//! BM25 scores checked against a naive implementation that recomputes every
//! statistic from the raw documents for each query.

use avarchive_core::fulltext::{Bm25Params, FulltextIndex};
use proptest::prelude::*;

fn tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Score of every document with a positive score, sorted by score desc then
/// id asc.
fn oracle(docs: &[(String, String)], query: &str, k1: f64, b: f64) -> Vec<(String, f64)> {
    let docs: Vec<(&str, Vec<String>)> = docs.iter().map(|(id, t)| (id.as_str(), tokens(t))).collect();
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|(_, t)| t.len()).sum::<usize>() as f64 / n;
    let mut out = Vec::new();
    for (id, doc) in &docs {
        let mut score = 0.0;
        for q in tokens(query) {
            let df = docs.iter().filter(|(_, d)| d.contains(&q)).count() as f64;
            let tf = doc.iter().filter(|t| **t == q).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            let dl = doc.len() as f64;
            score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
        }
        if score > 0.0 {
            out.push((id.to_string(), score));
        }
    }
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    out
}

fn check(docs: &[(String, String)], query: &str, k: usize) -> Result<(), TestCaseError> {
    let index = FulltextIndex::build(docs.iter().cloned(), Bm25Params::default()).unwrap();
    let hits = index.search(query, k);
    let mut want = oracle(docs, query, 1.2, 0.75);
    want.truncate(k);
    prop_assert_eq!(hits.len(), want.len());
    for (i, (hit, (id, score))) in hits.iter().zip(&want).enumerate() {
        prop_assert_eq!(hit.rank, i + 1);
        prop_assert!((hit.score - score).abs() <= 1e-9, "{} vs {}", hit.score, score);
        prop_assert_eq!(&hit.clip_id, id);
    }
    Ok(())
}

fn fixture() -> Vec<(String, String)> {
    [("d1", "a a b"), ("d2", "a c"), ("d3", "c c c b")]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect()
}

#[test]
fn three_document_fixture() {
    let docs = fixture();
    let want = oracle(&docs, "a b", 1.2, 0.75);
    let index = FulltextIndex::build(docs.clone(), Bm25Params::default()).unwrap();
    let hits = index.search("a b", 10);
    let got: Vec<(&str, f64)> = hits.iter().map(|h| (h.clip_id.as_str(), h.score)).collect();
    assert_eq!(got.len(), 3);
    for ((id, s), (wid, ws)) in got.iter().zip(&want) {
        assert_eq!(id, wid);
        assert!((s - ws).abs() <= 1e-9);
    }
    assert_eq!(got[0].0, "d1");
    assert!((index.avgdl() - 3.0).abs() < 1e-12);
}

#[test]
fn parameters_change_scores_like_the_oracle() {
    let docs = fixture();
    let params = Bm25Params { k1: 2.0, b: 0.3 };
    let index = FulltextIndex::build(docs.clone(), params).unwrap();
    let hits = index.search("c b", 10);
    let want = oracle(&docs, "c b", 2.0, 0.3);
    assert_eq!(hits.len(), want.len());
    for (h, (id, s)) in hits.iter().zip(&want) {
        assert_eq!(&h.clip_id, id);
        assert!((h.score - s).abs() <= 1e-9);
    }
}

#[test]
fn repeated_query_tokens_count_per_occurrence() {
    let docs = fixture();
    let index = FulltextIndex::build(docs, Bm25Params::default()).unwrap();
    let once = index.search("b", 10);
    let twice = index.search("b b", 10);
    for (a, b) in once.iter().zip(&twice) {
        assert!((2.0 * a.score - b.score).abs() < 1e-12);
    }
}

#[test]
fn unmatched_query_returns_nothing() {
    let index = FulltextIndex::build(fixture(), Bm25Params::default()).unwrap();
    assert!(index.search("zebra", 10).is_empty());
    assert!(index.search("", 10).is_empty());
}

fn corpus() -> impl Strategy<Value = Vec<(String, String)>> {
    let word = prop::sample::select(vec!["a", "b", "c", "d", "e", "f", "g", "h", "ij", "kl"]);
    let doc = prop::collection::vec(word, 0..12).prop_map(|w| w.join(" "));
    prop::collection::vec(doc, 1..=100).prop_map(|docs| {
        docs.into_iter()
            .enumerate()
            .map(|(i, t)| (format!("doc{i:03}"), t))
            .collect()
    })
}

fn query() -> impl Strategy<Value = String> {
    let word = prop::sample::select(vec!["a", "b", "c", "d", "e", "zz", "ij"]);
    prop::collection::vec(word, 1..5).prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_oracle_on_random_corpora(docs in corpus(), q in query(), k in 1usize..20) {
        check(&docs, &q, k)?;
    }
}
