//! Endpoint contracts over a running server on synthetic artifacts.

mod common;

use std::sync::Arc;

use avarchive_core::datafication::{Action, InteractionLog};
use avarchive_core::engine::Route;
use avarchive_service::api::{AppState, ClipResponse, InteractionCreated, RunningServer, SearchResponse};
use reqwest::StatusCode;
use serde_json::{json, Value};

use common::{start, synth_into, url};

#[tokio::test(flavor = "multi_thread")]
async fn search_contract() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth_into(dir.path(), 60, 3);
    let server = start(&cfg).await;
    let client = reqwest::Client::new();

    let res = client
        .get(url(&server, "/search"))
        .query(&[("q", "man riding horse on beach"), ("k", "5")])
        .send()
        .await
        .unwrap();
    assert_eq!(res.status(), StatusCode::OK);
    let body: SearchResponse = res.json().await.unwrap();
    assert_eq!(body.route, Route::Vector);
    assert_eq!(body.results.len(), 5);
    assert_eq!(body.results.iter().map(|h| h.rank).collect::<Vec<_>>(), [1, 2, 3, 4, 5]);

    for (q, k) in [("", "5"), ("  ", "5"), ("a dog", "0"), ("a dog", "-1"), ("a dog", "x")] {
        let res = client.get(url(&server, "/search")).query(&[("q", q), ("k", k)]).send().await.unwrap();
        assert_eq!(res.status(), StatusCode::BAD_REQUEST, "{q:?} {k:?}");
        let err: Value = res.json().await.unwrap();
        assert!(err["error"].is_string());
    }
    // missing k uses the configured default
    let res: SearchResponse = client
        .get(url(&server, "/search"))
        .query(&[("q", "people dancing")])
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(res.results.len(), 10);
    server.stop().await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn quote_query_is_logged_with_its_route() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth_into(dir.path(), 60, 4);
    let server = start(&cfg).await;
    let corpus = avarchive_core::corpus::load_corpus(cfg.corpus.as_ref().unwrap()).unwrap();
    let speech = corpus.clips.iter().find_map(|c| c.speech()).unwrap();
    let words: Vec<&str> = speech.split(' ').take(6).collect();
    let q = format!("\"{}\" he said", words.join(" "));

    let before = server.state.log().len();
    let body: SearchResponse = reqwest::Client::new()
        .get(url(&server, "/search"))
        .query(&[("q", q.as_str()), ("participant", "p-1")])
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(body.route, Route::Fulltext);
    let records = server.state.log().records();
    assert_eq!(records.len(), before + 1);
    let last = records.last().unwrap();
    assert_eq!(last.action, Action::Query);
    assert_eq!(last.route, Some(body.route));
    assert_eq!(last.query_text.as_deref(), Some(q.as_str()));
    assert_eq!(last.participant_id, "p-1");
    server.stop().await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn clip_lookup_includes_descriptors_and_lineage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth_into(dir.path(), 40, 5);
    let server = start(&cfg).await;
    let corpus = avarchive_core::corpus::load_corpus(cfg.corpus.as_ref().unwrap()).unwrap();
    let with_speech = corpus.clips.iter().find(|c| c.speech().is_some()).unwrap();
    let client = reqwest::Client::new();

    let res = client
        .get(url(&server, &format!("/clips/{}", with_speech.clip_id)))
        .send()
        .await
        .unwrap();
    assert_eq!(res.status(), StatusCode::OK);
    let clip: ClipResponse = res.json().await.unwrap();
    assert_eq!(clip.captions, with_speech.captions);
    assert_eq!(clip.transcript, with_speech.transcript);
    assert_eq!(clip.descriptors.len(), 3);
    let customised = clip
        .descriptors
        .iter()
        .find(|d| d.descriptor_id.starts_with("emb-customised"))
        .unwrap();
    // customised embedding -> transcript descriptor
    assert_eq!(customised.lineage.len(), 2);
    assert_eq!(customised.lineage[1].tool_name, "synthetic-asr");

    let res = client.get(url(&server, "/clips/nope")).send().await.unwrap();
    assert_eq!(res.status(), StatusCode::NOT_FOUND);
    let err: Value = res.json().await.unwrap();
    assert!(err["error"].as_str().unwrap().contains("nope"));
    server.stop().await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn interactions_validate_and_get_distinct_ids() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth_into(dir.path(), 20, 6);
    let server = start(&cfg).await;
    let client = reqwest::Client::new();
    let before = server.state.log().len();

    let res = client
        .post(url(&server, "/interactions"))
        .json(&json!({"participant_id": "p", "action": "click", "target_clip_id": "clip0001"}))
        .send()
        .await
        .unwrap();
    assert_eq!(res.status(), StatusCode::OK);
    assert_eq!(server.state.log().len(), before + 1);

    for bad in [
        json!({"action": "click"}),
        json!({"action": "query"}),
        json!({"action": "jump"}),
        json!({"action": "view", "extra": 1}),
    ] {
        let res = client.post(url(&server, "/interactions")).json(&bad).send().await.unwrap();
        assert_eq!(res.status(), StatusCode::UNPROCESSABLE_ENTITY, "{bad}");
    }
    assert_eq!(server.state.log().len(), before + 1);

    let posts = (0..16).map(|i| {
        let client = client.clone();
        let u = url(&server, "/interactions");
        tokio::spawn(async move {
            let body = json!({"action": "view", "target_clip_id": format!("clip{i:04}")});
            client.post(u).json(&body).send().await.unwrap().json::<InteractionCreated>().await.unwrap()
        })
    });
    let mut ids = Vec::new();
    for p in posts {
        ids.push(p.await.unwrap().interaction_id);
    }
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 16);
    assert_eq!(server.state.log().len(), before + 17);

    let on_disk: Vec<avarchive_core::datafication::InteractionRecord> =
        avarchive_core::jsonl::read_jsonl(cfg.interaction_log.as_ref().unwrap()).unwrap();
    assert_eq!(on_disk, server.state.log().records());
    server.stop().await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn not_ready_answers_503() {
    let dir = tempfile::tempdir().unwrap();
    let state = Arc::new(AppState::new(InteractionLog::open(dir.path().join("log.jsonl")).unwrap()));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let server = RunningServer::spawn(listener, state).unwrap();
    let client = reqwest::Client::new();
    let res = client.get(url(&server, "/search?q=dog")).send().await.unwrap();
    assert_eq!(res.status(), StatusCode::SERVICE_UNAVAILABLE);
    let res = client.get(url(&server, "/clips/x")).send().await.unwrap();
    assert_eq!(res.status(), StatusCode::SERVICE_UNAVAILABLE);
    let health: Value = client.get(url(&server, "/healthz")).send().await.unwrap().json().await.unwrap();
    assert_eq!(health["ready"], false);
    assert_eq!(server.state.log().len(), 0);
    server.stop().await.unwrap();
}
