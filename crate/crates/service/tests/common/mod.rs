#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use avarchive_core::datafication::InteractionLog;
use avarchive_service::api::{AppState, RunningServer};
use avarchive_service::artifacts;
use avarchive_service::cli::{execute, Command, SynthArgs};
use avarchive_service::config::ServiceConfig;

/// Writes synthetic artifacts (with a trained classifier) into `dir`.
pub fn synth_into(dir: &Path, n_clips: usize, seed: u64) -> ServiceConfig {
    execute(Command::Synth(SynthArgs {
        n_clips,
        transcript_fraction: 0.5,
        dim: 256,
        seed,
        out: dir.to_path_buf(),
        no_classifier: false,
    }))
    .expect("synth");
    ServiceConfig::load(&dir.join("service.json")).expect("config")
}

pub async fn start(cfg: &ServiceConfig) -> RunningServer {
    let log = InteractionLog::open(cfg.interaction_log.as_ref().unwrap()).unwrap();
    let cfg2 = cfg.clone();
    let loaded = tokio::task::spawn_blocking(move || artifacts::load(&cfg2))
        .await
        .unwrap()
        .unwrap();
    let state = Arc::new(AppState::with_loaded(loaded, log));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    RunningServer::spawn(listener, state).unwrap()
}

pub fn url(server: &RunningServer, path: &str) -> String {
    format!("http://{}{}", server.addr, path)
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_avarchive"))
}
