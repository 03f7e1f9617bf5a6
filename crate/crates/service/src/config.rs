//! Service configuration: a JSON file, command-line flags, or both (flags
//! win).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use avarchive_core::engine::EngineConfig;
use serde::{Deserialize, Serialize};

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    pub corpus: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    /// BM25 snapshot; built from the corpus transcripts when absent.
    pub fulltext: Option<PathBuf>,
    /// Trained query classifier; unused when the engine runs rule-based.
    pub classifier: Option<PathBuf>,
    pub descriptors: Option<PathBuf>,
    pub interaction_log: Option<PathBuf>,
    pub engine: EngineConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: DEFAULT_LISTEN.to_owned(),
            corpus: None,
            embeddings: None,
            fulltext: None,
            classifier: None,
            descriptors: None,
            interaction_log: None,
            engine: EngineConfig::default(),
        }
    }
}

impl ServiceConfig {
    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.corpus,
            &mut cfg.embeddings,
            &mut cfg.fulltext,
            &mut cfg.classifier,
            &mut cfg.descriptors,
            &mut cfg.interaction_log,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    /// Checks that the required paths are set.
    pub fn check(&self) -> anyhow::Result<()> {
        for (name, p) in [
            ("corpus", &self.corpus),
            ("embeddings", &self.embeddings),
            ("interaction_log", &self.interaction_log),
        ] {
            if p.is_none() {
                bail!("config: {name} path is required");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_resolve_against_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("svc.json");
        std::fs::write(&path, r#"{"corpus": "corpus.jsonl", "engine": {"k_default": 3}}"#).unwrap();
        let cfg = ServiceConfig::load(&path).unwrap();
        assert_eq!(cfg.corpus.unwrap(), dir.path().join("corpus.jsonl"));
        assert_eq!(cfg.engine.k_default, 3);
        assert!(cfg.engine.fallback_on_empty);
        assert_eq!(cfg.listen, DEFAULT_LISTEN);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("svc.json");
        std::fs::write(&path, r#"{"corpse": "x"}"#).unwrap();
        assert!(ServiceConfig::load(&path).is_err());
    }
}
