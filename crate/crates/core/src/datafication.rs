//! Datafication records: descriptors with six metadata facets and provenance,
//! pseudonymous participants, and an append-only interaction log.
//!
//! Descriptors describe anything attached to a clip (embeddings, transcripts,
//! annotations) or to the collection (a trained classifier, a test set). A
//! descriptor's provenance may point at the descriptor it was derived from,
//! which gives a single-parent lineage chain.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, SecondsFormat, SubsecRound, Utc};
use serde::{Deserialize, Serialize};

use crate::jsonl::{read_jsonl, write_jsonl, JsonlError};

/// Recommended values for [`DescriptorFacets::level`].
pub const LEVELS: &[&str] = &["technical", "content", "conceptual", "interaction"];
/// Recommended values for [`DescriptorFacets::automation`].
pub const AUTOMATION: &[&str] = &["manual", "automatic", "hybrid"];

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("duplicate descriptor_id {0}")]
    DuplicateDescriptor(String),
    #[error("descriptor {descriptor_id}: training_data_ref {target} does not resolve")]
    DanglingReference {
        descriptor_id: String,
        target: String,
    },
    #[error("descriptor {descriptor_id}: unknown clip_id {clip_id}")]
    UnknownClip {
        descriptor_id: String,
        clip_id: String,
    },
    #[error("unknown descriptor {0}")]
    UnknownDescriptor(String),
    #[error("lineage cycle through descriptor {0}")]
    Cycle(String),
    #[error("invalid record: {0}")]
    Invalid(String),
    #[error("duplicate participant_id {0}")]
    DuplicateParticipant(String),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptorFacets {
    pub level: String,
    pub automation: String,
    pub extraction_time: String,
    pub form: String,
    pub retrieval: String,
    pub modality: String,
}

impl DescriptorFacets {
    fn missing(&self) -> Option<&'static str> {
        [
            ("level", &self.level),
            ("automation", &self.automation),
            ("extraction_time", &self.extraction_time),
            ("form", &self.form),
            ("retrieval", &self.retrieval),
            ("modality", &self.modality),
        ]
        .into_iter()
        .find(|(_, v)| v.trim().is_empty())
        .map(|(name, _)| name)
    }
}

/// What a descriptor was derived from: another descriptor in the store, or
/// something outside it (a dataset name, a URL).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingDataRef {
    Descriptor(String),
    External(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceRef {
    pub tool_name: String,
    pub tool_version: String,
    #[serde(default)]
    pub training_data_ref: Option<TrainingDataRef>,
    pub created_at: DateTime<Utc>,
}

impl ProvenanceRef {
    pub fn new(tool_name: impl Into<String>, tool_version: impl Into<String>) -> Self {
        Self {
            tool_name: tool_name.into(),
            tool_version: tool_version.into(),
            training_data_ref: None,
            created_at: Utc::now(),
        }
    }

    pub fn derived_from(mut self, descriptor_id: impl Into<String>) -> Self {
        self.training_data_ref = Some(TrainingDataRef::Descriptor(descriptor_id.into()));
        self
    }

    pub fn at(mut self, created_at: DateTime<Utc>) -> Self {
        self.created_at = created_at;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptorRecord {
    pub descriptor_id: String,
    /// `None` for collection-level descriptors (models, test sets).
    #[serde(default)]
    pub clip_id: Option<String>,
    pub kind: String,
    pub payload_ref: String,
    pub facets: DescriptorFacets,
    pub provenance: ProvenanceRef,
}

impl DescriptorRecord {
    fn check(&self) -> Result<(), StoreError> {
        if self.descriptor_id.trim().is_empty() {
            return Err(StoreError::Invalid("empty descriptor_id".into()));
        }
        if let Some(facet) = self.facets.missing() {
            return Err(StoreError::Invalid(format!(
                "descriptor {}: facet {facet} is empty",
                self.descriptor_id
            )));
        }
        if self.provenance.tool_name.trim().is_empty() {
            return Err(StoreError::Invalid(format!(
                "descriptor {}: empty tool_name",
                self.descriptor_id
            )));
        }
        Ok(())
    }

    fn parent(&self) -> Option<&str> {
        match &self.provenance.training_data_ref {
            Some(TrainingDataRef::Descriptor(id)) => Some(id),
            _ => None,
        }
    }
}

/// Descriptor store. Single writer; clone it to hand out a read snapshot.
#[derive(Debug, Clone, Default)]
pub struct DescriptorStore {
    records: Vec<DescriptorRecord>,
    by_id: HashMap<String, usize>,
    clips: Option<HashSet<String>>,
    participants: BTreeMap<String, ParticipantRecord>,
}

impl DescriptorStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Restricts descriptor `clip_id`s to the given corpus ids.
    pub fn attach_corpus<'a>(&mut self, clip_ids: impl IntoIterator<Item = &'a str>) {
        self.clips = Some(clip_ids.into_iter().map(str::to_owned).collect());
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, descriptor_id: &str) -> Option<&DescriptorRecord> {
        self.by_id.get(descriptor_id).map(|&i| &self.records[i])
    }

    pub fn records(&self) -> &[DescriptorRecord] {
        &self.records
    }

    pub fn for_clip<'a>(&'a self, clip_id: &'a str) -> impl Iterator<Item = &'a DescriptorRecord> {
        self.records
            .iter()
            .filter(move |r| r.clip_id.as_deref() == Some(clip_id))
    }

    pub fn register_descriptor(&mut self, record: DescriptorRecord) -> Result<String, StoreError> {
        record.check()?;
        if self.by_id.contains_key(&record.descriptor_id) {
            return Err(StoreError::DuplicateDescriptor(record.descriptor_id));
        }
        if let Some(parent) = record.parent() {
            if !self.by_id.contains_key(parent) {
                return Err(StoreError::DanglingReference {
                    descriptor_id: record.descriptor_id.clone(),
                    target: parent.to_owned(),
                });
            }
        }
        self.check_clip(&record)?;
        Ok(self.insert(record))
    }

    fn check_clip(&self, record: &DescriptorRecord) -> Result<(), StoreError> {
        if let (Some(clips), Some(clip_id)) = (&self.clips, &record.clip_id) {
            if !clips.contains(clip_id) {
                return Err(StoreError::UnknownClip {
                    descriptor_id: record.descriptor_id.clone(),
                    clip_id: clip_id.clone(),
                });
            }
        }
        Ok(())
    }

    fn insert(&mut self, record: DescriptorRecord) -> String {
        let id = record.descriptor_id.clone();
        self.by_id.insert(id.clone(), self.records.len());
        self.records.push(record);
        id
    }

    /// Provenance chain starting at `descriptor_id` and following
    /// descriptor references until one is absent or does not resolve.
    pub fn lineage_of(&self, descriptor_id: &str) -> Result<Vec<ProvenanceRef>, StoreError> {
        let mut current = self
            .get(descriptor_id)
            .ok_or_else(|| StoreError::UnknownDescriptor(descriptor_id.to_owned()))?;
        let mut visited = HashSet::new();
        let mut chain = Vec::new();
        loop {
            if !visited.insert(current.descriptor_id.as_str()) {
                return Err(StoreError::Cycle(current.descriptor_id.clone()));
            }
            chain.push(current.provenance.clone());
            match current.parent().and_then(|p| self.get(p)) {
                Some(next) => current = next,
                None => return Ok(chain),
            }
        }
    }

    pub fn register_participant(&mut self, record: ParticipantRecord) -> Result<(), StoreError> {
        if record.participant_id.trim().is_empty() {
            return Err(StoreError::Invalid("empty participant_id".into()));
        }
        if self.participants.contains_key(&record.participant_id) {
            return Err(StoreError::DuplicateParticipant(record.participant_id));
        }
        self.participants
            .insert(record.participant_id.clone(), record);
        Ok(())
    }

    pub fn participant(&self, participant_id: &str) -> Option<&ParticipantRecord> {
        self.participants.get(participant_id)
    }

    /// Loads `descriptors.jsonl`. References may point forward in the file;
    /// they only need to resolve once every line is read.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let records: Vec<DescriptorRecord> = read_jsonl(path)?;
        let mut store = Self::new();
        for record in records {
            record.check()?;
            if store.by_id.contains_key(&record.descriptor_id) {
                return Err(StoreError::DuplicateDescriptor(record.descriptor_id));
            }
            store.insert(record);
        }
        for record in &store.records {
            if let Some(parent) = record.parent() {
                if !store.by_id.contains_key(parent) {
                    return Err(StoreError::DanglingReference {
                        descriptor_id: record.descriptor_id.clone(),
                        target: parent.to_owned(),
                    });
                }
            }
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        Ok(write_jsonl(path, &self.records)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantRecord {
    pub participant_id: String,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Query,
    Click,
    View,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Fulltext,
    Vector,
}

impl Route {
    pub fn as_str(self) -> &'static str {
        match self {
            Route::Fulltext => "fulltext",
            Route::Vector => "vector",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub interaction_id: String,
    pub participant_id: String,
    #[serde(with = "rfc3339")]
    pub timestamp: DateTime<Utc>,
    pub action: Action,
    #[serde(default)]
    pub query_text: Option<String>,
    #[serde(default)]
    pub route: Option<Route>,
    #[serde(default)]
    pub target_clip_id: Option<String>,
}

impl InteractionRecord {
    pub fn check(&self) -> Result<(), StoreError> {
        let fail = |m: &str| Err(StoreError::Invalid(m.to_owned()));
        if self.interaction_id.trim().is_empty() {
            return fail("empty interaction_id");
        }
        match self.action {
            Action::Query if self.query_text.as_deref().map_or(true, str::is_empty) => {
                fail("query interaction requires query_text")
            }
            Action::Click if self.target_clip_id.as_deref().map_or(true, str::is_empty) => {
                fail("click interaction requires target_clip_id")
            }
            _ => Ok(()),
        }
    }
}

mod rfc3339 {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&ts.to_rfc3339_opts(SecondsFormat::Micros, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let s = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&s)
            .map(|t| t.with_timezone(&Utc))
            .map_err(serde::de::Error::custom)
    }
}

/// Formats a timestamp the way every record file stores it.
pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Micros, true)
}

struct LogInner {
    records: Vec<InteractionRecord>,
    sink: Option<BufWriter<File>>,
}

/// Append-only interaction log, optionally mirrored to a JSON Lines file.
/// Appends are serialized; each one is flushed before `append` returns.
pub struct InteractionLog {
    path: Option<PathBuf>,
    inner: Mutex<LogInner>,
}

impl InteractionLog {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            inner: Mutex::new(LogInner {
                records: Vec::new(),
                sink: None,
            }),
        }
    }

    /// Opens (or creates) the log file, loading entries already present.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let records = if path.exists() {
            read_jsonl(&path)?
        } else {
            Vec::new()
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|source| StoreError::Io {
                path: path.clone(),
                source,
            })?;
        Ok(Self {
            path: Some(path),
            inner: Mutex::new(LogInner {
                records,
                sink: Some(BufWriter::new(file)),
            }),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Appends one record. Its timestamp is truncated to the microseconds
    /// the file keeps, so a reopened log equals the one in memory.
    pub fn append_interaction(&self, mut record: InteractionRecord) -> Result<(), StoreError> {
        record.check()?;
        record.timestamp = record.timestamp.trunc_subsecs(6);
        let mut inner = self.inner.lock().expect("interaction log poisoned");
        if let Some(sink) = inner.sink.as_mut() {
            let io_err = |source| StoreError::Io {
                path: self.path.clone().unwrap_or_default(),
                source,
            };
            serde_json::to_writer(&mut *sink, &record).map_err(|e| io_err(e.into()))?;
            sink.write_all(b"\n").map_err(io_err)?;
            sink.flush().map_err(io_err)?;
        }
        inner.records.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("interaction log poisoned").records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Snapshot of every entry appended so far.
    pub fn records(&self) -> Vec<InteractionRecord> {
        self.inner
            .lock()
            .expect("interaction log poisoned")
            .records
            .clone()
    }

    pub fn flush(&self) -> Result<(), StoreError> {
        let mut inner = self.inner.lock().expect("interaction log poisoned");
        if let Some(sink) = inner.sink.as_mut() {
            sink.flush().map_err(|source| StoreError::Io {
                path: self.path.clone().unwrap_or_default(),
                source,
            })?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn facets() -> DescriptorFacets {
        DescriptorFacets {
            level: "content".into(),
            automation: "automatic".into(),
            extraction_time: "post-ingest".into(),
            form: "vector".into(),
            retrieval: "similarity".into(),
            modality: "visual".into(),
        }
    }

    fn descriptor(id: &str, parent: Option<&str>) -> DescriptorRecord {
        let mut provenance = ProvenanceRef::new(format!("tool-{id}"), "1");
        if let Some(p) = parent {
            provenance = provenance.derived_from(p);
        }
        DescriptorRecord {
            descriptor_id: id.into(),
            clip_id: Some("v1".into()),
            kind: "embedding".into(),
            payload_ref: format!("emb.avem#{id}"),
            facets: facets(),
            provenance,
        }
    }

    fn query(id: &str, text: &str) -> InteractionRecord {
        InteractionRecord {
            interaction_id: id.into(),
            participant_id: "p1".into(),
            timestamp: Utc::now(),
            action: Action::Query,
            query_text: Some(text.into()),
            route: Some(Route::Vector),
            target_clip_id: None,
        }
    }

    #[test]
    fn register_and_fetch() {
        let mut store = DescriptorStore::new();
        let id = store.register_descriptor(descriptor("d1", None)).unwrap();
        assert_eq!(id, "d1");
        assert_eq!(store.len(), 1);
        assert_eq!(store.get("d1").unwrap().facets.level, "content");
        assert!(matches!(
            store.register_descriptor(descriptor("d1", None)),
            Err(StoreError::DuplicateDescriptor(_))
        ));
    }

    #[test]
    fn dangling_reference_rejected() {
        let mut store = DescriptorStore::new();
        let err = store
            .register_descriptor(descriptor("d1", Some("nope")))
            .unwrap_err();
        assert!(matches!(err, StoreError::DanglingReference { .. }));
        assert!(store.is_empty());
    }

    #[test]
    fn empty_facet_rejected() {
        let mut d = descriptor("d1", None);
        d.facets.modality.clear();
        assert!(matches!(
            DescriptorStore::new().register_descriptor(d),
            Err(StoreError::Invalid(_))
        ));
    }

    #[test]
    fn attached_corpus_checks_clip_ids() {
        let mut store = DescriptorStore::new();
        store.attach_corpus(["v2"]);
        assert!(matches!(
            store.register_descriptor(descriptor("d1", None)),
            Err(StoreError::UnknownClip { .. })
        ));
    }

    #[test]
    fn lineage_follows_chain() {
        let mut store = DescriptorStore::new();
        store.register_descriptor(descriptor("c", None)).unwrap();
        store.register_descriptor(descriptor("b", Some("c"))).unwrap();
        store.register_descriptor(descriptor("a", Some("b"))).unwrap();
        assert_eq!(store.lineage_of("c").unwrap().len(), 1);
        let tools: Vec<_> = store
            .lineage_of("a")
            .unwrap()
            .into_iter()
            .map(|p| p.tool_name)
            .collect();
        assert_eq!(tools, ["tool-a", "tool-b", "tool-c"]);
        assert!(matches!(
            store.lineage_of("zz"),
            Err(StoreError::UnknownDescriptor(_))
        ));
    }

    #[test]
    fn lineage_cycle_from_file_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("descriptors.jsonl");
        write_jsonl(&path, &[descriptor("A", Some("B")), descriptor("B", Some("A"))]).unwrap();
        let store = DescriptorStore::load(&path).unwrap();
        match store.lineage_of("A") {
            Err(StoreError::Cycle(id)) => assert_eq!(id, "A"),
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn descriptors_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("descriptors.jsonl");
        let mut store = DescriptorStore::new();
        store.register_descriptor(descriptor("c", None)).unwrap();
        store.register_descriptor(descriptor("b", Some("c"))).unwrap();
        store.save(&path).unwrap();
        let loaded = DescriptorStore::load(&path).unwrap();
        assert_eq!(loaded.records(), store.records());
    }

    #[test]
    fn interaction_invariants() {
        let log = InteractionLog::in_memory();
        log.append_interaction(query("i1", "cat")).unwrap();
        let mut click = query("i2", "x");
        click.action = Action::Click;
        click.query_text = None;
        assert!(log.append_interaction(click.clone()).is_err());
        click.target_clip_id = Some("v1".into());
        log.append_interaction(click).unwrap();
        let mut q = query("i3", "");
        q.query_text = None;
        assert!(log.append_interaction(q).is_err());
        assert_eq!(log.len(), 2);
    }

    #[test]
    fn log_preserves_order_and_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("interactions.jsonl");
        {
            let log = InteractionLog::open(&path).unwrap();
            for i in 0..5 {
                log.append_interaction(query(&format!("i{i}"), "cat")).unwrap();
            }
        }
        let log = InteractionLog::open(&path).unwrap();
        let ids: Vec<_> = log.records().into_iter().map(|r| r.interaction_id).collect();
        assert_eq!(ids, ["i0", "i1", "i2", "i3", "i4"]);
        log.append_interaction(query("i5", "dog")).unwrap();
        let on_disk: Vec<InteractionRecord> = read_jsonl(&path).unwrap();
        assert_eq!(on_disk.len(), 6);
        assert_eq!(on_disk, log.records());
    }

    #[test]
    fn participants_are_unique() {
        let mut store = DescriptorStore::new();
        let p = ParticipantRecord {
            participant_id: "p1".into(),
            attributes: BTreeMap::new(),
        };
        store.register_participant(p.clone()).unwrap();
        assert!(store.register_participant(p).is_err());
        assert!(store.participant("p1").is_some());
    }
}
