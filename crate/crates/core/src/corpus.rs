//! Clip corpus: captions, optional ASR transcripts and split tags, stored as
//! JSON Lines (one clip per line).

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Caption count of a standard MSR-VTT clip; strict loading warns on others.
pub const STANDARD_CAPTION_COUNT: usize = 20;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate clip_id {clip_id}")]
    DuplicateId { line: usize, clip_id: String },
    #[error("line {line}: clip {clip_id} has an empty caption list")]
    EmptyCaptions { line: usize, clip_id: String },
    #[error("line {line}: {violation}")]
    Invalid { line: usize, violation: Violation },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Who wrote a caption. `AsrReplacement` captions only come out of the
/// dataset builder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionOrigin {
    Human,
    AsrReplacement,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caption {
    pub text: String,
    pub origin: CaptionOrigin,
}

impl Caption {
    pub fn human(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            origin: CaptionOrigin::Human,
        }
    }
}

/// ASR output for a clip. Empty `text` means the recognizer found no speech,
/// which is different from a clip that was never transcribed (`None`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub text: String,
    pub source_tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_id: String,
    pub split: Split,
    pub captions: Vec<Caption>,
    pub transcript: Option<Transcript>,
}

impl ClipRecord {
    /// Transcript text when the clip has usable speech (present and non-blank).
    pub fn speech(&self) -> Option<&str> {
        self.transcript
            .as_ref()
            .map(|t| t.text.as_str())
            .filter(|t| !t.trim().is_empty())
    }

    pub fn human_captions(&self) -> impl Iterator<Item = &Caption> {
        self.captions
            .iter()
            .filter(|c| c.origin == CaptionOrigin::Human)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub clips: Vec<ClipRecord>,
}

impl Corpus {
    pub fn new(clips: Vec<ClipRecord>) -> Self {
        Self { clips }
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn get(&self, clip_id: &str) -> Option<&ClipRecord> {
        self.clips.iter().find(|c| c.clip_id == clip_id)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ClipRecord> {
        self.clips.iter().filter(move |c| c.split == split)
    }

    /// Lookup table from clip id to position.
    pub fn positions(&self) -> HashMap<&str, usize> {
        self.clips
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clip_id.as_str(), i))
            .collect()
    }

    /// Every type-invariant violation in the corpus; empty iff valid.
    pub fn validate(&self) -> Vec<Violation> {
        validate_corpus(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rule {
    EmptyClipId,
    DuplicateClipId,
    EmptyCaptions,
    EmptyCaptionText { index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub clip_id: String,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.rule {
            Rule::EmptyClipId => write!(f, "empty clip_id"),
            Rule::DuplicateClipId => write!(f, "duplicate clip_id {}", self.clip_id),
            Rule::EmptyCaptions => write!(f, "empty captions"),
            Rule::EmptyCaptionText { index } => {
                write!(f, "empty caption text at index {index} in {}", self.clip_id)
            }
        }
    }
}

pub fn validate_corpus(corpus: &Corpus) -> Vec<Violation> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for clip in &corpus.clips {
        out.extend(clip_violations(clip));
        if !clip.clip_id.is_empty() && !seen.insert(clip.clip_id.as_str()) {
            out.push(Violation {
                clip_id: clip.clip_id.clone(),
                rule: Rule::DuplicateClipId,
            });
        }
    }
    out
}

fn clip_violations(clip: &ClipRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    let v = |rule| Violation {
        clip_id: clip.clip_id.clone(),
        rule,
    };
    if clip.clip_id.is_empty() {
        out.push(v(Rule::EmptyClipId));
    }
    if clip.captions.is_empty() {
        out.push(v(Rule::EmptyCaptions));
    }
    for (index, caption) in clip.captions.iter().enumerate() {
        if caption.text.is_empty() {
            out.push(v(Rule::EmptyCaptionText { index }));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Reject unknown fields and warn on caption counts other than 20.
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadWarning {
    pub line: usize,
    pub message: String,
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    load_corpus_with(path, LoadOptions::default()).map(|(c, _)| c)
}

pub fn load_corpus_with(
    path: impl AsRef<Path>,
    opts: LoadOptions,
) -> Result<(Corpus, Vec<LoadWarning>), CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    read_corpus(BufReader::new(file), opts).map_err(|e| match e {
        CorpusError::Io { source, .. } => io_err(source),
        other => other,
    })
}

pub fn read_corpus(
    reader: impl BufRead,
    opts: LoadOptions,
) -> Result<(Corpus, Vec<LoadWarning>), CorpusError> {
    let mut clips = Vec::new();
    let mut warnings = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: PathBuf::new(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let clip = parse_line(&line, line_no, opts.strict)?;
        if clip.captions.is_empty() {
            return Err(CorpusError::EmptyCaptions {
                line: line_no,
                clip_id: clip.clip_id,
            });
        }
        if let Some(violation) = clip_violations(&clip).into_iter().next() {
            return Err(CorpusError::Invalid {
                line: line_no,
                violation,
            });
        }
        if !seen.insert(clip.clip_id.clone()) {
            return Err(CorpusError::DuplicateId {
                line: line_no,
                clip_id: clip.clip_id,
            });
        }
        if opts.strict && clip.captions.len() != STANDARD_CAPTION_COUNT {
            warnings.push(LoadWarning {
                line: line_no,
                message: format!(
                    "clip {} has {} captions (expected {STANDARD_CAPTION_COUNT})",
                    clip.clip_id,
                    clip.captions.len()
                ),
            });
        }
        clips.push(clip);
    }
    Ok((Corpus { clips }, warnings))
}

const CLIP_FIELDS: &[&str] = &["clip_id", "split", "captions", "transcript"];
const CAPTION_FIELDS: &[&str] = &["text", "origin"];
const TRANSCRIPT_FIELDS: &[&str] = &["text", "source_tag"];

fn parse_line(line: &str, line_no: usize, strict: bool) -> Result<ClipRecord, CorpusError> {
    let malformed = |message: String| CorpusError::Malformed {
        line: line_no,
        message,
    };
    let value: Value = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    if strict {
        check_fields(&value, CLIP_FIELDS, "clip").map_err(malformed)?;
        if let Some(caps) = value.get("captions").and_then(Value::as_array) {
            for cap in caps {
                check_fields(cap, CAPTION_FIELDS, "caption").map_err(malformed)?;
            }
        }
        if let Some(t) = value.get("transcript").filter(|t| !t.is_null()) {
            check_fields(t, TRANSCRIPT_FIELDS, "transcript").map_err(malformed)?;
        }
    }
    serde_json::from_value(value).map_err(|e| malformed(e.to_string()))
}

fn check_fields(value: &Value, allowed: &[&str], what: &str) -> Result<(), String> {
    if let Some(obj) = value.as_object() {
        if let Some(unknown) = obj.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(format!("unknown {what} field {unknown:?}"));
        }
    }
    Ok(())
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    write_corpus(corpus, &mut out).map_err(io_err)?;
    out.flush().map_err(io_err)
}

pub fn write_corpus(corpus: &Corpus, out: &mut impl Write) -> std::io::Result<()> {
    for clip in &corpus.clips {
        serde_json::to_writer(&mut *out, clip)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(id: &str, n: usize) -> ClipRecord {
        ClipRecord {
            clip_id: id.into(),
            split: Split::Train,
            captions: (0..n).map(|i| Caption::human(format!("caption {i}"))).collect(),
            transcript: None,
        }
    }

    fn read(text: &str, strict: bool) -> Result<(Corpus, Vec<LoadWarning>), CorpusError> {
        read_corpus(text.as_bytes(), LoadOptions { strict })
    }

    #[test]
    fn empty_input_is_empty_corpus() {
        let (c, w) = read("", false).unwrap();
        assert!(c.is_empty());
        assert!(w.is_empty());
    }

    #[test]
    fn twenty_captions_with_transcript() {
        let caps: Vec<String> = (0..20)
            .map(|i| format!(r#"{{"text":"a girl sings {i}","origin":"human"}}"#))
            .collect();
        let line = format!(
            r#"{{"clip_id":"video7","split":"train","captions":[{}],"transcript":{{"text":"hello there","source_tag":"whisper-small"}}}}"#,
            caps.join(",")
        );
        let (c, w) = read(&line, true).unwrap();
        assert_eq!(c.clips[0].captions.len(), 20);
        assert_eq!(c.clips[0].speech(), Some("hello there"));
        assert!(w.is_empty());
    }

    #[test]
    fn duplicate_id_is_named() {
        let text = concat!(
            r#"{"clip_id":"v1","split":"train","captions":[{"text":"a","origin":"human"}],"transcript":null}"#,
            "\n",
            r#"{"clip_id":"v1","split":"test","captions":[{"text":"b","origin":"human"}],"transcript":null}"#,
        );
        let err = read(text, false).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId { line: 2, .. }));
        assert!(err.to_string().contains("v1"));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = concat!(
            r#"{"clip_id":"v1","split":"train","captions":[{"text":"a","origin":"human"}],"transcript":null}"#,
            "\n{not json\n"
        );
        assert!(matches!(
            read(text, false).unwrap_err(),
            CorpusError::Malformed { line: 2, .. }
        ));
    }

    #[test]
    fn empty_caption_list_is_rejected() {
        let text = r#"{"clip_id":"v1","split":"train","captions":[],"transcript":null}"#;
        assert!(matches!(
            read(text, false).unwrap_err(),
            CorpusError::EmptyCaptions { .. }
        ));
    }

    #[test]
    fn strict_mode_rejects_unknown_fields_and_warns_on_count() {
        let text = r#"{"clip_id":"v1","split":"train","captions":[{"text":"a","origin":"human"}],"transcript":null,"extra":1}"#;
        assert!(read(text, true).is_err());
        let (c, w) = read(text, false).unwrap();
        assert_eq!(c.len(), 1);
        assert!(w.is_empty());

        let ok = r#"{"clip_id":"v1","split":"train","captions":[{"text":"a","origin":"human"}],"transcript":null}"#;
        let (_, w) = read(ok, true).unwrap();
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn validate_reports_violations() {
        assert!(Corpus::new(vec![clip("a", 2), clip("b", 1)]).validate().is_empty());

        let v = Corpus::new(vec![clip("a", 0)]).validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].to_string(), "empty captions");

        let v = Corpus::new(vec![clip("v1", 1), clip("v1", 1)]).validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].to_string(), "duplicate clip_id v1");
    }

    #[test]
    fn missing_and_empty_transcripts_carry_no_speech() {
        let mut c = clip("a", 1);
        assert_eq!(c.speech(), None);
        c.transcript = Some(Transcript {
            text: "  ".into(),
            source_tag: "asr".into(),
        });
        assert_eq!(c.speech(), None);
    }
}
