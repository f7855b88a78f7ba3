//! JSONL record types written by the harness and read by the metrics code.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::vocab::Rank;

use super::HarnessError;

pub const RECORD_SCHEMA_VERSION: u32 = 1;

fn schema_version() -> u32 {
    RECORD_SCHEMA_VERSION
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    SentenceLong,
    SentenceSplit,
    Translate,
    Explain,
    JudgeRank,
    JudgeConsistency,
}

impl TaskKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::SentenceLong => "sentence_long",
            TaskKind::SentenceSplit => "sentence_split",
            TaskKind::Translate => "translate",
            TaskKind::Explain => "explain",
            TaskKind::JudgeRank => "judge_rank",
            TaskKind::JudgeConsistency => "judge_consistency",
        }
    }
}

/// One prompt/response event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub record_id: String,
    pub token_rank: Rank,
    /// Token as it was shown to the model (leading space removed).
    pub token: String,
    /// Word split used by `sentence_split` prompts; empty otherwise.
    #[serde(default)]
    pub segments: Vec<String>,
    pub variant: TaskKind,
    pub model: String,
    pub repetition: u32,
    #[serde(default)]
    pub template_version: String,
    pub prompt: String,
    pub response: Option<String>,
    pub timestamp: DateTime<Utc>,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeMode {
    Rank,
    Consistency,
}

/// One judge call over a group of generation records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeRecord {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub record_id: String,
    pub token_rank: Rank,
    #[serde(default)]
    pub token: String,
    pub mode: JudgeMode,
    /// Task the judged outputs came from: a sentence variant for ranking,
    /// `translate` or `explain` for consistency.
    pub task: TaskKind,
    pub judge_model: String,
    pub template_version: String,
    /// Labels of the judged items in the order they were presented
    /// (series ids such as `G4o-L` for ranking, record ids otherwise).
    #[serde(default)]
    pub members: Vec<String>,
    #[serde(default)]
    pub prompt: String,
    #[serde(default)]
    pub response: Option<String>,
    /// Member numbers (1-based), best first.
    #[serde(default)]
    pub ranking: Option<Vec<usize>>,
    #[serde(default)]
    pub accurate: Option<bool>,
    #[serde(default)]
    pub consistent: Option<bool>,
    #[serde(default)]
    pub error: Option<String>,
    pub timestamp: DateTime<Utc>,
}

/// Stable 128-bit hex id over the parts, separated so that
/// `("ab", "c")` and `("a", "bc")` differ.
pub fn stable_id(parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    digest[..16].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), HarnessError> {
    let mut writer = JsonlWriter::create(path)?;
    for r in records {
        writer.write(r)?;
    }
    writer.finish()
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let file =
        File::open(path).map_err(|e| HarnessError::Persist(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::Persist(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| HarnessError::Persist(format!("{}:{}: {e}", path.display(), idx + 1)))?;
        out.push(record);
    }
    Ok(out)
}

pub struct JsonlWriter {
    inner: BufWriter<File>,
    path: String,
}

impl JsonlWriter {
    pub fn create(path: &Path) -> Result<Self, HarnessError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)
                .map_err(|e| HarnessError::Persist(format!("{}: {e}", dir.display())))?;
        }
        let file = File::create(path)
            .map_err(|e| HarnessError::Persist(format!("{}: {e}", path.display())))?;
        Ok(Self {
            inner: BufWriter::new(file),
            path: path.display().to_string(),
        })
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<(), HarnessError> {
        let err = |e: String| HarnessError::Persist(format!("{}: {e}", self.path));
        serde_json::to_writer(&mut self.inner, record).map_err(|e| err(e.to_string()))?;
        self.inner.write_all(b"\n").map_err(|e| err(e.to_string()))
    }

    pub fn finish(mut self) -> Result<(), HarnessError> {
        self.inner
            .flush()
            .map_err(|e| HarnessError::Persist(format!("{}: {e}", self.path)))
    }
}
