//! Maximum-probability word segmentation over a frequency dictionary.
//!
//! The dictionary format is the one used by jieba (`word freq [tag]` per
//! line). Segmentation builds a DAG of dictionary words over character
//! positions and picks the path maximising the sum of `ln(freq / total)`.
//! Characters missing from the dictionary score as frequency 1. There is no
//! HMM stage for unknown words.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DictError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: frequency of `{word}` is zero")]
    ZeroFrequency { line: usize, word: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrequencyDictionary {
    entries: HashMap<String, u64>,
    total: u64,
    prefixes: HashSet<String>,
}

impl FrequencyDictionary {
    pub fn parse(contents: &str) -> Result<Self, DictError> {
        let mut dict = Self::default();
        for (idx, raw) in contents.lines().enumerate() {
            let line = idx + 1;
            let raw = raw.trim();
            if raw.is_empty() {
                continue;
            }
            let mut fields = raw.split_whitespace();
            let (Some(word), Some(freq)) = (fields.next(), fields.next()) else {
                return Err(DictError::MalformedLine {
                    line,
                    reason: "expected `word frequency [tag]`".into(),
                });
            };
            if fields.nth(1).is_some() {
                return Err(DictError::MalformedLine {
                    line,
                    reason: "too many fields".into(),
                });
            }
            let freq: u64 = freq.parse().map_err(|_| DictError::MalformedLine {
                line,
                reason: format!("frequency `{freq}` is not a non-negative integer"),
            })?;
            if freq == 0 {
                return Err(DictError::ZeroFrequency {
                    line,
                    word: word.to_string(),
                });
            }
            dict.add_word(word, freq);
        }
        Ok(dict)
    }

    /// Adds `freq` to `word`; repeated words accumulate.
    pub fn add_word(&mut self, word: &str, freq: u64) {
        *self.entries.entry(word.to_string()).or_insert(0) += freq;
        self.total += freq;
        for (i, c) in word.char_indices() {
            self.prefixes.insert(word[..i + c.len_utf8()].to_string());
        }
    }

    pub fn from_words<'a>(words: impl IntoIterator<Item = (&'a str, u64)>) -> Self {
        let mut dict = Self::default();
        for (w, f) in words {
            dict.add_word(w, f);
        }
        dict
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn frequency(&self, word: &str) -> Option<u64> {
        self.entries.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    pub fn is_prefix(&self, fragment: &str) -> bool {
        self.prefixes.contains(fragment)
    }

    fn log_total(&self) -> f64 {
        (self.total.max(1) as f64).ln()
    }

    /// `ln(freq / total)`, with unknown words counted as frequency 1.
    pub fn log_prob(&self, word: &str) -> f64 {
        (self.frequency(word).unwrap_or(1) as f64).ln() - self.log_total()
    }
}

pub fn load_dictionary(path: impl AsRef<Path>) -> Result<FrequencyDictionary, DictError> {
    let path = path.as_ref();
    let contents = fs::read_to_string(path).map_err(|source| DictError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    FrequencyDictionary::parse(&contents)
}

/// For every character offset `k`, the exclusive end offsets `e` such that
/// `text[k..e]` is a dictionary word, always including `k + 1`.
pub fn build_dag(text: &str, dict: &FrequencyDictionary) -> BTreeMap<usize, Vec<usize>> {
    let offsets = char_offsets(text);
    let n = offsets.len() - 1;
    let mut dag = BTreeMap::new();
    for k in 0..n {
        let mut ends = vec![k + 1];
        for e in k + 1..=n {
            let frag = &text[offsets[k]..offsets[e]];
            if !dict.is_prefix(frag) {
                break;
            }
            if e > k + 1 && dict.contains(frag) {
                ends.push(e);
            }
        }
        dag.insert(k, ends);
    }
    dag
}

/// Byte offset of every char boundary, including the end.
fn char_offsets(text: &str) -> Vec<usize> {
    text.char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationResult {
    pub segments: Vec<String>,
    pub log_prob: f64,
}

pub fn segment(text: &str, dict: &FrequencyDictionary) -> SegmentationResult {
    if text.is_empty() {
        return SegmentationResult {
            segments: Vec::new(),
            log_prob: 0.0,
        };
    }
    let offsets = char_offsets(text);
    let n = offsets.len() - 1;
    let dag = build_dag(text, dict);

    // best[k] = (score of text[k..], end of the first segment)
    let mut best = vec![(0.0f64, n); n + 1];
    for k in (0..n).rev() {
        let mut choice: Option<(f64, usize)> = None;
        for &e in &dag[&k] {
            let score = dict.log_prob(&text[offsets[k]..offsets[e]]) + best[e].0;
            // ends ascend, so `>=` keeps the longest segment on ties
            if choice.is_none_or(|(s, _)| score >= s) {
                choice = Some((score, e));
            }
        }
        best[k] = choice.expect("single-character edge always present");
    }

    let mut segments = Vec::new();
    let mut k = 0;
    while k < n {
        let e = best[k].1;
        segments.push(text[offsets[k]..offsets[e]].to_string());
        k = e;
    }
    SegmentationResult {
        segments,
        log_prob: best[0].0,
    }
}
