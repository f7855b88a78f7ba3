//! Rank-file vocabularies in the tiktoken distribution format.
//!
//! Each non-empty line is `<base64 bytes> <decimal rank>`. Ranks do not need
//! to be sorted or contiguous. Tokens whose bytes are not valid UTF-8 are kept
//! with `text == None`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Rank = u32;

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: duplicate rank {rank}")]
    DuplicateRank { line: usize, rank: Rank },
    #[error("line {line}: bytes already assigned to rank {existing}")]
    DuplicateBytes { line: usize, existing: Rank },
    #[error("unknown rank {0}")]
    UnknownRank(Rank),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One vocabulary entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenRecord {
    pub rank: Rank,
    pub bytes: Vec<u8>,
    pub text: Option<String>,
}

impl TokenRecord {
    pub fn new(rank: Rank, bytes: Vec<u8>) -> Self {
        let text = std::str::from_utf8(&bytes).ok().map(str::to_owned);
        Self { rank, bytes, text }
    }

    pub fn byte_len(&self) -> usize {
        self.bytes.len()
    }

    pub fn char_len(&self) -> Option<usize> {
        self.text.as_ref().map(|t| t.chars().count())
    }
}

/// Renders a token for humans: the decoded text when the bytes are UTF-8,
/// otherwise a lossless form with `\xHH` (uppercase) for every byte that is
/// not part of a valid UTF-8 sequence. Backslashes in decodable runs are
/// doubled so the escaped form can be parsed back.
pub fn token_display(record: &TokenRecord) -> String {
    match &record.text {
        Some(text) => text.clone(),
        None => escape_bytes(&record.bytes),
    }
}

pub fn escape_bytes(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for chunk in bytes.utf8_chunks() {
        for ch in chunk.valid().chars() {
            if ch == '\\' {
                out.push_str("\\\\");
            } else {
                out.push(ch);
            }
        }
        for b in chunk.invalid() {
            let _ = write!(out, "\\x{b:02X}");
        }
    }
    out
}

/// Inverse of [`escape_bytes`] for strings containing at least one escape.
pub fn unescape_display(s: &str) -> Option<Vec<u8>> {
    let mut out = Vec::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            let mut buf = [0u8; 4];
            out.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
            continue;
        }
        match chars.next()? {
            '\\' => out.push(b'\\'),
            'x' => {
                let hi = chars.next()?.to_digit(16)?;
                let lo = chars.next()?.to_digit(16)?;
                out.push((hi * 16 + lo) as u8);
            }
            _ => return None,
        }
    }
    Some(out)
}

/// An immutable, indexed BPE vocabulary.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    profile_name: String,
    records: Vec<TokenRecord>,
    by_rank: HashMap<Rank, usize>,
    by_bytes: HashMap<Vec<u8>, Rank>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.profile_name == other.profile_name && self.sorted_pairs() == other.sorted_pairs()
    }
}

impl Vocabulary {
    pub fn from_records(
        profile_name: impl Into<String>,
        records: impl IntoIterator<Item = (Rank, Vec<u8>)>,
    ) -> Result<Self, VocabError> {
        let mut vocab = Self::empty(profile_name);
        for (line, (rank, bytes)) in records.into_iter().enumerate() {
            vocab.insert(line + 1, rank, bytes)?;
        }
        Ok(vocab)
    }

    /// Convenience for small in-memory vocabularies: ranks follow slice order.
    pub fn from_strs(profile_name: impl Into<String>, tokens: &[&str]) -> Result<Self, VocabError> {
        Self::from_records(
            profile_name,
            tokens
                .iter()
                .enumerate()
                .map(|(i, t)| (i as Rank, t.as_bytes().to_vec())),
        )
    }

    fn empty(profile_name: impl Into<String>) -> Self {
        Self {
            profile_name: profile_name.into(),
            records: Vec::new(),
            by_rank: HashMap::new(),
            by_bytes: HashMap::new(),
        }
    }

    fn insert(&mut self, line: usize, rank: Rank, bytes: Vec<u8>) -> Result<(), VocabError> {
        if bytes.is_empty() {
            return Err(VocabError::MalformedLine {
                line,
                reason: "empty token bytes".into(),
            });
        }
        if self.by_rank.contains_key(&rank) {
            return Err(VocabError::DuplicateRank { line, rank });
        }
        if let Some(&existing) = self.by_bytes.get(&bytes) {
            return Err(VocabError::DuplicateBytes { line, existing });
        }
        self.by_rank.insert(rank, self.records.len());
        self.by_bytes.insert(bytes.clone(), rank);
        self.records.push(TokenRecord::new(rank, bytes));
        Ok(())
    }

    pub fn parse(profile_name: impl Into<String>, contents: &str) -> Result<Self, VocabError> {
        let mut vocab = Self::empty(profile_name);
        for (idx, raw) in contents.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.is_empty() {
                continue;
            }
            let malformed = |reason: String| VocabError::MalformedLine {
                line: line_no,
                reason,
            };
            let mut fields = line.split(' ');
            let (Some(encoded), Some(rank), None) = (fields.next(), fields.next(), fields.next())
            else {
                return Err(malformed("expected `<base64> <rank>`".into()));
            };
            let bytes = STANDARD
                .decode(encoded)
                .map_err(|e| malformed(format!("invalid base64: {e}")))?;
            let rank: Rank = rank
                .parse()
                .map_err(|_| malformed(format!("rank `{rank}` is not a non-negative integer")))?;
            vocab.insert(line_no, rank, bytes)?;
        }
        Ok(vocab)
    }

    pub fn profile_name(&self) -> &str {
        &self.profile_name
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records in file order.
    pub fn records(&self) -> &[TokenRecord] {
        &self.records
    }

    pub fn get(&self, rank: Rank) -> Option<&TokenRecord> {
        self.by_rank.get(&rank).map(|&i| &self.records[i])
    }

    pub fn rank_of(&self, bytes: &[u8]) -> Option<Rank> {
        self.by_bytes.get(bytes).copied()
    }

    pub fn decode_token(&self, rank: Rank) -> Result<&[u8], VocabError> {
        self.get(rank)
            .map(|r| r.bytes.as_slice())
            .ok_or(VocabError::UnknownRank(rank))
    }

    pub fn max_rank(&self) -> Option<Rank> {
        self.records.iter().map(|r| r.rank).max()
    }

    fn sorted_pairs(&self) -> Vec<(Rank, &[u8])> {
        let mut pairs: Vec<_> = self
            .records
            .iter()
            .map(|r| (r.rank, r.bytes.as_slice()))
            .collect();
        pairs.sort_unstable();
        pairs
    }

    /// Serializes back to rank-file form, sorted by rank.
    pub fn to_rank_file(&self) -> String {
        let mut out = String::new();
        for (rank, bytes) in self.sorted_pairs() {
            let _ = writeln!(out, "{} {}", STANDARD.encode(bytes), rank);
        }
        out
    }
}

pub fn load_rank_file(
    path: impl AsRef<Path>,
    profile_name: &str,
) -> Result<Vocabulary, VocabError> {
    let path = path.as_ref();
    let contents = fs::read_to_string(path).map_err(|source| VocabError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Vocabulary::parse(profile_name, &contents)
}

/// Per-vocabulary tokenizer configuration, stored as JSON next to the rank
/// file: `{"name", "rank_file", "pattern", "special_tokens"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabularyProfile {
    pub name: String,
    pub rank_file: PathBuf,
    pub pattern: String,
    #[serde(default)]
    pub special_tokens: BTreeMap<String, Rank>,
}

impl VocabularyProfile {
    /// Reads a profile; a relative `rank_file` is resolved against the
    /// profile's own directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, VocabError> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|source| VocabError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut profile: Self = serde_json::from_str(&raw)
            .map_err(|e| VocabError::InvalidProfile(format!("{}: {e}", path.display())))?;
        if profile.rank_file.is_relative() {
            if let Some(dir) = path.parent() {
                profile.rank_file = dir.join(&profile.rank_file);
            }
        }
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<(), VocabError> {
        if self.pattern.is_empty() {
            return Err(VocabError::InvalidProfile(
                "empty pre-tokenization pattern".into(),
            ));
        }
        fancy_regex::Regex::new(&self.pattern)
            .map_err(|e| VocabError::InvalidProfile(format!("pattern does not compile: {e}")))?;
        Ok(())
    }

    pub fn load_vocabulary(&self) -> Result<Vocabulary, VocabError> {
        load_rank_file(&self.rank_file, &self.name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_line() {
        let v = Vocabulary::parse("t", "YQ== 0").unwrap();
        assert_eq!(v.len(), 1);
        let r = v.get(0).unwrap();
        assert_eq!(r.bytes, b"a");
        assert_eq!(r.text.as_deref(), Some("a"));
        assert_eq!(r.byte_len(), 1);
        assert_eq!(r.char_len(), Some(1));
    }

    #[test]
    fn empty_file() {
        let v = Vocabulary::parse("t", "").unwrap();
        assert!(v.is_empty());
    }

    #[test]
    fn unsorted_ranks_and_trailing_newline() {
        let v = Vocabulary::parse("t", "Yg== 7\nYQ== 3\n").unwrap();
        assert_eq!(v.rank_of(b"a"), Some(3));
        assert_eq!(v.rank_of(b"b"), Some(7));
        assert_eq!(v.to_rank_file(), "YQ== 3\nYg== 7\n");
    }

    #[test]
    fn malformed_lines() {
        for bad in ["YQ==", "YQ== 0 1", "YQ==  0", "!!! 0", "YQ== -1", "YQ== x"] {
            assert!(
                matches!(
                    Vocabulary::parse("t", bad),
                    Err(VocabError::MalformedLine { line: 1, .. })
                ),
                "{bad:?}"
            );
        }
    }

    #[test]
    fn duplicates() {
        assert!(matches!(
            Vocabulary::parse("t", "YQ== 0\nYg== 0"),
            Err(VocabError::DuplicateRank { line: 2, rank: 0 })
        ));
        assert!(matches!(
            Vocabulary::parse("t", "YQ== 0\nYQ== 1"),
            Err(VocabError::DuplicateBytes {
                line: 2,
                existing: 0
            })
        ));
    }

    #[test]
    fn decode_unknown_rank() {
        let v = Vocabulary::from_strs("t", &["a"]).unwrap();
        assert_eq!(v.decode_token(0).unwrap(), b"a");
        assert!(matches!(v.decode_token(1), Err(VocabError::UnknownRank(1))));
    }

    #[test]
    fn display_forms() {
        assert_eq!(token_display(&TokenRecord::new(0, b"ab".to_vec())), "ab");
        assert_eq!(token_display(&TokenRecord::new(0, vec![0xFF])), "\\xFF");
        let partial = TokenRecord::new(0, vec![b' ', 0xE5, 0xBE]);
        assert_eq!(partial.text, None);
        assert_eq!(token_display(&partial), " \\xE5\\xBE");
        assert_eq!(unescape_display(" \\xE5\\xBE").unwrap(), partial.bytes);
    }

    #[test]
    fn invalid_utf8_retained() {
        let v = Vocabulary::parse("t", "/w== 0").unwrap();
        let r = v.get(0).unwrap();
        assert_eq!(r.bytes, vec![0xFF]);
        assert!(r.text.is_none());
        assert!(r.char_len().is_none());
    }
}
