//! Byte-level BPE encoding over a rank vocabulary.
//!
//! Two encoders share the merge loop:
//!
//! * [`EncodeMode::StrictMerges`] starts from single bytes and repeatedly
//!   merges the adjacent pair whose concatenation has the lowest rank.
//! * [`EncodeMode::Shortcut`] first looks the whole pre-token piece up in the
//!   vocabulary and returns it as one token when present, which is what the
//!   published GPT-4 / GPT-4o tokenizers do. A long vocabulary entry can be
//!   emitted this way even when no merge sequence would ever build it.

use std::collections::BTreeSet;
use std::ops::Range;

use fancy_regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vocab::{Rank, VocabError, Vocabulary, VocabularyProfile};

#[derive(Debug, Error)]
pub enum BpeError {
    #[error("pre-tokenization pattern does not compile: {0}")]
    PatternCompile(String),
    #[error("pattern matching failed: {0}")]
    PatternRuntime(String),
    #[error("bytes {0:?} cannot be decomposed into vocabulary tokens")]
    Undecomposable(Vec<u8>),
    #[error("input contains special token `{0}`")]
    DisallowedSpecial(String),
    #[error(transparent)]
    Vocab(#[from] VocabError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodeMode {
    Shortcut,
    StrictMerges,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EncodingResult {
    pub ranks: Vec<Rank>,
    /// Byte range of every pre-token piece, in input order.
    pub piece_boundaries: Vec<(usize, usize)>,
}

/// Compiled pre-tokenization pattern.
#[derive(Debug, Clone)]
pub struct Pretokenizer {
    regex: Regex,
}

impl Pretokenizer {
    pub fn new(pattern: &str) -> Result<Self, BpeError> {
        let regex = Regex::new(pattern).map_err(|e| BpeError::PatternCompile(e.to_string()))?;
        Ok(Self { regex })
    }

    /// Byte ranges of the pieces of `text`. Text between matches, if any,
    /// forms its own piece so the ranges always tile the input.
    pub fn split_ranges(&self, text: &str) -> Result<Vec<Range<usize>>, BpeError> {
        let mut out = Vec::new();
        let mut cursor = 0;
        for m in self.regex.find_iter(text) {
            let m = m.map_err(|e| BpeError::PatternRuntime(e.to_string()))?;
            if m.start() > cursor {
                out.push(cursor..m.start());
            }
            if m.end() > m.start() {
                out.push(m.start()..m.end());
            }
            cursor = m.end();
        }
        if cursor < text.len() {
            out.push(cursor..text.len());
        }
        Ok(out)
    }

    pub fn split<'t>(&self, text: &'t str) -> Result<Vec<&'t [u8]>, BpeError> {
        Ok(self
            .split_ranges(text)?
            .into_iter()
            .map(|r| &text.as_bytes()[r])
            .collect())
    }
}

pub fn pretokenize<'t>(text: &'t str, pattern: &str) -> Result<Vec<&'t [u8]>, BpeError> {
    Pretokenizer::new(pattern)?.split(text)
}

/// Lowest-rank-first merging. Leftmost pair wins when the same pair occurs
/// more than once; distinct pairs can never share a rank because byte
/// sequences in a vocabulary are unique.
fn strict_merge(piece: &[u8], vocab: &Vocabulary) -> Result<Vec<Rank>, BpeError> {
    // bounds[i]..bounds[i + 1] is the i-th current part.
    let mut bounds: Vec<usize> = (0..=piece.len()).collect();
    let pair_rank = |bounds: &[usize], i: usize| -> Option<Rank> {
        if i + 2 < bounds.len() {
            vocab.rank_of(&piece[bounds[i]..bounds[i + 2]])
        } else {
            None
        }
    };
    let mut pair_ranks: Vec<Option<Rank>> =
        (0..bounds.len()).map(|i| pair_rank(&bounds, i)).collect();

    loop {
        let best = pair_ranks
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.map(|r| (r, i)))
            .min();
        let Some((_, i)) = best else { break };
        bounds.remove(i + 1);
        pair_ranks.remove(i + 1);
        pair_ranks[i] = pair_rank(&bounds, i);
        if i > 0 {
            pair_ranks[i - 1] = pair_rank(&bounds, i - 1);
        }
    }

    bounds
        .windows(2)
        .map(|w| {
            let part = &piece[w[0]..w[1]];
            vocab
                .rank_of(part)
                .ok_or_else(|| BpeError::Undecomposable(part.to_vec()))
        })
        .collect()
}

pub fn encode_piece(
    piece: &[u8],
    vocab: &Vocabulary,
    mode: EncodeMode,
) -> Result<Vec<Rank>, BpeError> {
    if piece.is_empty() {
        return Ok(Vec::new());
    }
    if mode == EncodeMode::Shortcut {
        if let Some(rank) = vocab.rank_of(piece) {
            return Ok(vec![rank]);
        }
    }
    strict_merge(piece, vocab)
}

/// Pretokenizes and encodes text against one vocabulary/profile pair.
#[derive(Debug, Clone)]
pub struct Encoder<'v> {
    vocab: &'v Vocabulary,
    pretokenizer: Pretokenizer,
    special_tokens: Vec<String>,
    allowed_special: BTreeSet<String>,
}

impl<'v> Encoder<'v> {
    pub fn new(vocab: &'v Vocabulary, profile: &VocabularyProfile) -> Result<Self, BpeError> {
        Ok(Self {
            vocab,
            pretokenizer: Pretokenizer::new(&profile.pattern)?,
            special_tokens: profile.special_tokens.keys().cloned().collect(),
            allowed_special: BTreeSet::new(),
        })
    }

    /// Special-token strings that may appear in input. They are encoded as
    /// ordinary text, never as their special rank.
    pub fn allow_special(mut self, names: impl IntoIterator<Item = String>) -> Self {
        self.allowed_special.extend(names);
        self
    }

    pub fn vocab(&self) -> &Vocabulary {
        self.vocab
    }

    pub fn pretokenizer(&self) -> &Pretokenizer {
        &self.pretokenizer
    }

    pub fn encode(&self, text: &str, mode: EncodeMode) -> Result<EncodingResult, BpeError> {
        if let Some(special) = self
            .special_tokens
            .iter()
            .find(|s| !self.allowed_special.contains(*s) && text.contains(s.as_str()))
        {
            return Err(BpeError::DisallowedSpecial(special.clone()));
        }
        let mut result = EncodingResult::default();
        for range in self.pretokenizer.split_ranges(text)? {
            let piece = &text.as_bytes()[range.clone()];
            result.ranks.extend(encode_piece(piece, self.vocab, mode)?);
            result.piece_boundaries.push((range.start, range.end));
        }
        Ok(result)
    }
}

pub fn encode(
    text: &str,
    vocab: &Vocabulary,
    profile: &VocabularyProfile,
    mode: EncodeMode,
) -> Result<EncodingResult, BpeError> {
    Encoder::new(vocab, profile)?.encode(text, mode)
}

pub fn decode(ranks: &[Rank], vocab: &Vocabulary) -> Result<Vec<u8>, BpeError> {
    let mut out = Vec::new();
    for &rank in ranks {
        out.extend_from_slice(vocab.decode_token(rank)?);
    }
    Ok(out)
}

/// Decodes and returns a string when the bytes are valid UTF-8.
pub fn decode_to_string(ranks: &[Rank], vocab: &Vocabulary) -> Result<Option<String>, BpeError> {
    Ok(String::from_utf8(decode(ranks, vocab)?).ok())
}

/// Multi-byte tokens that cannot be split into two vocabulary tokens that
/// both have a strictly lower rank. A merge sequence can never produce such a
/// token, so it only ever reaches a model through the whole-piece shortcut.
pub fn find_merge_unreachable(vocab: &Vocabulary) -> Vec<Rank> {
    let mut out: Vec<Rank> = vocab
        .records()
        .iter()
        .filter(|r| r.bytes.len() >= 2)
        .filter(|r| {
            !(1..r.bytes.len()).any(|k| {
                let left = vocab.rank_of(&r.bytes[..k]);
                let right = vocab.rank_of(&r.bytes[k..]);
                matches!((left, right), (Some(a), Some(b)) if a < r.rank && b < r.rank)
            })
        })
        .map(|r| r.rank)
        .collect();
    out.sort_unstable();
    out
}

/// Tokens whose own bytes do not strict-encode back to themselves: merging
/// settles on a different split first, so the token is only ever emitted
/// through the whole-piece shortcut. Superset of [`find_merge_unreachable`].
pub fn find_shortcut_only(vocab: &Vocabulary) -> Vec<Rank> {
    let mut out: Vec<Rank> = vocab
        .records()
        .iter()
        .filter(|r| r.bytes.len() >= 2)
        .filter(|r| strict_merge(&r.bytes, vocab).map_or(true, |ranks| ranks != [r.rank]))
        .map(|r| r.rank)
        .collect();
    out.sort_unstable();
    out
}
