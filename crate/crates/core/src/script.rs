//! Script classification and per-length token histograms.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::vocab::{Rank, TokenRecord, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptClass {
    Han,
    Latin,
    Mixed,
    NonText,
    Other,
}

impl fmt::Display for ScriptClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScriptClass::Han => "han",
            ScriptClass::Latin => "latin",
            ScriptClass::Mixed => "mixed",
            ScriptClass::NonText => "non_text",
            ScriptClass::Other => "other",
        })
    }
}

/// CJK Unified Ideographs plus Extension A.
pub fn is_han(c: char) -> bool {
    matches!(c as u32, 0x4E00..=0x9FFF | 0x3400..=0x4DBF)
}

fn strip_leading_space(text: &str) -> &str {
    text.strip_prefix(' ').unwrap_or(text)
}

#[derive(PartialEq, Eq, Clone, Copy)]
enum CharKind {
    Han,
    Latin,
    Other,
}

fn char_kind(c: char) -> CharKind {
    if is_han(c) {
        CharKind::Han
    } else if c.is_ascii_alphabetic() {
        CharKind::Latin
    } else {
        CharKind::Other
    }
}

/// Classifies a token after stripping at most one leading ASCII space.
pub fn classify_token(record: &TokenRecord) -> ScriptClass {
    let Some(text) = record.text.as_deref() else {
        return ScriptClass::NonText;
    };
    let mut kinds = strip_leading_space(text).chars().map(char_kind);
    let Some(first) = kinds.next() else {
        return ScriptClass::Other;
    };
    if kinds.any(|k| k != first) {
        return ScriptClass::Mixed;
    }
    match first {
        CharKind::Han => ScriptClass::Han,
        CharKind::Latin => ScriptClass::Latin,
        CharKind::Other => ScriptClass::Other,
    }
}

/// Character count after the one-leading-space strip; `None` for tokens that
/// are not valid UTF-8.
pub fn effective_char_length(record: &TokenRecord) -> Option<usize> {
    record
        .text
        .as_deref()
        .map(|t| strip_leading_space(t).chars().count())
}

/// Which tokens a histogram counts, and how their length is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "class")]
pub enum TokenFilter {
    /// Tokens of one [`ScriptClass`], measured by [`effective_char_length`].
    Script(ScriptClass),
    /// Any decodable token containing at least one Han character, measured
    /// by its raw character count (leading space or underscore included).
    /// This is the reading that reproduces the published o200k size table.
    ContainsHan,
}

impl TokenFilter {
    /// Length of the token under this filter, or `None` if it is excluded.
    pub fn length_of(&self, record: &TokenRecord) -> Option<usize> {
        match self {
            TokenFilter::Script(class) => {
                (classify_token(record) == *class).then(|| effective_char_length(record))?
            }
            TokenFilter::ContainsHan => {
                let text = record.text.as_deref()?;
                text.chars().any(is_han).then(|| text.chars().count())
            }
        }
    }

    pub fn describe(&self, min_len: usize) -> String {
        match self {
            TokenFilter::Script(class) => {
                format!("script={class}, length=chars after one leading space, min_len={min_len}")
            }
            TokenFilter::ContainsHan => {
                format!("contains Han, length=raw chars, min_len={min_len}")
            }
        }
    }
}

impl FromStr for TokenFilter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "han" => TokenFilter::Script(ScriptClass::Han),
            "latin" => TokenFilter::Script(ScriptClass::Latin),
            "mixed" => TokenFilter::Script(ScriptClass::Mixed),
            "other" => TokenFilter::Script(ScriptClass::Other),
            "han-any" | "contains-han" => TokenFilter::ContainsHan,
            _ => {
                return Err(format!(
                    "unknown script filter `{s}` (han, han-any, latin, mixed, other)"
                ))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LengthHistogram {
    pub counts: BTreeMap<usize, usize>,
    pub filter_description: String,
}

impl LengthHistogram {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    /// Longest length present.
    pub fn max_length(&self) -> Option<usize> {
        self.counts.keys().next_back().copied()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("length,count\n");
        for (len, count) in &self.counts {
            let _ = writeln!(out, "{len},{count}");
        }
        out
    }

    /// `{"<length>": count, ...}`
    pub fn to_json_map(&self) -> serde_json::Value {
        self.counts
            .iter()
            .map(|(k, v)| (k.to_string(), serde_json::Value::from(*v)))
            .collect::<serde_json::Map<_, _>>()
            .into()
    }
}

/// Tokens passing `filter` with length at least `min_len`, as (rank, length)
/// in rank order.
pub fn filtered_tokens(
    vocab: &Vocabulary,
    filter: TokenFilter,
    min_len: usize,
) -> Vec<(Rank, usize)> {
    let mut out: Vec<(Rank, usize)> = vocab
        .records()
        .iter()
        .filter_map(|r| {
            filter
                .length_of(r)
                .filter(|&l| l >= min_len)
                .map(|l| (r.rank, l))
        })
        .collect();
    out.sort_unstable();
    out
}

pub fn build_length_histogram(
    vocab: &Vocabulary,
    filter: TokenFilter,
    min_len: usize,
) -> LengthHistogram {
    let min_len = min_len.max(1);
    let mut counts = BTreeMap::new();
    for record in vocab.records() {
        if let Some(len) = filter.length_of(record).filter(|&l| l >= min_len) {
            *counts.entry(len).or_insert(0) += 1;
        }
    }
    LengthHistogram {
        counts,
        filter_description: filter.describe(min_len),
    }
}

/// Count of tokens per script class.
pub fn script_counts(vocab: &Vocabulary) -> BTreeMap<ScriptClass, usize> {
    let mut out = BTreeMap::new();
    for record in vocab.records() {
        *out.entry(classify_token(record)).or_insert(0) += 1;
    }
    out
}
