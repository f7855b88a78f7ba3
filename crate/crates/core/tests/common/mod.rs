//! Shared data paths and independent oracles for the integration tests.

#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokaudit_core::{FrequencyDictionary, Rank, Vocabulary, VocabularyProfile};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn profile(name: &str) -> VocabularyProfile {
    VocabularyProfile::load(data_dir().join(format!("profiles/{name}.json"))).expect("profile")
}

pub fn o200k() -> &'static (VocabularyProfile, Vocabulary) {
    static CELL: OnceLock<(VocabularyProfile, Vocabulary)> = OnceLock::new();
    CELL.get_or_init(|| {
        let p = profile("o200k_base");
        let v = p.load_vocabulary().expect("o200k vocabulary");
        (p, v)
    })
}

pub fn cl100k() -> &'static (VocabularyProfile, Vocabulary) {
    static CELL: OnceLock<(VocabularyProfile, Vocabulary)> = OnceLock::new();
    CELL.get_or_init(|| {
        let p = profile("cl100k_base");
        let v = p.load_vocabulary().expect("cl100k vocabulary");
        (p, v)
    })
}

/// Textbook BPE: rescan every adjacent pair each round, merge the
/// lowest-ranked one (leftmost on ties), stop when nothing merges.
pub fn naive_bpe(piece: &[u8], vocab: &Vocabulary) -> Option<Vec<Rank>> {
    let mut parts: Vec<Vec<u8>> = piece.iter().map(|&b| vec![b]).collect();
    loop {
        let mut best: Option<(Rank, usize)> = None;
        for i in 0..parts.len().saturating_sub(1) {
            let joined = [parts[i].as_slice(), parts[i + 1].as_slice()].concat();
            if let Some(r) = vocab.rank_of(&joined) {
                if best.is_none_or(|(br, _)| r < br) {
                    best = Some((r, i));
                }
            }
        }
        let Some((_, i)) = best else { break };
        let right = parts.remove(i + 1);
        parts[i].extend(right);
    }
    parts.iter().map(|p| vocab.rank_of(p)).collect()
}

/// Toy vocabulary over a small byte alphabet: every single byte of the
/// alphabet, then `merges` tokens built by joining two existing tokens, then
/// a few arbitrary strings that merging may never reach.
pub fn toy_vocab(seed: u64, alphabet: &[u8], merges: usize) -> Vocabulary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tokens: Vec<Vec<u8>> = alphabet.iter().map(|&b| vec![b]).collect();
    let mut attempts = 0;
    while tokens.len() < alphabet.len() + merges && attempts < merges * 50 {
        attempts += 1;
        let a = &tokens[rng.gen_range(0..tokens.len())];
        let b = &tokens[rng.gen_range(0..tokens.len())];
        let joined = [a.as_slice(), b.as_slice()].concat();
        if joined.len() <= 8 && !tokens.contains(&joined) {
            tokens.push(joined);
        }
    }
    for _ in 0..3 {
        let len = rng.gen_range(3..6);
        let s: Vec<u8> = (0..len)
            .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
            .collect();
        if !tokens.contains(&s) {
            tokens.push(s);
        }
    }
    Vocabulary::from_records(
        "toy",
        tokens.into_iter().enumerate().map(|(i, t)| (i as Rank, t)),
    )
    .unwrap()
}

/// Every segmentation of `text` (2^(n-1) of them) where multi-character
/// pieces are dictionary words. Each comes with its score summed right to
/// left, the same association the dynamic program uses.
pub fn brute_force_segmentations(
    text: &str,
    dict: &FrequencyDictionary,
) -> Vec<(Vec<String>, f64)> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    if n == 0 {
        return vec![(Vec::new(), 0.0)];
    }
    let mut out = Vec::new();
    for mask in 0u32..(1 << (n - 1)) {
        let mut segs = Vec::new();
        let mut start = 0;
        for i in 1..=n {
            if i == n || mask & (1 << (i - 1)) != 0 {
                segs.push(chars[start..i].iter().collect::<String>());
                start = i;
            }
        }
        if segs
            .iter()
            .any(|s| s.chars().count() > 1 && !dict.contains(s))
        {
            continue;
        }
        let score = segs.iter().rev().fold(0.0, |acc, s| dict.log_prob(s) + acc);
        out.push((segs, score));
    }
    out
}
