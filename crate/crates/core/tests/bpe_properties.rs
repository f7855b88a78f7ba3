mod common;

use std::sync::OnceLock;

use common::{cl100k, naive_bpe, o200k, toy_vocab};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokaudit_core::bpe::Pretokenizer;
use tokaudit_core::{
    decode, encode_piece, find_merge_unreachable, find_shortcut_only, EncodeMode, Encoder,
    Vocabulary,
};

const MODES: [EncodeMode; 2] = [EncodeMode::Shortcut, EncodeMode::StrictMerges];

fn encoders() -> &'static [Encoder<'static>; 2] {
    static CELL: OnceLock<[Encoder<'static>; 2]> = OnceLock::new();
    CELL.get_or_init(|| {
        let (p1, v1) = o200k();
        let (p2, v2) = cl100k();
        [Encoder::new(v1, p1).unwrap(), Encoder::new(v2, p2).unwrap()]
    })
}

fn toy_setup() -> &'static (Vocabulary, Pretokenizer) {
    static CELL: OnceLock<(Vocabulary, Pretokenizer)> = OnceLock::new();
    CELL.get_or_init(|| (byte_vocab(), Pretokenizer::new(&o200k().0.pattern).unwrap()))
}

/// Byte-level toy vocabulary: all 256 bytes plus a few merges, so any
/// UTF-8 input is encodable.
fn byte_vocab() -> Vocabulary {
    let mut tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
    for w in [
        "th", "he", "the", " t", " the", "in", "ing", "微", "信", "微信",
    ] {
        tokens.push(w.as_bytes().to_vec());
    }
    Vocabulary::from_records(
        "bytes",
        tokens.into_iter().enumerate().map(|(i, t)| (i as u32, t)),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn roundtrip_real_vocabularies(text in "\\PC{0,40}") {
        for enc in encoders() {
            for mode in MODES {
                let ranks = enc.encode(&text, mode).unwrap().ranks;
                prop_assert_eq!(decode(&ranks, enc.vocab()).unwrap(), text.as_bytes());
            }
        }
    }

    #[test]
    fn roundtrip_toy_vocabulary(text in any::<String>()) {
        let (vocab, pre) = toy_setup();
        for mode in MODES {
            let mut ranks = Vec::new();
            for piece in pre.split(&text).unwrap() {
                ranks.extend(encode_piece(piece, vocab, mode).unwrap());
            }
            prop_assert_eq!(decode(&ranks, vocab).unwrap(), text.as_bytes());
        }
    }
}

#[test]
fn strict_merges_match_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut diverged = 0;
    for case in 0..1000u64 {
        let alphabet: &[u8] = if case % 2 == 0 { b"ab" } else { b"abcd" };
        let vocab = toy_vocab(case, alphabet, 12 + (case % 20) as usize);
        let len = rng.gen_range(0..=64);
        let input: Vec<u8> = (0..len)
            .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
            .collect();
        let fast = encode_piece(&input, &vocab, EncodeMode::StrictMerges).ok();
        let slow = if input.is_empty() {
            Some(Vec::new())
        } else {
            naive_bpe(&input, &vocab)
        };
        assert_eq!(
            fast,
            slow,
            "case {case} input {:?}",
            String::from_utf8_lossy(&input)
        );
        // Whole tokens as input: the shortcut always returns the token, strict
        // merging must still agree with the oracle.
        for t in vocab.records() {
            assert_eq!(
                encode_piece(&t.bytes, &vocab, EncodeMode::Shortcut).unwrap(),
                vec![t.rank]
            );
            let strict = encode_piece(&t.bytes, &vocab, EncodeMode::StrictMerges).ok();
            assert_eq!(
                strict,
                naive_bpe(&t.bytes, &vocab),
                "case {case} token {}",
                t.rank
            );
            if strict != Some(vec![t.rank]) {
                diverged += 1;
            }
        }
    }
    assert!(
        diverged > 0,
        "toy vocabularies never exercised the shortcut"
    );
}

#[test]
fn strict_merges_match_naive_oracle_on_real_pieces() {
    let (profile, vocab) = o200k();
    let pre = Pretokenizer::new(&profile.pattern).unwrap();
    let text = "微信公众号天天中彩票 and 北京赛车, plus 国产精品 12345 tokens!";
    for piece in pre.split(text).unwrap() {
        assert_eq!(
            encode_piece(piece, vocab, EncodeMode::StrictMerges).ok(),
            naive_bpe(piece, vocab)
        );
    }
}

#[test]
fn unreachable_is_subset_of_shortcut_only() {
    for seed in 0..50 {
        let v = toy_vocab(seed, b"abc", 15);
        let shortcut = find_shortcut_only(&v);
        for r in find_merge_unreachable(&v) {
            assert!(shortcut.contains(&r), "seed {seed} rank {r}");
        }
        // Brute force: a token is shortcut-only iff the oracle does not
        // rebuild it from its own bytes.
        let expected: Vec<u32> = v
            .records()
            .iter()
            .filter(|t| t.bytes.len() >= 2 && naive_bpe(&t.bytes, &v) != Some(vec![t.rank]))
            .map(|t| t.rank)
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        assert_eq!(shortcut, expected, "seed {seed}");
    }
}
