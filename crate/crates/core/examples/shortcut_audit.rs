//! Compares shortcut and strict-merge encoding on the bundled vocabularies.
//!
//! Run from the workspace root:
//! `cargo run --release -p tokaudit-core --example shortcut_audit`

use std::time::Instant;

use tokaudit_core::*;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/profiles");
    for name in ["o200k_base", "cl100k_base"] {
        let profile = VocabularyProfile::load(format!("{root}/{name}.json"))?;
        let start = Instant::now();
        let vocab = profile.load_vocabulary()?;
        println!(
            "{name}: {} tokens, loaded in {:?}",
            vocab.len(),
            start.elapsed()
        );

        let encoder = Encoder::new(&vocab, &profile)?;
        for mode in [EncodeMode::Shortcut, EncodeMode::StrictMerges] {
            let enc = encoder.encode("微信公众号天天中彩票", mode)?;
            let parts: Vec<String> = enc
                .ranks
                .iter()
                .map(|&r| token_display(vocab.get(r).unwrap()))
                .collect();
            println!("  {mode:?}: {} tokens {parts:?}", enc.ranks.len());
        }

        println!(
            "  merge-unreachable: {}",
            find_merge_unreachable(&vocab).len()
        );
        let shortcut_only = find_shortcut_only(&vocab);
        println!("  shortcut-only: {}", shortcut_only.len());
        for &rank in shortcut_only
            .iter()
            .filter(|&&r| {
                vocab
                    .get(r)
                    .is_some_and(|t| classify_token(t) == ScriptClass::Han)
            })
            .take(10)
        {
            println!("    {rank} {}", token_display(vocab.get(rank).unwrap()));
        }
    }
    Ok(())
}
