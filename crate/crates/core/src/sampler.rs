//! Length-stratified capped sampling.
//!
//! For each token length `i` with `n_i` candidates the plan takes
//! `min(n_i, cap)` tokens, so the sample size is the sum of those takes.
//! Draws use ChaCha8 seeded from a `u64` and a partial Fisher-Yates shuffle,
//! which gives the same result on every platform.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::script::LengthHistogram;
use crate::vocab::{Rank, Vocabulary};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SampleError {
    #[error("length {length}: need {needed} tokens, only {available} available")]
    InsufficientTokens {
        length: usize,
        needed: usize,
        available: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SamplePlan {
    pub per_length: BTreeMap<usize, usize>,
    pub cap: usize,
    pub total: usize,
}

pub fn plan_sample(hist: &LengthHistogram, cap: usize) -> SamplePlan {
    let per_length: BTreeMap<usize, usize> = hist
        .counts
        .iter()
        .map(|(&len, &n)| (len, n.min(cap)))
        .collect();
    let total = per_length.values().sum();
    SamplePlan {
        per_length,
        cap,
        total,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SampledToken {
    pub rank: Rank,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenSample {
    /// Ordered by (length, rank).
    pub entries: Vec<SampledToken>,
    pub seed: u64,
}

pub fn draw_sample(
    tokens: &[(Rank, usize)],
    plan: &SamplePlan,
    seed: u64,
) -> Result<TokenSample, SampleError> {
    let mut buckets: BTreeMap<usize, Vec<Rank>> = BTreeMap::new();
    for &(rank, length) in tokens {
        buckets.entry(length).or_default().push(rank);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(plan.total);
    for (&length, &take) in &plan.per_length {
        if take == 0 {
            continue;
        }
        let mut pool = buckets.remove(&length).unwrap_or_default();
        if pool.len() < take {
            return Err(SampleError::InsufficientTokens {
                length,
                needed: take,
                available: pool.len(),
            });
        }
        pool.sort_unstable();
        // whole bucket: no draw, result independent of the seed
        if pool.len() > take {
            for i in 0..take {
                let j = rng.gen_range(i..pool.len());
                pool.swap(i, j);
            }
            pool.truncate(take);
        }
        entries.extend(pool.into_iter().map(|rank| SampledToken { rank, length }));
    }
    entries.sort_unstable_by_key(|e| (e.length, e.rank));
    Ok(TokenSample { entries, seed })
}

/// One row of the exported sample file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleExportEntry {
    pub rank: Rank,
    /// Display form of the token, see [`crate::vocab::token_display`].
    pub text: String,
    pub length: usize,
}

impl TokenSample {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn export(&self, vocab: &Vocabulary) -> Vec<SampleExportEntry> {
        self.entries
            .iter()
            .map(|e| SampleExportEntry {
                rank: e.rank,
                text: vocab
                    .get(e.rank)
                    .map(crate::vocab::token_display)
                    .unwrap_or_default(),
                length: e.length,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(pairs: &[(usize, usize)]) -> LengthHistogram {
        LengthHistogram {
            counts: pairs.iter().copied().collect(),
            filter_description: String::new(),
        }
    }

    #[test]
    fn table_one_plan() {
        let mut pairs: Vec<(usize, usize)> = (2..=9).map(|i| (i, 20 + i * 7)).collect();
        pairs.extend([(10, 4), (11, 2)]);
        let plan = plan_sample(&hist(&pairs), 20);
        assert_eq!(plan.total, 166);
        for i in 2..=9 {
            assert_eq!(plan.per_length[&i], 20);
        }
        assert_eq!(plan.per_length[&10], 4);
        assert_eq!(plan.per_length[&11], 2);
    }

    #[test]
    fn zero_cap_and_small_buckets() {
        let plan = plan_sample(&hist(&[(1, 3), (2, 50)]), 0);
        assert_eq!(plan.total, 0);
        assert!(plan.per_length.values().all(|&t| t == 0));
        let plan = plan_sample(&hist(&[(1, 3), (2, 50)]), 20);
        assert_eq!(plan.per_length, BTreeMap::from([(1, 3), (2, 20)]));
        assert_eq!(plan.total, 23);
    }

    #[test]
    fn whole_bucket_taken() {
        let plan = plan_sample(&hist(&[(2, 2)]), 2);
        for seed in [0, 1, 42] {
            let s = draw_sample(&[(9, 2), (5, 2)], &plan, seed).unwrap();
            assert_eq!(
                s.entries.iter().map(|e| e.rank).collect::<Vec<_>>(),
                vec![5, 9]
            );
        }
    }

    #[test]
    fn seeded_draw_is_repeatable() {
        let plan = plan_sample(&hist(&[(2, 2)]), 1);
        let a = draw_sample(&[(5, 2), (9, 2)], &plan, 42).unwrap();
        let b = draw_sample(&[(5, 2), (9, 2)], &plan, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 1);
    }

    #[test]
    fn empty_plan() {
        let s = draw_sample(&[(1, 2)], &SamplePlan::default(), 7).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn insufficient() {
        let plan = SamplePlan {
            per_length: BTreeMap::from([(3, 2)]),
            cap: 2,
            total: 2,
        };
        assert_eq!(
            draw_sample(&[(1, 3)], &plan, 0),
            Err(SampleError::InsufficientTokens {
                length: 3,
                needed: 2,
                available: 1
            })
        );
    }
}
