//! Tokenizer-bias audit toolkit.
//!
//! Loads tiktoken-format BPE vocabularies, compares whole-piece shortcut
//! encoding with strict merge encoding, finds long tokens that merges can
//! never produce, samples tokens per length, splits long Chinese tokens into
//! dictionary words, drives sentence/translation/judge prompts against chat
//! completion endpoints and computes the evaluation metrics from the records.

pub mod bpe;
pub mod sampler;
pub mod script;
pub mod segment;
pub mod vocab;

pub use bpe::{
    decode, encode, encode_piece, find_merge_unreachable, find_shortcut_only, pretokenize,
    EncodeMode, Encoder, EncodingResult,
};
pub use sampler::{draw_sample, plan_sample, SamplePlan, TokenSample};
pub use script::{
    build_length_histogram, classify_token, effective_char_length, LengthHistogram, ScriptClass,
    TokenFilter,
};
pub use segment::{build_dag, load_dictionary, segment, FrequencyDictionary, SegmentationResult};
pub use vocab::{load_rank_file, token_display, Rank, TokenRecord, Vocabulary, VocabularyProfile};
pub mod harness;
pub mod metrics;
