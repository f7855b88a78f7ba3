//! Prompt construction, provider calls and record persistence for the
//! sentence, consistency and judge experiments.

use thiserror::Error;

pub mod prompts;
pub mod provider;
pub mod records;
pub mod runner;

pub use prompts::{
    build_sentence_prompt, parse_consistency_flags, parse_ranking, PromptTask, TemplateSet,
    SEGMENT_DELIMITER,
};
pub use provider::{
    ChatMessage, ChatRequest, MockProvider, OpenAiProvider, Provider, ProviderError,
};
pub use records::{
    read_jsonl, stable_id, write_jsonl, GenerationRecord, JudgeMode, JudgeRecord, TaskKind,
};
pub use runner::{
    consistency_groups, load_sample, rank_groups, series_label, Clock, ExperimentConfig,
    FixedClock, Harness, JudgeGroup, SampleItem, SystemClock, CONSISTENCY_FILE, GENERATIONS_FILE,
    JUDGE_CONSISTENCY_FILE, JUDGE_RANK_FILE,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("wrong prompt variant: {0}")]
    WrongVariant(String),
    #[error("consistency runs require temperature 0, got {0}")]
    NonZeroTemperature(f64),
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("template: {0}")]
    Template(String),
    #[error("malformed judge output: {0}")]
    MalformedJudgeOutput(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("persist: {0}")]
    Persist(String),
}
