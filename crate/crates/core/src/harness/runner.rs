//! Experiment execution with bounded parallelism, retries and ordered
//! JSONL persistence.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Duration;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use super::prompts::{parse_consistency_flags, parse_ranking, PromptTask, TemplateSet};
use super::provider::{ChatRequest, Provider, ProviderError};
use super::records::{
    stable_id, GenerationRecord, JsonlWriter, JudgeMode, JudgeRecord, TaskKind,
    RECORD_SCHEMA_VERSION,
};
use super::HarnessError;
use crate::segment::{segment, FrequencyDictionary};
use crate::vocab::Rank;

pub const GENERATIONS_FILE: &str = "generations.jsonl";
pub const CONSISTENCY_FILE: &str = "consistency.jsonl";
pub const JUDGE_RANK_FILE: &str = "judge_rank.jsonl";
pub const JUDGE_CONSISTENCY_FILE: &str = "judge_consistency.jsonl";

fn default_attempts() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    500
}

fn default_concurrency() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Models asked to write sentences.
    pub models: Vec<String>,
    /// Model asked to translate/explain tokens repeatedly; first of
    /// `models` when unset.
    #[serde(default)]
    pub consistency_model: Option<String>,
    /// How many times each translate/explain prompt is repeated.
    pub repetitions_consistency: u32,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    /// Directory receiving the JSONL record files; nothing is written when
    /// unset.
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
}

impl ExperimentConfig {
    pub fn new(models: Vec<String>, repetitions_consistency: u32) -> Self {
        Self {
            models,
            consistency_model: None,
            repetitions_consistency,
            temperature: 0.0,
            seed: 0,
            max_concurrency: default_concurrency(),
            output_path: None,
            max_attempts: default_attempts(),
            retry_backoff_ms: default_backoff_ms(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidConfig(m.to_string()));
        if self.models.is_empty() {
            return bad("at least one model is required");
        }
        if self.repetitions_consistency == 0 {
            return bad("repetitions_consistency must be at least 1");
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return bad("temperature must be non-negative");
        }
        if self.max_concurrency == 0 {
            return bad("max_concurrency must be at least 1");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be at least 1");
        }
        Ok(())
    }

    pub fn consistency_model(&self) -> &str {
        self.consistency_model.as_deref().unwrap_or(&self.models[0])
    }

    fn output_file(&self, name: &str) -> Option<PathBuf> {
        self.output_path.as_ref().map(|dir| dir.join(name))
    }
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Always returns the same instant; used for reproducible offline runs.
pub struct FixedClock(pub DateTime<Utc>);

impl Default for FixedClock {
    fn default() -> Self {
        Self(Utc.timestamp_opt(0, 0).single().expect("epoch"))
    }
}

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        self.0
    }
}

/// One study token as read from a sample export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleItem {
    pub rank: Rank,
    pub text: String,
    pub length: usize,
}

impl SampleItem {
    /// The token as it is put in prompts: one leading space removed.
    pub fn prompt_text(&self) -> &str {
        self.text.strip_prefix(' ').unwrap_or(&self.text)
    }
}

/// Short series id used in ranking tables, e.g. `G4o-L`.
pub fn series_label(model: &str, variant: TaskKind) -> String {
    let short = match model.to_ascii_lowercase().as_str() {
        "gpt-4o" => "G4o".to_string(),
        "gpt-4" => "G4".to_string(),
        _ => model.to_string(),
    };
    let suffix = match variant {
        TaskKind::SentenceLong => "L",
        TaskKind::SentenceSplit => "S",
        other => other.as_str(),
    };
    format!("{short}-{suffix}")
}

pub struct Harness<'a> {
    pub config: &'a ExperimentConfig,
    pub provider: &'a dyn Provider,
    pub templates: &'a TemplateSet,
    pub clock: &'a dyn Clock,
}

struct Call {
    request: ChatRequest,
}

impl<'a> Harness<'a> {
    pub fn new(
        config: &'a ExperimentConfig,
        provider: &'a dyn Provider,
        templates: &'a TemplateSet,
        clock: &'a dyn Clock,
    ) -> Self {
        Self {
            config,
            provider,
            templates,
            clock,
        }
    }

    fn call_with_retry(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let mut attempt = 0;
        loop {
            match self.provider.complete(request) {
                Ok(text) => return Ok(text),
                Err(e) => {
                    attempt += 1;
                    if attempt >= self.config.max_attempts {
                        return Err(e);
                    }
                    let backoff = self
                        .config
                        .retry_backoff_ms
                        .saturating_mul(1 << (attempt - 1).min(16));
                    if backoff > 0 {
                        std::thread::sleep(Duration::from_millis(backoff));
                    }
                }
            }
        }
    }

    /// Runs all calls with at most `max_concurrency` in flight. `finish`
    /// turns each outcome into a record; records are written by this thread
    /// only, in call order, as soon as every earlier call has completed.
    fn execute<R, F>(
        &self,
        calls: Vec<Call>,
        sink: Option<PathBuf>,
        finish: F,
    ) -> Result<Vec<R>, HarnessError>
    where
        R: Serialize + Send,
        F: Fn(usize, &ChatRequest, Result<String, ProviderError>) -> R + Sync,
    {
        let mut writer = sink.as_deref().map(JsonlWriter::create).transpose()?;
        let n = calls.len();
        let next = AtomicUsize::new(0);
        let workers = self.config.max_concurrency.min(n).max(1);
        let (tx, rx) = mpsc::channel::<(usize, R)>();

        let mut ordered: Vec<Option<R>> = (0..n).map(|_| None).collect();
        std::thread::scope(|scope| -> Result<(), HarnessError> {
            for _ in 0..workers {
                let tx = tx.clone();
                let (calls, next, finish) = (&calls, &next, &finish);
                scope.spawn(move || loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= n {
                        break;
                    }
                    let outcome = self.call_with_retry(&calls[i].request);
                    if tx.send((i, finish(i, &calls[i].request, outcome))).is_err() {
                        break;
                    }
                });
            }
            drop(tx);

            let mut flushed = 0;
            for (i, record) in rx {
                ordered[i] = Some(record);
                while flushed < n {
                    let Some(r) = ordered[flushed].as_ref() else {
                        break;
                    };
                    if let Some(w) = writer.as_mut() {
                        w.write(r)?;
                    }
                    flushed += 1;
                }
            }
            Ok(())
        })?;
        if let Some(w) = writer {
            w.finish()?;
        }
        Ok(ordered
            .into_iter()
            .map(|r| r.expect("every call reports"))
            .collect())
    }

    fn generation_record(
        &self,
        item: &SampleItem,
        segments: &[String],
        variant: TaskKind,
        repetition: u32,
        request: &ChatRequest,
        outcome: Result<String, ProviderError>,
    ) -> GenerationRecord {
        let (response, error) = match outcome {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        GenerationRecord {
            schema_version: RECORD_SCHEMA_VERSION,
            record_id: stable_id(&[
                variant.as_str(),
                &request.model,
                &repetition.to_string(),
                &self.config.seed.to_string(),
                &item.rank.to_string(),
            ]),
            token_rank: item.rank,
            token: item.prompt_text().to_string(),
            segments: segments.to_vec(),
            variant,
            model: request.model.clone(),
            repetition,
            template_version: self.templates.version.clone(),
            prompt: request.prompt().to_string(),
            response,
            timestamp: self.clock.now(),
            error,
        }
    }

    /// Long-token and split-token sentence prompts for every model:
    /// `2 * models` records per token.
    pub fn run_generation(
        &self,
        sample: &[SampleItem],
        dict: &FrequencyDictionary,
    ) -> Result<Vec<GenerationRecord>, HarnessError> {
        self.config.validate()?;
        let mut calls = Vec::new();
        let mut meta = Vec::new();
        for item in sample {
            let token = item.prompt_text();
            let segments = segment(token, dict).segments;
            for model in &self.config.models {
                for (variant, task) in [
                    (
                        TaskKind::SentenceLong,
                        PromptTask::SentenceLong(token.to_string()),
                    ),
                    (
                        TaskKind::SentenceSplit,
                        PromptTask::SentenceSplit(segments.clone()),
                    ),
                ] {
                    let prompt = self.templates.render(&task)?;
                    calls.push(Call {
                        request: ChatRequest::user(
                            model,
                            &prompt,
                            self.config.temperature,
                            variant,
                        ),
                    });
                    let segs = if variant == TaskKind::SentenceSplit {
                        segments.clone()
                    } else {
                        Vec::new()
                    };
                    meta.push((item, segs, variant));
                }
            }
        }
        self.execute(
            calls,
            self.config.output_file(GENERATIONS_FILE),
            |i, req, outcome| {
                let (item, segs, variant) = &meta[i];
                self.generation_record(item, segs, *variant, 0, req, outcome)
            },
        )
    }

    /// `repetitions_consistency` translate and explain prompts per token,
    /// always at temperature 0.
    pub fn run_consistency(
        &self,
        sample: &[SampleItem],
    ) -> Result<Vec<GenerationRecord>, HarnessError> {
        self.config.validate()?;
        if self.config.temperature != 0.0 {
            return Err(HarnessError::NonZeroTemperature(self.config.temperature));
        }
        let model = self.config.consistency_model();
        let mut calls = Vec::new();
        let mut meta = Vec::new();
        for item in sample {
            let token = item.prompt_text().to_string();
            for (variant, task) in [
                (TaskKind::Translate, PromptTask::Translate(token.clone())),
                (TaskKind::Explain, PromptTask::Explain(token.clone())),
            ] {
                let prompt = self.templates.render(&task)?;
                for rep in 0..self.config.repetitions_consistency {
                    calls.push(Call {
                        request: ChatRequest::user(model, &prompt, 0.0, variant),
                    });
                    meta.push((item, variant, rep));
                }
            }
        }
        self.execute(
            calls,
            self.config.output_file(CONSISTENCY_FILE),
            |i, req, outcome| {
                let (item, variant, rep) = meta[i];
                self.generation_record(item, &[], variant, rep, req, outcome)
            },
        )
    }

    /// Sends each group to the judge. Unparseable answers and failed calls
    /// become records with `error` set.
    pub fn run_judge(
        &self,
        groups: &[JudgeGroup],
        judge_model: &str,
        mode: JudgeMode,
    ) -> Result<Vec<JudgeRecord>, HarnessError> {
        let mut calls = Vec::new();
        for group in groups {
            let task = match mode {
                JudgeMode::Rank => PromptTask::JudgeRank {
                    token: group.token.clone(),
                    sentences: group.texts.clone(),
                },
                JudgeMode::Consistency => PromptTask::JudgeConsistency {
                    token: group.token.clone(),
                    task: group.task,
                    outputs: group.texts.clone(),
                },
            };
            let prompt = self.templates.render(&task)?;
            let kind = task.kind();
            let mut request = ChatRequest::user(judge_model, &prompt, 0.0, kind);
            request.items = group.texts.len();
            calls.push(Call { request });
        }
        let file = match mode {
            JudgeMode::Rank => JUDGE_RANK_FILE,
            JudgeMode::Consistency => JUDGE_CONSISTENCY_FILE,
        };
        self.execute(calls, self.config.output_file(file), |i, req, outcome| {
            let group = &groups[i];
            let mut record = JudgeRecord {
                schema_version: RECORD_SCHEMA_VERSION,
                record_id: stable_id(&[
                    "judge",
                    &format!("{mode:?}"),
                    group.task.as_str(),
                    judge_model,
                    &self.config.seed.to_string(),
                    &group.token_rank.to_string(),
                ]),
                token_rank: group.token_rank,
                token: group.token.clone(),
                mode,
                task: group.task,
                judge_model: judge_model.to_string(),
                template_version: self.templates.version.clone(),
                members: group.members.clone(),
                prompt: req.prompt().to_string(),
                response: None,
                ranking: None,
                accurate: None,
                consistent: None,
                error: None,
                timestamp: self.clock.now(),
            };
            match outcome {
                Err(e) => record.error = Some(e.to_string()),
                Ok(text) => {
                    let parsed = match mode {
                        JudgeMode::Rank => parse_ranking(&text, group.texts.len())
                            .map(|r| record.ranking = Some(r)),
                        JudgeMode::Consistency => parse_consistency_flags(&text).map(|(a, c)| {
                            record.accurate = Some(a);
                            record.consistent = Some(c);
                        }),
                    };
                    if let Err(e) = parsed {
                        record.error = Some(e.to_string());
                    }
                    record.response = Some(text);
                }
            }
            record
        })
    }
}

/// Items judged together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JudgeGroup {
    pub token_rank: Rank,
    pub token: String,
    pub task: TaskKind,
    pub members: Vec<String>,
    pub texts: Vec<String>,
}

/// One ranking group per token holding every successful sentence, members
/// labelled by [`series_label`] and sorted by label.
pub fn rank_groups(records: &[GenerationRecord]) -> Vec<JudgeGroup> {
    let mut by_token: BTreeMap<Rank, Vec<&GenerationRecord>> = BTreeMap::new();
    for r in records {
        if matches!(r.variant, TaskKind::SentenceLong | TaskKind::SentenceSplit)
            && r.response.is_some()
        {
            by_token.entry(r.token_rank).or_default().push(r);
        }
    }
    by_token
        .into_iter()
        .filter(|(_, rs)| rs.len() >= 2)
        .map(|(rank, mut rs)| {
            rs.sort_by_key(|r| series_label(&r.model, r.variant));
            JudgeGroup {
                token_rank: rank,
                token: rs[0].token.clone(),
                task: TaskKind::SentenceLong,
                members: rs
                    .iter()
                    .map(|r| series_label(&r.model, r.variant))
                    .collect(),
                texts: rs
                    .iter()
                    .map(|r| r.response.clone().unwrap_or_default())
                    .collect(),
            }
        })
        .collect()
}

/// One group per (token, translate|explain) with the repeated outputs in
/// repetition order.
pub fn consistency_groups(records: &[GenerationRecord]) -> Vec<JudgeGroup> {
    let mut by_key: BTreeMap<(Rank, TaskKind), Vec<&GenerationRecord>> = BTreeMap::new();
    for r in records {
        if matches!(r.variant, TaskKind::Translate | TaskKind::Explain) && r.response.is_some() {
            by_key.entry((r.token_rank, r.variant)).or_default().push(r);
        }
    }
    by_key
        .into_iter()
        .map(|((rank, task), mut rs)| {
            rs.sort_by_key(|r| r.repetition);
            JudgeGroup {
                token_rank: rank,
                token: rs[0].token.clone(),
                task,
                members: rs.iter().map(|r| r.record_id.clone()).collect(),
                texts: rs
                    .iter()
                    .map(|r| r.response.clone().unwrap_or_default())
                    .collect(),
            }
        })
        .collect()
}

/// Reads a sample export (`[{rank, text, length}, ...]`).
pub fn load_sample(path: &Path) -> Result<Vec<SampleItem>, HarnessError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Persist(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&raw)
        .map_err(|e| HarnessError::Persist(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::provider::MockProvider;

    fn items(n: usize) -> Vec<SampleItem> {
        ["北京赛车", " 国产精品", "天天", "彩票", "微信", "公众号"]
            .iter()
            .cycle()
            .take(n)
            .enumerate()
            .map(|(i, t)| SampleItem {
                rank: 100 + i as Rank,
                text: t.to_string(),
                length: t.chars().count(),
            })
            .collect()
    }

    fn cfg(models: &[&str], ng: u32) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(models.iter().map(|m| m.to_string()).collect(), ng);
        c.retry_backoff_ms = 0;
        c
    }

    #[test]
    fn one_token_one_model() {
        let c = cfg(&["m"], 1);
        let t = TemplateSet::builtin();
        let p = MockProvider::new(1);
        let clock = FixedClock::default();
        let h = Harness::new(&c, &p, &t, &clock);
        let recs = h
            .run_generation(&items(1), &FrequencyDictionary::default())
            .unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].variant, TaskKind::SentenceLong);
        assert_eq!(recs[1].variant, TaskKind::SentenceSplit);
        assert_eq!(recs[1].segments, vec!["北", "京", "赛", "车"]);
        assert!(recs
            .iter()
            .all(|r| r.response.is_some() && r.error.is_none()));
        let recs = h.run_consistency(&items(1)).unwrap();
        assert_eq!(recs.len(), 2);
    }

    #[test]
    fn leading_space_removed_in_prompts() {
        let c = cfg(&["m"], 1);
        let t = TemplateSet::builtin();
        let p = MockProvider::new(1);
        let clock = FixedClock::default();
        let h = Harness::new(&c, &p, &t, &clock);
        let recs = h
            .run_generation(&items(2)[1..], &FrequencyDictionary::default())
            .unwrap();
        assert_eq!(recs[0].token, "国产精品");
        assert!(recs[0].prompt.contains("“国产精品”"));
    }

    #[test]
    fn failing_provider_yields_error_records() {
        let c = cfg(&["a", "b"], 2);
        let t = TemplateSet::builtin();
        let p = MockProvider::new(1).always_failing();
        let clock = FixedClock::default();
        let h = Harness::new(&c, &p, &t, &clock);
        let recs = h
            .run_generation(&items(3), &FrequencyDictionary::default())
            .unwrap();
        assert_eq!(recs.len(), 12);
        assert!(recs
            .iter()
            .all(|r| r.error.is_some() && r.response.is_none()));
        assert_eq!(p.calls(), 12 * 3);
    }

    #[test]
    fn retries_recover() {
        let mut c = cfg(&["a"], 1);
        c.max_concurrency = 1;
        let t = TemplateSet::builtin();
        let p = MockProvider::new(1).failing_first(2);
        let clock = FixedClock::default();
        let h = Harness::new(&c, &p, &t, &clock);
        let recs = h
            .run_generation(&items(1), &FrequencyDictionary::default())
            .unwrap();
        assert!(recs.iter().all(|r| r.error.is_none()));
        assert_eq!(p.calls(), 4);
    }

    #[test]
    fn nonzero_temperature_rejected() {
        let mut c = cfg(&["a"], 1);
        c.temperature = 0.7;
        let t = TemplateSet::builtin();
        let p = MockProvider::new(1);
        let clock = FixedClock::default();
        let h = Harness::new(&c, &p, &t, &clock);
        assert!(matches!(
            h.run_consistency(&items(1)),
            Err(HarnessError::NonZeroTemperature(_))
        ));
    }

    #[test]
    fn invalid_configs() {
        assert!(cfg(&[], 1).validate().is_err());
        assert!(cfg(&["a"], 0).validate().is_err());
        let mut c = cfg(&["a"], 1);
        c.max_concurrency = 0;
        assert!(c.validate().is_err());
        c.max_concurrency = 1;
        c.temperature = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn concurrency_is_bounded() {
        let mut c = cfg(&["a", "b"], 1);
        c.max_concurrency = 3;
        let t = TemplateSet::builtin();
        let p = MockProvider::new(1).with_delay(Duration::from_millis(5));
        let clock = FixedClock::default();
        let h = Harness::new(&c, &p, &t, &clock);
        h.run_generation(&items(6), &FrequencyDictionary::default())
            .unwrap();
        assert!(p.max_in_flight() <= 3);
        assert!(p.max_in_flight() >= 2, "expected parallel calls");
    }

    #[test]
    fn judge_rank_and_consistency() {
        let c = cfg(&["GPT-4", "GPT-4o"], 5);
        let t = TemplateSet::builtin();
        let p = MockProvider::new(1)
            .with_reply("privacy and security", "2,1,4,3")
            .with_reply("times to give", "consistent=1, accurate=1");
        let clock = FixedClock::default();
        let h = Harness::new(&c, &p, &t, &clock);
        let gens = h
            .run_generation(&items(1), &FrequencyDictionary::default())
            .unwrap();
        let groups = rank_groups(&gens);
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].members, vec!["G4-L", "G4-S", "G4o-L", "G4o-S"]);
        let judged = h.run_judge(&groups, "GPT-4", JudgeMode::Rank).unwrap();
        assert_eq!(judged[0].ranking, Some(vec![2, 1, 4, 3]));
        assert_eq!(judged[0].template_version, "v1");

        let cons = h.run_consistency(&items(1)).unwrap();
        let groups = consistency_groups(&cons);
        assert_eq!(groups.len(), 2);
        assert!(groups.iter().all(|g| g.texts.len() == 5));
        let judged = h
            .run_judge(&groups, "GPT-4", JudgeMode::Consistency)
            .unwrap();
        assert!(judged
            .iter()
            .all(|j| j.accurate == Some(true) && j.consistent == Some(true)));
    }

    #[test]
    fn malformed_judge_output_is_recorded() {
        let c = cfg(&["GPT-4", "GPT-4o"], 1);
        let t = TemplateSet::builtin();
        let p =
            MockProvider::new(1).with_reply("privacy and security", "I like the second one best.");
        let clock = FixedClock::default();
        let h = Harness::new(&c, &p, &t, &clock);
        let gens = h
            .run_generation(&items(1), &FrequencyDictionary::default())
            .unwrap();
        let judged = h
            .run_judge(&rank_groups(&gens), "GPT-4", JudgeMode::Rank)
            .unwrap();
        assert_eq!(judged.len(), 1);
        assert!(judged[0].ranking.is_none());
        assert!(judged[0].error.as_deref().unwrap().contains("permutation"));
        assert_eq!(
            judged[0].response.as_deref(),
            Some("I like the second one best.")
        );
    }

    #[test]
    fn labels() {
        assert_eq!(series_label("GPT-4o", TaskKind::SentenceLong), "G4o-L");
        assert_eq!(series_label("gpt-4", TaskKind::SentenceSplit), "G4-S");
        assert_eq!(series_label("llama", TaskKind::SentenceSplit), "llama-S");
    }
}
