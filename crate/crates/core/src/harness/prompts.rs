//! Prompt templates and judge-output parsing.

use std::fs;
use std::path::Path;

use super::records::TaskKind;
use super::HarnessError;

/// Delimiter between segments in split-token prompts.
pub const SEGMENT_DELIMITER: &str = "; ";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PromptTask {
    SentenceLong(String),
    SentenceSplit(Vec<String>),
    Translate(String),
    Explain(String),
    JudgeRank {
        token: String,
        sentences: Vec<String>,
    },
    JudgeConsistency {
        token: String,
        task: TaskKind,
        outputs: Vec<String>,
    },
}

impl PromptTask {
    pub fn kind(&self) -> TaskKind {
        match self {
            PromptTask::SentenceLong(_) => TaskKind::SentenceLong,
            PromptTask::SentenceSplit(_) => TaskKind::SentenceSplit,
            PromptTask::Translate(_) => TaskKind::Translate,
            PromptTask::Explain(_) => TaskKind::Explain,
            PromptTask::JudgeRank { .. } => TaskKind::JudgeRank,
            PromptTask::JudgeConsistency { .. } => TaskKind::JudgeConsistency,
        }
    }
}

/// A versioned set of prompt templates. Placeholders are `{token}`,
/// `{segments}`, `{sentences}`, `{outputs}`, `{count}` and `{task}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub version: String,
    pub sentence_long: String,
    pub sentence_split: String,
    pub translate: String,
    pub explain: String,
    pub judge_rank: String,
    pub judge_consistency: String,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        Self {
            version: include_str!("../../templates/v1/VERSION")
                .trim()
                .to_string(),
            sentence_long: include_str!("../../templates/v1/sentence_long.txt").to_string(),
            sentence_split: include_str!("../../templates/v1/sentence_split.txt").to_string(),
            translate: include_str!("../../templates/v1/translate.txt").to_string(),
            explain: include_str!("../../templates/v1/explain.txt").to_string(),
            judge_rank: include_str!("../../templates/v1/judge_rank.txt").to_string(),
            judge_consistency: include_str!("../../templates/v1/judge_consistency.txt").to_string(),
        }
    }

    /// Reads `VERSION` and one `<task>.txt` per template from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, HarnessError> {
        let read = |name: &str| {
            fs::read_to_string(dir.join(name))
                .map_err(|e| HarnessError::Template(format!("{}: {e}", dir.join(name).display())))
        };
        Ok(Self {
            version: read("VERSION")?.trim().to_string(),
            sentence_long: read("sentence_long.txt")?,
            sentence_split: read("sentence_split.txt")?,
            translate: read("translate.txt")?,
            explain: read("explain.txt")?,
            judge_rank: read("judge_rank.txt")?,
            judge_consistency: read("judge_consistency.txt")?,
        })
    }

    pub fn render(&self, task: &PromptTask) -> Result<String, HarnessError> {
        let out = match task {
            PromptTask::SentenceLong(token) => fill(&self.sentence_long, &[("token", token)]),
            PromptTask::SentenceSplit(segments) => {
                if segments.is_empty() {
                    return Err(HarnessError::WrongVariant(
                        "split prompt needs at least one segment".into(),
                    ));
                }
                fill(
                    &self.sentence_split,
                    &[("segments", &segments.join(SEGMENT_DELIMITER))],
                )
            }
            PromptTask::Translate(token) => fill(&self.translate, &[("token", token)]),
            PromptTask::Explain(token) => fill(&self.explain, &[("token", token)]),
            PromptTask::JudgeRank { token, sentences } => {
                if sentences.len() < 2 {
                    return Err(HarnessError::WrongVariant(
                        "ranking needs at least two sentences".into(),
                    ));
                }
                fill(
                    &self.judge_rank,
                    &[
                        ("token", token),
                        ("count", &sentences.len().to_string()),
                        ("sentences", &numbered(sentences)),
                    ],
                )
            }
            PromptTask::JudgeConsistency {
                token,
                task,
                outputs,
            } => {
                if outputs.is_empty() {
                    return Err(HarnessError::WrongVariant(
                        "consistency check needs outputs".into(),
                    ));
                }
                let task_name = match task {
                    TaskKind::Translate => "English translation",
                    TaskKind::Explain => "meaning",
                    _ => {
                        return Err(HarnessError::WrongVariant(format!(
                            "cannot judge consistency of {}",
                            task.as_str()
                        )))
                    }
                };
                fill(
                    &self.judge_consistency,
                    &[
                        ("token", token),
                        ("task", task_name),
                        ("count", &outputs.len().to_string()),
                        ("outputs", &numbered(outputs)),
                    ],
                )
            }
        };
        Ok(out.trim_end().to_string())
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

fn numbered(items: &[String]) -> String {
    items
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {}", i + 1, s.trim()))
        .collect::<Vec<_>>()
        .join("\n")
}

fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in values {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}

/// Prompt for the two sentence-generation variants.
pub fn build_sentence_prompt(
    task: &PromptTask,
    templates: &TemplateSet,
) -> Result<String, HarnessError> {
    match task {
        PromptTask::SentenceLong(_) | PromptTask::SentenceSplit(_) => templates.render(task),
        other => Err(HarnessError::WrongVariant(format!(
            "{} is not a sentence task",
            other.kind().as_str()
        ))),
    }
}

/// Parses a strict permutation such as `3,1,4,2` of `1..=n`. Surrounding
/// whitespace and a trailing period are tolerated, nothing else is.
pub fn parse_ranking(response: &str, n: usize) -> Result<Vec<usize>, HarnessError> {
    let malformed = || {
        HarnessError::MalformedJudgeOutput(format!(
            "expected a permutation of 1..={n}, got {response:?}"
        ))
    };
    let body = response.trim().trim_end_matches('.');
    let mut seen = vec![false; n + 1];
    let mut out = Vec::with_capacity(n);
    for part in body.split(',') {
        let idx: usize = part.trim().parse().map_err(|_| malformed())?;
        if idx == 0 || idx > n || seen[idx] {
            return Err(malformed());
        }
        seen[idx] = true;
        out.push(idx);
    }
    if out.len() != n {
        return Err(malformed());
    }
    Ok(out)
}

/// Parses `accurate=<0|1>` and `consistent=<0|1>` in any order.
pub fn parse_consistency_flags(response: &str) -> Result<(bool, bool), HarnessError> {
    let lower = response.to_ascii_lowercase();
    let flag = |key: &str| -> Option<bool> {
        let start = lower.find(key)? + key.len();
        let rest = lower[start..].trim_start();
        let rest = rest
            .strip_prefix('=')
            .or_else(|| rest.strip_prefix(':'))?
            .trim_start();
        match rest.chars().next()? {
            '1' => Some(true),
            '0' => Some(false),
            _ => None,
        }
    };
    match (flag("accurate"), flag("consistent")) {
        (Some(a), Some(c)) => Ok((a, c)),
        _ => Err(HarnessError::MalformedJudgeOutput(format!(
            "expected `accurate=<0|1>, consistent=<0|1>`, got {response:?}"
        ))),
    }
}
