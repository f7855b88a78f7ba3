//! Evaluation metrics over generation, score, ranking and judge records.
//!
//! * token retention accuracy: share of generated sentences that contain the
//!   prompted token (or every prompted segment),
//! * ranking distribution: share of tokens where each series was placed
//!   1st..4th by the judge,
//! * score distribution: share of each 0..=5 human score per model/variant,
//! * consistency summary: mean judge accuracy/consistency flags,
//! * score-5 counts per token length.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::{series_label, GenerationRecord, JudgeMode, JudgeRecord, TaskKind};
use crate::vocab::Rank;

mod render;

pub use render::{parse_report_json, render_report, Document, ReportFormat};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("empty input")]
    EmptyInput,
    #[error("token {token_rank}: placements are not a permutation of 1..=4")]
    InvalidPermutation { token_rank: Rank },
    #[error("no length known for token {0}")]
    MissingLength(Rank),
    #[error("score {0} outside 0..=5")]
    ScoreOutOfRange(u8),
    #[error("invalid report: {0}")]
    InvalidReport(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Long,
    Split,
}

impl Variant {
    pub fn from_task(task: TaskKind) -> Option<Self> {
        match task {
            TaskKind::SentenceLong => Some(Variant::Long),
            TaskKind::SentenceSplit => Some(Variant::Split),
            _ => None,
        }
    }

    pub fn task(self) -> TaskKind {
        match self {
            Variant::Long => TaskKind::SentenceLong,
            Variant::Split => TaskKind::SentenceSplit,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::Long => "Long",
            Variant::Split => "Short",
        }
    }
}

/// A human relevance/accuracy score in `0..=5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Score(u8);

impl Score {
    pub const MAX: u8 = 5;

    pub fn new(value: u8) -> Result<Self, MetricsError> {
        if value <= Self::MAX {
            Ok(Self(value))
        } else {
            Err(MetricsError::ScoreOutOfRange(value))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for Score {
    type Error = MetricsError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Score::new(value)
    }
}

impl From<Score> for u8 {
    fn from(s: Score) -> u8 {
        s.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub token_rank: Rank,
    pub model: String,
    pub variant: Variant,
    pub score: Score,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankRecord {
    pub token_rank: Rank,
    /// Series id (e.g. `G4o-L`) to position 1..=4.
    pub placements: BTreeMap<String, u8>,
}

impl RankRecord {
    fn is_permutation(&self) -> bool {
        let positions: BTreeSet<u8> = self.placements.values().copied().collect();
        self.placements.len() == 4 && positions == (1..=4).collect()
    }
}

/// Whether a sentence uses the prompted token. With segments, every segment
/// must occur; otherwise the whole token (one leading space stripped) must.
/// Plain substring matching, no normalisation.
pub fn containment_check(token_text: &str, segments: Option<&[String]>, sentence: &str) -> bool {
    let sentence = sentence.trim();
    match segments {
        Some(segs) => !segs.is_empty() && segs.iter().all(|s| sentence.contains(s.as_str())),
        None => {
            let token = token_text.strip_prefix(' ').unwrap_or(token_text);
            !token.is_empty() && sentence.contains(token)
        }
    }
}

pub fn token_retention_accuracy(flags: &[bool]) -> Result<f64, MetricsError> {
    if flags.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraEntry {
    pub model: String,
    pub variant: Variant,
    pub retained: usize,
    pub total: usize,
    pub tra: f64,
}

/// Retention per (model, variant) from sentence records. Records that carry
/// an error produced no sentence and are not counted.
pub fn tra_from_records(records: &[GenerationRecord]) -> Vec<TraEntry> {
    let mut flags: BTreeMap<(String, Variant), Vec<bool>> = BTreeMap::new();
    for r in records {
        let (Some(variant), Some(response)) =
            (Variant::from_task(r.variant), r.response.as_deref())
        else {
            continue;
        };
        let segments = (variant == Variant::Split).then_some(r.segments.as_slice());
        flags
            .entry((r.model.clone(), variant))
            .or_default()
            .push(containment_check(&r.token, segments, response));
    }
    flags
        .into_iter()
        .map(|((model, variant), f)| TraEntry {
            model,
            variant,
            retained: f.iter().filter(|&&x| x).count(),
            total: f.len(),
            tra: token_retention_accuracy(&f).expect("groups are non-empty"),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub id: String,
    pub counts: [usize; 4],
    pub fractions: [f64; 4],
}

/// Share of records placing each series at positions 1..=4, rows sorted by id.
pub fn ranking_distribution(records: &[RankRecord]) -> Result<Vec<RankingRow>, MetricsError> {
    let mut counts: BTreeMap<String, [usize; 4]> = BTreeMap::new();
    for r in records {
        if !r.is_permutation() {
            return Err(MetricsError::InvalidPermutation {
                token_rank: r.token_rank,
            });
        }
        for (id, &pos) in &r.placements {
            counts.entry(id.clone()).or_default()[pos as usize - 1] += 1;
        }
    }
    Ok(counts
        .into_iter()
        .map(|(id, c)| {
            let total: usize = c.iter().sum();
            RankingRow {
                id,
                counts: c,
                fractions: c.map(|x| x as f64 / total as f64),
            }
        })
        .collect())
}

/// Converts judge rankings into placements keyed by member label. Records
/// without a parsed ranking are skipped.
pub fn rank_records_from_judge(judge: &[JudgeRecord]) -> Vec<RankRecord> {
    judge
        .iter()
        .filter(|j| j.mode == JudgeMode::Rank)
        .filter_map(|j| {
            let ranking = j.ranking.as_ref()?;
            let placements = ranking
                .iter()
                .enumerate()
                .map(|(pos, &member)| {
                    Some((
                        j.members.get(member.checked_sub(1)?)?.clone(),
                        pos as u8 + 1,
                    ))
                })
                .collect::<Option<BTreeMap<_, _>>>()?;
            Some(RankRecord {
                token_rank: j.token_rank,
                placements,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDistEntry {
    pub model: String,
    pub variant: Variant,
    pub counts: [usize; 6],
    pub fractions: [f64; 6],
}

/// Share of each score per (model, variant), sorted by model then variant.
pub fn score_distribution(records: &[ScoreRecord]) -> Vec<ScoreDistEntry> {
    let mut counts: BTreeMap<(String, Variant), [usize; 6]> = BTreeMap::new();
    for r in records {
        counts.entry((r.model.clone(), r.variant)).or_default()[r.score.get() as usize] += 1;
    }
    counts
        .into_iter()
        .map(|((model, variant), c)| {
            let total: usize = c.iter().sum();
            ScoreDistEntry {
                model,
                variant,
                counts: c,
                fractions: c.map(|x| x as f64 / total as f64),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FlagSummary {
    pub accurate: usize,
    pub consistent: usize,
    pub total: usize,
    pub accuracy: f64,
    pub consistency: f64,
}

impl FlagSummary {
    fn from_flags(flags: &[(bool, bool)]) -> Self {
        let total = flags.len();
        let accurate = flags.iter().filter(|f| f.0).count();
        let consistent = flags.iter().filter(|f| f.1).count();
        let mean = |n: usize| {
            if total == 0 {
                0.0
            } else {
                n as f64 / total as f64
            }
        };
        Self {
            accurate,
            consistent,
            total,
            accuracy: mean(accurate),
            consistency: mean(consistent),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConsistencySummary {
    pub meanings: FlagSummary,
    pub translations: FlagSummary,
}

/// Mean judge flags per task. Explanations count as meanings. Records
/// without both flags are ignored.
pub fn consistency_summary(judge: &[JudgeRecord]) -> ConsistencySummary {
    let flags_for = |task: TaskKind| -> Vec<(bool, bool)> {
        judge
            .iter()
            .filter(|j| j.mode == JudgeMode::Consistency && j.task == task)
            .filter_map(|j| Some((j.accurate?, j.consistent?)))
            .collect()
    };
    ConsistencySummary {
        meanings: FlagSummary::from_flags(&flags_for(TaskKind::Explain)),
        translations: FlagSummary::from_flags(&flags_for(TaskKind::Translate)),
    }
}

pub const TOTAL_SERIES: &str = "Total";

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Score5BySize {
    /// Series ids in column order; `Total` last.
    pub series: Vec<String>,
    /// Length to per-series count of score-5 records.
    pub rows: BTreeMap<usize, BTreeMap<String, usize>>,
}

impl Score5BySize {
    pub fn count(&self, length: usize, series: &str) -> usize {
        self.rows
            .get(&length)
            .and_then(|r| r.get(series))
            .copied()
            .unwrap_or(0)
    }

    /// Running total of one series over increasing length.
    pub fn cumulative(&self, series: &str) -> Vec<(usize, usize)> {
        let mut acc = 0;
        self.rows
            .keys()
            .map(|&len| {
                acc += self.count(len, series);
                (len, acc)
            })
            .collect()
    }
}

/// Score-5 counts per token length and series, plus a `Total` column.
pub fn score5_by_size(
    records: &[ScoreRecord],
    lengths: &HashMap<Rank, usize>,
) -> Result<Score5BySize, MetricsError> {
    let mut series: BTreeSet<String> = BTreeSet::new();
    let mut rows: BTreeMap<usize, BTreeMap<String, usize>> = BTreeMap::new();
    for r in records {
        let len = *lengths
            .get(&r.token_rank)
            .ok_or(MetricsError::MissingLength(r.token_rank))?;
        let label = series_label(&r.model, r.variant.task());
        series.insert(label.clone());
        let row = rows.entry(len).or_default();
        if r.score.get() == Score::MAX {
            *row.entry(label).or_insert(0) += 1;
            *row.entry(TOTAL_SERIES.to_string()).or_insert(0) += 1;
        }
    }
    let mut series: Vec<String> = series.into_iter().collect();
    series.push(TOTAL_SERIES.to_string());
    for row in rows.values_mut() {
        for s in &series {
            row.entry(s.clone()).or_insert(0);
        }
    }
    Ok(Score5BySize { series, rows })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    /// Sampled tokens per length.
    #[serde(default)]
    pub token_counts: Option<BTreeMap<usize, usize>>,
    #[serde(default)]
    pub tra: Vec<TraEntry>,
    #[serde(default)]
    pub ranking_matrix: Vec<RankingRow>,
    #[serde(default)]
    pub score_dist: Vec<ScoreDistEntry>,
    #[serde(default)]
    pub consistency: Option<ConsistencySummary>,
    #[serde(default)]
    pub score5_by_size: Option<Score5BySize>,
}

impl MetricsReport {
    pub fn new() -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            ..Self::default()
        }
    }

    /// Checks that ranking rows and score columns are distributions.
    pub fn validate(&self) -> Result<(), MetricsError> {
        const SLACK: f64 = 0.0005;
        for row in &self.ranking_matrix {
            let sum: f64 = row.fractions.iter().sum();
            if (sum - 1.0).abs() > SLACK {
                return Err(MetricsError::InvalidReport(format!(
                    "ranking row {} sums to {sum}",
                    row.id
                )));
            }
        }
        for col in &self.score_dist {
            let sum: f64 = col.fractions.iter().sum();
            if (sum - 1.0).abs() > SLACK {
                return Err(MetricsError::InvalidReport(format!(
                    "score distribution {}/{:?} sums to {sum}",
                    col.model, col.variant
                )));
            }
        }
        for e in &self.tra {
            if !(0.0..=1.0).contains(&e.tra) {
                return Err(MetricsError::InvalidReport(format!(
                    "TRA {} out of range",
                    e.tra
                )));
            }
        }
        Ok(())
    }
}

/// Inputs for a full report; empty slices leave the matching table out.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReportInputs<'a> {
    pub generations: &'a [GenerationRecord],
    pub scores: &'a [ScoreRecord],
    pub ranks: &'a [RankRecord],
    pub judge: &'a [JudgeRecord],
    /// Token length per rank, from the sample file.
    pub lengths: Option<&'a HashMap<Rank, usize>>,
}

pub fn build_report(inputs: ReportInputs<'_>) -> Result<MetricsReport, MetricsError> {
    let mut report = MetricsReport::new();
    if let Some(lengths) = inputs.lengths {
        let mut counts = BTreeMap::new();
        for &len in lengths.values() {
            *counts.entry(len).or_insert(0) += 1;
        }
        report.token_counts = Some(counts);
    }
    report.tra = tra_from_records(inputs.generations);
    let mut ranks = inputs.ranks.to_vec();
    ranks.extend(rank_records_from_judge(inputs.judge));
    report.ranking_matrix = ranking_distribution(&ranks)?;
    report.score_dist = score_distribution(inputs.scores);
    if inputs
        .judge
        .iter()
        .any(|j| j.mode == JudgeMode::Consistency)
    {
        report.consistency = Some(consistency_summary(inputs.judge));
    }
    if let (Some(lengths), false) = (inputs.lengths, inputs.scores.is_empty()) {
        report.score5_by_size = Some(score5_by_size(inputs.scores, lengths)?);
    }
    report.validate()?;
    Ok(report)
}

/// Half-up rounding of `num / den` to `places` decimals, computed on
/// integers so exact halves round up.
pub fn round_ratio(num: usize, den: usize, places: u32) -> f64 {
    let scale = 10u128.pow(places);
    let (num, den) = (num as u128, den as u128);
    let scaled = (2 * num * scale + den) / (2 * den);
    scaled as f64 / scale as f64
}

/// Half-up rounding of a float to `places` decimals.
pub fn round_half_up(x: f64, places: i32) -> f64 {
    let scale = 10f64.powi(places);
    (x * scale + 0.5).floor() / scale
}
