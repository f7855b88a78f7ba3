//! `tokaudit run`: drives the harness from a single JSON config file.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Deserialize;
use serde_json::json;
use tokaudit_core::harness::{
    consistency_groups, load_sample, rank_groups, Clock, ExperimentConfig, FixedClock, Harness,
    JudgeMode, MockProvider, OpenAiProvider, Provider, SystemClock, TemplateSet,
};
use tokaudit_core::load_dictionary;

use crate::Out;

#[derive(Args)]
pub struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Use the deterministic offline provider and a fixed clock.
    #[arg(long)]
    mock: bool,
    /// Comma-separated model list.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repetitions: Option<u32>,
    #[arg(long)]
    max_concurrency: Option<usize>,
    /// Output directory for the JSONL record files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated subset of generation, consistency, judge-rank,
    /// judge-consistency.
    #[arg(long, value_delimiter = ',')]
    stages: Option<Vec<Stage>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Generation,
    Consistency,
    JudgeRank,
    JudgeConsistency,
}

const ALL_STAGES: [Stage; 4] = [
    Stage::Generation,
    Stage::Consistency,
    Stage::JudgeRank,
    Stage::JudgeConsistency,
];

fn default_judge() -> String {
    "gpt-4".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    #[serde(default = "default_base_url")]
    pub base_url: String,
    #[serde(default = "default_key_var")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_base_url() -> String {
    OpenAiProvider::DEFAULT_BASE_URL.into()
}

fn default_key_var() -> String {
    "OPENAI_API_KEY".into()
}

fn default_timeout() -> u64 {
    120
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            base_url: default_base_url(),
            api_key_env: default_key_var(),
            timeout_secs: default_timeout(),
        }
    }
}

/// Run config. Relative paths are resolved against the config file's
/// directory.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    /// Sample export from `tokaudit sample --out`.
    pub sample: PathBuf,
    pub dictionary: PathBuf,
    /// Template directory; the built-in set when absent.
    #[serde(default)]
    pub templates: Option<PathBuf>,
    #[serde(default = "default_judge")]
    pub judge_model: String,
    #[serde(default)]
    pub stages: Option<Vec<Stage>>,
    #[serde(default)]
    pub provider: ProviderConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let raw =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&raw).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.sample);
        resolve(&mut cfg.dictionary);
        if let Some(t) = cfg.templates.as_mut() {
            resolve(t);
        }
        if let Some(o) = cfg.experiment.output_path.as_mut() {
            resolve(o);
        }
        Ok(cfg)
    }
}

pub fn run(args: RunArgs, out: &Out) -> Result<()> {
    let mut cfg = RunConfig::load(&args.config)?;
    let exp = &mut cfg.experiment;
    if let Some(models) = args.models {
        exp.models = models;
    }
    if let Some(seed) = args.seed {
        exp.seed = seed;
    }
    if let Some(n) = args.repetitions {
        exp.repetitions_consistency = n;
    }
    if let Some(n) = args.max_concurrency {
        exp.max_concurrency = n;
    }
    if let Some(dir) = args.out {
        exp.output_path = Some(dir);
    }
    exp.validate()?;
    if let Some(dir) = &exp.output_path {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let stages = args
        .stages
        .or(cfg.stages.clone())
        .unwrap_or_else(|| ALL_STAGES.to_vec());
    if stages.is_empty() {
        bail!("no stages selected");
    }

    let sample = load_sample(&cfg.sample)?;
    let dict = load_dictionary(&cfg.dictionary)
        .with_context(|| format!("loading {}", cfg.dictionary.display()))?;
    let templates = match &cfg.templates {
        Some(dir) => TemplateSet::load_dir(dir)?,
        None => TemplateSet::builtin(),
    };
    let (provider, clock): (Box<dyn Provider>, Box<dyn Clock>) = if args.mock {
        (
            Box::new(MockProvider::new(cfg.experiment.seed)),
            Box::new(FixedClock::default()),
        )
    } else {
        let p = &cfg.provider;
        if std::env::var(&p.api_key_env).is_err() {
            out.log(format!("warning: {} is not set", p.api_key_env));
        }
        let provider = OpenAiProvider::from_env(
            p.base_url.clone(),
            &p.api_key_env,
            Duration::from_secs(p.timeout_secs),
        )?;
        (Box::new(provider), Box::new(SystemClock))
    };
    let harness = Harness::new(
        &cfg.experiment,
        provider.as_ref(),
        &templates,
        clock.as_ref(),
    );

    let mut summary = serde_json::Map::new();
    let mut tally = |name: &str, records: usize, failed: usize| {
        out.log(format!("{name}: {records} records, {failed} failed"));
        summary.insert(name.into(), json!({ "records": records, "failed": failed }));
    };
    let mut generations = Vec::new();
    let mut consistency = Vec::new();

    if stages.contains(&Stage::Generation) || stages.contains(&Stage::JudgeRank) {
        generations = harness.run_generation(&sample, &dict)?;
        tally(
            "generation",
            generations.len(),
            generations.iter().filter(|r| r.error.is_some()).count(),
        );
    }
    if stages.contains(&Stage::Consistency) || stages.contains(&Stage::JudgeConsistency) {
        consistency = harness.run_consistency(&sample)?;
        tally(
            "consistency",
            consistency.len(),
            consistency.iter().filter(|r| r.error.is_some()).count(),
        );
    }
    for (stage, mode, records) in [
        (Stage::JudgeRank, JudgeMode::Rank, &generations),
        (
            Stage::JudgeConsistency,
            JudgeMode::Consistency,
            &consistency,
        ),
    ] {
        if !stages.contains(&stage) {
            continue;
        }
        let groups = match mode {
            JudgeMode::Rank => rank_groups(records),
            JudgeMode::Consistency => consistency_groups(records),
        };
        let judged = harness.run_judge(&groups, &cfg.judge_model, mode)?;
        let name = match mode {
            JudgeMode::Rank => "judge_rank",
            JudgeMode::Consistency => "judge_consistency",
        };
        tally(
            name,
            judged.len(),
            judged.iter().filter(|r| r.error.is_some()).count(),
        );
    }
    if let Some(dir) = &cfg.experiment.output_path {
        summary.insert("output_path".into(), json!(dir));
    }
    out.data(&serde_json::Value::Object(summary));
    Ok(())
}
