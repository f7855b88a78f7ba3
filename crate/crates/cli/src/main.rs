//! `tokaudit`: vocabulary audit, sampling, segmentation, experiment runs and
//! metric reports from the command line.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error.

mod run;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use tokaudit_core::harness::{
    read_jsonl, GenerationRecord, JudgeRecord, SampleItem, CONSISTENCY_FILE, GENERATIONS_FILE,
    JUDGE_CONSISTENCY_FILE, JUDGE_RANK_FILE,
};
use tokaudit_core::metrics::{
    build_report, parse_report_json, render_report, ReportFormat, ReportInputs,
};
use tokaudit_core::script::script_counts;
use tokaudit_core::{
    build_length_histogram, draw_sample, find_merge_unreachable, find_shortcut_only,
    load_dictionary, plan_sample, script::filtered_tokens, segment, token_display, Rank,
    TokenFilter, Vocabulary, VocabularyProfile,
};

#[derive(Parser)]
#[command(
    name = "tokaudit",
    version,
    about = "Audit long tokens in BPE vocabularies"
)]
struct Cli {
    /// Machine-readable output where a command has a plain-text form.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Vocabulary size, script and length histograms, merge diagnostics.
    Audit(AuditArgs),
    /// Per-length sampling plan and the drawn sample.
    Sample(SampleArgs),
    /// Split a token into dictionary words.
    Segment(SegmentArgs),
    /// Run the generation, consistency and judge experiments.
    Run(run::RunArgs),
    /// Compute metrics from records and fixture files.
    Score(ScoreArgs),
    /// Render a metrics file as json, csv or markdown.
    Report(ReportArgs),
}

#[derive(Args)]
struct FilterArgs {
    /// han, han-any, latin, mixed or other.
    #[arg(long, default_value = "han")]
    script: TokenFilter,
    #[arg(long, default_value_t = 2)]
    min_len: usize,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    profile: PathBuf,
    #[command(flatten)]
    filter: FilterArgs,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    profile: PathBuf,
    #[command(flatten)]
    filter: FilterArgs,
    /// Tokens per length.
    #[arg(long, default_value_t = 20)]
    cap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the sample as `[{rank, text, length}]` here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["text", "rank"]))]
struct SegmentArgs {
    #[arg(long)]
    text: Option<String>,
    /// Token rank; needs --profile.
    #[arg(long, requires = "profile")]
    rank: Option<Rank>,
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long)]
    dict: PathBuf,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("inputs").required(true).multiple(true).args(["records", "fixtures"]))]
struct ScoreArgs {
    /// Harness output directory or a single generations JSONL file.
    #[arg(long)]
    records: Option<PathBuf>,
    /// Directory with scores.jsonl, ranks.jsonl, judge.jsonl, sample.json.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Sample file giving token lengths; overrides fixtures/sample.json.
    #[arg(long)]
    sample: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    metrics: PathBuf,
    #[arg(long, default_value = "markdown")]
    format: ReportFormat,
    /// Directory to write the rendered file(s) into instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Output routing. `audit`, `sample`, `score` and `run` always print JSON on
/// stdout; their summaries are log lines on stderr. `--json` switches
/// `segment` from plain text to JSON.
pub struct Out {
    json: bool,
}

impl Out {
    pub fn log(&self, line: impl AsRef<str>) {
        eprintln!("{}", line.as_ref());
    }

    pub fn data(&self, value: &serde_json::Value) {
        println!(
            "{}",
            serde_json::to_string_pretty(value).expect("json value")
        );
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = Out { json: cli.json };
    let result = match cli.command {
        Command::Audit(a) => audit(a, &out),
        Command::Sample(a) => sample(a, &out),
        Command::Segment(a) => segment_cmd(a, &out),
        Command::Run(a) => run::run(a, &out),
        Command::Score(a) => score(a, &out),
        Command::Report(a) => report(a, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_vocab(profile_path: &Path) -> Result<(VocabularyProfile, Vocabulary)> {
    let profile = VocabularyProfile::load(profile_path)
        .with_context(|| format!("loading profile {}", profile_path.display()))?;
    let vocab = profile.load_vocabulary().context("loading rank file")?;
    Ok((profile, vocab))
}

fn audit(args: AuditArgs, out: &Out) -> Result<()> {
    let (profile, vocab) = load_vocab(&args.profile)?;
    let hist = build_length_histogram(&vocab, args.filter.script, args.filter.min_len);
    let unreachable = find_merge_unreachable(&vocab);
    let shortcut_only = find_shortcut_only(&vocab);
    let scripts: BTreeMap<String, usize> = script_counts(&vocab)
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();

    out.log(format!("profile: {}", profile.name));
    out.log(format!("vocab_size: {}", vocab.len()));
    for (class, n) in &scripts {
        out.log(format!("  {class}: {n}"));
    }
    out.log(format!("length histogram ({}):", hist.filter_description));
    for (len, n) in &hist.counts {
        out.log(format!("  {len}: {n}"));
    }
    out.log(format!("merge_unreachable: {}", unreachable.len()));
    out.log(format!("shortcut_only: {}", shortcut_only.len()));

    out.data(&json!({
        "profile": profile.name,
        "vocab_size": vocab.len(),
        "max_rank": vocab.max_rank(),
        "script_counts": scripts,
        "length_histogram": hist.to_json_map(),
        "filter": hist.filter_description,
        "merge_unreachable": unreachable.len(),
        "merge_unreachable_ranks": unreachable,
        "shortcut_only": shortcut_only.len(),
        "shortcut_only_ranks": shortcut_only,
    }));
    Ok(())
}

fn sample(args: SampleArgs, out: &Out) -> Result<()> {
    if args.cap == 0 {
        bail!("--cap must be at least 1");
    }
    let (_, vocab) = load_vocab(&args.profile)?;
    let hist = build_length_histogram(&vocab, args.filter.script, args.filter.min_len);
    let plan = plan_sample(&hist, args.cap);
    let tokens = filtered_tokens(&vocab, args.filter.script, args.filter.min_len);
    let drawn = draw_sample(&tokens, &plan, args.seed)?;
    let export = drawn.export(&vocab);

    out.log(format!("filter: {}", hist.filter_description));
    for (len, take) in &plan.per_length {
        out.log(format!("  {len}: {take} of {}", hist.counts[len]));
    }
    out.log(format!("total: {}", plan.total));

    if let Some(path) = &args.out {
        let body = serde_json::to_string_pretty(&export)? + "\n";
        fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
        out.log(format!("wrote {}", path.display()));
    }
    out.data(&json!({
        "filter": hist.filter_description,
        "histogram": hist.to_json_map(),
        "plan": plan,
        "seed": args.seed,
        "sample": export,
    }));
    Ok(())
}

fn segment_cmd(args: SegmentArgs, out: &Out) -> Result<()> {
    let dict =
        load_dictionary(&args.dict).with_context(|| format!("loading {}", args.dict.display()))?;
    let text = match (args.text, args.rank, &args.profile) {
        (Some(text), _, _) => text,
        (None, Some(rank), Some(profile)) => {
            let (_, vocab) = load_vocab(profile)?;
            let record = vocab
                .get(rank)
                .with_context(|| format!("rank {rank} not in vocabulary"))?;
            let Some(text) = record.text.clone() else {
                bail!("rank {rank} is not valid UTF-8: {}", token_display(record));
            };
            text
        }
        _ => unreachable!("clap enforces --text or --rank with --profile"),
    };
    let input = text.strip_prefix(' ').unwrap_or(&text);
    let result = segment(input, &dict);
    if out.json {
        out.data(&json!({
            "text": input,
            "segments": result.segments,
            "log_prob": result.log_prob,
        }));
    } else {
        println!("{}", result.segments.join(" "));
    }
    Ok(())
}

fn read_optional<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if path.exists() {
        Ok(read_jsonl(path)?)
    } else {
        Ok(Vec::new())
    }
}

fn score(args: ScoreArgs, out: &Out) -> Result<()> {
    let mut generations: Vec<GenerationRecord> = Vec::new();
    let mut judge: Vec<JudgeRecord> = Vec::new();
    if let Some(records) = &args.records {
        if records.is_dir() {
            generations.extend(read_optional::<GenerationRecord>(
                &records.join(GENERATIONS_FILE),
            )?);
            generations.extend(read_optional::<GenerationRecord>(
                &records.join(CONSISTENCY_FILE),
            )?);
            judge.extend(read_optional::<JudgeRecord>(
                &records.join(JUDGE_RANK_FILE),
            )?);
            judge.extend(read_optional::<JudgeRecord>(
                &records.join(JUDGE_CONSISTENCY_FILE),
            )?);
        } else {
            generations = read_jsonl(records)?;
        }
    }
    let mut scores = Vec::new();
    let mut ranks = Vec::new();
    let mut sample_path = args.sample.clone();
    if let Some(dir) = &args.fixtures {
        if !dir.is_dir() {
            bail!("fixtures directory {} not found", dir.display());
        }
        scores = read_optional(&dir.join("scores.jsonl"))?;
        ranks = read_optional(&dir.join("ranks.jsonl"))?;
        judge.extend(read_optional::<JudgeRecord>(&dir.join("judge.jsonl"))?);
        if sample_path.is_none() && dir.join("sample.json").exists() {
            sample_path = Some(dir.join("sample.json"));
        }
    }
    let lengths: Option<HashMap<Rank, usize>> = match &sample_path {
        Some(p) => {
            let items: Vec<SampleItem> = tokaudit_core::harness::load_sample(p)?;
            Some(items.into_iter().map(|i| (i.rank, i.length)).collect())
        }
        None => None,
    };
    let report = build_report(ReportInputs {
        generations: &generations,
        scores: &scores,
        ranks: &ranks,
        judge: &judge,
        lengths: lengths.as_ref(),
    })?;

    out.log(format!(
        "scored {} generation, {} score, {} rank and {} judge records",
        generations.len(),
        scores.len(),
        ranks.len(),
        judge.len()
    ));
    let value = serde_json::to_value(&report)?;
    if let Some(path) = &args.out {
        fs::write(path, serde_json::to_string_pretty(&value)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        out.log(format!("wrote {}", path.display()));
    }
    out.data(&value);
    Ok(())
}

fn report(args: ReportArgs, out: &Out) -> Result<()> {
    let raw = fs::read_to_string(&args.metrics)
        .with_context(|| format!("reading {}", args.metrics.display()))?;
    let report = parse_report_json(&raw)?;
    report.validate()?;
    let doc = render_report(&report, args.format);
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            for (name, body) in &doc.parts {
                let path = dir.join(name);
                fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
                out.log(format!("wrote {}", path.display()));
            }
        }
        None => print!("{}", doc.to_text()),
    }
    Ok(())
}
