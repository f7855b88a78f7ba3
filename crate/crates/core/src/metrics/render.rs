use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use super::{round_ratio, MetricsError, MetricsReport, Variant, REPORT_SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "markdown" | "md" => Ok(Self::Markdown),
            _ => Err(format!("unknown format `{s}` (json, csv, markdown)")),
        }
    }
}

/// A rendered report: one named part for json/markdown, one per table for csv.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub parts: Vec<(String, String)>,
}

impl Document {
    pub fn single(name: &str, body: String) -> Self {
        Self {
            parts: vec![(name.to_string(), body)],
        }
    }

    /// All parts concatenated; csv parts are preceded by a `# name` line.
    pub fn to_text(&self) -> String {
        if self.parts.len() == 1 {
            return self.parts[0].1.clone();
        }
        let mut out = String::new();
        for (name, body) in &self.parts {
            let _ = writeln!(out, "# {name}");
            out.push_str(body);
            out.push('\n');
        }
        out
    }
}

pub fn parse_report_json(s: &str) -> Result<MetricsReport, MetricsError> {
    let report: MetricsReport =
        serde_json::from_str(s).map_err(|e| MetricsError::InvalidReport(e.to_string()))?;
    if report.schema_version != REPORT_SCHEMA_VERSION {
        return Err(MetricsError::InvalidReport(format!(
            "unsupported schema version {}",
            report.schema_version
        )));
    }
    Ok(report)
}

pub fn render_report(report: &MetricsReport, format: ReportFormat) -> Document {
    match format {
        ReportFormat::Json => Document::single(
            "metrics.json",
            serde_json::to_string_pretty(report).expect("report serializes") + "\n",
        ),
        ReportFormat::Markdown => Document::single("report.md", markdown(report)),
        ReportFormat::Csv => csv(report),
    }
}

fn f4(num: usize, den: usize) -> String {
    if den == 0 {
        return "-".into();
    }
    format!("{:.4}", round_ratio(num, den, 4))
}

fn f4x(x: f64) -> String {
    format!("{:.4}", super::round_half_up(x, 4))
}

fn table(out: &mut String, header: &[String], rows: &[Vec<String>]) {
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
    for row in rows {
        let _ = writeln!(out, "| {} |", row.join(" | "));
    }
    out.push('\n');
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn models_of<'a>(names: impl Iterator<Item = &'a String>) -> Vec<&'a String> {
    names.collect::<BTreeSet<_>>().into_iter().collect()
}

fn tra_cell<'a>(
    report: &'a MetricsReport,
    model: &str,
    variant: Variant,
) -> Option<&'a super::TraEntry> {
    report
        .tra
        .iter()
        .find(|e| e.model == model && e.variant == variant)
}

fn score_col<'a>(
    report: &'a MetricsReport,
    model: &str,
    variant: Variant,
) -> Option<&'a super::ScoreDistEntry> {
    report
        .score_dist
        .iter()
        .find(|e| e.model == model && e.variant == variant)
}

fn markdown(report: &MetricsReport) -> String {
    let mut out = String::new();

    if let Some(counts) = &report.token_counts {
        out.push_str("## Distribution of token counts by size\n\n");
        let mut rows: Vec<Vec<String>> = counts
            .iter()
            .map(|(l, c)| vec![l.to_string(), c.to_string()])
            .collect();
        rows.push(vec![
            "Total".into(),
            counts.values().sum::<usize>().to_string(),
        ]);
        table(&mut out, &strings(&["Token Size", "Token Count"]), &rows);
    }

    if !report.tra.is_empty() {
        out.push_str("## Tokens appeared in the created sentences\n\n");
        let rows = models_of(report.tra.iter().map(|e| &e.model))
            .into_iter()
            .map(|m| {
                let cell = |v| {
                    tra_cell(report, m, v)
                        .map(|e| format!("{} ({})", e.retained, f4(e.retained, e.total)))
                        .unwrap_or_else(|| "-".into())
                };
                vec![m.clone(), cell(Variant::Long), cell(Variant::Split)]
            })
            .collect::<Vec<_>>();
        table(
            &mut out,
            &strings(&["Model", "Long token", "Shorter tokens"]),
            &rows,
        );
    }

    if !report.ranking_matrix.is_empty() {
        out.push_str("## Created sentences ranked by the judge\n\n");
        let rows = report
            .ranking_matrix
            .iter()
            .map(|r| {
                let total: usize = r.counts.iter().sum();
                std::iter::once(r.id.clone())
                    .chain(r.counts.iter().map(|&c| f4(c, total)))
                    .collect()
            })
            .collect::<Vec<_>>();
        table(
            &mut out,
            &strings(&["ID", "1st", "2nd", "3rd", "4th"]),
            &rows,
        );
    }

    if !report.score_dist.is_empty() {
        out.push_str("## Token relevance and sentence accuracy scores\n\n");
        let cols: Vec<(&String, Variant)> = models_of(report.score_dist.iter().map(|e| &e.model))
            .into_iter()
            .flat_map(|m| [(m, Variant::Long), (m, Variant::Split)])
            .filter(|(m, v)| score_col(report, m, *v).is_some())
            .collect();
        let mut header = vec!["Score".to_string()];
        header.extend(cols.iter().map(|(m, v)| format!("{m} {}", v.label())));
        let rows = (0..6)
            .map(|s| {
                std::iter::once(s.to_string())
                    .chain(cols.iter().map(|(m, v)| {
                        let col = score_col(report, m, *v).expect("filtered");
                        f4(col.counts[s], col.counts.iter().sum())
                    }))
                    .collect()
            })
            .collect::<Vec<_>>();
        table(&mut out, &header, &rows);
    }

    if let Some(c) = &report.consistency {
        out.push_str("## Token explanations and translations evaluated by the judge\n\n");
        let row = |name: &str, s: &super::FlagSummary| {
            vec![
                name.to_string(),
                f4(s.accurate, s.total),
                f4(s.consistent, s.total),
            ]
        };
        table(
            &mut out,
            &strings(&["Type", "Accuracy", "Consistency"]),
            &[
                row("Meanings", &c.meanings),
                row("Translations", &c.translations),
            ],
        );
    }

    if let Some(s5) = &report.score5_by_size {
        out.push_str("## Score-5 sentences by token size\n\n");
        let mut header = vec!["Size".to_string()];
        header.extend(s5.series.iter().cloned());
        let rows = s5
            .rows
            .keys()
            .map(|&len| {
                std::iter::once(len.to_string())
                    .chain(s5.series.iter().map(|s| s5.count(len, s).to_string()))
                    .collect()
            })
            .collect::<Vec<_>>();
        table(&mut out, &header, &rows);
    }

    if out.is_empty() {
        out.push_str("_empty report_\n");
    }
    out
}

fn csv(report: &MetricsReport) -> Document {
    let mut parts = Vec::new();
    if let Some(counts) = &report.token_counts {
        let mut s = String::from("length,count\n");
        for (l, c) in counts {
            let _ = writeln!(s, "{l},{c}");
        }
        parts.push(("token_counts.csv".to_string(), s));
    }
    if !report.tra.is_empty() {
        let mut s = String::from("model,variant,retained,total,tra\n");
        for e in &report.tra {
            let _ = writeln!(
                s,
                "{},{:?},{},{},{}",
                e.model,
                e.variant,
                e.retained,
                e.total,
                f4x(e.tra)
            );
        }
        parts.push(("tra.csv".to_string(), s));
    }
    if !report.ranking_matrix.is_empty() {
        let mut s = String::from("id,p1,p2,p3,p4\n");
        for r in &report.ranking_matrix {
            let f: Vec<String> = r.fractions.iter().map(|&x| f4x(x)).collect();
            let _ = writeln!(s, "{},{}", r.id, f.join(","));
        }
        parts.push(("ranking.csv".to_string(), s));
    }
    if !report.score_dist.is_empty() {
        let mut s = String::from("model,variant,s0,s1,s2,s3,s4,s5\n");
        for e in &report.score_dist {
            let f: Vec<String> = e.fractions.iter().map(|&x| f4x(x)).collect();
            let _ = writeln!(s, "{},{:?},{}", e.model, e.variant, f.join(","));
        }
        parts.push(("scores.csv".to_string(), s));
    }
    if let Some(c) = &report.consistency {
        let mut s = String::from("type,accuracy,consistency\n");
        let _ = writeln!(
            s,
            "meanings,{},{}",
            f4x(c.meanings.accuracy),
            f4x(c.meanings.consistency)
        );
        let _ = writeln!(
            s,
            "translations,{},{}",
            f4x(c.translations.accuracy),
            f4x(c.translations.consistency)
        );
        parts.push(("consistency.csv".to_string(), s));
    }
    if let Some(s5) = &report.score5_by_size {
        let mut s = format!("length,{}\n", s5.series.join(","));
        for &len in s5.rows.keys() {
            let counts: Vec<String> = s5
                .series
                .iter()
                .map(|x| s5.count(len, x).to_string())
                .collect();
            let _ = writeln!(s, "{len},{}", counts.join(","));
        }
        parts.push(("score5_by_size.csv".to_string(), s));
    }
    Document { parts }
}
