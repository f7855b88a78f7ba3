use std::collections::{BTreeMap, HashMap};

use proptest::collection::vec;
use proptest::prelude::*;
use tokaudit_core::metrics::{
    containment_check, ranking_distribution, render_report, score5_by_size, score_distribution,
    token_retention_accuracy, MetricsError, MetricsReport, RankRecord, ReportFormat, Score,
    ScoreRecord, Variant, TOTAL_SERIES,
};

const SERIES: [&str; 4] = ["G4o-L", "G4o-S", "G4-L", "G4-S"];

fn score_records() -> impl Strategy<Value = Vec<ScoreRecord>> {
    vec(
        (0u32..40, prop::bool::ANY, prop::bool::ANY, 0u8..=5),
        1..200,
    )
    .prop_map(|rows| {
        rows.into_iter()
            .map(|(rank, gpt4o, long, s)| ScoreRecord {
                token_rank: rank,
                model: if gpt4o { "GPT-4o" } else { "GPT-4" }.into(),
                variant: if long { Variant::Long } else { Variant::Split },
                score: Score::new(s).unwrap(),
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn tra_of_concatenation_is_weighted_average(a in vec(any::<bool>(), 1..100), b in vec(any::<bool>(), 1..100)) {
        let ta = token_retention_accuracy(&a).unwrap();
        let tb = token_retention_accuracy(&b).unwrap();
        let joined: Vec<bool> = a.iter().chain(&b).copied().collect();
        let t = token_retention_accuracy(&joined).unwrap();
        let weighted = (ta * a.len() as f64 + tb * b.len() as f64) / joined.len() as f64;
        prop_assert!((t - weighted).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&t));
    }

    #[test]
    fn ranking_rows_are_distributions(perms in vec(Just([0usize, 1, 2, 3]).prop_shuffle(), 1..100)) {
        let records: Vec<RankRecord> = perms
            .iter()
            .enumerate()
            .map(|(i, p)| RankRecord {
                token_rank: i as u32,
                placements: SERIES.iter().zip(p).map(|(s, &pos)| (s.to_string(), pos as u8 + 1)).collect(),
            })
            .collect();
        let rows = ranking_distribution(&records).unwrap();
        prop_assert_eq!(rows.len(), 4);
        for row in &rows {
            prop_assert!((row.fractions.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert_eq!(row.counts.iter().sum::<usize>(), records.len());
        }
        // Each position is also taken exactly once per record.
        for p in 0..4 {
            prop_assert_eq!(rows.iter().map(|r| r.counts[p]).sum::<usize>(), records.len());
        }
    }

    #[test]
    fn score_columns_are_distributions(records in score_records()) {
        for col in score_distribution(&records) {
            prop_assert!((col.fractions.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn score5_total_is_sum_of_series(records in score_records()) {
        let lengths: HashMap<u32, usize> = (0..40).map(|r| (r, 2 + r as usize % 10)).collect();
        let s5 = score5_by_size(&records, &lengths).unwrap();
        for (&len, row) in &s5.rows {
            let series_sum: usize = row.iter().filter(|(k, _)| *k != TOTAL_SERIES).map(|(_, v)| v).sum();
            prop_assert_eq!(s5.count(len, TOTAL_SERIES), series_sum);
        }
        let fives = records.iter().filter(|r| r.score.get() == 5).count();
        prop_assert_eq!(s5.cumulative(TOTAL_SERIES).last().map(|x| x.1).unwrap_or(0), fives);
    }

    #[test]
    fn json_render_is_lossless(records in score_records()) {
        let mut report = MetricsReport::new();
        report.score_dist = score_distribution(&records);
        let doc = render_report(&report, ReportFormat::Json);
        let back = tokaudit_core::metrics::parse_report_json(&doc.parts[0].1).unwrap();
        prop_assert_eq!(back, report);
    }
}

#[test]
fn containment_examples() {
    let token = "微信公众号天天中彩票";
    assert!(containment_check(
        token,
        None,
        "我通过微信公众号天天中彩票参与了最新的彩票抽奖活动。"
    ));
    assert!(!containment_check(
        token,
        None,
        "我们今天学习了如何使用新的词汇扩展我们的表达能力。"
    ));
    let segs: Vec<String> = ["微信", "公众", "号", "天天", "中", "彩票"]
        .map(String::from)
        .to_vec();
    assert!(containment_check(
        token,
        Some(&segs),
        "天天在微信公众号中关注彩票信息。"
    ));
    assert!(containment_check(" 北京赛车", None, "他喜欢看北京赛车。"));
}

#[test]
fn invalid_inputs() {
    assert!(matches!(
        token_retention_accuracy(&[]),
        Err(MetricsError::EmptyInput)
    ));
    let bad = RankRecord {
        token_rank: 9,
        placements: SERIES
            .iter()
            .map(|s| (s.to_string(), 1))
            .collect::<BTreeMap<_, _>>(),
    };
    assert!(matches!(
        ranking_distribution(&[bad]),
        Err(MetricsError::InvalidPermutation { token_rank: 9 })
    ));
    assert!(Score::new(6).is_err());
    assert!(serde_json::from_str::<ScoreRecord>(
        r#"{"token_rank":1,"model":"m","variant":"long","score":7}"#
    )
    .is_err());
    let rec = ScoreRecord {
        token_rank: 1,
        model: "GPT-4o".into(),
        variant: Variant::Long,
        score: Score::new(5).unwrap(),
    };
    assert!(matches!(
        score5_by_size(&[rec], &HashMap::new()),
        Err(MetricsError::MissingLength(1))
    ));
}

#[test]
fn single_score5_record() {
    let rec = ScoreRecord {
        token_rank: 1,
        model: "GPT-4o".into(),
        variant: Variant::Long,
        score: Score::new(5).unwrap(),
    };
    let s5 = score5_by_size(&[rec], &HashMap::from([(1, 7)])).unwrap();
    assert_eq!(s5.count(7, "G4o-L"), 1);
    assert_eq!(s5.count(7, TOTAL_SERIES), 1);
}
