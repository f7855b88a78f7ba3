mod common;

use common::{brute_force_segmentations, data_dir};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokaudit_core::{build_dag, load_dictionary, segment, FrequencyDictionary};

fn toy_dict() -> FrequencyDictionary {
    FrequencyDictionary::from_words([
        ("微信", 3000),
        ("公众", 2941),
        ("公众号", 7),
        ("天天", 1855),
        ("彩票", 249),
        ("中彩", 8),
        ("微", 4852),
        ("信", 11188),
        ("号", 44621),
        ("天", 35979),
        ("中", 243191),
        ("彩", 2318),
        ("票", 2353),
        ("信号", 517),
        ("号中", 3),
    ])
}

#[test]
fn dp_equals_brute_force() {
    let dict = toy_dict();
    let alphabet: Vec<char> = "微信公众号天中彩票x".chars().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut unique = 0;
    for case in 0..200 {
        let len = rng.gen_range(1..=8);
        let text: String = (0..len)
            .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
            .collect();
        let got = segment(&text, &dict);
        assert_eq!(got.segments.concat(), text);
        for s in &got.segments {
            assert!(s.chars().count() == 1 || dict.contains(s), "{s} not a word");
        }

        let all = brute_force_segmentations(&text, &dict);
        let max = all
            .iter()
            .map(|(_, s)| *s)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(got.log_prob, max, "case {case}: {text}");

        let near: Vec<&(Vec<String>, f64)> = all.iter().filter(|(_, s)| max - s < 1e-9).collect();
        if near.len() == 1 {
            unique += 1;
            assert_eq!(got.segments, near[0].0, "case {case}: {text}");
        } else {
            assert!(
                near.iter().any(|(segs, _)| segs == &got.segments),
                "case {case}: {text}"
            );
        }
    }
    assert!(unique >= 150, "only {unique} cases had a unique optimum");
}

#[test]
fn ties_prefer_longer_first_segment() {
    // "ab|c" and "a|bc" both score ln(2/4) + ln(1/4).
    let dict = FrequencyDictionary::from_words([("ab", 2), ("bc", 2)]);
    let got = segment("abc", &dict);
    assert_eq!(got.segments, ["ab", "c"]);
    let all = brute_force_segmentations("abc", &dict);
    let tied: Vec<_> = all.iter().filter(|(_, s)| *s == got.log_prob).collect();
    assert_eq!(tied.len(), 2);
}

#[test]
fn dag_matches_definition() {
    let dict = FrequencyDictionary::from_words([("微信", 1), ("彩票", 1)]);
    let dag = build_dag("微信彩票", &dict);
    let expected = [(0, vec![1, 2]), (1, vec![2]), (2, vec![3, 4]), (3, vec![4])];
    assert_eq!(dag, expected.into_iter().collect());
}

#[test]
fn fixture_dictionary_reproduces_the_split_example() {
    let dict = load_dictionary(data_dir().join("dict/fixture.dict")).unwrap();
    let got = segment("微信公众号天天中彩票", &dict);
    assert_eq!(got.segments, ["微信", "公众", "号", "天天", "中", "彩票"]);
}

#[test]
fn fixture_dictionary_covers_the_study_sample() {
    let dict = load_dictionary(data_dir().join("dict/fixture.dict")).unwrap();
    let sample =
        tokaudit_core::harness::load_sample(&data_dir().join("fixtures/study/sample.json"))
            .unwrap();
    let mut multi = 0;
    for item in &sample {
        let text = item.prompt_text();
        let segs = segment(text, &dict).segments;
        assert_eq!(segs.concat(), text);
        if segs.len() > 1 {
            multi += 1;
        }
    }
    assert!(multi > 100, "only {multi} sample tokens split");
}
