//! Python module `tokaudit`: vocabulary loading, encoding, length
//! histograms, sampling plans, segmentation and sentence containment.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;
use tokaudit_core::{
    build_length_histogram, decode, encode, find_merge_unreachable, load_dictionary, metrics,
    plan_sample, segment, EncodeMode, FrequencyDictionary, LengthHistogram, Rank, TokenFilter,
    Vocabulary, VocabularyProfile,
};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_mode(mode: &str) -> PyResult<EncodeMode> {
    match mode {
        "shortcut" => Ok(EncodeMode::Shortcut),
        "strict" => Ok(EncodeMode::StrictMerges),
        _ => Err(PyValueError::new_err(format!(
            "mode must be `shortcut` or `strict`, got `{mode}`"
        ))),
    }
}

/// A loaded rank file together with its pre-tokenization profile.
#[pyclass(name = "Vocabulary", frozen)]
struct PyVocabulary {
    profile: VocabularyProfile,
    vocab: Vocabulary,
}

#[pymethods]
impl PyVocabulary {
    /// Loads the profile JSON and the rank file it points to.
    #[staticmethod]
    fn load(profile_path: &str) -> PyResult<Self> {
        let profile = VocabularyProfile::load(profile_path).map_err(value_err)?;
        let vocab = profile.load_vocabulary().map_err(value_err)?;
        Ok(Self { profile, vocab })
    }

    #[getter]
    fn name(&self) -> &str {
        &self.profile.name
    }

    fn __len__(&self) -> usize {
        self.vocab.len()
    }

    /// Token text, or `None` when its bytes are not valid UTF-8.
    fn token(&self, rank: Rank) -> PyResult<Option<String>> {
        let record = self
            .vocab
            .get(rank)
            .ok_or_else(|| PyKeyError::new_err(rank))?;
        Ok(record.text.clone())
    }

    #[pyo3(signature = (text, mode = "shortcut"))]
    fn encode(&self, text: &str, mode: &str) -> PyResult<Vec<Rank>> {
        let result =
            encode(text, &self.vocab, &self.profile, parse_mode(mode)?).map_err(value_err)?;
        Ok(result.ranks)
    }

    fn decode(&self, ranks: Vec<Rank>) -> PyResult<Vec<u8>> {
        decode(&ranks, &self.vocab).map_err(value_err)
    }

    /// `{length: count}` for `script` (han, han-any, latin, mixed, other).
    #[pyo3(signature = (script = "han", min_len = 2))]
    fn length_histogram(&self, script: &str, min_len: usize) -> PyResult<BTreeMap<usize, usize>> {
        let filter: TokenFilter = script.parse().map_err(PyValueError::new_err)?;
        Ok(build_length_histogram(&self.vocab, filter, min_len).counts)
    }

    /// Ranks of multi-byte tokens that no merge sequence produces.
    fn merge_unreachable(&self) -> Vec<Rank> {
        find_merge_unreachable(&self.vocab)
    }
}

/// A word-frequency dictionary (`word freq [tag]` per line).
#[pyclass(name = "Dictionary", frozen)]
struct PyDictionary {
    dict: FrequencyDictionary,
}

#[pymethods]
impl PyDictionary {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            dict: load_dictionary(path).map_err(value_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.dict.len()
    }

    fn segment(&self, text: &str) -> Vec<String> {
        segment(text, &self.dict).segments
    }
}

/// Per-length take `min(count, cap)` for a `{length: count}` histogram.
#[pyfunction]
#[pyo3(signature = (histogram, cap = 20))]
fn sample_plan(histogram: BTreeMap<usize, usize>, cap: usize) -> BTreeMap<usize, usize> {
    let hist = LengthHistogram {
        counts: histogram,
        filter_description: String::new(),
    };
    plan_sample(&hist, cap).per_length
}

/// Whether `sentence` contains the token, or every segment when given.
#[pyfunction]
#[pyo3(signature = (token, sentence, segments = None))]
fn contains_token(token: &str, sentence: &str, segments: Option<Vec<String>>) -> bool {
    metrics::containment_check(token, segments.as_deref(), sentence)
}

#[pymodule]
fn tokaudit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyVocabulary>()?;
    m.add_class::<PyDictionary>()?;
    m.add_function(wrap_pyfunction!(sample_plan, m)?)?;
    m.add_function(wrap_pyfunction!(contains_token, m)?)?;
    Ok(())
}
