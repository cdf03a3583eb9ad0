//! Python bindings for the detection-correction GEC pipeline.
//!
//! Exposes the vocabulary, the alignment/template operations, corruption
//! synthesis, and trained models (detect / correct / save / load) plus
//! small training entry points for toy-scale experiments. Build the
//! cdylib and import it as `gec_py`; see python/smoke_test.py.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::path::PathBuf;

use gec_core::alignment::{align, derive_labels, DetectionLabels, LabelSet};
use gec_core::corpus::{
    detokenize, synthesize_corruptions, tokenize, CorruptionRules, ParallelExample, Vocab,
};
use gec_core::error::Error as CoreError;
use gec_core::eval::{extract_edits, score_corpus};
use gec_core::inference::{correct, detect, DecodeConfig, DetectionControl, Trace};
use gec_core::model::{Model, ModelConfig};
use gec_core::template::{build_masked_text, extract_pieces, merge_detections};
use gec_core::training::{
    build_sft1_dataset, build_sft2_dataset, train, DatasetOptions, TrainConfig,
};

fn err(e: CoreError) -> PyErr {
    match e {
        CoreError::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_label_set(name: &str) -> PyResult<LabelSet> {
    name.parse().map_err(err)
}

fn parse_labels(letters: Vec<String>) -> PyResult<DetectionLabels> {
    DetectionLabels::parse(&letters.join(" ")).map_err(err)
}

fn labels_to_py(labels: &DetectionLabels) -> Vec<String> {
    labels.labels.iter().map(|l| l.letter().to_string()).collect()
}

/// Closed vocabulary: seven reserved tokens followed by content tokens.
#[pyclass(name = "Vocab", from_py_object)]
#[derive(Clone)]
struct PyVocab {
    inner: Vocab,
}

#[pymethods]
impl PyVocab {
    #[new]
    fn new(content: Vec<String>) -> PyResult<Self> {
        Ok(PyVocab { inner: Vocab::new(&content).map_err(err)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyVocab { inner: Vocab::load(&path).map_err(err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn tokens(&self) -> Vec<String> {
        self.inner.tokens().to_vec()
    }

    /// Whitespace tokenization with UNK fallback; returns the token
    /// strings including the sentence sentinels.
    fn tokenize(&self, text: &str) -> PyResult<Vec<String>> {
        let seq = tokenize(text, &self.inner).map_err(err)?;
        seq.ids
            .iter()
            .map(|&id| self.inner.token(id).map(str::to_string).map_err(err))
            .collect()
    }
}

/// Per-token detection labels for a (source, target) pair.
#[pyfunction]
#[pyo3(signature = (vocab, source, target, label_set = "kei"))]
fn align_labels(
    vocab: &PyVocab,
    source: &str,
    target: &str,
    label_set: &str,
) -> PyResult<Vec<String>> {
    let src = tokenize(source, &vocab.inner).map_err(err)?;
    let tgt = tokenize(target, &vocab.inner).map_err(err)?;
    let labels =
        derive_labels(&align(&src, &tgt), parse_label_set(label_set)?).map_err(err)?;
    Ok(labels_to_py(&labels))
}

/// Masked text for a source sentence under the given labels.
#[pyfunction]
fn masked_text(vocab: &PyVocab, source: &str, labels: Vec<String>) -> PyResult<String> {
    let src = tokenize(source, &vocab.inner).map_err(err)?;
    let masked = build_masked_text(&src, &parse_labels(labels)?).map_err(err)?;
    masked.render(&vocab.inner).map_err(err)
}

/// Gold text pieces (one string per mask slot) for a pair.
#[pyfunction]
#[pyo3(signature = (vocab, source, target, label_set = "kei"))]
fn gold_pieces(
    vocab: &PyVocab,
    source: &str,
    target: &str,
    label_set: &str,
) -> PyResult<Vec<String>> {
    let src = tokenize(source, &vocab.inner).map_err(err)?;
    let tgt = tokenize(target, &vocab.inner).map_err(err)?;
    let pieces =
        extract_pieces(&align(&src, &tgt), parse_label_set(label_set)?).map_err(err)?;
    pieces.iter().map(|p| p.render(&vocab.inner).map_err(err)).collect()
}

/// Merge predicted labels into gold labels (gold wins conflicts; every
/// gold edit survives).
#[pyfunction]
#[pyo3(name = "merge_detections")]
fn merge_detections_py(gold: Vec<String>, predicted: Vec<String>) -> PyResult<Vec<String>> {
    let merged =
        merge_detections(&parse_labels(gold)?, &parse_labels(predicted)?).map_err(err)?;
    Ok(labels_to_py(&merged))
}

/// Corrupt a clean sentence; returns (noisy_source, clean_target).
#[pyfunction]
#[pyo3(signature = (vocab, text, p_insert = 0.1, p_replace = 0.15, p_delete = 0.1, max_corruptions = 2, seed = 111))]
#[allow(clippy::too_many_arguments)]
fn synthesize(
    vocab: &PyVocab,
    text: &str,
    p_insert: f64,
    p_replace: f64,
    p_delete: f64,
    max_corruptions: usize,
    seed: u64,
) -> PyResult<(String, String)> {
    let clean = tokenize(text, &vocab.inner).map_err(err)?;
    let rules = CorruptionRules {
        p_insert,
        p_replace,
        p_delete,
        max_corruptions_per_sentence: max_corruptions,
        rng_seed: seed,
    };
    let (pair, _) = synthesize_corruptions(&clean, &rules, &vocab.inner).map_err(err)?;
    Ok((
        detokenize(&pair.source, &vocab.inner).map_err(err)?,
        detokenize(&pair.target, &vocab.inner).map_err(err)?,
    ))
}

/// Edit-level corpus score of hypotheses against references.
#[pyfunction]
fn score(
    py: Python<'_>,
    vocab: &PyVocab,
    sources: Vec<String>,
    hypotheses: Vec<String>,
    references: Vec<String>,
) -> PyResult<Py<PyDict>> {
    if sources.len() != hypotheses.len() || sources.len() != references.len() {
        return Err(PyValueError::new_err("sources/hypotheses/references lengths differ"));
    }
    let mut scored = Vec::with_capacity(sources.len());
    for ((s, h), r) in sources.iter().zip(&hypotheses).zip(&references) {
        let src = tokenize(s, &vocab.inner).map_err(err)?;
        let hyp = tokenize(h, &vocab.inner).map_err(err)?;
        let refr = tokenize(r, &vocab.inner).map_err(err)?;
        scored.push((
            extract_edits(&src, &hyp, &vocab.inner).map_err(err)?,
            extract_edits(&src, &refr, &vocab.inner).map_err(err)?,
        ));
    }
    let report = score_corpus(&scored);
    let dict = PyDict::new(py);
    dict.set_item("tp", report.tp)?;
    dict.set_item("fp", report.fp)?;
    dict.set_item("fn", report.fn_)?;
    dict.set_item("precision", report.precision)?;
    dict.set_item("recall", report.recall)?;
    dict.set_item("f0_5", report.f_half)?;
    Ok(dict.into())
}

fn trace_to_dict(py: Python<'_>, trace: &Trace) -> PyResult<Py<PyDict>> {
    let dict = PyDict::new(py);
    dict.set_item("labels", &trace.labels)?;
    dict.set_item("masked", &trace.masked)?;
    dict.set_item("pieces", trace.pieces.clone())?;
    dict.set_item("output", &trace.output)?;
    dict.set_item("decoder_steps", trace.decoder_steps)?;
    dict.set_item("detection_ms", trace.detection_ms)?;
    dict.set_item("correction_ms", trace.correction_ms)?;
    Ok(dict.into())
}

fn parse_ctrl(ctrl: Option<&str>) -> PyResult<DetectionControl> {
    match ctrl {
        Some(s) => DetectionControl::parse(s).map_err(err),
        None => Ok(DetectionControl::none()),
    }
}

/// A trained model bundled with its vocab, label set and mode.
#[pyclass(name = "Model")]
struct PyModel {
    inner: Model,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel { inner: Model::load(&path).map_err(err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    #[getter]
    fn mode(&self) -> String {
        self.inner.mode.to_string()
    }

    #[getter]
    fn vocab(&self) -> PyVocab {
        PyVocab { inner: self.inner.vocab.clone() }
    }

    /// Detection labels for one sentence, optionally thresholded by a
    /// control string "delta,phi_e,phi_i".
    #[pyo3(signature = (text, ctrl = None))]
    fn detect(&self, text: &str, ctrl: Option<&str>) -> PyResult<Vec<String>> {
        let source = tokenize(text, &self.inner.vocab).map_err(err)?;
        let (labels, _) = detect(&self.inner, &source, &parse_ctrl(ctrl)?).map_err(err)?;
        Ok(labels_to_py(&labels))
    }

    /// Correct one sentence; returns (output, trace dict).
    #[pyo3(signature = (text, ctrl = None, beam = 3, max_piece = 10))]
    fn correct(
        &self,
        py: Python<'_>,
        text: &str,
        ctrl: Option<&str>,
        beam: usize,
        max_piece: usize,
    ) -> PyResult<(String, Py<PyDict>)> {
        let source = tokenize(text, &self.inner.vocab).map_err(err)?;
        let decode = DecodeConfig { beam_size: beam, max_piece_len: max_piece };
        decode.validate().map_err(err)?;
        let (output, trace) =
            correct(&self.inner, &source, &parse_ctrl(ctrl)?, &decode).map_err(err)?;
        Ok((detokenize(&output, &self.inner.vocab).map_err(err)?, trace_to_dict(py, &trace)?))
    }
}

fn pairs_from_py(vocab: &Vocab, pairs: Vec<(String, String)>) -> PyResult<Vec<ParallelExample>> {
    pairs
        .iter()
        .map(|(s, t)| {
            Ok(ParallelExample {
                source: tokenize(s, vocab).map_err(err)?,
                target: tokenize(t, vocab).map_err(err)?,
            })
        })
        .collect()
}

fn run_training(
    vocab: &Vocab,
    pairs: &[ParallelExample],
    dev: &[ParallelExample],
    model_config_json: &str,
    train_config_json: &str,
    label_set: LabelSet,
    sft1: Option<&Model>,
) -> PyResult<Model> {
    let model_cfg: ModelConfig = serde_json::from_str(model_config_json)
        .map_err(|e| PyValueError::new_err(format!("model config: {e}")))?;
    let train_cfg: TrainConfig = serde_json::from_str(train_config_json)
        .map_err(|e| PyValueError::new_err(format!("train config: {e}")))?;
    let opts = DatasetOptions::from_model(&model_cfg, train_cfg.max_piece_len);
    let (samples, _) = match sft1 {
        None => build_sft1_dataset(pairs, label_set, &opts).map_err(err)?,
        Some(model) => build_sft2_dataset(pairs, model, label_set, &opts).map_err(err)?,
    };
    let outcome = train(
        &samples,
        dev,
        &train_cfg,
        &model_cfg,
        vocab,
        label_set,
        sft1.map(|m| &m.params),
    )
    .map_err(err)?;
    if outcome.diverged {
        return Err(PyValueError::new_err("training diverged"));
    }
    Ok(outcome.model)
}

/// First-stage training on (source, target) string pairs. Configs are
/// JSON strings mirroring the Rust config structs.
#[pyfunction]
#[pyo3(signature = (vocab, pairs, model_config_json, train_config_json, dev = None, label_set = "kei"))]
fn train_sft1(
    vocab: &PyVocab,
    pairs: Vec<(String, String)>,
    model_config_json: &str,
    train_config_json: &str,
    dev: Option<Vec<(String, String)>>,
    label_set: &str,
) -> PyResult<PyModel> {
    let pairs = pairs_from_py(&vocab.inner, pairs)?;
    let dev = pairs_from_py(&vocab.inner, dev.unwrap_or_default())?;
    let model = run_training(
        &vocab.inner,
        &pairs,
        &dev,
        model_config_json,
        train_config_json,
        parse_label_set(label_set)?,
        None,
    )?;
    Ok(PyModel { inner: model })
}

/// Second-stage training: rebuilds the data with the stage-one model's
/// detections merged in, then continues training from its weights.
#[pyfunction]
#[pyo3(signature = (sft1, pairs, model_config_json, train_config_json, dev = None, label_set = "kei"))]
fn train_sft2(
    sft1: &PyModel,
    pairs: Vec<(String, String)>,
    model_config_json: &str,
    train_config_json: &str,
    dev: Option<Vec<(String, String)>>,
    label_set: &str,
) -> PyResult<PyModel> {
    let vocab = &sft1.inner.vocab;
    let pairs = pairs_from_py(vocab, pairs)?;
    let dev = pairs_from_py(vocab, dev.unwrap_or_default())?;
    let model = run_training(
        vocab,
        &pairs,
        &dev,
        model_config_json,
        train_config_json,
        parse_label_set(label_set)?,
        Some(&sft1.inner),
    )?;
    Ok(PyModel { inner: model })
}

#[pymodule]
fn gec_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyVocab>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(align_labels, m)?)?;
    m.add_function(wrap_pyfunction!(masked_text, m)?)?;
    m.add_function(wrap_pyfunction!(gold_pieces, m)?)?;
    m.add_function(wrap_pyfunction!(merge_detections_py, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(train_sft1, m)?)?;
    m.add_function(wrap_pyfunction!(train_sft2, m)?)?;
    Ok(())
}
