//! Edit-level precision/recall/F0.5 and detection diagnostics.
//!
//! Single-reference scoring with exact span+replacement matching: an edit
//! counts as correct only when both its source span and its replacement
//! text agree with the reference edit. Corpus scores sum counts over
//! sentences before computing ratios.

use std::collections::HashSet;

use ndarray::Array2;
use serde::Serialize;

use crate::alignment::{align, DetectionLabels, Label, Segment};
use crate::corpus::{TokenSeq, Vocab};
use crate::error::{Error, Result};
use crate::model::{forward, Model, RunMode};
use crate::training::TrainingSample;

/// One edit: replace `source[start..end]` with `replacement` (a space
/// joined token string; empty for deletions; `start == end` for
/// insertions).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Edit {
    pub start: usize,
    pub end: usize,
    pub replacement: String,
}

pub type EditSet = HashSet<Edit>;

/// Counts plus derived precision / recall / F0.5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreReport {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_half: f64,
}

impl ScoreReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> ScoreReport {
        let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f_half = f_beta(precision, recall, 0.5);
        ScoreReport { tp, fp, fn_, precision, recall, f_half }
    }
}

/// F_beta with the 0/0 -> 0 convention when precision and recall both
/// vanish.
pub fn f_beta(precision: f64, recall: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let denom = b2 * precision + recall;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / denom
    }
}

/// One edit per unaligned segment of the minimal alignment.
pub fn extract_edits(source: &TokenSeq, hypothesis: &TokenSeq, vocab: &Vocab) -> Result<EditSet> {
    let script = align(source, hypothesis);
    let mut edits = EditSet::new();
    for seg in script.unaligned() {
        let Segment::Unaligned { src, replacement, .. } = seg else { unreachable!() };
        let mut words = Vec::with_capacity(replacement.len());
        for &id in replacement {
            words.push(vocab.token(id)?);
        }
        edits.insert(Edit { start: src.start, end: src.end, replacement: words.join(" ") });
    }
    Ok(edits)
}

/// Exact-match edit scoring for one sentence.
pub fn score(hyp_edits: &EditSet, gold_edits: &EditSet) -> ScoreReport {
    let tp = hyp_edits.intersection(gold_edits).count();
    let fp = hyp_edits.len() - tp;
    let fn_ = gold_edits.len() - tp;
    ScoreReport::from_counts(tp, fp, fn_)
}

/// Corpus-level scoring: sum counts over sentences, then derive ratios.
pub fn score_corpus(per_sentence: &[(EditSet, EditSet)]) -> ScoreReport {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (hyp, gold) in per_sentence {
        let s = score(hyp, gold);
        tp += s.tp;
        fp += s.fp;
        fn_ += s.fn_;
    }
    ScoreReport::from_counts(tp, fp, fn_)
}

/// Token-level detection diagnostics: micro accuracy and per-class
/// recall. A class absent from the gold labels reports recall 1 and is
/// listed as vacuous.
#[derive(Debug, Clone, Serialize)]
pub struct DetectionMetrics {
    pub acc_d: f64,
    pub rec_k: f64,
    pub rec_e: f64,
    pub rec_i: f64,
    pub vacuous: Vec<char>,
}

pub fn detection_metrics(
    predicted: &[DetectionLabels],
    gold: &[DetectionLabels],
) -> Result<DetectionMetrics> {
    if predicted.len() != gold.len() {
        return Err(Error::LabelLengthMismatch { got: predicted.len(), want: gold.len() });
    }
    let mut correct = 0usize;
    let mut total = 0usize;
    let mut class_hits = [0usize; 4];
    let mut class_gold = [0usize; 4];
    for (p, g) in predicted.iter().zip(gold) {
        if p.len() != g.len() {
            return Err(Error::LabelLengthMismatch { got: p.len(), want: g.len() });
        }
        for (&pl, &gl) in p.labels.iter().zip(&g.labels) {
            total += 1;
            class_gold[gl.index()] += 1;
            if pl == gl {
                correct += 1;
                class_hits[gl.index()] += 1;
            }
        }
    }
    let mut vacuous = Vec::new();
    let mut recall = |label: Label| -> f64 {
        let i = label.index();
        if class_gold[i] == 0 {
            vacuous.push(label.letter());
            1.0
        } else {
            class_hits[i] as f64 / class_gold[i] as f64
        }
    };
    let rec_k = recall(Label::Keep);
    let rec_e = recall(Label::Error);
    let rec_i = recall(Label::Insert);
    Ok(DetectionMetrics {
        acc_d: if total == 0 { 1.0 } else { correct as f64 / total as f64 },
        rec_k,
        rec_e,
        rec_i,
        vacuous,
    })
}

/// Teacher-forced next-token accuracy over piece positions (end-of-piece
/// targets included).
pub fn correction_accuracy(model: &Model, samples: &[TrainingSample]) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for sample in samples {
        if sample.piece_targets.is_empty() {
            continue;
        }
        let fwd = forward(&model.params, &sample.packed, RunMode::Eval)?;
        for (row, &target) in fwd.lm_logits.rows().into_iter().zip(&sample.piece_targets) {
            let mut best = 0usize;
            let mut best_v = f32::NEG_INFINITY;
            for (i, &v) in row.iter().enumerate() {
                if v > best_v {
                    best_v = v;
                    best = i;
                }
            }
            total += 1;
            if best == target as usize {
                hits += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::NoActiveTokens("correction accuracy"));
    }
    Ok(hits as f64 / total as f64)
}

/// Argmax accuracy helper shared with tests: fraction of rows whose
/// argmax equals the target id.
pub fn argmax_accuracy(logits: &Array2<f32>, targets: &[u32]) -> f64 {
    let mut hits = 0usize;
    for (row, &t) in logits.rows().into_iter().zip(targets) {
        let mut best = 0usize;
        let mut best_v = f32::NEG_INFINITY;
        for (i, &v) in row.iter().enumerate() {
            if v > best_v {
                best_v = v;
                best = i;
            }
        }
        if best == t as usize {
            hits += 1;
        }
    }
    if targets.is_empty() {
        0.0
    } else {
        hits as f64 / targets.len() as f64
    }
}
