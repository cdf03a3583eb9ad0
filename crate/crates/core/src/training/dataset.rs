//! Training-sample construction for both fine-tuning stages.
//!
//! Stage one builds every sample from gold detection labels. Stage two
//! reruns the stage-one model's detector over the training set, merges
//! its false positives into the gold labels, rebuilds masked text and
//! pieces from the merged labels, and keeps the gold labels as detection
//! targets, so the corrector learns to retract detector mistakes.

use crate::alignment::{align, derive_labels, DetectionLabels, Label, LabelSet};
use crate::corpus::{ParallelExample, TokenId, END_OF_PIECE};
use crate::error::{Error, Result};
use crate::inference::{detect, DetectionControl};
use crate::model::{pack_input, Model, ModelConfig};
use crate::template::{build_masked_text, extract_pieces, gold_pieces_for_merged, merge_detections, MaskedText, TextPiece};

use super::TrainingSample;

/// Packing limits for dataset construction.
#[derive(Debug, Clone, Copy)]
pub struct DatasetOptions {
    pub max_piece_len: usize,
    pub max_positions: usize,
    pub max_block_positions: usize,
}

impl DatasetOptions {
    pub fn from_model(cfg: &ModelConfig, max_piece_len: usize) -> DatasetOptions {
        DatasetOptions {
            max_piece_len,
            max_positions: cfg.max_positions,
            max_block_positions: cfg.max_block_positions,
        }
    }
}

/// How many pairs were kept and why the rest were dropped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildStats {
    pub built: usize,
    pub skipped_long_piece: usize,
    pub skipped_too_long: usize,
    pub skipped_unrepresentable: usize,
}

impl BuildStats {
    pub fn skipped(&self) -> usize {
        self.skipped_long_piece + self.skipped_too_long + self.skipped_unrepresentable
    }
}

fn pack_sample(
    pair: &ParallelExample,
    labels: &DetectionLabels,
    masked: &MaskedText,
    pieces: &[TextPiece],
    opts: &DatasetOptions,
    stats: &mut BuildStats,
) -> Result<Option<TrainingSample>> {
    if pieces.iter().any(|p| p.ids.len() > opts.max_piece_len) {
        stats.skipped_long_piece += 1;
        return Ok(None);
    }
    let piece_ids: Vec<Vec<TokenId>> = pieces.iter().map(|p| p.ids.clone()).collect();
    let packed = match pack_input(
        &pair.source,
        masked,
        &piece_ids,
        opts.max_positions,
        opts.max_block_positions,
    ) {
        Ok(p) => p,
        Err(Error::SequenceTooLong { .. }) => {
            stats.skipped_too_long += 1;
            return Ok(None);
        }
        Err(e) => return Err(e),
    };
    let mut piece_targets = Vec::with_capacity(packed.n_piece_rows());
    for piece in pieces {
        piece_targets.extend_from_slice(&piece.ids);
        piece_targets.push(END_OF_PIECE);
    }
    debug_assert_eq!(piece_targets.len(), packed.n_piece_rows());
    stats.built += 1;
    Ok(Some(TrainingSample {
        packed,
        detection_targets: labels.labels.clone(),
        piece_targets,
    }))
}

/// Stage-one data: gold labels, gold masked text, gold pieces.
pub fn build_sft1_dataset(
    pairs: &[ParallelExample],
    label_set: LabelSet,
    opts: &DatasetOptions,
) -> Result<(Vec<TrainingSample>, BuildStats)> {
    let mut samples = Vec::with_capacity(pairs.len());
    let mut stats = BuildStats::default();
    for pair in pairs {
        let script = align(&pair.source, &pair.target);
        let labels = match derive_labels(&script, label_set) {
            Ok(l) => l,
            Err(Error::InsertionAtStart) => {
                stats.skipped_unrepresentable += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let masked = build_masked_text(&pair.source, &labels)?;
        let pieces = extract_pieces(&script, label_set)?;
        if let Some(sample) = pack_sample(pair, &labels, &masked, &pieces, opts, &mut stats)? {
            samples.push(sample);
        }
    }
    Ok((samples, stats))
}

/// Stage-two data: masked text and pieces follow the gold labels merged
/// with the stage-one model's uncontrolled detections; detection targets
/// stay gold.
pub fn build_sft2_dataset(
    pairs: &[ParallelExample],
    sft1_model: &Model,
    label_set: LabelSet,
    opts: &DatasetOptions,
) -> Result<(Vec<TrainingSample>, BuildStats)> {
    let mut samples = Vec::with_capacity(pairs.len());
    let mut stats = BuildStats::default();
    let no_control = DetectionControl::none();
    for pair in pairs {
        let script = align(&pair.source, &pair.target);
        let gold = match derive_labels(&script, label_set) {
            Ok(l) => l,
            Err(Error::InsertionAtStart) => {
                stats.skipped_unrepresentable += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let (mut predicted, _) = detect(sft1_model, &pair.source, &no_control)?;
        // a false-positive DELETE would drop a correct token with no mask
        // to restore it through; demote those predictions to ERROR
        for (p, &g) in predicted.labels.iter_mut().zip(&gold.labels) {
            if *p == Label::Delete && g == Label::Keep {
                *p = Label::Error;
            }
        }
        let merged = merge_detections(&gold, &predicted)?;
        let masked = build_masked_text(&pair.source, &merged)?;
        let pieces = gold_pieces_for_merged(&pair.source, &pair.target, &script, &merged)?;
        if let Some(sample) = pack_sample(pair, &gold, &masked, &pieces, opts, &mut stats)? {
            samples.push(sample);
        }
    }
    Ok((samples, stats))
}
