//! Inference: thresholded label prediction, per-slot beam-search
//! infilling, the full correction pipeline, and greedy grid search over
//! the control thresholds.
//!
//! Decoding is localized: only masked slots are generated, left to
//! right, each committed piece conditioning the next through the packed
//! input. Decoder work therefore scales with the number of edits, not
//! with sentence length.

use std::collections::HashMap;
use std::time::Instant;

use ndarray::Array2;
use serde::Serialize;

use crate::alignment::{DetectionLabels, Label};
use crate::corpus::{detokenize, TokenId, TokenSeq, END_OF_PIECE, RESERVED};
use crate::error::{Error, Result};
use crate::eval::{extract_edits, score_corpus, EditSet, ScoreReport};
use crate::model::{
    forward, pack_input, pack_source_only, softmax_rows, Model, ModelMode, RunMode,
};
use crate::template::{build_masked_text, reassemble, MaskedText, TextPiece};

/// Inference-time thresholds on detection probabilities. Unset fields
/// deactivate their rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct DetectionControl {
    pub keep_threshold: Option<f64>,
    pub error_lower_bound: Option<f64>,
    pub insert_lower_bound: Option<f64>,
}

impl DetectionControl {
    pub fn none() -> DetectionControl {
        DetectionControl::default()
    }

    pub fn is_neutral(&self) -> bool {
        self.keep_threshold.is_none()
            && self.error_lower_bound.is_none()
            && self.insert_lower_bound.is_none()
    }

    /// Parse `"delta,phi_e,phi_i"` with empty fields meaning unset,
    /// e.g. `"0.38,0.5,0.6"` or `"0,,"`.
    pub fn parse(s: &str) -> Result<DetectionControl> {
        let fields: Vec<&str> = s.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::InvalidConfig(format!(
                "control string needs 3 comma-separated fields, got {}",
                fields.len()
            )));
        }
        let parse_field = |f: &str| -> Result<Option<f64>> {
            if f.is_empty() {
                return Ok(None);
            }
            let v: f64 = f
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad threshold {f:?}")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("threshold {v} outside [0,1]")));
            }
            Ok(Some(v))
        };
        Ok(DetectionControl {
            keep_threshold: parse_field(fields[0])?,
            error_lower_bound: parse_field(fields[1])?,
            insert_lower_bound: parse_field(fields[2])?,
        })
    }
}

impl std::fmt::Display for DetectionControl {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let field = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        write!(
            f,
            "{},{},{}",
            field(self.keep_threshold),
            field(self.error_lower_bound),
            field(self.insert_lower_bound)
        )
    }
}

/// Beam settings for piece decoding.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecodeConfig {
    pub beam_size: usize,
    pub max_piece_len: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig { beam_size: 3, max_piece_len: 10 }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 || self.max_piece_len == 0 {
            return Err(Error::InvalidConfig("beam_size and max_piece_len must be >= 1".into()));
        }
        Ok(())
    }
}

/// Apply the three control rules to one sentence of per-token label
/// probabilities (rows over the label set, KEEP first).
///
/// A KEEP probability strictly above the threshold forces KEEP outright;
/// otherwise ERROR/INSERT probabilities strictly below their lower
/// bounds are zeroed and the argmax of the adjusted, unrenormalized row
/// decides, ties breaking toward the earlier label (KEEP first).
pub fn apply_detection_control(
    probs: &Array2<f32>,
    ctrl: &DetectionControl,
) -> Result<DetectionLabels> {
    let width = probs.ncols();
    if !(2..=4).contains(&width) {
        return Err(Error::BadProbabilityRow(format!("{width} columns")));
    }
    let mut labels = Vec::with_capacity(probs.nrows());
    for row in probs.rows() {
        let sum: f64 = row.iter().map(|&p| p as f64).sum();
        if (sum - 1.0).abs() > 1e-4 || row.iter().any(|&p| !(0.0..=1.0 + 1e-6).contains(&(p as f64))) {
            return Err(Error::BadProbabilityRow(format!("row sums to {sum}")));
        }
        let keep_p = row[Label::Keep.index()] as f64;
        if let Some(delta) = ctrl.keep_threshold {
            if keep_p > delta {
                labels.push(Label::Keep);
                continue;
            }
        }
        let mut adjusted: Vec<f64> = row.iter().map(|&p| p as f64).collect();
        if let Some(phi_e) = ctrl.error_lower_bound {
            let e = Label::Error.index();
            if e < width && adjusted[e] < phi_e {
                adjusted[e] = 0.0;
            }
        }
        if let Some(phi_i) = ctrl.insert_lower_bound {
            let i = Label::Insert.index();
            if i < width && adjusted[i] < phi_i {
                adjusted[i] = 0.0;
            }
        }
        let mut best = 0;
        for (j, &p) in adjusted.iter().enumerate() {
            if p > adjusted[best] {
                best = j;
            }
        }
        labels.push(Label::from_index(best).expect("index within label set"));
    }
    Ok(DetectionLabels { labels })
}

/// Predict detection labels for a source sentence. Returns the labels
/// after control plus the raw probability matrix for grid-search reuse.
pub fn detect(
    model: &Model,
    source: &TokenSeq,
    ctrl: &DetectionControl,
) -> Result<(DetectionLabels, Array2<f32>)> {
    let packed = pack_source_only(source, model.params.config.max_positions)?;
    let fwd = forward(&model.params, &packed, RunMode::Eval)?;
    let probs = softmax_rows(&fwd.detection_logits);
    let labels = apply_detection_control(&probs, ctrl)?;
    Ok((labels, probs))
}

#[derive(Clone)]
struct Hypothesis {
    tokens: Vec<TokenId>,
    sum_logp: f64,
    emitted: usize,
}

impl Hypothesis {
    fn score(&self) -> f64 {
        if self.emitted == 0 {
            0.0
        } else {
            self.sum_logp / self.emitted as f64
        }
    }
}

/// Beam-search one piece per mask slot, strictly left to right; the best
/// completed hypothesis of each slot is committed before the next slot
/// starts. Hypotheses are scored by mean log-probability per emitted
/// token and terminate at `<|endofpiece|>` or `max_piece_len` tokens.
/// Returns the pieces and the decoder-step count, defined as the sum of
/// `piece length + 1` over slots.
pub fn infill(
    model: &Model,
    source: &TokenSeq,
    masked: &MaskedText,
    cfg: &DecodeConfig,
) -> Result<(Vec<TextPiece>, usize)> {
    cfg.validate()?;
    let max_positions = model.params.config.max_positions;
    let base_len = source.len() + masked.ids.len();
    let mut committed: Vec<Vec<TokenId>> = Vec::with_capacity(masked.slot_count());
    let mut decoder_steps = 0usize;

    for _slot in 0..masked.slot_count() {
        let used: usize = base_len + committed.iter().map(|p| p.len() + 1).sum::<usize>();
        let budget = max_positions.saturating_sub(used + 1); // +1 for this start-of-piece
        let max_len = cfg.max_piece_len.min(budget);

        let mut live = vec![Hypothesis { tokens: Vec::new(), sum_logp: 0.0, emitted: 0 }];
        let mut done: Vec<Hypothesis> = Vec::new();

        while !live.is_empty() {
            let mut candidates: Vec<Hypothesis> = Vec::new();
            for hyp in &live {
                let mut pieces = committed.clone();
                pieces.push(hyp.tokens.clone());
                let packed = pack_input(
                    source,
                    masked,
                    &pieces,
                    max_positions,
                    model.params.config.max_block_positions,
                )?;
                let fwd = forward(&model.params, &packed, RunMode::Eval)?;
                let row = fwd.lm_logits.nrows() - 1;
                let logits = fwd.lm_logits.row(row);
                let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                let lse = logits.iter().map(|&v| ((v - max) as f64).exp()).sum::<f64>().ln()
                    + max as f64;
                for (token, &logit) in logits.iter().enumerate() {
                    let token = token as TokenId;
                    // pieces carry only content tokens; the one reserved
                    // id a piece may emit is its terminator
                    if (token as usize) < RESERVED && token != END_OF_PIECE {
                        continue;
                    }
                    let logp = logit as f64 - lse;
                    if token == END_OF_PIECE {
                        done.push(Hypothesis {
                            tokens: hyp.tokens.clone(),
                            sum_logp: hyp.sum_logp + logp,
                            emitted: hyp.emitted + 1,
                        });
                    } else {
                        let mut tokens = hyp.tokens.clone();
                        tokens.push(token);
                        candidates.push(Hypothesis {
                            tokens,
                            sum_logp: hyp.sum_logp + logp,
                            emitted: hyp.emitted + 1,
                        });
                    }
                }
            }
            sort_hypotheses(&mut candidates);
            candidates.truncate(cfg.beam_size);
            let (finished, still_live): (Vec<_>, Vec<_>) =
                candidates.into_iter().partition(|h| h.tokens.len() >= max_len);
            done.extend(finished);
            live = still_live;
            sort_hypotheses(&mut done);
            done.truncate(cfg.beam_size.max(1));
        }

        let best = done.first().ok_or_else(|| {
            Error::ScriptMismatch("beam search ended with no hypotheses".into())
        })?;
        decoder_steps += best.tokens.len() + 1;
        committed.push(best.tokens.clone());
    }

    let pieces = committed
        .into_iter()
        .enumerate()
        .map(|(slot_index, ids)| TextPiece { ids, slot_index })
        .collect();
    Ok((pieces, decoder_steps))
}

fn sort_hypotheses(hyps: &mut [Hypothesis]) {
    hyps.sort_by(|a, b| {
        b.score()
            .partial_cmp(&a.score())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.tokens.len().cmp(&b.tokens.len()))
            .then(a.tokens.cmp(&b.tokens))
    });
}

/// Everything observed while correcting one sentence.
#[derive(Debug, Clone, Serialize)]
pub struct Trace {
    pub source: String,
    pub labels: String,
    pub masked: String,
    pub pieces: Vec<String>,
    pub output: String,
    pub decoder_steps: usize,
    pub detection_ms: f64,
    pub correction_ms: f64,
    pub total_ms: f64,
}

/// The full pipeline: detect, build masked text, short-circuit on
/// all-KEEP, infill, reassemble.
pub fn correct(
    model: &Model,
    source: &TokenSeq,
    ctrl: &DetectionControl,
    cfg: &DecodeConfig,
) -> Result<(TokenSeq, Trace)> {
    match model.mode {
        ModelMode::Joint => {}
        ModelMode::DetectOnly => return Err(Error::WrongMode("detection-only model")),
        ModelMode::CorrectOnly => {
            return Err(Error::WrongMode("correction-only model needs external labels"))
        }
    }
    let t0 = Instant::now();
    let (labels, _) = detect(model, source, ctrl)?;
    let detection_ms = t0.elapsed().as_secs_f64() * 1e3;
    correct_from_labels(model, source, &labels, cfg, detection_ms)
}

/// Run the correction phase from externally supplied labels (the path a
/// correction-only model takes).
pub fn correct_with_labels(
    model: &Model,
    source: &TokenSeq,
    labels: &DetectionLabels,
    cfg: &DecodeConfig,
) -> Result<(TokenSeq, Trace)> {
    if model.mode == ModelMode::DetectOnly {
        return Err(Error::WrongMode("detection-only model"));
    }
    correct_from_labels(model, source, labels, cfg, 0.0)
}

fn correct_from_labels(
    model: &Model,
    source: &TokenSeq,
    labels: &DetectionLabels,
    cfg: &DecodeConfig,
    detection_ms: f64,
) -> Result<(TokenSeq, Trace)> {
    let t1 = Instant::now();
    let masked = build_masked_text(source, labels)?;
    let (output, pieces, decoder_steps) = if masked.slot_count() == 0 {
        (source.clone(), Vec::new(), 0)
    } else {
        let (pieces, steps) = infill(model, source, &masked, cfg)?;
        let output = reassemble(&masked, &pieces)?;
        (output, pieces, steps)
    };
    let correction_ms = t1.elapsed().as_secs_f64() * 1e3;
    let trace = Trace {
        source: detokenize(source, &model.vocab)?,
        labels: labels.to_string(),
        masked: masked.render(&model.vocab)?,
        pieces: pieces
            .iter()
            .map(|p| p.render(&model.vocab))
            .collect::<Result<Vec<_>>>()?,
        output: detokenize(&output, &model.vocab)?,
        decoder_steps,
        detection_ms,
        correction_ms,
        total_ms: detection_ms + correction_ms,
    };
    Ok((output, trace))
}

/// Grid axes for threshold search; `None` entries are the neutral
/// (inactive) value.
#[derive(Debug, Clone)]
pub struct ControlGrids {
    pub delta: Vec<Option<f64>>,
    pub phi_error: Vec<Option<f64>>,
    pub phi_insert: Vec<Option<f64>>,
}

impl ControlGrids {
    /// Build axes from plain value lists, prepending the neutral value.
    pub fn with_neutral(delta: &[f64], phi_error: &[f64], phi_insert: &[f64]) -> ControlGrids {
        let axis = |vals: &[f64]| {
            let mut axis: Vec<Option<f64>> = vec![None];
            axis.extend(vals.iter().map(|&v| Some(v)));
            axis
        };
        ControlGrids {
            delta: axis(delta),
            phi_error: axis(phi_error),
            phi_insert: axis(phi_insert),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.delta.is_empty() {
            return Err(Error::EmptyGridAxis("delta"));
        }
        if self.phi_error.is_empty() {
            return Err(Error::EmptyGridAxis("phi_error"));
        }
        if self.phi_insert.is_empty() {
            return Err(Error::EmptyGridAxis("phi_insert"));
        }
        if !self.delta.contains(&None)
            || !self.phi_error.contains(&None)
            || !self.phi_insert.contains(&None)
        {
            return Err(Error::InvalidConfig("every grid axis must include the neutral value".into()));
        }
        Ok(())
    }
}

/// One evaluated grid cell.
#[derive(Debug, Clone, Serialize)]
pub struct GridPoint {
    pub ctrl: DetectionControl,
    pub report: ScoreReport,
}

fn axis_neutral_first(axis: &[Option<f64>]) -> Vec<Option<f64>> {
    let mut out: Vec<Option<f64>> = vec![None];
    let mut values: Vec<f64> = axis.iter().flatten().copied().collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values.dedup();
    out.extend(values.into_iter().map(Some));
    out
}

/// Greedy two-stage search over precomputed detection probabilities:
/// first sweep the KEEP threshold alone, then sweep the two lower bounds
/// with the winning threshold fixed. `eval_cell` scores one labeling of
/// the dev set; ties go to the earlier (neutral-first) candidate.
pub fn grid_search_with<S>(
    detections: &[Array2<f32>],
    grids: &ControlGrids,
    mut eval_cell: S,
) -> Result<(DetectionControl, Vec<GridPoint>)>
where
    S: FnMut(&DetectionControl, &[DetectionLabels]) -> Result<ScoreReport>,
{
    grids.validate()?;
    if detections.is_empty() {
        return Err(Error::EmptyDevSet);
    }
    let mut table = Vec::new();
    let run = |ctrl: &DetectionControl,
                   table: &mut Vec<GridPoint>,
                   eval_cell: &mut S|
     -> Result<f64> {
        let labels = detections
            .iter()
            .map(|probs| apply_detection_control(probs, ctrl))
            .collect::<Result<Vec<_>>>()?;
        let report = eval_cell(ctrl, &labels)?;
        table.push(GridPoint { ctrl: *ctrl, report });
        Ok(report.f_half)
    };

    // stage 1: KEEP threshold alone
    let mut best_delta = None;
    let mut best_f = f64::NEG_INFINITY;
    for &delta in &axis_neutral_first(&grids.delta) {
        let ctrl = DetectionControl { keep_threshold: delta, ..DetectionControl::none() };
        let f = run(&ctrl, &mut table, &mut eval_cell)?;
        if f > best_f {
            best_f = f;
            best_delta = delta;
        }
    }

    // stage 2: lower bounds at the fixed threshold
    let mut best_ctrl = DetectionControl { keep_threshold: best_delta, ..DetectionControl::none() };
    for &phi_e in &axis_neutral_first(&grids.phi_error) {
        for &phi_i in &axis_neutral_first(&grids.phi_insert) {
            if phi_e.is_none() && phi_i.is_none() {
                continue; // already scored in stage 1
            }
            let ctrl = DetectionControl {
                keep_threshold: best_delta,
                error_lower_bound: phi_e,
                insert_lower_bound: phi_i,
            };
            let f = run(&ctrl, &mut table, &mut eval_cell)?;
            if f > best_f {
                best_f = f;
                best_ctrl = ctrl;
            }
        }
    }
    Ok((best_ctrl, table))
}

/// End-to-end grid search: score each cell by corpus F0.5 of the full
/// correction pipeline on the dev pairs. Corrections are memoized per
/// (sentence, labeling), so cells that label a sentence identically do
/// not re-decode it.
pub fn grid_search_control(
    model: &Model,
    dev: &[(TokenSeq, TokenSeq)],
    grids: &ControlGrids,
    cfg: &DecodeConfig,
) -> Result<(DetectionControl, Vec<GridPoint>)> {
    if dev.is_empty() {
        return Err(Error::EmptyDevSet);
    }
    let none = DetectionControl::none();
    let mut detections = Vec::with_capacity(dev.len());
    let mut gold_edits = Vec::with_capacity(dev.len());
    for (source, target) in dev {
        let (_, probs) = detect(model, source, &none)?;
        detections.push(probs);
        gold_edits.push(extract_edits(source, target, &model.vocab)?);
    }
    let mut memo: Vec<HashMap<Vec<Label>, EditSet>> = vec![HashMap::new(); dev.len()];

    grid_search_with(&detections, grids, |_, labels| {
        let mut scored: Vec<(EditSet, EditSet)> = Vec::with_capacity(dev.len());
        for (i, sentence_labels) in labels.iter().enumerate() {
            let key = sentence_labels.labels.clone();
            let hyp = match memo[i].get(&key) {
                Some(h) => h.clone(),
                None => {
                    let (output, _) =
                        correct_from_labels(model, &dev[i].0, sentence_labels, cfg, 0.0)?;
                    let edits = extract_edits(&dev[i].0, &output, &model.vocab)?;
                    memo[i].insert(key, edits.clone());
                    edits
                }
            };
            scored.push((hyp, gold_edits[i].clone()));
        }
        Ok(score_corpus(&scored))
    })
}
