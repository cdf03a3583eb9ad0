//! Losses, dataset construction for both fine-tuning stages, and the
//! training loop.
//!
//! Detection uses focal loss with per-class weights so the dominant KEEP
//! class does not drown out ERROR/INSERT; correction is plain token-level
//! cross-entropy over piece positions. The joint objective is
//! `mean(correction) + w_detect * mean(detection)` with token-level
//! means, `w_detect` defaulting to 10 to put the two terms on the same
//! scale.

mod dataset;
mod optim;
mod trainer;

pub use dataset::{build_sft1_dataset, build_sft2_dataset, BuildStats, DatasetOptions};
pub use optim::{AdamW, LrSchedule};
pub use trainer::{eval_keys, train, weight_sweep, EvalComponents, LogRecord, SweepCell, TrainOutcome};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::alignment::Label;
use crate::corpus::TokenId;
use crate::error::{Error, Result};
use crate::model::{
    backward, forward, log_softmax_rows, softmax_rows, ModelMode, ModelParams, PackedInput,
    RunMode, Scalar,
};

/// Probability floor applied before logs during training, so early-epoch
/// confident mistakes cannot emit infinities.
pub const PROB_FLOOR: f64 = 1e-12;

/// Which dev metric drives early stopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalKey {
    AdAccuracy,
    GeneralAccuracy,
}

impl Default for EvalKey {
    fn default() -> Self {
        EvalKey::AdAccuracy
    }
}

fn default_gamma() -> f64 {
    2.0
}
fn default_alpha_keep() -> f64 {
    1.0
}
fn default_alpha_error_insert() -> f64 {
    2.0
}
fn default_w_detect() -> f64 {
    10.0
}
fn default_lr() -> f64 {
    1e-3
}
fn default_batch() -> usize {
    16
}
fn default_epochs() -> usize {
    5
}
fn default_patience() -> usize {
    10
}
fn default_eval_interval() -> usize {
    200
}
fn default_accum() -> usize {
    1
}
fn default_decay_power() -> f64 {
    1.0
}
fn default_max_piece_len() -> usize {
    10
}
fn default_seed() -> u64 {
    111
}

/// Training hyperparameters; JSON field names mirror the struct.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_alpha_keep")]
    pub alpha_keep: f64,
    #[serde(default = "default_alpha_error_insert")]
    pub alpha_error_insert: f64,
    #[serde(default = "default_w_detect")]
    pub w_detect: f64,
    #[serde(default)]
    pub mode: ModelMode,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub warmup_steps: usize,
    #[serde(default = "default_decay_power")]
    pub decay_power: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub early_stop_patience: usize,
    #[serde(default = "default_eval_interval")]
    pub eval_interval: usize,
    /// Optimizer updates happen every this many batches (gradient
    /// accumulation).
    #[serde(default = "default_accum")]
    pub grad_accum_steps: usize,
    #[serde(default)]
    pub eval_key: EvalKey,
    #[serde(default = "default_max_piece_len")]
    pub max_piece_len: usize,
    #[serde(default = "default_seed")]
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gamma < 0.0 {
            return Err(Error::InvalidConfig("gamma must be >= 0".into()));
        }
        if self.alpha_keep <= 0.0 || self.alpha_error_insert <= 0.0 {
            return Err(Error::InvalidConfig("class weights must be positive".into()));
        }
        if self.w_detect < 0.0 {
            return Err(Error::InvalidConfig("w_detect must be >= 0".into()));
        }
        if self.batch_size == 0 || self.grad_accum_steps == 0 || self.eval_interval == 0 {
            return Err(Error::InvalidConfig("batch/accum/eval sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn alpha(&self, label: Label) -> f64 {
        match label {
            Label::Keep => self.alpha_keep,
            _ => self.alpha_error_insert,
        }
    }
}

/// One packed training example with teacher-forced targets. Detection
/// targets stay gold even in stage-two data; only the masked text moves.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub packed: PackedInput,
    pub detection_targets: Vec<Label>,
    /// One target per piece row: the piece tokens shifted left, each
    /// piece closed by `<|endofpiece|>`.
    pub piece_targets: Vec<TokenId>,
}

impl TrainingSample {
    pub fn n_detect_tokens(&self) -> usize {
        self.detection_targets.len()
    }

    pub fn n_correct_tokens(&self) -> usize {
        self.piece_targets.len()
    }
}

/// Focal loss for one token: `alpha * (1-p)^gamma * (-ln p)` where `p` is
/// the probability assigned to the true label. With `gamma = 0` and unit
/// alpha this is cross-entropy.
pub fn focal_loss(prob_of_true_label: f64, label: Label, cfg: &TrainConfig) -> Result<f64> {
    if prob_of_true_label <= 0.0 || prob_of_true_label > 1.0 {
        return Err(Error::BadProbability(prob_of_true_label));
    }
    Ok(focal_term(prob_of_true_label, cfg.alpha(label), cfg.gamma))
}

fn focal_term(p: f64, alpha: f64, gamma: f64) -> f64 {
    let p = p.max(PROB_FLOOR);
    alpha * (1.0 - p).powf(gamma) * -p.ln()
}

/// d(focal)/dp at the true-label probability.
fn focal_dp(p: f64, alpha: f64, gamma: f64) -> f64 {
    let p = p.max(PROB_FLOOR);
    let one_minus = (1.0 - p).max(0.0);
    let log_term = if gamma > 0.0 && one_minus > 0.0 {
        alpha * gamma * one_minus.powf(gamma - 1.0) * p.ln()
    } else {
        0.0
    };
    log_term - alpha * one_minus.powf(gamma) / p
}

/// Sum of `-ln p(target)` over all piece rows.
pub fn correction_loss<F: Scalar>(lm_logits: &Array2<F>, piece_targets: &[TokenId]) -> Result<f64> {
    if lm_logits.nrows() != piece_targets.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} lm rows vs {} piece targets",
            lm_logits.nrows(),
            piece_targets.len()
        )));
    }
    let logp = log_softmax_rows(lm_logits);
    let mut sum = 0.0;
    for (row, &t) in logp.rows().into_iter().zip(piece_targets) {
        sum -= row[t as usize].to_f64();
    }
    Ok(sum)
}

/// Token-mean combination: `mean_correct + w_detect * mean_detect` in
/// joint mode; single-head modes return the plain mean of their head.
pub fn combined_loss(
    detect_loss_sum: f64,
    n_detect_tokens: usize,
    correct_loss_sum: f64,
    n_correct_tokens: usize,
    cfg: &TrainConfig,
) -> Result<f64> {
    let detect_mean = || -> Result<f64> {
        if n_detect_tokens == 0 {
            return Err(Error::NoActiveTokens("detection"));
        }
        Ok(detect_loss_sum / n_detect_tokens as f64)
    };
    let correct_mean = || -> Result<f64> {
        if n_correct_tokens == 0 {
            return Err(Error::NoActiveTokens("correction"));
        }
        Ok(correct_loss_sum / n_correct_tokens as f64)
    };
    match cfg.mode {
        ModelMode::Joint => Ok(correct_mean()? + cfg.w_detect * detect_mean()?),
        ModelMode::DetectOnly => detect_mean(),
        ModelMode::CorrectOnly => correct_mean(),
    }
}

/// Per-sample loss sums (token counts are structural).
#[derive(Debug, Clone, Copy, Default)]
pub struct SampleLoss {
    pub detect_sum: f64,
    pub correct_sum: f64,
}

/// Forward + loss + backward for one sample. `scale_detect` and
/// `scale_correct` multiply the logit gradients so a whole batch
/// optimizes `mean_c + w * mean_d` with batch-level token means; pass the
/// reciprocal token counts times their loss weights. Generic over the
/// float type so the gradient-check harness can run the same path at
/// f64.
pub fn sample_grads<F: Scalar>(
    params: &ModelParams<F>,
    sample: &TrainingSample,
    cfg: &TrainConfig,
    mode: RunMode,
    scale_detect: f64,
    scale_correct: f64,
) -> Result<(SampleLoss, ModelParams<F>)> {
    let fwd = forward(params, &sample.packed, mode)?;

    // detection head: focal loss per source token
    let det_probs = softmax_rows(&fwd.detection_logits);
    let mut d_det = Array2::zeros(fwd.detection_logits.raw_dim());
    let mut detect_sum = 0.0;
    for (i, &target) in sample.detection_targets.iter().enumerate() {
        let t = target.index();
        let alpha = cfg.alpha(target);
        let pt = det_probs[[i, t]].to_f64();
        detect_sum += focal_term(pt, alpha, cfg.gamma);
        let base = focal_dp(pt, alpha, cfg.gamma) * scale_detect;
        let ptc = pt.max(PROB_FLOOR);
        for j in 0..det_probs.ncols() {
            let pj = det_probs[[i, j]].to_f64();
            let indicator = if j == t { 1.0 } else { 0.0 };
            d_det[[i, j]] = F::from_f64(base * ptc * (indicator - pj));
        }
    }

    // correction head: cross-entropy per piece row
    let mut d_lm = Array2::zeros(fwd.lm_logits.raw_dim());
    let mut correct_sum = 0.0;
    if !sample.piece_targets.is_empty() {
        if fwd.lm_logits.nrows() != sample.piece_targets.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} lm rows vs {} piece targets",
                fwd.lm_logits.nrows(),
                sample.piece_targets.len()
            )));
        }
        let probs = softmax_rows(&fwd.lm_logits);
        for (i, &target) in sample.piece_targets.iter().enumerate() {
            let t = target as usize;
            let pt = probs[[i, t]].to_f64().max(PROB_FLOOR);
            correct_sum -= pt.ln();
            for j in 0..probs.ncols() {
                let pj = probs[[i, j]].to_f64();
                let indicator = if j == t { 1.0 } else { 0.0 };
                d_lm[[i, j]] = F::from_f64(scale_correct * (pj - indicator));
            }
        }
    }

    let grads = backward(params, &sample.packed, &fwd, &d_det, &d_lm)?;
    Ok((SampleLoss { detect_sum, correct_sum }, grads))
}
