//! Minibatch training with warmup/decay, dev-set evaluation keys, early
//! stopping on the better of two model-selection metrics, and a small
//! loss-weight sweep runner.

use serde::Serialize;

use crate::alignment::{align, derive_labels, LabelSet};
use crate::corpus::{ParallelExample, Vocab};
use crate::error::{Error, Result};
use crate::eval::{correction_accuracy, detection_metrics};
use crate::inference::{correct, detect, DecodeConfig, DetectionControl};
use crate::model::{Model, ModelConfig, ModelMode, ModelParams, RunMode};
use crate::rng::{derive_seed, CounterRng};

use super::{
    build_sft1_dataset, combined_loss, sample_grads, AdamW, DatasetOptions, EvalKey, LrSchedule,
    TrainConfig, TrainingSample,
};

/// Model-selection metrics computed on a dev set.
///
/// `ad_accuracy` is Rec_E + Rec_I + Acc_C (range 0..3), rewarding
/// aggressive detection; `general_accuracy` is the geometric mean of the
/// three label recalls and Acc_C. Absent classes count as recall 1 and
/// are flagged vacuous.
#[derive(Debug, Clone, Serialize)]
pub struct EvalComponents {
    pub ad_accuracy: f64,
    pub general_accuracy: f64,
    pub rec_k: f64,
    pub rec_e: f64,
    pub rec_i: f64,
    pub acc_c: f64,
    pub vacuous: Vec<char>,
}

impl EvalComponents {
    pub fn key(&self, key: EvalKey) -> f64 {
        match key {
            EvalKey::AdAccuracy => self.ad_accuracy,
            EvalKey::GeneralAccuracy => self.general_accuracy,
        }
    }
}

/// One line of the training log (serialized as JSON lines).
#[derive(Debug, Clone, Serialize)]
pub struct LogRecord {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub detect_loss: f64,
    pub correct_loss: f64,
    pub combined_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalComponents>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<LogRecord>,
    pub diverged: bool,
    pub best_eval: Option<EvalComponents>,
    pub steps: usize,
}

/// Detection recalls (uncontrolled argmax) plus teacher-forced next-token
/// accuracy on gold-label samples.
pub fn eval_keys(model: &Model, dev: &[ParallelExample], opts: &DatasetOptions) -> Result<EvalComponents> {
    if dev.is_empty() {
        return Err(Error::EmptyDevSet);
    }
    let no_control = DetectionControl::none();
    let mut predicted = Vec::with_capacity(dev.len());
    let mut gold = Vec::with_capacity(dev.len());
    for pair in dev {
        let script = align(&pair.source, &pair.target);
        let labels = match derive_labels(&script, model.label_set) {
            Ok(l) => l,
            Err(Error::InsertionAtStart) => continue,
            Err(e) => return Err(e),
        };
        let (pred, _) = detect(model, &pair.source, &no_control)?;
        predicted.push(pred);
        gold.push(labels);
    }
    let det = detection_metrics(&predicted, &gold)?;

    let (samples, _) = build_sft1_dataset(dev, model.label_set, opts)?;
    let mut vacuous = det.vacuous.clone();
    let acc_c = match correction_accuracy(model, &samples) {
        Ok(a) => a,
        Err(Error::NoActiveTokens(_)) => {
            vacuous.push('C');
            1.0
        }
        Err(e) => return Err(e),
    };
    Ok(EvalComponents {
        ad_accuracy: det.rec_e + det.rec_i + acc_c,
        general_accuracy: (det.rec_k * det.rec_e * det.rec_i * acc_c).powf(0.25),
        rec_k: det.rec_k,
        rec_e: det.rec_e,
        rec_i: det.rec_i,
        acc_c,
        vacuous,
    })
}

fn batch_scales(cfg: &TrainConfig, n_detect: usize, n_correct: usize) -> (f64, f64) {
    match cfg.mode {
        ModelMode::Joint => (
            if n_detect > 0 { cfg.w_detect / n_detect as f64 } else { 0.0 },
            if n_correct > 0 { 1.0 / n_correct as f64 } else { 0.0 },
        ),
        ModelMode::DetectOnly => {
            (if n_detect > 0 { 1.0 / n_detect as f64 } else { 0.0 }, 0.0)
        }
        ModelMode::CorrectOnly => {
            (0.0, if n_correct > 0 { 1.0 / n_correct as f64 } else { 0.0 })
        }
    }
}

/// Minibatch gradient descent on the combined loss. Evaluates the dev
/// set every `eval_interval` optimizer steps, keeps the best weights by
/// `eval_key`, stops early after `early_stop_patience` evaluations
/// without improvement, and aborts (returning the best weights so far)
/// if the loss goes non-finite. Bit-reproducible for a fixed seed,
/// single-threaded.
pub fn train(
    samples: &[TrainingSample],
    dev: &[ParallelExample],
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    vocab: &Vocab,
    label_set: LabelSet,
    init: Option<&ModelParams<f32>>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model_cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidConfig("empty training set".into()));
    }
    if model_cfg.label_count != label_set.label_count() {
        return Err(Error::InvalidConfig(format!(
            "model label_count {} vs label set {:?}",
            model_cfg.label_count, label_set
        )));
    }

    let mut params = match init {
        Some(p) => {
            if p.config != *model_cfg {
                return Err(Error::InvalidConfig("init checkpoint config mismatch".into()));
            }
            p.clone()
        }
        None => ModelParams::init(model_cfg, derive_seed(cfg.rng_seed, 0x1417))?,
    };
    let opts = DatasetOptions::from_model(model_cfg, cfg.max_piece_len);
    let mut log = Vec::new();

    // loss-scale note at initialization (sanity, not asserted)
    {
        let probe = &samples[..samples.len().min(32)];
        let mut d_sum = 0.0;
        let mut c_sum = 0.0;
        let mut d_n = 0usize;
        let mut c_n = 0usize;
        for s in probe {
            let (loss, _) = sample_grads(&params, s, cfg, RunMode::Eval, 0.0, 0.0)?;
            d_sum += loss.detect_sum;
            c_sum += loss.correct_sum;
            d_n += s.n_detect_tokens();
            c_n += s.n_correct_tokens();
        }
        let d_mean = if d_n > 0 { d_sum / d_n as f64 } else { 0.0 };
        let c_mean = if c_n > 0 { c_sum / c_n as f64 } else { 0.0 };
        let ratio = if c_mean > 0.0 { d_mean / c_mean } else { f64::NAN };
        log.push(LogRecord {
            step: 0,
            epoch: 0,
            lr: 0.0,
            detect_loss: d_mean,
            correct_loss: c_mean,
            combined_loss: f64::NAN,
            eval: None,
            note: Some(format!(
                "init loss scale: mean detect {d_mean:.4}, mean correct {c_mean:.4}, ratio {ratio:.4}"
            )),
        });
    }

    let batches_per_epoch = samples.len().div_ceil(cfg.batch_size);
    let steps_per_epoch = batches_per_epoch.div_ceil(cfg.grad_accum_steps);
    let schedule = LrSchedule {
        base_lr: cfg.learning_rate,
        warmup_steps: cfg.warmup_steps,
        total_steps: cfg.max_epochs * steps_per_epoch,
        power: cfg.decay_power,
    };
    let mut optimizer = AdamW::new(&params);

    let mut best_params = params.clone();
    let mut best_eval: Option<EvalComponents> = None;
    let mut best_key = f64::NEG_INFINITY;
    let mut evals_since_best = 0usize;
    let mut step = 0usize;
    let mut diverged = false;
    let mut stop = false;

    let evaluate = |params: &ModelParams<f32>,
                        step: usize,
                        epoch: usize,
                        log: &mut Vec<LogRecord>,
                        best_params: &mut ModelParams<f32>,
                        best_eval: &mut Option<EvalComponents>,
                        best_key: &mut f64,
                        evals_since_best: &mut usize|
     -> Result<bool> {
        if dev.is_empty() {
            return Ok(false);
        }
        let model = Model {
            params: params.clone(),
            vocab: vocab.clone(),
            label_set,
            mode: cfg.mode,
        };
        let components = eval_keys(&model, dev, &opts)?;
        let key = components.key(cfg.eval_key);
        let improved = key > *best_key;
        if improved {
            *best_key = key;
            *best_params = params.clone();
            *best_eval = Some(components.clone());
            *evals_since_best = 0;
        } else {
            *evals_since_best += 1;
        }
        log.push(LogRecord {
            step,
            epoch,
            lr: schedule.at(step),
            detect_loss: f64::NAN,
            correct_loss: f64::NAN,
            combined_loss: f64::NAN,
            eval: Some(components),
            note: improved.then(|| "new best".to_string()),
        });
        Ok(*evals_since_best > cfg.early_stop_patience)
    };

    'epochs: for epoch in 0..cfg.max_epochs {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        CounterRng::new(derive_seed(cfg.rng_seed, 0x0e90 + epoch as u64)).shuffle(&mut order);

        let mut accum: Option<ModelParams<f32>> = None;
        let mut accum_batches = 0usize;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let n_detect: usize = chunk.iter().map(|&i| samples[i].n_detect_tokens()).sum();
            let n_correct: usize = chunk.iter().map(|&i| samples[i].n_correct_tokens()).sum();
            let (scale_d, scale_c) = batch_scales(cfg, n_detect, n_correct);

            let mut batch_grads = params.zeros_like();
            let mut d_sum = 0.0;
            let mut c_sum = 0.0;
            for &i in chunk {
                let dropout_seed =
                    derive_seed(cfg.rng_seed, ((epoch * batches_per_epoch + batch_idx) * samples.len() + i) as u64);
                let result = sample_grads(
                    &params,
                    &samples[i],
                    cfg,
                    RunMode::Train { dropout_seed },
                    scale_d,
                    scale_c,
                );
                let (loss, grads) = match result {
                    Ok(v) => v,
                    Err(Error::NumericalOverflow(_)) => {
                        diverged = true;
                        break 'epochs;
                    }
                    Err(e) => return Err(e),
                };
                d_sum += loss.detect_sum;
                c_sum += loss.correct_sum;
                add_grads(&mut batch_grads, &grads);
            }

            let batch_loss = match cfg.mode {
                ModelMode::Joint => {
                    let c = if n_correct > 0 { c_sum / n_correct as f64 } else { 0.0 };
                    let d = if n_detect > 0 { d_sum / n_detect as f64 } else { 0.0 };
                    c + cfg.w_detect * d
                }
                _ => combined_loss(d_sum, n_detect.max(1), c_sum, n_correct.max(1), cfg)
                    .unwrap_or(f64::NAN),
            };
            if !batch_loss.is_finite() {
                diverged = true;
                break 'epochs;
            }

            match accum.as_mut() {
                Some(acc) => add_grads(acc, &batch_grads),
                None => accum = Some(batch_grads),
            }
            accum_batches += 1;
            let last_batch_of_epoch = (batch_idx + 1) * cfg.batch_size >= samples.len();
            if accum_batches < cfg.grad_accum_steps && !last_batch_of_epoch {
                continue;
            }

            let mut grads = accum.take().expect("accumulated gradients");
            if accum_batches > 1 {
                let inv = 1.0 / accum_batches as f32;
                grads.visit_mut(|_, mut t| {
                    for x in t.as_slice_mut() {
                        *x *= inv;
                    }
                });
            }
            accum_batches = 0;
            step += 1;
            let lr = schedule.at(step);
            optimizer.step(&mut params, &grads, lr, cfg.weight_decay);

            let d_mean = if n_detect > 0 { d_sum / n_detect as f64 } else { 0.0 };
            let c_mean = if n_correct > 0 { c_sum / n_correct as f64 } else { 0.0 };
            log.push(LogRecord {
                step,
                epoch,
                lr,
                detect_loss: d_mean,
                correct_loss: c_mean,
                combined_loss: batch_loss,
                eval: None,
                note: None,
            });

            if step % cfg.eval_interval == 0 {
                stop = evaluate(
                    &params,
                    step,
                    epoch,
                    &mut log,
                    &mut best_params,
                    &mut best_eval,
                    &mut best_key,
                    &mut evals_since_best,
                )?;
                if stop {
                    break 'epochs;
                }
            }
        }
    }

    if !stop && !diverged && step % cfg.eval_interval != 0 {
        evaluate(
            &params,
            step,
            cfg.max_epochs.saturating_sub(1),
            &mut log,
            &mut best_params,
            &mut best_eval,
            &mut best_key,
            &mut evals_since_best,
        )?;
    }
    if best_eval.is_none() {
        best_params = params;
    }

    Ok(TrainOutcome {
        model: Model { params: best_params, vocab: vocab.clone(), label_set, mode: cfg.mode },
        log,
        diverged,
        best_eval,
        steps: step,
    })
}

fn add_grads(acc: &mut ModelParams<f32>, other: &ModelParams<f32>) {
    let mut slices = Vec::new();
    other.visit(|_, t| slices.push(t.as_slice()));
    let mut i = 0;
    acc.visit_mut(|_, mut t| {
        let dst = t.as_slice_mut();
        let src = slices[i];
        for (a, b) in dst.iter_mut().zip(src) {
            *a += *b;
        }
        i += 1;
    });
}

/// One configuration of the loss-weight sweep. `alpha_ei = None` runs
/// plain cross-entropy (gamma 0, unit class weights) instead of focal.
#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub w_detect: f64,
    pub alpha_ei: Option<f64>,
    pub f_half: f64,
    pub precision: f64,
    pub recall: f64,
    pub eval: EvalComponents,
}

/// Train one model per (w_detect, alpha_EI) cell and score dev F0.5
/// end to end. A preliminary-experiment helper, not a tuner: it reports
/// the table and leaves the defaults alone.
pub fn weight_sweep(
    train_pairs: &[ParallelExample],
    dev: &[ParallelExample],
    base: &TrainConfig,
    model_cfg: &ModelConfig,
    vocab: &Vocab,
    label_set: LabelSet,
    w_grid: &[f64],
    alpha_grid: &[Option<f64>],
    decode: &DecodeConfig,
) -> Result<Vec<SweepCell>> {
    if w_grid.is_empty() || alpha_grid.is_empty() {
        return Err(Error::EmptyGridAxis("weight sweep"));
    }
    let opts = DatasetOptions::from_model(model_cfg, base.max_piece_len);
    let (samples, _) = build_sft1_dataset(train_pairs, label_set, &opts)?;
    let mut cells = Vec::new();
    for &w in w_grid {
        for &alpha in alpha_grid {
            let mut cfg = base.clone();
            cfg.w_detect = w;
            match alpha {
                Some(a) => cfg.alpha_error_insert = a,
                None => {
                    cfg.gamma = 0.0;
                    cfg.alpha_error_insert = 1.0;
                    cfg.alpha_keep = 1.0;
                }
            }
            let outcome = train(&samples, dev, &cfg, model_cfg, vocab, label_set, None)?;
            let mut scored = Vec::with_capacity(dev.len());
            let none = DetectionControl::none();
            for pair in dev {
                let (output, _) = correct(&outcome.model, &pair.source, &none, decode)?;
                let hyp = crate::eval::extract_edits(&pair.source, &output, vocab)?;
                let gold = crate::eval::extract_edits(&pair.source, &pair.target, vocab)?;
                scored.push((hyp, gold));
            }
            let report = crate::eval::score_corpus(&scored);
            let eval = outcome.best_eval.ok_or(Error::EmptyDevSet)?;
            cells.push(SweepCell {
                w_detect: w,
                alpha_ei: alpha,
                f_half: report.f_half,
                precision: report.precision,
                recall: report.recall,
                eval,
            });
        }
    }
    Ok(cells)
}
