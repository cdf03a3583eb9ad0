//! Compact GLM-style transformer: two-channel position embeddings, an
//! explicit attention-mask matrix, a detection head over source
//! positions, and a token head (tied to the embeddings) over piece
//! positions.
//!
//! Everything is generic over the float type: production runs `f32`,
//! while the gradient-check harness instantiates the same code at `f64`
//! so finite differences are meaningful.

mod net;
mod pack;

pub use net::{backward, forward, log_softmax_rows, softmax_rows, ForwardPass, RunMode};
pub use pack::{build_attention_mask, pack_input, pack_source_only, PackedInput, SegmentSpans};

use std::fmt;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::alignment::LabelSet;
use crate::corpus::Vocab;
use crate::error::{Error, Result};
use crate::rng::CounterRng;

/// Float type the network code is generic over.
pub trait Scalar: ndarray::NdFloat + std::iter::Sum {
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub label_count: usize,
    pub max_positions: usize,
    pub max_block_positions: usize,
    #[serde(default)]
    pub dropout: f64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(2..=4).contains(&self.label_count) {
            return Err(Error::InvalidConfig(format!(
                "label_count {} must be 2, 3 or 4",
                self.label_count
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!("dropout {} outside [0,1)", self.dropout)));
        }
        if self.n_layers == 0 || self.d_ff == 0 || self.vocab_size == 0 {
            return Err(Error::InvalidConfig("zero-sized dimension".into()));
        }
        if self.max_positions < 4 || self.max_block_positions < 2 {
            return Err(Error::InvalidConfig("position tables too small".into()));
        }
        Ok(())
    }
}

/// Which objective a checkpoint was trained under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelMode {
    Joint,
    DetectOnly,
    CorrectOnly,
}

impl Default for ModelMode {
    fn default() -> Self {
        ModelMode::Joint
    }
}

impl fmt::Display for ModelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelMode::Joint => "joint",
            ModelMode::DetectOnly => "detect_only",
            ModelMode::CorrectOnly => "correct_only",
        };
        f.write_str(s)
    }
}

impl FromStr for ModelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<ModelMode> {
        match s {
            "joint" => Ok(ModelMode::Joint),
            "detect" | "detect_only" => Ok(ModelMode::DetectOnly),
            "correct" | "correct_only" => Ok(ModelMode::CorrectOnly),
            other => Err(Error::InvalidConfig(format!("unknown mode {other:?}"))),
        }
    }
}

/// Per-layer weights: pre-norm attention block then pre-norm GELU FFN.
#[derive(Debug, Clone)]
pub struct LayerParams<F> {
    pub ln1_g: Array1<F>,
    pub ln1_b: Array1<F>,
    pub wq: Array2<F>,
    pub wk: Array2<F>,
    pub wv: Array2<F>,
    pub wo: Array2<F>,
    pub bq: Array1<F>,
    pub bk: Array1<F>,
    pub bv: Array1<F>,
    pub bo: Array1<F>,
    pub ln2_g: Array1<F>,
    pub ln2_b: Array1<F>,
    pub w1: Array2<F>,
    pub b1: Array1<F>,
    pub w2: Array2<F>,
    pub b2: Array1<F>,
}

/// All model weights. The token head is tied to `tok_emb`.
#[derive(Debug, Clone)]
pub struct ModelParams<F> {
    pub config: ModelConfig,
    pub tok_emb: Array2<F>,
    pub pos_emb: Array2<F>,
    pub block_emb: Array2<F>,
    pub layers: Vec<LayerParams<F>>,
    pub lnf_g: Array1<F>,
    pub lnf_b: Array1<F>,
    pub det_w1: Array2<F>,
    pub det_b1: Array1<F>,
    pub det_w2: Array2<F>,
    pub det_b2: Array1<F>,
}

/// Borrowed view of one named tensor.
pub enum TensorRef<'a, F> {
    V(&'a Array1<F>),
    M(&'a Array2<F>),
}

pub enum TensorMut<'a, F> {
    V(&'a mut Array1<F>),
    M(&'a mut Array2<F>),
}

impl<'a, F: Scalar> TensorRef<'a, F> {
    pub fn shape(&self) -> Vec<usize> {
        match self {
            TensorRef::V(a) => vec![a.len()],
            TensorRef::M(a) => a.shape().to_vec(),
        }
    }

    pub fn as_slice(&self) -> &'a [F] {
        match self {
            TensorRef::V(a) => a.as_slice().expect("contiguous"),
            TensorRef::M(a) => a.as_slice().expect("contiguous"),
        }
    }
}

impl<F: Scalar> TensorMut<'_, F> {
    pub fn as_slice_mut(&mut self) -> &mut [F] {
        match self {
            TensorMut::V(a) => a.as_slice_mut().expect("contiguous"),
            TensorMut::M(a) => a.as_slice_mut().expect("contiguous"),
        }
    }
}

macro_rules! visit_impl {
    ($self:expr, $f:ident, V: $wv:path, M: $wm:path, iter: $iter:ident, $($r:tt)*) => {{
        $f("tok_emb".to_string(), $wm($($r)* $self.tok_emb));
        $f("pos_emb".to_string(), $wm($($r)* $self.pos_emb));
        $f("block_emb".to_string(), $wm($($r)* $self.block_emb));
        for (i, layer) in $self.layers.$iter().enumerate() {
            $f(format!("layer{i}.ln1_g"), $wv($($r)* layer.ln1_g));
            $f(format!("layer{i}.ln1_b"), $wv($($r)* layer.ln1_b));
            $f(format!("layer{i}.wq"), $wm($($r)* layer.wq));
            $f(format!("layer{i}.wk"), $wm($($r)* layer.wk));
            $f(format!("layer{i}.wv"), $wm($($r)* layer.wv));
            $f(format!("layer{i}.wo"), $wm($($r)* layer.wo));
            $f(format!("layer{i}.bq"), $wv($($r)* layer.bq));
            $f(format!("layer{i}.bk"), $wv($($r)* layer.bk));
            $f(format!("layer{i}.bv"), $wv($($r)* layer.bv));
            $f(format!("layer{i}.bo"), $wv($($r)* layer.bo));
            $f(format!("layer{i}.ln2_g"), $wv($($r)* layer.ln2_g));
            $f(format!("layer{i}.ln2_b"), $wv($($r)* layer.ln2_b));
            $f(format!("layer{i}.w1"), $wm($($r)* layer.w1));
            $f(format!("layer{i}.b1"), $wv($($r)* layer.b1));
            $f(format!("layer{i}.w2"), $wm($($r)* layer.w2));
            $f(format!("layer{i}.b2"), $wv($($r)* layer.b2));
        }
        $f("lnf_g".to_string(), $wv($($r)* $self.lnf_g));
        $f("lnf_b".to_string(), $wv($($r)* $self.lnf_b));
        $f("det_w1".to_string(), $wm($($r)* $self.det_w1));
        $f("det_b1".to_string(), $wv($($r)* $self.det_b1));
        $f("det_w2".to_string(), $wm($($r)* $self.det_w2));
        $f("det_b2".to_string(), $wv($($r)* $self.det_b2));
    }};
}

impl<F: Scalar> ModelParams<F> {
    /// Fresh random weights: normal(0, 0.02) everywhere, residual output
    /// projections additionally scaled by 1/sqrt(2 * n_layers), layer
    /// norms at identity, biases at zero.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<ModelParams<F>> {
        config.validate()?;
        let mut rng = CounterRng::new(seed);
        let d = config.d_model;
        let mut normal = |rows: usize, cols: usize, std: f64| -> Array2<F> {
            Array2::from_shape_fn((rows, cols), |_| F::from_f64(rng.next_normal() * std))
        };
        let residual_std = 0.02 / (2.0 * config.n_layers as f64).sqrt();
        let mut layers = Vec::with_capacity(config.n_layers);
        for _ in 0..config.n_layers {
            layers.push(LayerParams {
                ln1_g: Array1::ones(d),
                ln1_b: Array1::zeros(d),
                wq: normal(d, d, 0.02),
                wk: normal(d, d, 0.02),
                wv: normal(d, d, 0.02),
                wo: normal(d, d, residual_std),
                bq: Array1::zeros(d),
                bk: Array1::zeros(d),
                bv: Array1::zeros(d),
                bo: Array1::zeros(d),
                ln2_g: Array1::ones(d),
                ln2_b: Array1::zeros(d),
                w1: normal(d, config.d_ff, 0.02),
                b1: Array1::zeros(config.d_ff),
                w2: normal(config.d_ff, d, residual_std),
                b2: Array1::zeros(d),
            });
        }
        Ok(ModelParams {
            tok_emb: normal(config.vocab_size, d, 0.02),
            pos_emb: normal(config.max_positions, d, 0.02),
            block_emb: normal(config.max_block_positions, d, 0.02),
            layers,
            lnf_g: Array1::ones(d),
            lnf_b: Array1::zeros(d),
            det_w1: normal(d, d, 0.02),
            det_b1: Array1::zeros(d),
            det_w2: normal(d, config.label_count, 0.02),
            det_b2: Array1::zeros(config.label_count),
            config: config.clone(),
        })
    }

    /// Same shapes, all zeros; the gradient accumulator.
    pub fn zeros_like(&self) -> ModelParams<F> {
        let mut out = self.clone();
        out.visit_mut(|_, mut t| {
            for x in t.as_slice_mut() {
                *x = F::zero();
            }
        });
        out
    }

    /// Walk every tensor in a fixed structural order.
    pub fn visit<'a>(&'a self, mut f: impl FnMut(String, TensorRef<'a, F>)) {
        visit_impl!(self, f, V: TensorRef::V, M: TensorRef::M, iter: iter, &);
    }

    pub fn visit_mut(&mut self, mut f: impl FnMut(String, TensorMut<'_, F>)) {
        visit_impl!(self, f, V: TensorMut::V, M: TensorMut::M, iter: iter_mut, &mut);
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(|_, t| n += t.as_slice().len());
        n
    }

    /// Convert precision (f32 checkpoints, f64 check harness).
    pub fn cast<G: Scalar>(&self) -> ModelParams<G> {
        let conv1 = |a: &Array1<F>| a.mapv(|x| G::from_f64(x.to_f64()));
        let conv2 = |a: &Array2<F>| a.mapv(|x| G::from_f64(x.to_f64()));
        ModelParams {
            config: self.config.clone(),
            tok_emb: conv2(&self.tok_emb),
            pos_emb: conv2(&self.pos_emb),
            block_emb: conv2(&self.block_emb),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    ln1_g: conv1(&l.ln1_g),
                    ln1_b: conv1(&l.ln1_b),
                    wq: conv2(&l.wq),
                    wk: conv2(&l.wk),
                    wv: conv2(&l.wv),
                    wo: conv2(&l.wo),
                    bq: conv1(&l.bq),
                    bk: conv1(&l.bk),
                    bv: conv1(&l.bv),
                    bo: conv1(&l.bo),
                    ln2_g: conv1(&l.ln2_g),
                    ln2_b: conv1(&l.ln2_b),
                    w1: conv2(&l.w1),
                    b1: conv1(&l.b1),
                    w2: conv2(&l.w2),
                    b2: conv1(&l.b2),
                })
                .collect(),
            lnf_g: conv1(&self.lnf_g),
            lnf_b: conv1(&self.lnf_b),
            det_w1: conv2(&self.det_w1),
            det_b1: conv1(&self.det_b1),
            det_w2: conv2(&self.det_w2),
            det_b2: conv1(&self.det_b2),
        }
    }
}

/// A trained model bundled with everything needed to run the pipeline.
#[derive(Debug, Clone)]
pub struct Model {
    pub params: ModelParams<f32>,
    pub vocab: Vocab,
    pub label_set: LabelSet,
    pub mode: ModelMode,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    config: ModelConfig,
    mode: ModelMode,
    label_set: LabelSet,
    vocab: Vec<String>,
    tensors: Vec<TensorEntry>,
}

const CHECKPOINT_FORMAT: &str = "gec-checkpoint-v1";

impl Model {
    /// Write a checkpoint: one JSON header line (tensor names, shapes and
    /// byte offsets into the data section), then raw little-endian f32
    /// data.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut tensors = Vec::new();
        let mut offset = 0u64;
        self.params.visit(|name, t| {
            let len = t.as_slice().len();
            tensors.push(TensorEntry { name, shape: t.shape(), offset, len });
            offset += (len * 4) as u64;
        });
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.to_string(),
            config: self.params.config.clone(),
            mode: self.mode,
            label_set: self.label_set,
            vocab: self.vocab.tokens().to_vec(),
            tensors,
        };
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(&mut file, &header)?;
        file.write_all(b"\n")?;
        let mut write_err = None;
        self.params.visit(|_, t| {
            if write_err.is_some() {
                return;
            }
            for &x in t.as_slice() {
                if let Err(e) = file.write_all(&x.to_le_bytes()) {
                    write_err = Some(e);
                    return;
                }
            }
        });
        if let Some(e) = write_err {
            return Err(e.into());
        }
        file.flush()?;
        Ok(())
    }

    /// Load and validate a checkpoint against its own config.
    pub fn load(path: &Path) -> Result<Model> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut header_bytes = Vec::new();
        let mut byte = [0u8; 1];
        loop {
            file.read_exact(&mut byte)
                .map_err(|_| Error::Checkpoint("missing header line".into()))?;
            if byte[0] == b'\n' {
                break;
            }
            header_bytes.push(byte[0]);
        }
        let header: CheckpointHeader = serde_json::from_slice(&header_bytes)?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", header.format)));
        }
        if header.config.label_count != header.label_set.label_count() {
            return Err(Error::Checkpoint(format!(
                "label_count {} does not match label set {:?}",
                header.config.label_count, header.label_set
            )));
        }
        let mut data = Vec::new();
        file.read_to_end(&mut data)?;

        let mut params: ModelParams<f32> = ModelParams::init(&header.config, 0)?;
        let mut entries = header.tensors.iter();
        let mut failure: Option<Error> = None;
        params.visit_mut(|name, mut t| {
            if failure.is_some() {
                return;
            }
            let Some(entry) = entries.next() else {
                failure = Some(Error::Checkpoint("too few tensors".into()));
                return;
            };
            let slice = t.as_slice_mut();
            if entry.name != name || entry.len != slice.len() {
                failure = Some(Error::Checkpoint(format!(
                    "tensor {name}: header says {} ({} values), model wants {} values",
                    entry.name,
                    entry.len,
                    slice.len()
                )));
                return;
            }
            let start = entry.offset as usize;
            let end = start + entry.len * 4;
            if end > data.len() {
                failure = Some(Error::Checkpoint(format!("tensor {name} data out of range")));
                return;
            }
            for (i, chunk) in data[start..end].chunks_exact(4).enumerate() {
                slice[i] = f32::from_le_bytes(chunk.try_into().unwrap());
            }
        });
        if let Some(err) = failure {
            return Err(err);
        }
        if entries.next().is_some() {
            return Err(Error::Checkpoint("extra tensors in header".into()));
        }
        let vocab = Vocab::new(
            &header.vocab[crate::corpus::RESERVED..]
                .iter()
                .map(String::as_str)
                .collect::<Vec<_>>(),
        )
        .map_err(|e| Error::Checkpoint(format!("bad vocab: {e}")))?;
        if vocab.len() != header.config.vocab_size {
            return Err(Error::Checkpoint(format!(
                "vocab has {} tokens, config says {}",
                vocab.len(),
                header.config.vocab_size
            )));
        }
        Ok(Model { params, vocab, label_set: header.label_set, mode: header.mode })
    }
}

/// Rows of the packed sequence holding piece tokens, flattened in slot
/// order; the row set the token head scores.
pub fn piece_rows(spans: &SegmentSpans) -> Vec<usize> {
    spans.pieces.iter().flat_map(Range::clone).collect()
}
