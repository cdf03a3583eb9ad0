//! Detection-correction grammatical error correction at desk scale.
//!
//! The pipeline has three phases. A compact transformer first predicts a
//! per-token detection label (KEEP / ERROR / INSERT) for the source
//! sentence. The labels are turned into *masked text* by a fault-tolerant
//! template: every maximal ERROR run collapses to one `[MASK]`, every
//! INSERT point adds one. The same model then fills each mask
//! autoregressively with a short *text piece*, conditioning on the source,
//! the masked text, and every piece already generated. Splicing the pieces
//! back into the masked text yields the corrected sentence, so decoding
//! cost scales with the number of edits rather than sentence length.
//!
//! Modules follow the pipeline order:
//!
//! * [`corpus`] — vocabulary, tokenization, parallel-corpus IO, and
//!   rule-based synthetic corruption.
//! * [`alignment`] — minimal edit scripts between source and target and
//!   detection labels derived from them.
//! * [`template`] — masked text, gold text pieces, reassembly, and the
//!   detection-merging used to build second-stage training data.
//! * [`model`] — the two-channel-position transformer with an explicit
//!   attention-mask matrix and two output heads.
//! * [`training`] — focal + cross-entropy losses, dataset construction for
//!   both fine-tuning stages, and the training loop.
//! * [`inference`] — detection control, per-slot beam search, the full
//!   correction pipeline, and threshold grid search.
//! * [`eval`] — edit-level precision/recall/F0.5 and detection metrics.

pub mod alignment;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod inference;
pub mod model;
pub mod rng;
pub mod template;
pub mod training;

pub use error::{Error, Result};
