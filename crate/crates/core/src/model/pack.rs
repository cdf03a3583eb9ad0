//! Packing `[source | masked text | pieces]` into one sequence with
//! two-channel position ids and the attention-mask matrix that keeps
//! detection conditioned on the source alone while correction sees
//! everything before it.

use std::ops::Range;

use ndarray::Array2;

use crate::corpus::{TokenId, TokenSeq, START_OF_PIECE};
use crate::error::{Error, Result};
use crate::template::MaskedText;

/// Row ranges of the packed sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentSpans {
    pub source: Range<usize>,
    pub masked: Range<usize>,
    /// One range per packed piece (its `<|startofpiece|>` plus tokens),
    /// in slot order.
    pub pieces: Vec<Range<usize>>,
}

/// The concatenated model input.
#[derive(Debug, Clone)]
pub struct PackedInput {
    pub ids: Vec<TokenId>,
    /// Channel 1: source tokens count 1..n, masked tokens continue at
    /// n+1, every token of piece i repeats the position id of mask i.
    pub positions: Vec<usize>,
    /// Channel 2: zero outside pieces; 1..len inside a piece, counted
    /// from its start-of-piece token.
    pub blocks: Vec<usize>,
    /// `mask[[i, j]]` means row i may attend to column j.
    pub mask: Array2<bool>,
    pub spans: SegmentSpans,
}

impl PackedInput {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn n_source(&self) -> usize {
        self.spans.source.len()
    }

    pub fn n_piece_rows(&self) -> usize {
        self.spans.pieces.iter().map(Range::len).sum()
    }
}

/// Pack for joint detection + correction. `pieces` holds the raw piece
/// tokens per slot, already in slot order and without sentinels; each is
/// packed as `<|startofpiece|>` followed by its tokens. During decoding
/// the last entry may be the partial hypothesis; at training time there
/// is one entry per mask slot.
pub fn pack_input(
    source: &TokenSeq,
    masked: &MaskedText,
    pieces: &[Vec<TokenId>],
    max_positions: usize,
    max_block_positions: usize,
) -> Result<PackedInput> {
    let n = source.len();
    let m = masked.ids.len();
    if pieces.len() > masked.slot_count() {
        return Err(Error::ShapeMismatch(format!(
            "{} pieces for {} mask slots",
            pieces.len(),
            masked.slot_count()
        )));
    }
    let total = n + m + pieces.iter().map(|p| p.len() + 1).sum::<usize>();
    if n + m > max_positions || total > max_positions {
        return Err(Error::SequenceTooLong { got: total, max: max_positions });
    }

    let mut ids = Vec::with_capacity(total);
    let mut positions = Vec::with_capacity(total);
    let mut blocks = Vec::with_capacity(total);

    ids.extend_from_slice(&source.ids);
    positions.extend(1..=n);
    blocks.extend(std::iter::repeat(0).take(n));

    ids.extend_from_slice(&masked.ids);
    positions.extend(n + 1..=n + m);
    blocks.extend(std::iter::repeat(0).take(m));

    let mask_positions = masked.mask_positions();
    let mut piece_spans = Vec::with_capacity(pieces.len());
    for (slot, piece) in pieces.iter().enumerate() {
        let packed_len = piece.len() + 1;
        if packed_len > max_block_positions {
            return Err(Error::SequenceTooLong {
                got: packed_len,
                max: max_block_positions,
            });
        }
        let slot_position = n + 1 + mask_positions[slot];
        let start = ids.len();
        ids.push(START_OF_PIECE);
        ids.extend_from_slice(piece);
        positions.extend(std::iter::repeat(slot_position).take(packed_len));
        blocks.extend(1..=packed_len);
        piece_spans.push(start..ids.len());
    }

    let spans = SegmentSpans { source: 0..n, masked: n..n + m, pieces: piece_spans };
    let mask = build_attention_mask(&spans);
    Ok(PackedInput { ids, positions, blocks, mask, spans })
}

/// Pack the source alone (detection time). Detection logits are
/// identical to the full packing by mask construction.
pub fn pack_source_only(source: &TokenSeq, max_positions: usize) -> Result<PackedInput> {
    let n = source.len();
    if n > max_positions {
        return Err(Error::SequenceTooLong { got: n, max: max_positions });
    }
    let spans = SegmentSpans { source: 0..n, masked: n..n, pieces: Vec::new() };
    let mask = build_attention_mask(&spans);
    Ok(PackedInput {
        ids: source.ids.clone(),
        positions: (1..=n).collect(),
        blocks: vec![0; n],
        mask,
        spans,
    })
}

/// The four attention rules:
/// source rows see only source columns (bidirectional); masked rows see
/// source plus masked (bidirectional); rows of piece i see source,
/// masked, every token of earlier pieces, and their own prefix causally;
/// nothing sees a later piece.
pub fn build_attention_mask(spans: &SegmentSpans) -> Array2<bool> {
    let total = spans
        .pieces
        .last()
        .map_or(spans.masked.end, |last| last.end);
    let mut mask = Array2::from_elem((total, total), false);
    for row in spans.source.clone() {
        for col in spans.source.clone() {
            mask[[row, col]] = true;
        }
    }
    for row in spans.masked.clone() {
        for col in 0..spans.masked.end {
            mask[[row, col]] = true;
        }
    }
    for (k, piece) in spans.pieces.iter().enumerate() {
        for row in piece.clone() {
            for col in 0..spans.masked.end {
                mask[[row, col]] = true;
            }
            for earlier in &spans.pieces[..k] {
                for col in earlier.clone() {
                    mask[[row, col]] = true;
                }
            }
            for col in piece.start..=row {
                mask[[row, col]] = true;
            }
        }
    }
    mask
}
