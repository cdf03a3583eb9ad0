//! The fault-tolerant template: detection labels to masked text, edit
//! scripts to gold text pieces, pieces back into a corrected sequence,
//! and the detection merging that builds second-stage training data.
//!
//! Every maximal ERROR run becomes one `[MASK]`; every INSERT-labeled
//! token keeps its token and gains a `[MASK]` right after it; DELETE
//! tokens (four-label scheme) are dropped with no mask. A false-positive
//! ERROR mask can be repaired by regenerating the original tokens, and a
//! false-positive INSERT mask by an empty piece, so imperfect detection
//! does not force a bad correction.

use std::ops::Range;

use crate::alignment::{DetectionLabels, EditScript, Label, LabelSet, Segment};
use crate::corpus::{TokenId, TokenSeq, Vocab, MASK};
use crate::error::{Error, Result};

/// Where a mask slot came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SlotOrigin {
    /// Replaces this source span (maximal ERROR run).
    ReplaceSpan(Range<usize>),
    /// Inserts after this source index (INSERT label).
    InsertAfter(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSlot {
    pub slot_index: usize,
    pub origin: SlotOrigin,
}

/// Source text with `[MASK]` tokens standing in for suspect regions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedText {
    pub ids: Vec<TokenId>,
    pub mask_slots: Vec<MaskSlot>,
}

impl MaskedText {
    pub fn slot_count(&self) -> usize {
        self.mask_slots.len()
    }

    /// Positions of the MASK tokens inside `ids`, in slot order.
    pub fn mask_positions(&self) -> Vec<usize> {
        self.ids
            .iter()
            .enumerate()
            .filter_map(|(i, &id)| (id == MASK).then_some(i))
            .collect()
    }

    pub fn render(&self, vocab: &Vocab) -> Result<String> {
        let mut words = Vec::with_capacity(self.ids.len());
        for &id in &self.ids {
            words.push(vocab.token(id)?);
        }
        Ok(words.join(" "))
    }
}

/// Token sequence that fills one mask slot; may be empty (deletion or
/// retracted insertion).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextPiece {
    pub ids: Vec<TokenId>,
    pub slot_index: usize,
}

impl TextPiece {
    pub fn render(&self, vocab: &Vocab) -> Result<String> {
        let mut words = Vec::with_capacity(self.ids.len());
        for &id in &self.ids {
            words.push(vocab.token(id)?);
        }
        Ok(words.join(" "))
    }
}

/// Turn per-token labels into masked text.
///
/// When one token both stays (INSERT) and is followed by an ERROR run,
/// the insertion mask comes first, then the error mask; slot numbering is
/// left to right over the emitted masks. All-KEEP input returns the
/// source unchanged with zero slots.
pub fn build_masked_text(source: &TokenSeq, labels: &DetectionLabels) -> Result<MaskedText> {
    if labels.len() != source.len() {
        return Err(Error::LabelLengthMismatch { got: labels.len(), want: source.len() });
    }
    let mut ids = Vec::with_capacity(source.len() + 2);
    let mut mask_slots = Vec::new();
    let mut i = 0;
    while i < source.len() {
        match labels.labels[i] {
            Label::Keep => {
                ids.push(source.ids[i]);
                i += 1;
            }
            Label::Insert => {
                ids.push(source.ids[i]);
                ids.push(MASK);
                mask_slots.push(MaskSlot {
                    slot_index: mask_slots.len(),
                    origin: SlotOrigin::InsertAfter(i),
                });
                i += 1;
            }
            Label::Error => {
                let start = i;
                while i < source.len() && labels.labels[i] == Label::Error {
                    i += 1;
                }
                ids.push(MASK);
                mask_slots.push(MaskSlot {
                    slot_index: mask_slots.len(),
                    origin: SlotOrigin::ReplaceSpan(start..i),
                });
            }
            Label::Delete => {
                // dropped outright; unrecoverable by construction
                i += 1;
            }
        }
    }
    Ok(MaskedText { ids, mask_slots })
}

/// Mask-slot origins implied by a labeling, in emission order. Matches
/// the slots `build_masked_text` produces for the same labels.
pub fn slot_origins(labels: &DetectionLabels) -> Vec<SlotOrigin> {
    let mut origins = Vec::new();
    let mut i = 0;
    while i < labels.len() {
        match labels.labels[i] {
            Label::Insert => {
                origins.push(SlotOrigin::InsertAfter(i));
                i += 1;
            }
            Label::Error => {
                let start = i;
                while i < labels.len() && labels.labels[i] == Label::Error {
                    i += 1;
                }
                origins.push(SlotOrigin::ReplaceSpan(start..i));
            }
            Label::Keep | Label::Delete => i += 1,
        }
    }
    origins
}

/// Gold piece for each mask slot of the gold labeling, in slot order.
/// Deletions under KE/KEI yield empty pieces; under KE an insertion's
/// piece regenerates the neighbouring kept token around the inserted
/// text.
pub fn extract_pieces(script: &EditScript, label_set: LabelSet) -> Result<Vec<TextPiece>> {
    let labels = crate::alignment::derive_labels(script, label_set)?;
    let mut pieces = Vec::new();
    for origin in slot_origins(&labels) {
        let ids = match origin {
            SlotOrigin::InsertAfter(i) => gold_insertion_at(script, i + 1).ok_or_else(|| {
                Error::ScriptMismatch(format!("no gold insertion behind token {i}"))
            })?,
            SlotOrigin::ReplaceSpan(span) => piece_for_span(script, &span, &labels)?,
        };
        pieces.push(TextPiece { ids, slot_index: pieces.len() });
    }
    Ok(pieces)
}

/// Splice pieces into the masked text. Pieces must arrive in slot order,
/// one per slot; empty pieces insert nothing.
pub fn reassemble(masked: &MaskedText, pieces: &[TextPiece]) -> Result<TokenSeq> {
    if pieces.len() != masked.slot_count() {
        return Err(Error::PieceCountMismatch { want: masked.slot_count(), got: pieces.len() });
    }
    for (i, piece) in pieces.iter().enumerate() {
        if piece.slot_index != i {
            return Err(Error::PieceCountMismatch { want: i, got: piece.slot_index });
        }
    }
    let mut out = Vec::with_capacity(masked.ids.len());
    let mut next_slot = 0;
    for &id in &masked.ids {
        if id == MASK {
            out.extend_from_slice(&pieces[next_slot].ids);
            next_slot += 1;
        } else {
            out.push(id);
        }
    }
    TokenSeq::from_wrapped(out)
}

/// Merge predicted labels into gold labels for second-stage data: a
/// predicted non-KEEP wins over gold KEEP (that is the false positive we
/// want the corrector to survive), but never overrides a differing gold
/// non-KEEP. Every gold edit survives.
pub fn merge_detections(
    gold: &DetectionLabels,
    predicted: &DetectionLabels,
) -> Result<DetectionLabels> {
    if gold.len() != predicted.len() {
        return Err(Error::LabelLengthMismatch { got: predicted.len(), want: gold.len() });
    }
    let labels = gold
        .labels
        .iter()
        .zip(&predicted.labels)
        .map(|(&g, &p)| {
            if p != Label::Keep && g == Label::Keep {
                p
            } else {
                g
            }
        })
        .collect();
    Ok(DetectionLabels { labels })
}

/// Pieces for a merged labeling such that reassembly still reaches the
/// gold target: slots covering gold edits emit the gold replacement,
/// false-positive replace slots restore the original source tokens, and
/// false-positive insert slots stay empty.
pub fn gold_pieces_for_merged(
    source: &TokenSeq,
    target: &TokenSeq,
    gold_script: &EditScript,
    merged: &DetectionLabels,
) -> Result<Vec<TextPiece>> {
    if gold_script.source_len != source.len() {
        return Err(Error::ScriptMismatch("script does not fit the source".into()));
    }
    let masked = build_masked_text(source, merged)?;
    let mut pieces = Vec::with_capacity(masked.slot_count());
    for slot in &masked.mask_slots {
        let ids = match &slot.origin {
            SlotOrigin::InsertAfter(i) => {
                // a gold insertion at point i+1, or a retracted false positive
                gold_insertion_at(gold_script, i + 1).unwrap_or_default()
            }
            SlotOrigin::ReplaceSpan(span) => piece_for_span(gold_script, span, merged)?,
        };
        pieces.push(TextPiece { ids, slot_index: pieces.len() });
    }
    // the merged labeling must still reach the target
    let reassembled = reassemble(&masked, &pieces)?;
    if &reassembled != target {
        return Err(Error::MissingGoldEdit(format!(
            "merged labels cannot reproduce the target (got {} tokens, want {})",
            reassembled.len(),
            target.len()
        )));
    }
    Ok(pieces)
}

fn gold_insertion_at(script: &EditScript, point: usize) -> Option<Vec<TokenId>> {
    script.unaligned().find_map(|seg| match seg {
        Segment::Unaligned { src, replacement, .. }
            if src.is_empty() && src.start == point && !replacement.is_empty() =>
        {
            Some(replacement.clone())
        }
        _ => None,
    })
}

/// Target-side text for one ERROR-run span: aligned positions keep their
/// token, edits fully inside the span contribute their replacement, and a
/// pure insertion rides along when its carrying token sits in the span
/// (the token in front of the insertion point, or the token behind it for
/// a sentence-initial insertion the BOS did not carry). An edit
/// straddling the span boundary means part of a gold edit was dropped.
fn piece_for_span(
    script: &EditScript,
    span: &Range<usize>,
    labels: &DetectionLabels,
) -> Result<Vec<TokenId>> {
    let mut ids = Vec::new();
    for seg in &script.segments {
        match seg {
            Segment::Aligned { src, tokens, .. } => {
                let lo = src.start.max(span.start);
                let hi = src.end.min(span.end);
                if lo < hi {
                    ids.extend_from_slice(&tokens[lo - src.start..hi - src.start]);
                }
            }
            Segment::Unaligned { src, replacement, .. } if src.is_empty() => {
                let point = src.start;
                if labels.labels[point - 1] == Label::Insert {
                    continue; // carried by its own InsertAfter slot
                }
                let behind_carrier = span.start < point && point <= span.end;
                let front_carrier =
                    point == span.start && point == 1 && labels.labels[0] == Label::Keep;
                if behind_carrier || front_carrier {
                    ids.extend_from_slice(replacement);
                }
            }
            Segment::Unaligned { src, replacement, .. } => {
                let inside = span.start <= src.start && src.end <= span.end;
                let outside = src.end <= span.start || span.end <= src.start;
                if inside {
                    ids.extend_from_slice(replacement);
                } else if !outside {
                    return Err(Error::MissingGoldEdit(format!(
                        "gold edit {src:?} straddles merged span {span:?}"
                    )));
                }
            }
        }
    }
    Ok(ids)
}

/// Six-row text dump of one training sample, for golden-file tests.
pub struct SampleDump<'a> {
    pub vocab: &'a Vocab,
    pub source: &'a TokenSeq,
    pub target: &'a TokenSeq,
    pub masked: &'a MaskedText,
    pub pieces: &'a [TextPiece],
    pub labels: &'a DetectionLabels,
}

impl SampleDump<'_> {
    pub fn render(&self) -> Result<String> {
        let join = |ids: &[TokenId]| -> Result<String> {
            let mut words = Vec::with_capacity(ids.len());
            for &id in ids {
                words.push(self.vocab.token(id)?);
            }
            Ok(words.join(" "))
        };
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for piece in self.pieces {
            let body = join(&piece.ids)?;
            let sep = if body.is_empty() { "" } else { " " };
            inputs.push(format!("<|startofpiece|>{sep}{body}"));
            targets.push(format!("{body}{sep}<|endofpiece|>"));
        }
        Ok(format!(
            "Source Text: {}\nTarget Text: {}\nMasked Text: {}\nText Pieces Input: {}\nText Pieces Target: {}\nDetection Labels: {}\n",
            join(&self.source.ids)?,
            join(&self.target.ids)?,
            self.masked.render(self.vocab)?,
            inputs.join(" "),
            targets.join(" "),
            self.labels,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::{align, derive_labels};
    use crate::corpus::{synthesize_corpus, tokenize, CorruptionRules};

    fn table_vocab() -> Vocab {
        Vocab::new(&[
            "The", "every", "male", "employees", "were", "standing", "in", "the", "back", "row",
            ".", "All", "They", "are", "covered", "with", "rust", "so", "bad", "badly", "a", "b",
            "c", "d", "x", "y", "z",
        ])
        .unwrap()
    }

    #[test]
    fn masked_text_for_error_run() {
        let v = table_vocab();
        let src = tokenize("The every male employees were standing in the back row .", &v).unwrap();
        let labels = DetectionLabels::parse("K E E K K K K K K K K K K").unwrap();
        let masked = build_masked_text(&src, &labels).unwrap();
        assert_eq!(
            masked.render(&v).unwrap(),
            "<s> [MASK] male employees were standing in the back row . </s>"
        );
        assert_eq!(masked.slot_count(), 1);
        assert_eq!(masked.mask_slots[0].origin, SlotOrigin::ReplaceSpan(1..3));
    }

    #[test]
    fn masked_text_with_insert_and_error() {
        let v = table_vocab();
        let src = tokenize("They are covered with rust so bad .", &v).unwrap();
        let labels = DetectionLabels::parse("K K K K K I K E K K").unwrap();
        let masked = build_masked_text(&src, &labels).unwrap();
        assert_eq!(
            masked.render(&v).unwrap(),
            "<s> They are covered with rust [MASK] so [MASK] . </s>"
        );
        assert_eq!(masked.mask_slots[0].origin, SlotOrigin::InsertAfter(5));
        assert_eq!(masked.mask_slots[1].origin, SlotOrigin::ReplaceSpan(7..8));
    }

    #[test]
    fn all_keep_short_circuits() {
        let v = table_vocab();
        let src = tokenize("a b c", &v).unwrap();
        let labels = DetectionLabels::all_keep(src.len());
        let masked = build_masked_text(&src, &labels).unwrap();
        assert_eq!(masked.ids, src.ids);
        assert_eq!(masked.slot_count(), 0);
    }

    #[test]
    fn insert_mask_precedes_error_mask() {
        let v = table_vocab();
        let src = tokenize("a b c", &v).unwrap();
        let labels = DetectionLabels::parse("K I E K K").unwrap();
        let masked = build_masked_text(&src, &labels).unwrap();
        assert_eq!(masked.render(&v).unwrap(), "<s> a [MASK] [MASK] c </s>");
        assert_eq!(masked.mask_slots[0].origin, SlotOrigin::InsertAfter(1));
        assert_eq!(masked.mask_slots[1].origin, SlotOrigin::ReplaceSpan(2..3));
    }

    #[test]
    fn label_length_mismatch_rejected() {
        let v = table_vocab();
        let src = tokenize("a b", &v).unwrap();
        let labels = DetectionLabels::all_keep(3);
        assert!(matches!(
            build_masked_text(&src, &labels),
            Err(Error::LabelLengthMismatch { .. })
        ));
    }

    #[test]
    fn gold_pieces_for_table_replacement() {
        let v = table_vocab();
        let src = tokenize("The every male employees were standing in the back row .", &v).unwrap();
        let tgt = tokenize("All the male employees were standing in the back row .", &v).unwrap();
        let pieces = extract_pieces(&align(&src, &tgt), LabelSet::Kei).unwrap();
        assert_eq!(pieces.len(), 1);
        assert_eq!(pieces[0].render(&v).unwrap(), "All the");
    }

    #[test]
    fn identity_has_no_pieces() {
        let v = table_vocab();
        let s = tokenize("a b", &v).unwrap();
        assert!(extract_pieces(&align(&s, &s), LabelSet::Kei).unwrap().is_empty());
    }

    #[test]
    fn deletion_yields_empty_piece_under_kei() {
        let v = table_vocab();
        let src = tokenize("a b c", &v).unwrap();
        let tgt = tokenize("a c", &v).unwrap();
        let pieces = extract_pieces(&align(&src, &tgt), LabelSet::Kei).unwrap();
        assert_eq!(pieces.len(), 1);
        assert!(pieces[0].ids.is_empty());
    }

    #[test]
    fn keid_deletion_has_no_slot_and_no_piece() {
        let v = table_vocab();
        let src = tokenize("a b c", &v).unwrap();
        let tgt = tokenize("a c", &v).unwrap();
        let script = align(&src, &tgt);
        let pieces = extract_pieces(&script, LabelSet::Keid).unwrap();
        assert!(pieces.is_empty());
        let labels = derive_labels(&script, LabelSet::Keid).unwrap();
        let masked = build_masked_text(&src, &labels).unwrap();
        assert_eq!(masked.slot_count(), 0);
        assert_eq!(reassemble(&masked, &[]).unwrap(), tgt);
    }

    #[test]
    fn ke_insertion_piece_regenerates_carrier() {
        let v = table_vocab();
        let src = tokenize("a c", &v).unwrap();
        let tgt = tokenize("a b c", &v).unwrap();
        let script = align(&src, &tgt);
        let labels = derive_labels(&script, LabelSet::Ke).unwrap();
        assert_eq!(labels.to_string(), "K E K K"); // "a" carries the edit
        let pieces = extract_pieces(&script, LabelSet::Ke).unwrap();
        assert_eq!(pieces.len(), 1);
        assert_eq!(pieces[0].render(&v).unwrap(), "a b");
        let masked = build_masked_text(&src, &labels).unwrap();
        assert_eq!(reassemble(&masked, &pieces).unwrap(), tgt);
    }

    #[test]
    fn reassemble_splices_in_order() {
        let v = table_vocab();
        let src = tokenize("a b c d", &v).unwrap();
        let labels = DetectionLabels::parse("K E K K I K").unwrap();
        let masked = build_masked_text(&src, &labels).unwrap();
        let pieces = vec![
            TextPiece { ids: vec![v.id_of("d").unwrap()], slot_index: 0 },
            TextPiece { ids: vec![v.id_of("a").unwrap(), v.id_of("b").unwrap()], slot_index: 1 },
        ];
        let out = reassemble(&masked, &pieces).unwrap();
        assert_eq!(crate::corpus::detokenize(&out, &v).unwrap(), "d b c d a b");
    }

    #[test]
    fn reassemble_zero_slots_is_identity() {
        let v = table_vocab();
        let src = tokenize("a b", &v).unwrap();
        let masked = build_masked_text(&src, &DetectionLabels::all_keep(src.len())).unwrap();
        assert_eq!(reassemble(&masked, &[]).unwrap(), src);
    }

    #[test]
    fn false_positive_restore_reproduces_source() {
        let v = table_vocab();
        let src = tokenize("a b c", &v).unwrap();
        let labels = DetectionLabels::parse("K K E K K").unwrap();
        let masked = build_masked_text(&src, &labels).unwrap();
        let pieces = vec![TextPiece { ids: vec![v.id_of("b").unwrap()], slot_index: 0 }];
        assert_eq!(reassemble(&masked, &pieces).unwrap(), src);
    }

    #[test]
    fn piece_count_mismatch_rejected() {
        let v = table_vocab();
        let src = tokenize("a b c", &v).unwrap();
        let labels = DetectionLabels::parse("K K E K K").unwrap();
        let masked = build_masked_text(&src, &labels).unwrap();
        assert!(matches!(
            reassemble(&masked, &[]),
            Err(Error::PieceCountMismatch { .. })
        ));
    }

    #[test]
    fn merge_keeps_gold_and_adds_predictions() {
        let gold = DetectionLabels::parse("K K K K K K K E K K").unwrap();
        let pred = DetectionLabels::parse("K K K K K I K K K K").unwrap();
        let merged = merge_detections(&gold, &pred).unwrap();
        assert_eq!(merged.to_string(), "K K K K K I K E K K");
    }

    #[test]
    fn merge_with_all_keep_prediction_is_gold() {
        let gold = DetectionLabels::parse("K E I K").unwrap();
        let pred = DetectionLabels::all_keep(4);
        assert_eq!(merge_detections(&gold, &pred).unwrap(), gold);
    }

    #[test]
    fn merge_conflict_gold_wins() {
        let gold = DetectionLabels::parse("K E").unwrap();
        let pred = DetectionLabels::parse("K I").unwrap();
        assert_eq!(merge_detections(&gold, &pred).unwrap().to_string(), "K E");
    }

    #[test]
    fn sft2_pieces_restore_false_positives() {
        let v = table_vocab();
        let src = tokenize("The every male employees were standing in the back row .", &v).unwrap();
        let tgt = tokenize("All the male employees were standing in the back row .", &v).unwrap();
        let script = align(&src, &tgt);
        let merged = DetectionLabels::parse("K E E K E E K K K K K K K").unwrap();
        let pieces = gold_pieces_for_merged(&src, &tgt, &script, &merged).unwrap();
        assert_eq!(pieces.len(), 2);
        assert_eq!(pieces[0].render(&v).unwrap(), "All the");
        assert_eq!(pieces[1].render(&v).unwrap(), "employees were");
    }

    #[test]
    fn sft2_pieces_empty_for_false_insert() {
        let v = table_vocab();
        let src = tokenize("They are covered with rust so bad .", &v).unwrap();
        let tgt = tokenize("They are covered with rust so badly .", &v).unwrap();
        let script = align(&src, &tgt);
        let merged = DetectionLabels::parse("K K K K K I K E K K").unwrap();
        let pieces = gold_pieces_for_merged(&src, &tgt, &script, &merged).unwrap();
        assert_eq!(pieces.len(), 2);
        assert!(pieces[0].ids.is_empty());
        assert_eq!(pieces[1].render(&v).unwrap(), "badly");
    }

    #[test]
    fn sft2_with_gold_labels_matches_extract_pieces() {
        let v = table_vocab();
        let src = tokenize("The every male employees were standing in the back row .", &v).unwrap();
        let tgt = tokenize("All the male employees were standing in the back row .", &v).unwrap();
        let script = align(&src, &tgt);
        let gold = derive_labels(&script, LabelSet::Kei).unwrap();
        let a = gold_pieces_for_merged(&src, &tgt, &script, &gold).unwrap();
        let b = extract_pieces(&script, LabelSet::Kei).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn merged_run_swallowing_adjacent_false_positive() {
        let v = table_vocab();
        // gold edit on "b"; prediction extends the run onto correct "c"
        let src = tokenize("a b c d", &v).unwrap();
        let tgt = tokenize("a x c d", &v).unwrap();
        let script = align(&src, &tgt);
        let gold = derive_labels(&script, LabelSet::Kei).unwrap();
        let pred = DetectionLabels::parse("K K E E K K").unwrap();
        let merged = merge_detections(&gold, &pred).unwrap();
        assert_eq!(merged.to_string(), "K K E E K K");
        let pieces = gold_pieces_for_merged(&src, &tgt, &script, &merged).unwrap();
        assert_eq!(pieces.len(), 1);
        assert_eq!(pieces[0].render(&v).unwrap(), "x c");
        let masked = build_masked_text(&src, &merged).unwrap();
        assert_eq!(reassemble(&masked, &pieces).unwrap(), tgt);
    }

    #[test]
    fn missing_gold_edit_detected() {
        let v = table_vocab();
        let src = tokenize("a b c", &v).unwrap();
        let tgt = tokenize("a x c", &v).unwrap();
        let script = align(&src, &tgt);
        let merged = DetectionLabels::all_keep(src.len());
        assert!(matches!(
            gold_pieces_for_merged(&src, &tgt, &script, &merged),
            Err(Error::MissingGoldEdit(_))
        ));
    }

    #[test]
    fn round_trip_over_synthesized_pairs() {
        let v = table_vocab();
        let clean: Vec<TokenSeq> = (0..200)
            .map(|i| {
                let mut rng = crate::rng::CounterRng::new(900 + i);
                let len = 1 + rng.next_below(10) as usize;
                let interior: Vec<TokenId> = (0..len)
                    .map(|_| v.content_id(rng.next_below(v.content_len() as u64) as usize))
                    .collect();
                TokenSeq::from_interior(interior).unwrap()
            })
            .collect();
        let rules = CorruptionRules {
            p_insert: 0.1,
            p_replace: 0.15,
            p_delete: 0.1,
            max_corruptions_per_sentence: 3,
            rng_seed: 0,
        };
        let (pairs, _) = synthesize_corpus(&clean, &rules, 31, &v).unwrap();
        for pair in &pairs {
            let script = align(&pair.source, &pair.target);
            for set in [LabelSet::Ke, LabelSet::Kei, LabelSet::Keid] {
                if set == LabelSet::Ke && pair.source.content_len() == 0 {
                    // KE has no token that can carry an insertion into an
                    // empty sentence; derive_labels reports it
                    assert!(derive_labels(&script, set).is_err());
                    continue;
                }
                let labels = derive_labels(&script, set).unwrap();
                let masked = build_masked_text(&pair.source, &labels).unwrap();
                let pieces = extract_pieces(&script, set).unwrap();
                assert_eq!(
                    reassemble(&masked, &pieces).unwrap(),
                    pair.target,
                    "set {set:?} failed on {:?}",
                    pair.source
                );
            }
        }
    }

    #[test]
    fn sample_dump_layout() {
        let v = table_vocab();
        let src = tokenize("They are covered with rust so bad .", &v).unwrap();
        let tgt = tokenize("They are covered with rust so badly .", &v).unwrap();
        let script = align(&src, &tgt);
        let labels = derive_labels(&script, LabelSet::Kei).unwrap();
        let masked = build_masked_text(&src, &labels).unwrap();
        let pieces = extract_pieces(&script, LabelSet::Kei).unwrap();
        let dump = SampleDump {
            vocab: &v,
            source: &src,
            target: &tgt,
            masked: &masked,
            pieces: &pieces,
            labels: &labels,
        }
        .render()
        .unwrap();
        assert!(dump.contains("Text Pieces Input: <|startofpiece|> badly"));
        assert!(dump.contains("Text Pieces Target: badly <|endofpiece|>"));
        assert!(dump.contains("Detection Labels: K K K K K K K E K K"));
    }
}
