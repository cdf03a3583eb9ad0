//! Minimal edit alignment between source and target sequences and the
//! detection labels derived from it.
//!
//! `align` runs unit-cost Levenshtein dynamic programming over a suffix
//! table, then reconstructs the path left to right, preferring
//! Aligned > Replace > Delete > Insert at equal cost. Maximal runs of
//! non-aligned moves collapse into single [`Segment::Unaligned`] spans, so
//! an insertion touching a replaced region is absorbed into that region
//! and no two unaligned segments are ever adjacent.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use crate::corpus::{TokenId, TokenSeq, Vocab};
use crate::error::{Error, Result};

/// Per-token detection label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Keep,
    Error,
    Insert,
    Delete,
}

impl Label {
    pub fn letter(self) -> char {
        match self {
            Label::Keep => 'K',
            Label::Error => 'E',
            Label::Insert => 'I',
            Label::Delete => 'D',
        }
    }

    /// Index into detection-head outputs; fixed across label sets.
    pub fn index(self) -> usize {
        match self {
            Label::Keep => 0,
            Label::Error => 1,
            Label::Insert => 2,
            Label::Delete => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::Keep),
            1 => Some(Label::Error),
            2 => Some(Label::Insert),
            3 => Some(Label::Delete),
            _ => None,
        }
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Label> {
        match s {
            "K" => Ok(Label::Keep),
            "E" => Ok(Label::Error),
            "I" => Ok(Label::Insert),
            "D" => Ok(Label::Delete),
            other => Err(Error::InvalidConfig(format!("unknown label {other:?}"))),
        }
    }
}

/// Which labels the detector distinguishes.
///
/// `Kei` is the default three-label scheme. `Ke` folds insertions into
/// ERROR by re-labeling the token in front of the insertion point (its
/// piece then regenerates that token plus the inserted text). `Keid`
/// splits pure deletions out of ERROR into DELETE, which removes the
/// token outright with no mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSet {
    Ke,
    Kei,
    Keid,
}

impl Default for LabelSet {
    fn default() -> Self {
        LabelSet::Kei
    }
}

impl LabelSet {
    pub fn members(self) -> &'static [Label] {
        match self {
            LabelSet::Ke => &[Label::Keep, Label::Error],
            LabelSet::Kei => &[Label::Keep, Label::Error, Label::Insert],
            LabelSet::Keid => &[Label::Keep, Label::Error, Label::Insert, Label::Delete],
        }
    }

    pub fn label_count(self) -> usize {
        self.members().len()
    }
}

impl FromStr for LabelSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<LabelSet> {
        match s.to_ascii_lowercase().as_str() {
            "ke" => Ok(LabelSet::Ke),
            "kei" => Ok(LabelSet::Kei),
            "keid" => Ok(LabelSet::Keid),
            other => Err(Error::InvalidConfig(format!("unknown label set {other:?}"))),
        }
    }
}

/// One label per source token, sentinels included.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionLabels {
    pub labels: Vec<Label>,
}

impl DetectionLabels {
    pub fn all_keep(len: usize) -> DetectionLabels {
        DetectionLabels { labels: vec![Label::Keep; len] }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_all_keep(&self) -> bool {
        self.labels.iter().all(|&l| l == Label::Keep)
    }

    /// Parse a space-separated letter string like `"K E E K"`.
    pub fn parse(s: &str) -> Result<DetectionLabels> {
        let labels = s
            .split_whitespace()
            .map(Label::from_str)
            .collect::<Result<Vec<_>>>()?;
        Ok(DetectionLabels { labels })
    }
}

impl fmt::Display for DetectionLabels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, l) in self.labels.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}", l.letter())?;
        }
        Ok(())
    }
}

/// One tile of an edit script. Spans are half-open index ranges into the
/// source and target. Both variants carry their token content (identical
/// on both sides for `Aligned`, target-side for `Unaligned`), so a script
/// is self-contained.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Aligned { src: Range<usize>, tgt: Range<usize>, tokens: Vec<TokenId> },
    Unaligned { src: Range<usize>, tgt: Range<usize>, replacement: Vec<TokenId> },
}

impl Segment {
    pub fn src_range(&self) -> Range<usize> {
        match self {
            Segment::Aligned { src, .. } | Segment::Unaligned { src, .. } => src.clone(),
        }
    }
}

/// Ordered segments tiling both sequences exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditScript {
    pub segments: Vec<Segment>,
    pub source_len: usize,
    pub target_len: usize,
}

impl EditScript {
    pub fn is_identity(&self) -> bool {
        self.segments
            .iter()
            .all(|s| matches!(s, Segment::Aligned { .. }))
    }

    pub fn unaligned(&self) -> impl Iterator<Item = &Segment> {
        self.segments
            .iter()
            .filter(|s| matches!(s, Segment::Unaligned { .. }))
    }

    /// Unit-cost edit total: each unaligned tile costs
    /// `max(source span, replacement)` tokens.
    pub fn edit_cost(&self) -> usize {
        self.unaligned()
            .map(|s| match s {
                Segment::Unaligned { src, replacement, .. } => src.len().max(replacement.len()),
                Segment::Aligned { .. } => 0,
            })
            .sum()
    }

    /// Number of unaligned tiles.
    pub fn edit_count(&self) -> usize {
        self.unaligned().count()
    }

    /// Token content at a source index, if that index is aligned.
    pub fn aligned_token_at(&self, index: usize) -> Option<TokenId> {
        self.segments.iter().find_map(|seg| match seg {
            Segment::Aligned { src, tokens, .. } if src.contains(&index) => {
                Some(tokens[index - src.start])
            }
            _ => None,
        })
    }

    /// One line per segment: `ALIGNED i..j` or `EDIT i..j -> 'tokens'`.
    pub fn dump(&self, vocab: &Vocab) -> Result<String> {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Aligned { src, .. } => {
                    out.push_str(&format!("ALIGNED {}..{}\n", src.start, src.end));
                }
                Segment::Unaligned { src, replacement, .. } => {
                    let mut words = Vec::with_capacity(replacement.len());
                    for &id in replacement {
                        words.push(vocab.token(id)?);
                    }
                    out.push_str(&format!(
                        "EDIT {}..{} -> '{}'\n",
                        src.start,
                        src.end,
                        words.join(" ")
                    ));
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Move {
    Match,
    Replace,
    Delete,
    Insert,
}

/// Minimal edit alignment with a deterministic left-to-right backtrace.
/// Applying the result to `source` reproduces `target` exactly.
pub fn align(source: &TokenSeq, target: &TokenSeq) -> EditScript {
    let s = &source.ids;
    let t = &target.ids;
    let n = s.len();
    let m = t.len();

    // dist[i][j] = edit distance between source[i..] and target[j..]
    let mut dist = vec![vec![0u32; m + 1]; n + 1];
    for i in 0..=n {
        dist[i][m] = (n - i) as u32;
    }
    for j in 0..=m {
        dist[n][j] = (m - j) as u32;
    }
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            dist[i][j] = if s[i] == t[j] {
                dist[i + 1][j + 1]
            } else {
                1 + dist[i + 1][j + 1].min(dist[i + 1][j]).min(dist[i][j + 1])
            };
        }
    }

    // walk forward, preferring Match > Replace > Delete > Insert
    let mut moves = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (0, 0);
    while i < n || j < m {
        let here = dist[i][j];
        let mv = if i < n && j < m && s[i] == t[j] && here == dist[i + 1][j + 1] {
            Move::Match
        } else if i < n && j < m && here == 1 + dist[i + 1][j + 1] {
            Move::Replace
        } else if i < n && here == 1 + dist[i + 1][j] {
            Move::Delete
        } else {
            Move::Insert
        };
        moves.push(mv);
        match mv {
            Move::Match | Move::Replace => {
                i += 1;
                j += 1;
            }
            Move::Delete => i += 1,
            Move::Insert => j += 1,
        }
    }

    // collapse moves into maximal aligned / unaligned tiles
    let mut segments = Vec::new();
    let (mut i, mut j) = (0, 0);
    let mut k = 0;
    while k < moves.len() {
        let aligned = moves[k] == Move::Match;
        let (si, sj) = (i, j);
        while k < moves.len() && (moves[k] == Move::Match) == aligned {
            match moves[k] {
                Move::Match | Move::Replace => {
                    i += 1;
                    j += 1;
                }
                Move::Delete => i += 1,
                Move::Insert => j += 1,
            }
            k += 1;
        }
        segments.push(if aligned {
            Segment::Aligned { src: si..i, tgt: sj..j, tokens: s[si..i].to_vec() }
        } else {
            Segment::Unaligned {
                src: si..i,
                tgt: sj..j,
                replacement: t[sj..j].to_vec(),
            }
        });
    }

    EditScript { segments, source_len: n, target_len: m }
}

/// Detection labels for the source side of an edit script.
pub fn derive_labels(script: &EditScript, label_set: LabelSet) -> Result<DetectionLabels> {
    let mut labels = vec![Label::Keep; script.source_len];
    for seg in script.unaligned() {
        let Segment::Unaligned { src, replacement, .. } = seg else { unreachable!() };
        if !src.is_empty() {
            let label = if replacement.is_empty() && label_set == LabelSet::Keid {
                Label::Delete
            } else {
                Label::Error
            };
            for l in &mut labels[src.clone()] {
                *l = label;
            }
        } else {
            // pure insertion at source position src.start
            let point = src.start;
            if point == 0 {
                return Err(Error::InsertionAtStart);
            }
            match label_set {
                LabelSet::Kei | LabelSet::Keid => labels[point - 1] = Label::Insert,
                LabelSet::Ke => {
                    // fold into ERROR on a neighbouring real token; the
                    // piece will regenerate that token around the insertion
                    if point - 1 > 0 {
                        labels[point - 1] = Label::Error;
                    } else if point < script.source_len - 1 {
                        labels[point] = Label::Error;
                    } else {
                        // source is bare sentinels; nothing can carry the edit
                        return Err(Error::InsertionAtStart);
                    }
                }
            }
        }
    }
    Ok(DetectionLabels { labels })
}

/// Replay a script against its source, reproducing the target.
pub fn apply_script(source: &TokenSeq, script: &EditScript) -> Result<TokenSeq> {
    if script.source_len != source.len() {
        return Err(Error::ScriptMismatch(format!(
            "script built for length {}, sequence has {}",
            script.source_len,
            source.len()
        )));
    }
    let mut out = Vec::with_capacity(script.target_len);
    let mut cursor = 0;
    for seg in &script.segments {
        let src = seg.src_range();
        if src.start != cursor || src.end > source.len() {
            return Err(Error::ScriptMismatch(format!(
                "segment {src:?} does not tile the source at {cursor}"
            )));
        }
        cursor = src.end;
        match seg {
            Segment::Aligned { .. } => out.extend_from_slice(&source.ids[src]),
            Segment::Unaligned { replacement, .. } => out.extend_from_slice(replacement),
        }
    }
    if cursor != source.len() {
        return Err(Error::ScriptMismatch(format!(
            "segments cover {cursor} of {} source tokens",
            source.len()
        )));
    }
    TokenSeq::from_wrapped(out)
}
