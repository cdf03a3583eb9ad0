//! Vocabulary, tokenization, parallel-corpus IO, and rule-based corruption
//! synthesis.
//!
//! The tokenizer is whitespace-based with an UNK fallback: sequences stay
//! deterministic and the vocabulary stays small and closed, which is what
//! the rest of the pipeline needs. Every [`TokenSeq`] is wrapped in
//! BOS/EOS sentinels; reserved tokens never appear inside a raw sentence.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, CounterRng};

pub type TokenId = u32;

/// Reserved ids, fixed for every vocabulary.
pub const PAD: TokenId = 0;
pub const UNK: TokenId = 1;
pub const BOS: TokenId = 2;
pub const EOS: TokenId = 3;
pub const MASK: TokenId = 4;
pub const START_OF_PIECE: TokenId = 5;
pub const END_OF_PIECE: TokenId = 6;

/// Number of reserved ids at the start of every vocab.
pub const RESERVED: usize = 7;

/// Canonical strings for the reserved ids, in id order.
pub const RESERVED_TOKENS: [&str; RESERVED] = [
    "<pad>",
    "<unk>",
    "<s>",
    "</s>",
    "[MASK]",
    "<|startofpiece|>",
    "<|endofpiece|>",
];

/// Closed vocabulary. Id 0 is PAD and ids `0..7` are reserved; everything
/// after is a content token. Token strings and ids are a bijection.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocab {
    /// Build a vocab from content tokens (reserved tokens are prepended).
    /// Duplicate or reserved-looking content tokens are rejected.
    pub fn new<S: AsRef<str>>(content: &[S]) -> Result<Vocab> {
        let mut tokens: Vec<String> = RESERVED_TOKENS.iter().map(|s| s.to_string()).collect();
        tokens.extend(content.iter().map(|s| s.as_ref().to_string()));
        Self::from_full_list(tokens)
    }

    fn from_full_list(tokens: Vec<String>) -> Result<Vocab> {
        if tokens.len() < RESERVED {
            return Err(Error::Vocab(format!(
                "need at least {RESERVED} tokens, got {}",
                tokens.len()
            )));
        }
        for (i, want) in RESERVED_TOKENS.iter().enumerate() {
            if tokens[i] != *want {
                return Err(Error::Vocab(format!(
                    "reserved token {i} must be {want:?}, got {:?}",
                    tokens[i]
                )));
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::Vocab(format!("token {i} is empty or has whitespace")));
            }
            if index.insert(tok.clone(), i as TokenId).is_some() {
                return Err(Error::Vocab(format!("duplicate token {tok:?}")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // a vocab always holds the reserved tokens
    }

    pub fn content_len(&self) -> usize {
        self.tokens.len() - RESERVED
    }

    pub fn id_of(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Result<&str> {
        self.tokens
            .get(id as usize)
            .map(String::as_str)
            .ok_or(Error::TokenIdOutOfRange(id, self.tokens.len()))
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Id of the n-th content token.
    pub fn content_id(&self, n: usize) -> TokenId {
        (RESERVED + n) as TokenId
    }

    pub fn is_reserved(id: TokenId) -> bool {
        (id as usize) < RESERVED
    }

    /// Load from a text file: one token per line, 0-based line number is
    /// the id, the first seven lines are the reserved tokens in order.
    pub fn load(path: &Path) -> Result<Vocab> {
        let text = fs::read_to_string(path)?;
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        Self::from_full_list(tokens)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for tok in &self.tokens {
            out.push_str(tok);
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }
}

/// Sentinel-wrapped token-id sequence: BOS first, EOS last, only content
/// ids (or UNK) in between.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSeq {
    pub ids: Vec<TokenId>,
}

impl TokenSeq {
    /// Wrap interior ids with BOS/EOS, validating the interior.
    pub fn from_interior(interior: Vec<TokenId>) -> Result<TokenSeq> {
        let mut ids = Vec::with_capacity(interior.len() + 2);
        ids.push(BOS);
        ids.extend(interior);
        ids.push(EOS);
        let seq = TokenSeq { ids };
        seq.validate()?;
        Ok(seq)
    }

    /// Validate the sentinel invariants on an already-wrapped sequence.
    pub fn from_wrapped(ids: Vec<TokenId>) -> Result<TokenSeq> {
        let seq = TokenSeq { ids };
        seq.validate()?;
        Ok(seq)
    }

    fn validate(&self) -> Result<()> {
        if self.ids.len() < 2 || self.ids[0] != BOS || *self.ids.last().unwrap() != EOS {
            return Err(Error::ScriptMismatch(
                "sequence must be BOS-wrapped with a trailing EOS".into(),
            ));
        }
        for &id in self.interior() {
            if id != UNK && Vocab::is_reserved(id) {
                return Err(Error::ScriptMismatch(format!(
                    "reserved id {id} inside a raw sequence"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        false // always holds BOS and EOS
    }

    /// Tokens between the sentinels.
    pub fn interior(&self) -> &[TokenId] {
        &self.ids[1..self.ids.len() - 1]
    }

    pub fn content_len(&self) -> usize {
        self.ids.len() - 2
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TokenSeq({:?})", self.ids)
    }
}

/// One source/target sentence pair over a shared vocab.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelExample {
    pub source: TokenSeq,
    pub target: TokenSeq,
}

/// Per-position corruption probabilities for synthetic data.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CorruptionRules {
    pub p_insert: f64,
    pub p_replace: f64,
    pub p_delete: f64,
    pub max_corruptions_per_sentence: usize,
    pub rng_seed: u64,
}

impl CorruptionRules {
    pub fn validate(&self) -> Result<()> {
        for p in [self.p_insert, self.p_replace, self.p_delete] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("probability {p} outside [0,1]")));
            }
        }
        let sum = self.p_insert + self.p_replace + self.p_delete;
        if sum > 1.0 {
            return Err(Error::CorruptionProbSum(sum));
        }
        if self.max_corruptions_per_sentence == 0 {
            return Err(Error::InvalidConfig(
                "max_corruptions_per_sentence must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Whitespace tokenization with UNK fallback, wrapped in BOS/EOS. Words
/// that collide with reserved token strings also map to UNK so raw
/// sequences can never smuggle sentinels.
pub fn tokenize(text: &str, vocab: &Vocab) -> Result<TokenSeq> {
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.is_empty() {
        return Err(Error::EmptyText);
    }
    let interior = words
        .iter()
        .map(|w| match vocab.id_of(w) {
            Some(id) if !Vocab::is_reserved(id) => id,
            _ => UNK,
        })
        .collect();
    TokenSeq::from_interior(interior)
}

/// Space-join the interior tokens; inverse of [`tokenize`] for in-vocab,
/// single-spaced text.
pub fn detokenize(seq: &TokenSeq, vocab: &Vocab) -> Result<String> {
    let mut words = Vec::with_capacity(seq.content_len());
    for &id in seq.interior() {
        words.push(vocab.token(id)?);
    }
    Ok(words.join(" "))
}

/// Read a TSV parallel corpus: one `source<TAB>target` pair per non-empty
/// line. Errors carry 1-based line numbers.
pub fn load_parallel(path: &Path, vocab: &Vocab) -> Result<Vec<ParallelExample>> {
    let text = fs::read_to_string(path)?;
    parse_parallel(&text, vocab)
}

pub fn parse_parallel(text: &str, vocab: &Vocab) -> Result<Vec<ParallelExample>> {
    let mut examples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::MalformedLine {
                line: i + 1,
                msg: format!("expected 2 tab-separated fields, got {}", fields.len()),
            });
        }
        let source = tokenize(fields[0], vocab).map_err(|e| Error::MalformedLine {
            line: i + 1,
            msg: e.to_string(),
        })?;
        let target = tokenize(fields[1], vocab).map_err(|e| Error::MalformedLine {
            line: i + 1,
            msg: e.to_string(),
        })?;
        examples.push(ParallelExample { source, target });
    }
    Ok(examples)
}

/// Per-corruption operation counts reported by the synthesizer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct CorruptionCounts {
    pub replaced: usize,
    pub deleted: usize,
    pub inserted: usize,
}

impl CorruptionCounts {
    pub fn total(&self) -> usize {
        self.replaced + self.deleted + self.inserted
    }
}

/// Corrupt a clean sentence into a (noisy source, clean target) pair.
///
/// Content positions are visited right to left; each draws one uniform
/// number `u` and fires replace for `u < p_replace`, delete for
/// `u < p_replace + p_delete`, insert-after for
/// `u < p_replace + p_delete + p_insert`, capped at
/// `max_corruptions_per_sentence` total. Right-to-left application keeps
/// every sampled position valid after earlier edits. Replacement tokens
/// are drawn uniformly from the non-reserved vocab excluding the original
/// token; inserted tokens uniformly from the non-reserved vocab.
/// Sentinels are never touched. The whole procedure is a pure function of
/// `(clean, rules, rules.rng_seed)`.
pub fn synthesize_corruptions(
    clean: &TokenSeq,
    rules: &CorruptionRules,
    vocab: &Vocab,
) -> Result<(ParallelExample, CorruptionCounts)> {
    rules.validate()?;
    if clean.content_len() == 0 {
        return Err(Error::EmptyText);
    }
    if vocab.content_len() < 2 {
        return Err(Error::Vocab("need at least 2 content tokens to corrupt".into()));
    }

    let mut rng = CounterRng::new(rules.rng_seed);
    let mut source = clean.ids.clone();
    let mut counts = CorruptionCounts::default();
    let content = vocab.content_len() as u64;

    // positions 1..=content_len index the tokens between the sentinels
    for pos in (1..=clean.content_len()).rev() {
        if counts.total() >= rules.max_corruptions_per_sentence {
            break;
        }
        let u = rng.next_f64();
        if u < rules.p_replace {
            let original = source[pos];
            // draw from content ids excluding the original
            let mut pick = rng.next_below(content - 1) as TokenId + RESERVED as TokenId;
            if pick >= original {
                pick += 1;
            }
            source[pos] = pick;
            counts.replaced += 1;
        } else if u < rules.p_replace + rules.p_delete {
            source.remove(pos);
            counts.deleted += 1;
        } else if u < rules.p_replace + rules.p_delete + rules.p_insert {
            let pick = rng.next_below(content) as TokenId + RESERVED as TokenId;
            source.insert(pos + 1, pick);
            counts.inserted += 1;
        }
    }

    let example = ParallelExample {
        source: TokenSeq::from_wrapped(source)?,
        target: clean.clone(),
    };
    Ok((example, counts))
}

/// Synthesize one pair per clean sentence with a per-sentence stream
/// derived from `(base_seed, sentence index)`, so output is independent
/// of iteration order or parallel chunking.
pub fn synthesize_corpus(
    clean: &[TokenSeq],
    rules: &CorruptionRules,
    base_seed: u64,
    vocab: &Vocab,
) -> Result<(Vec<ParallelExample>, CorruptionCounts)> {
    let mut pairs = Vec::with_capacity(clean.len());
    let mut totals = CorruptionCounts::default();
    for (i, sentence) in clean.iter().enumerate() {
        let mut per = rules.clone();
        per.rng_seed = derive_seed(base_seed, i as u64);
        let (pair, counts) = synthesize_corruptions(sentence, &per, vocab)?;
        totals.replaced += counts.replaced;
        totals.deleted += counts.deleted;
        totals.inserted += counts.inserted;
        pairs.push(pair);
    }
    Ok((pairs, totals))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_vocab() -> Vocab {
        Vocab::new(&[
            "They", "are", "covered", "with", "rust", "so", "bad", ".", "a", "b", "c", "d",
        ])
        .unwrap()
    }

    #[test]
    fn tokenize_wraps_and_maps() {
        let vocab = sample_vocab();
        let seq = tokenize("They are covered with rust so bad .", &vocab).unwrap();
        assert_eq!(seq.ids[0], BOS);
        assert_eq!(*seq.ids.last().unwrap(), EOS);
        assert_eq!(seq.len(), 10);
        let strings: Vec<&str> = seq.interior().iter().map(|&id| vocab.token(id).unwrap()).collect();
        assert_eq!(strings, ["They", "are", "covered", "with", "rust", "so", "bad", "."]);
    }

    #[test]
    fn tokenize_empty_is_error() {
        let vocab = sample_vocab();
        assert!(matches!(tokenize("", &vocab), Err(Error::EmptyText)));
        assert!(matches!(tokenize("   ", &vocab), Err(Error::EmptyText)));
    }

    #[test]
    fn unknown_word_maps_to_unk() {
        let vocab = sample_vocab();
        let seq = tokenize("zzz-unknown", &vocab).unwrap();
        assert_eq!(seq.ids, vec![BOS, UNK, EOS]);
    }

    #[test]
    fn reserved_string_in_text_maps_to_unk() {
        let vocab = sample_vocab();
        let seq = tokenize("a [MASK] b", &vocab).unwrap();
        assert_eq!(seq.ids[2], UNK);
    }

    #[test]
    fn detokenize_strips_sentinels() {
        let vocab = sample_vocab();
        let a = vocab.id_of("a").unwrap();
        let b = vocab.id_of("b").unwrap();
        let seq = TokenSeq::from_interior(vec![a, b]).unwrap();
        assert_eq!(detokenize(&seq, &vocab).unwrap(), "a b");
    }

    #[test]
    fn detokenize_empty_sentence() {
        let vocab = sample_vocab();
        let seq = TokenSeq::from_interior(vec![]).unwrap();
        assert_eq!(detokenize(&seq, &vocab).unwrap(), "");
    }

    #[test]
    fn detokenize_out_of_range_errors() {
        let vocab = sample_vocab();
        let seq = TokenSeq { ids: vec![BOS, 999, EOS] };
        assert!(matches!(
            detokenize(&seq, &vocab),
            Err(Error::TokenIdOutOfRange(999, _))
        ));
    }

    #[test]
    fn round_trip_random_sentences() {
        let vocab = sample_vocab();
        let mut rng = CounterRng::new(123);
        for _ in 0..100 {
            let len = 1 + rng.next_below(10) as usize;
            let words: Vec<&str> = (0..len)
                .map(|_| {
                    let n = rng.next_below(vocab.content_len() as u64) as usize;
                    vocab.token(vocab.content_id(n)).unwrap()
                })
                .collect();
            let text = words.join(" ");
            let seq = tokenize(&text, &vocab).unwrap();
            assert_eq!(detokenize(&seq, &vocab).unwrap(), text);
        }
    }

    #[test]
    fn parse_parallel_preserves_order() {
        let vocab = sample_vocab();
        let text = "a b\tc d\nso bad\tso bad\n";
        let examples = parse_parallel(text, &vocab).unwrap();
        assert_eq!(examples.len(), 2);
        assert_eq!(detokenize(&examples[0].source, &vocab).unwrap(), "a b");
        assert_eq!(detokenize(&examples[1].target, &vocab).unwrap(), "so bad");
    }

    #[test]
    fn parse_parallel_reports_line_numbers() {
        let vocab = sample_vocab();
        let text = "a\tb\nonly-source\n";
        match parse_parallel(text, &vocab) {
            Err(Error::MalformedLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed-line error, got {other:?}"),
        }
    }

    #[test]
    fn parse_parallel_empty_is_empty() {
        let vocab = sample_vocab();
        assert!(parse_parallel("", &vocab).unwrap().is_empty());
    }

    #[test]
    fn zero_probability_rules_are_identity() {
        let vocab = sample_vocab();
        let clean = tokenize("a b c d", &vocab).unwrap();
        let rules = CorruptionRules {
            p_insert: 0.0,
            p_replace: 0.0,
            p_delete: 0.0,
            max_corruptions_per_sentence: 3,
            rng_seed: 1,
        };
        let (pair, counts) = synthesize_corruptions(&clean, &rules, &vocab).unwrap();
        assert_eq!(pair.source, pair.target);
        assert_eq!(counts.total(), 0);
    }

    #[test]
    fn synthesis_is_deterministic() {
        let vocab = sample_vocab();
        let clean = tokenize("a b c d", &vocab).unwrap();
        let rules = CorruptionRules {
            p_insert: 0.2,
            p_replace: 0.3,
            p_delete: 0.2,
            max_corruptions_per_sentence: 3,
            rng_seed: 77,
        };
        let (a, _) = synthesize_corruptions(&clean, &rules, &vocab).unwrap();
        let (b, _) = synthesize_corruptions(&clean, &rules, &vocab).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn probability_sum_over_one_rejected() {
        let vocab = sample_vocab();
        let clean = tokenize("a b", &vocab).unwrap();
        let rules = CorruptionRules {
            p_insert: 0.5,
            p_replace: 0.4,
            p_delete: 0.3,
            max_corruptions_per_sentence: 1,
            rng_seed: 0,
        };
        assert!(matches!(
            synthesize_corruptions(&clean, &rules, &vocab),
            Err(Error::CorruptionProbSum(_))
        ));
    }

    #[test]
    fn sentinels_survive_heavy_corruption() {
        let vocab = sample_vocab();
        let clean = tokenize("a b c d a b", &vocab).unwrap();
        for seed in 0..50 {
            let rules = CorruptionRules {
                p_insert: 0.3,
                p_replace: 0.4,
                p_delete: 0.3,
                max_corruptions_per_sentence: 6,
                rng_seed: seed,
            };
            let (pair, _) = synthesize_corruptions(&clean, &rules, &vocab).unwrap();
            assert_eq!(pair.source.ids[0], BOS);
            assert_eq!(*pair.source.ids.last().unwrap(), EOS);
            for &id in pair.source.interior() {
                assert!(!Vocab::is_reserved(id) || id == UNK);
            }
        }
    }

    #[test]
    fn replacement_never_picks_the_original() {
        let vocab = sample_vocab();
        let clean = tokenize("a", &vocab).unwrap();
        let a = vocab.id_of("a").unwrap();
        for seed in 0..200 {
            let rules = CorruptionRules {
                p_insert: 0.0,
                p_replace: 1.0,
                p_delete: 0.0,
                max_corruptions_per_sentence: 1,
                rng_seed: seed,
            };
            let (pair, counts) = synthesize_corruptions(&clean, &rules, &vocab).unwrap();
            assert_eq!(counts.replaced, 1);
            assert_ne!(pair.source.ids[1], a);
        }
    }

    #[test]
    fn vocab_file_round_trip() {
        let vocab = sample_vocab();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        vocab.save(&path).unwrap();
        let loaded = Vocab::load(&path).unwrap();
        assert_eq!(loaded.tokens(), vocab.tokens());
    }

    #[test]
    fn vocab_rejects_bad_reserved_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        fs::write(&path, "<unk>\n<pad>\n<s>\n</s>\n[MASK]\n<|startofpiece|>\n<|endofpiece|>\n").unwrap();
        assert!(matches!(Vocab::load(&path), Err(Error::Vocab(_))));
    }

    #[test]
    fn vocab_rejects_duplicates() {
        assert!(matches!(Vocab::new(&["a", "a"]), Err(Error::Vocab(_))));
    }
}
