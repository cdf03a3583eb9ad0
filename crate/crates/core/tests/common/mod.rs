//! Shared fixtures for the integration suites: a deterministic pattern
//! language whose corrections are locally inferable, plus independent
//! oracles.

use gec_core::alignment::align;
use gec_core::corpus::{
    synthesize_corruptions, CorruptionRules, ParallelExample, TokenId, TokenSeq, Vocab,
};
use gec_core::model::ModelConfig;
use gec_core::rng::{derive_seed, CounterRng};
use gec_core::training::TrainConfig;

/// 120 content words arranged in 60 fixed partner pairs: after an even
/// word its odd partner always follows. A corrupted sentence breaks the
/// pattern in exactly one place, so both the error position and the
/// repair are recoverable from local context.
pub fn toy_vocab() -> Vocab {
    let words: Vec<String> = (0..120).map(|i| format!("w{i:03}")).collect();
    Vocab::new(&words).unwrap()
}

/// One clean sentence: `n_pairs` partner pairs drawn by the seeded
/// stream.
pub fn toy_clean_sentence(vocab: &Vocab, rng: &mut CounterRng, n_pairs: usize) -> TokenSeq {
    let mut interior: Vec<TokenId> = Vec::with_capacity(n_pairs * 2);
    for _ in 0..n_pairs {
        let pair = rng.next_below(60) as usize;
        interior.push(vocab.content_id(pair * 2));
        interior.push(vocab.content_id(pair * 2 + 1));
    }
    TokenSeq::from_interior(interior).unwrap()
}

/// Exactly-one-corruption pairs: per-sentence derived streams draw a
/// clean sentence, then re-corrupt with fresh sub-seeds until the
/// alignment shows a single edit. Fully deterministic in `seed`.
pub fn toy_pairs(
    vocab: &Vocab,
    n: usize,
    seed: u64,
    min_pairs: usize,
    max_pairs: usize,
) -> Vec<ParallelExample> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let sentence_seed = derive_seed(seed, i as u64);
        let mut rng = CounterRng::new(sentence_seed);
        let n_pairs =
            min_pairs + rng.next_below((max_pairs - min_pairs + 1) as u64) as usize;
        let clean = toy_clean_sentence(vocab, &mut rng, n_pairs);
        for attempt in 0.. {
            let rules = CorruptionRules {
                p_insert: 0.06,
                p_replace: 0.06,
                p_delete: 0.06,
                max_corruptions_per_sentence: 3,
                rng_seed: derive_seed(sentence_seed, 1_000 + attempt),
            };
            let (pair, _) = synthesize_corruptions(&clean, &rules, vocab).unwrap();
            if align(&pair.source, &pair.target).edit_count() == 1 {
                out.push(pair);
                break;
            }
        }
    }
    out
}

/// Toy-scale model: ~60k parameters, far under the 1M budget.
pub fn toy_model_config(vocab: &Vocab) -> ModelConfig {
    ModelConfig {
        d_model: 48,
        n_layers: 2,
        n_heads: 4,
        d_ff: 128,
        vocab_size: vocab.len(),
        label_count: 3,
        max_positions: 72,
        max_block_positions: 12,
        dropout: 0.0,
    }
}

pub fn toy_train_config(seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.learning_rate = 1.5e-3;
    cfg.warmup_steps = 100;
    cfg.batch_size = 16;
    cfg.max_epochs = 3;
    cfg.eval_interval = 150;
    cfg.early_stop_patience = 8;
    cfg.weight_decay = 1e-4;
    cfg.rng_seed = seed;
    cfg
}

/// Independent minimal-edit oracle: recursive definition with
/// memoization, no DP table sharing with the production aligner.
pub fn oracle_edit_distance(a: &[TokenId], b: &[TokenId]) -> usize {
    fn go(
        a: &[TokenId],
        b: &[TokenId],
        ai: usize,
        bi: usize,
        memo: &mut std::collections::HashMap<(usize, usize), usize>,
    ) -> usize {
        if ai == a.len() {
            return b.len() - bi;
        }
        if bi == b.len() {
            return a.len() - ai;
        }
        if let Some(&d) = memo.get(&(ai, bi)) {
            return d;
        }
        let d = if a[ai] == b[bi] {
            go(a, b, ai + 1, bi + 1, memo)
        } else {
            let replace = go(a, b, ai + 1, bi + 1, memo);
            let delete = go(a, b, ai + 1, bi, memo);
            let insert = go(a, b, ai, bi + 1, memo);
            1 + replace.min(delete).min(insert)
        };
        memo.insert((ai, bi), d);
        d
    }
    go(a, b, 0, 0, &mut std::collections::HashMap::new())
}
