//! Deterministic inputs shared by the benchmarks.

use srb::model::{init_params, ModelConfig, ModelParams};
use srb::text::{TextSummaryPair, TokenId, RESERVED};

/// Token ids cycling through the non-reserved part of the vocabulary.
pub fn ids(len: usize, vocab: usize, offset: usize) -> Vec<TokenId> {
    (0..len).map(|i| RESERVED + (i * 7 + offset) % (vocab - RESERVED)).collect()
}

pub fn pair(cfg: &ModelConfig, source_len: usize, summary_len: usize) -> TextSummaryPair {
    TextSummaryPair {
        source_ids: ids(source_len, cfg.vocab_size, 0),
        summary_ids: ids(summary_len, cfg.vocab_size, 3),
        score: None,
    }
}

/// A model small enough to train on a laptop.
pub fn small() -> (ModelConfig, ModelParams) {
    let cfg = ModelConfig {
        vocab_size: 200,
        embed_dim: 32,
        hidden_dim: 48,
        gate_hidden_dim: 64,
        attn_dim: 48,
        ..Default::default()
    };
    let params = init_params(&cfg, 1).expect("valid config");
    (cfg, params)
}

/// Character strings over a small alphabet for ROUGE timing.
pub fn text(len: usize, seed: usize) -> Vec<char> {
    const ALPHABET: [char; 6] = ['天', '气', '好', '今', '日', '晴'];
    (0..len).map(|i| ALPHABET[(i * 5 + seed * 3 + i / 4) % ALPHABET.len()]).collect()
}
