//! Shared test oracles and fixtures. Nothing here calls into the code paths
//! it is used to check beyond the public forward functions.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srb::autodiff::Tensor;
use srb::model::{loss_value, CellKind, ModelConfig, ModelParams};
use srb::text::{TextSummaryPair, TokenId, RESERVED};

pub const FD_STEP: f64 = 1e-5;
pub const FD_ABS_FALLBACK: f64 = 1e-7;

/// Error between an analytic and a numeric derivative: zero when they agree
/// to `FD_ABS_FALLBACK` absolutely, otherwise the relative difference.
pub fn fd_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff <= FD_ABS_FALLBACK {
        0.0
    } else {
        diff / analytic.abs().max(numeric.abs())
    }
}

/// Central difference of `f` in every coordinate of `x`.
pub fn numeric_gradient(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + FD_STEP;
            let up = f(&probe);
            probe[i] = orig - FD_STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

pub struct ParamCheck {
    pub name: String,
    pub max_error: f64,
    /// Largest raw |analytic - numeric| and largest |analytic| over the tensor.
    pub max_abs_diff: f64,
    pub max_abs_grad: f64,
}

/// Finite-difference check of the full training loss against `grads` for
/// every entry of every named parameter.
pub fn check_model_gradients(
    params: &ModelParams,
    grads: &ModelParams,
    cfg: &ModelConfig,
    pair: &TextSummaryPair,
) -> Vec<ParamCheck> {
    let mut out = Vec::new();
    let mut probe = params.clone();
    for p in params.iter() {
        let analytic = grads.get(&p.name).expect("gradient for every parameter");
        let (mut max_error, mut max_abs_diff, mut max_abs_grad): (f64, f64, f64) = (0.0, 0.0, 0.0);
        for i in 0..p.value.len() {
            let orig = p.value.data()[i];
            let mut eval = |v: f64| {
                probe.get_mut(&p.name).unwrap().data_mut()[i] = v;
                loss_value(&probe, cfg, pair).unwrap().loss
            };
            let numeric = (eval(orig + FD_STEP) - eval(orig - FD_STEP)) / (2.0 * FD_STEP);
            eval(orig);
            let a = analytic.data()[i];
            max_error = max_error.max(fd_error(a, numeric));
            max_abs_diff = max_abs_diff.max((a - numeric).abs());
            max_abs_grad = max_abs_grad.max(a.abs());
        }
        out.push(ParamCheck {
            name: p.name.clone(),
            max_error,
            max_abs_diff,
            max_abs_grad,
        });
    }
    out
}

pub fn gradcheck_config(cell_kind: CellKind, use_gate: bool, use_attention: bool, use_srb: bool) -> ModelConfig {
    ModelConfig {
        vocab_size: 20,
        embed_dim: 8,
        hidden_dim: 12,
        gate_hidden_dim: 16,
        attn_dim: 12,
        lambda: 0.1,
        cell_kind,
        use_gate,
        use_attention,
        use_srb,
    }
}

/// Uniform values in `±scale`, used to move parameters away from the
/// near-zero initialization so gradients are not trivially small.
pub fn randomize(params: &mut ModelParams, seed: u64, scale: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in params.iter_mut() {
        for x in p.value.data_mut() {
            *x = rng.gen_range(-scale..scale);
        }
    }
}

pub fn random_ids(rng: &mut impl Rng, len: usize, vocab: usize) -> Vec<TokenId> {
    (0..len).map(|_| rng.gen_range(RESERVED..vocab)).collect()
}

pub fn random_tensor(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Copy-task corpus: random source strings over a small alphabet, summary
/// is the first `summary_len` characters. Returned as raw text lines.
pub fn copy_task_lines(n: usize, alphabet: &[char], src_len: std::ops::RangeInclusive<usize>, summary_len: usize, seed: u64) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.gen_range(src_len.clone());
            let text: String = (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect();
            let summary: String = text.chars().take(summary_len).collect();
            (text, summary)
        })
        .collect()
}
