//! Encoder, attentive decoder and the relevance-regularized loss.

use super::cells::{attention_context, gate_score, gru_cell, lstm_cell, AttentionMemory};
use super::config::{CellKind, ModelConfig};
use super::params::{BoundParams, CellWeights, Gradients, ModelParams};
use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Result, SrbError};
use crate::text::{TextSummaryPair, TokenId, BOS, EOS};

/// Hidden state of a recurrent cell; `memory` is the LSTM cell state.
#[derive(Clone, Copy, Debug)]
pub struct CellState {
    pub h: Var,
    pub memory: Option<Var>,
}

impl CellState {
    fn zeros(g: &mut Graph, kind: CellKind, hidden: usize) -> Self {
        let h = g.constant(Tensor::zeros(1, hidden));
        let memory = match kind {
            CellKind::Lstm => Some(g.constant(Tensor::zeros(1, hidden))),
            CellKind::Gru => None,
        };
        CellState { h, memory }
    }
}

fn cell_step(g: &mut Graph, kind: CellKind, x: Var, state: CellState, w: &CellWeights) -> Result<CellState> {
    match kind {
        CellKind::Lstm => {
            let memory = state
                .memory
                .ok_or_else(|| SrbError::consistency("LSTM state without cell memory"))?;
            let (h, c) = lstm_cell(g, x, state.h, memory, w)?;
            Ok(CellState { h, memory: Some(c) })
        }
        CellKind::Gru => Ok(CellState {
            h: gru_cell(g, x, state.h, w)?,
            memory: None,
        }),
    }
}

#[derive(Clone, Debug)]
pub struct EncoderOutput {
    /// Combined bidirectional states `h_1..h_N`.
    pub states: Vec<Var>,
    /// Source-text semantic vector; the same node as the last state.
    pub text_vector: Var,
    /// Importance gate values, one per position, when the gate is enabled.
    pub gates: Vec<Var>,
    /// Present when attention is enabled.
    pub memory: Option<AttentionMemory>,
}

fn check_ids(ids: &[TokenId], cfg: &ModelConfig, what: &str) -> Result<()> {
    if let Some(&bad) = ids.iter().find(|&&id| id >= cfg.vocab_size) {
        return Err(SrbError::argument(format!(
            "{what} id {bad} out of range for vocabulary of {}",
            cfg.vocab_size
        )));
    }
    Ok(())
}

/// Runs the gated bidirectional encoder over `source_ids`.
pub fn encode(g: &mut Graph, p: &BoundParams, cfg: &ModelConfig, source_ids: &[TokenId]) -> Result<EncoderOutput> {
    if source_ids.is_empty() {
        return Err(SrbError::argument("cannot encode an empty source"));
    }
    check_ids(source_ids, cfg, "source")?;
    let hidden = cfg.hidden_dim;

    // Forward pass; the gate reads the forward state preceding each position.
    let mut inputs = Vec::with_capacity(source_ids.len());
    let mut gates = Vec::new();
    let mut fwd = CellState::zeros(g, cfg.cell_kind, hidden);
    let mut fwd_states = Vec::with_capacity(source_ids.len());
    for &id in source_ids {
        let e = g.gather_row(p.embedding, id)?;
        let x = if cfg.use_gate {
            let beta = gate_score(g, e, fwd.h, &p.gate)?;
            gates.push(beta);
            g.mul_scalar(e, beta)?
        } else {
            e
        };
        fwd = cell_step(g, cfg.cell_kind, x, fwd, &p.enc_fwd)?;
        fwd_states.push(fwd.h);
        inputs.push(x);
    }

    let mut bwd = CellState::zeros(g, cfg.cell_kind, hidden);
    let mut bwd_states = vec![bwd.h; source_ids.len()];
    for (i, &x) in inputs.iter().enumerate().rev() {
        bwd = cell_step(g, cfg.cell_kind, x, bwd, &p.enc_bwd)?;
        bwd_states[i] = bwd.h;
    }

    let mut states = Vec::with_capacity(source_ids.len());
    for (&f, &b) in fwd_states.iter().zip(&bwd_states) {
        let both = g.concat(&[f, b])?;
        let proj = g.matmul(both, p.combine_w)?;
        let proj = g.add(proj, p.combine_b)?;
        states.push(g.tanh(proj));
    }
    let memory = if cfg.use_attention {
        Some(AttentionMemory::new(g, &states, &p.attention)?)
    } else {
        None
    };
    Ok(EncoderOutput {
        text_vector: *states.last().expect("non-empty source"),
        states,
        gates,
        memory,
    })
}

/// Result of one decoder step.
#[derive(Clone, Copy, Debug)]
pub struct StepOutput {
    pub state: CellState,
    pub context: Var,
    /// Attention weights over source positions, when attention is enabled.
    pub attention: Option<Var>,
    pub logits: Var,
}

/// Decoder state before the first step: `s_0 = h_N`, zero cell memory.
pub fn initial_decoder_state(g: &mut Graph, cfg: &ModelConfig, enc: &EncoderOutput) -> CellState {
    let memory = match cfg.cell_kind {
        CellKind::Lstm => Some(g.constant(Tensor::zeros(1, cfg.hidden_dim))),
        CellKind::Gru => None,
    };
    CellState {
        h: enc.text_vector,
        memory,
    }
}

/// One decoder step: attend with the previous state, consume `prev_token`,
/// and score the next token from `[s_t; c_t]`.
pub fn decoder_step(
    g: &mut Graph,
    p: &BoundParams,
    cfg: &ModelConfig,
    enc: &EncoderOutput,
    state: CellState,
    prev_token: TokenId,
) -> Result<StepOutput> {
    let (context, attention) = match &enc.memory {
        Some(memory) => {
            let (c, a) = attention_context(g, state.h, memory, &p.attention)?;
            (c, Some(a))
        }
        None => (g.constant(Tensor::zeros(1, cfg.hidden_dim)), None),
    };
    let e = g.gather_row(p.embedding, prev_token)?;
    let x = g.concat(&[e, context])?;
    let state = cell_step(g, cfg.cell_kind, x, state, &p.decoder)?;
    let features = g.concat(&[state.h, context])?;
    let logits = g.matmul(features, p.out_w)?;
    let logits = g.add(logits, p.out_b)?;
    Ok(StepOutput {
        state,
        context,
        attention,
        logits,
    })
}

#[derive(Clone, Debug)]
pub struct DecoderOutput {
    /// Next-token distributions, one per target position (summary then EOS).
    pub distributions: Vec<Var>,
    pub log_probs: Vec<Var>,
    pub attention: Vec<Var>,
    pub final_state: Var,
    /// `s_M - h_N`.
    pub summary_vector: Var,
}

/// Teacher-forced decoder pass over `summary_ids` followed by EOS.
pub fn decode_teacher_forced(
    g: &mut Graph,
    p: &BoundParams,
    cfg: &ModelConfig,
    enc: &EncoderOutput,
    summary_ids: &[TokenId],
) -> Result<DecoderOutput> {
    if summary_ids.is_empty() {
        return Err(SrbError::argument("cannot decode an empty summary"));
    }
    check_ids(summary_ids, cfg, "summary")?;
    let mut state = initial_decoder_state(g, cfg, enc);
    let mut distributions = Vec::with_capacity(summary_ids.len() + 1);
    let mut log_probs = Vec::with_capacity(summary_ids.len() + 1);
    let mut attention = Vec::new();
    let inputs = std::iter::once(BOS).chain(summary_ids.iter().copied());
    for prev in inputs {
        let step = decoder_step(g, p, cfg, enc, state, prev)?;
        distributions.push(g.softmax_rows(step.logits)?);
        log_probs.push(g.log_softmax_rows(step.logits)?);
        attention.extend(step.attention);
        state = step.state;
    }
    let summary_vector = g.sub(state.h, enc.text_vector)?;
    Ok(DecoderOutput {
        distributions,
        log_probs,
        attention,
        final_state: state.h,
        summary_vector,
    })
}

/// Graph nodes of the training objective.
#[derive(Clone, Copy, Debug)]
pub struct LossNodes {
    pub loss: Var,
    pub nll: Var,
    pub cos: Var,
}

/// Loss components as plain numbers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValues {
    pub loss: f64,
    pub nll: f64,
    pub cos: f64,
}

/// Mean per-token negative log-likelihood minus `lambda·cos(V_s, V_t)`
/// (the relevance term only when `use_srb`).
pub fn srb_loss(g: &mut Graph, p: &BoundParams, cfg: &ModelConfig, pair: &TextSummaryPair) -> Result<LossNodes> {
    let enc = encode(g, p, cfg, &pair.source_ids)?;
    let dec = decode_teacher_forced(g, p, cfg, &enc, &pair.summary_ids)?;
    let targets = pair.summary_ids.iter().copied().chain(std::iter::once(EOS));
    let mut picked = Vec::with_capacity(dec.log_probs.len());
    for (&lp, target) in dec.log_probs.iter().zip(targets) {
        picked.push(g.pick(lp, target)?);
    }
    let all = g.concat(&picked)?;
    let total = g.sum(all);
    let nll = g.scale(total, -1.0 / picked.len() as f64);
    let cos = g.cosine(dec.summary_vector, enc.text_vector)?;
    let loss = if cfg.use_srb {
        let relevance = g.scale(cos, cfg.lambda);
        g.sub(nll, relevance)?
    } else {
        nll
    };
    Ok(LossNodes { loss, nll, cos })
}

fn values(g: &Graph, nodes: &LossNodes) -> LossValues {
    LossValues {
        loss: g.value(nodes.loss).item(),
        nll: g.value(nodes.nll).item(),
        cos: g.value(nodes.cos).item(),
    }
}

/// Forward pass only.
pub fn loss_value(params: &ModelParams, cfg: &ModelConfig, pair: &TextSummaryPair) -> Result<LossValues> {
    let mut g = Graph::new();
    let bound = BoundParams::bind(&mut g, params, cfg)?;
    let nodes = srb_loss(&mut g, &bound, cfg, pair)?;
    Ok(values(&g, &nodes))
}

/// Forward and backward pass for one pair on a fresh graph.
pub fn loss_and_gradients(
    params: &ModelParams,
    cfg: &ModelConfig,
    pair: &TextSummaryPair,
) -> Result<(LossValues, Gradients)> {
    let mut g = Graph::new();
    let bound = BoundParams::bind(&mut g, params, cfg)?;
    let nodes = srb_loss(&mut g, &bound, cfg, pair)?;
    g.backward(nodes.loss)?;
    Ok((values(&g, &nodes), bound.gradients(&g, params)))
}
