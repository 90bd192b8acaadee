//! Recurrent cells, the input importance gate and additive attention.
//!
//! Everything here builds graph nodes; weight matrices multiply row vectors
//! from the right (`x · W`), with gate blocks laid out side by side along
//! the columns.

use super::params::{AttentionWeights, CellWeights, GateWeights};
use crate::autodiff::{Graph, Var};
use crate::error::{Result, SrbError};

fn check_row(g: &Graph, op: &'static str, v: Var, width: usize) -> Result<()> {
    let shape = g.shape(v);
    if shape != (1, width) {
        return Err(SrbError::Dimension {
            op,
            left: shape,
            right: (1, width),
        });
    }
    Ok(())
}

/// LSTM step. Gate blocks are ordered input, forget, candidate, output.
/// Returns `(h, c)`.
pub fn lstm_cell(
    g: &mut Graph,
    x: Var,
    h_prev: Var,
    c_prev: Var,
    w: &CellWeights,
) -> Result<(Var, Var)> {
    let hidden = g.shape(w.w_hh).0;
    check_row(g, "lstm_cell", h_prev, hidden)?;
    check_row(g, "lstm_cell", c_prev, hidden)?;
    let xw = g.matmul(x, w.w_ih)?;
    let hw = g.matmul(h_prev, w.w_hh)?;
    let pre = g.add(xw, hw)?;
    let pre = g.add(pre, w.b)?;
    let block = |g: &mut Graph, k: usize| g.slice_cols(pre, k * hidden, hidden);
    let i = block(g, 0)?;
    let f = block(g, 1)?;
    let cand = block(g, 2)?;
    let o = block(g, 3)?;
    let i = g.sigmoid(i);
    let f = g.sigmoid(f);
    let cand = g.tanh(cand);
    let o = g.sigmoid(o);
    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c);
    let h = g.mul(o, tc)?;
    Ok((h, c))
}

/// GRU step. Gate blocks are ordered update, reset, candidate; the reset
/// gate is applied before the recurrent projection of the candidate.
pub fn gru_cell(g: &mut Graph, x: Var, h_prev: Var, w: &CellWeights) -> Result<Var> {
    let hidden = g.shape(w.w_hh).0;
    check_row(g, "gru_cell", h_prev, hidden)?;
    let xw = g.matmul(x, w.w_ih)?;
    let xw = g.add(xw, w.b)?;
    let u_zr = g.slice_cols(w.w_hh, 0, 2 * hidden)?;
    let u_n = g.slice_cols(w.w_hh, 2 * hidden, hidden)?;
    let hu = g.matmul(h_prev, u_zr)?;

    let xz = g.slice_cols(xw, 0, hidden)?;
    let hz = g.slice_cols(hu, 0, hidden)?;
    let z = g.add(xz, hz)?;
    let z = g.sigmoid(z);

    let xr = g.slice_cols(xw, hidden, hidden)?;
    let hr = g.slice_cols(hu, hidden, hidden)?;
    let r = g.add(xr, hr)?;
    let r = g.sigmoid(r);

    let rh = g.mul(r, h_prev)?;
    let rhu = g.matmul(rh, u_n)?;
    let xn = g.slice_cols(xw, 2 * hidden, hidden)?;
    let n = g.add(xn, rhu)?;
    let n = g.tanh(n);

    // h = (1 - z) ⊙ h_prev + z ⊙ n
    let delta = g.sub(n, h_prev)?;
    let step = g.mul(z, delta)?;
    g.add(h_prev, step)
}

/// Scalar importance of one input embedding given the previous encoder state:
/// `sigmoid(tanh([e; h_prev] · W + b) · v)`.
pub fn gate_score(g: &mut Graph, e_t: Var, h_prev: Var, w: &GateWeights) -> Result<Var> {
    let input = g.concat(&[e_t, h_prev])?;
    let hidden = g.matmul(input, w.w)?;
    let hidden = g.add(hidden, w.b)?;
    let hidden = g.tanh(hidden);
    let score = g.matmul(hidden, w.v)?;
    Ok(g.sigmoid(score))
}

/// Encoder states prepared for repeated attention queries.
#[derive(Clone, Copy, Debug)]
pub struct AttentionMemory {
    /// Encoder states stacked as an `N×hidden` matrix.
    pub states: Var,
    /// `states · W_key`, `N×attn`.
    pub keys: Var,
    pub len: usize,
}

impl AttentionMemory {
    pub fn new(g: &mut Graph, states: &[Var], w: &AttentionWeights) -> Result<Self> {
        if states.is_empty() {
            return Err(SrbError::argument("attention over zero encoder states"));
        }
        let stacked = g.stack_rows(states)?;
        let keys = g.matmul(stacked, w.w_key)?;
        Ok(AttentionMemory {
            states: stacked,
            keys,
            len: states.len(),
        })
    }
}

/// Additive attention. Scores `v · tanh(s·W_query + h_i·W_key)` are
/// normalized with softmax over positions; returns the context
/// `Σ α_i h_i` (`1×hidden`) and the weights `α` (`1×N`).
pub fn attention_context(
    g: &mut Graph,
    query: Var,
    memory: &AttentionMemory,
    w: &AttentionWeights,
) -> Result<(Var, Var)> {
    let q = g.matmul(query, w.w_query)?;
    let q = g.tile_rows(q, memory.len)?;
    let e = g.add(memory.keys, q)?;
    let e = g.tanh(e);
    let scores = g.matmul(e, w.v)?;
    let scores = g.transpose(scores);
    let alpha = g.softmax_rows(scores)?;
    let context = g.matmul(alpha, memory.states)?;
    Ok((context, alpha))
}
