//! Greedy and beam-search summary generation.
//!
//! Outputs never contain PAD or BOS; EOS ends a hypothesis and is not
//! included in the returned tokens. A hypothesis that reaches `max_len`
//! tokens is finished without scoring EOS.

use std::cmp::Ordering;

use crate::autodiff::{log_softmax_rows, softmax_rows, Graph};
use crate::error::{Result, SrbError};
use crate::model::{
    decoder_step, encode, initial_decoder_state, BoundParams, CellState, EncoderOutput,
    ModelConfig, ModelParams,
};
use crate::text::{TokenId, BOS, EOS, PAD};

pub const DEFAULT_MAX_LEN: usize = 30;
pub const DEFAULT_BEAM: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeOptions {
    /// `1` is greedy search.
    pub beam: usize,
    pub max_len: usize,
    /// Rank finished hypotheses by mean instead of total log-probability.
    pub length_normalize: bool,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            beam: DEFAULT_BEAM,
            max_len: DEFAULT_MAX_LEN,
            length_normalize: false,
        }
    }
}

/// A finished (or partial) output sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<TokenId>,
    /// Sum of token log-probabilities, including EOS when it was emitted.
    pub log_prob: f64,
    pub finished: bool,
    /// Finished by emitting EOS rather than by reaching `max_len`.
    pub eos: bool,
}

impl Hypothesis {
    fn rank_score(&self, length_normalize: bool) -> f64 {
        if length_normalize {
            let scored = self.tokens.len() + usize::from(self.eos);
            self.log_prob / scored.max(1) as f64
        } else {
            self.log_prob
        }
    }
}

fn allowed(id: TokenId) -> bool {
    id != PAD && id != BOS
}

/// One decoder step's outputs as plain values.
pub struct StepDistribution {
    pub log_probs: Vec<f64>,
    pub probs: Vec<f64>,
    pub attention: Option<Vec<f64>>,
}

/// Encoder output and bound parameters reused across decoder steps.
struct Session<'a> {
    graph: Graph,
    bound: BoundParams,
    enc: EncoderOutput,
    cfg: &'a ModelConfig,
}

impl<'a> Session<'a> {
    fn new(params: &ModelParams, cfg: &'a ModelConfig, source_ids: &[TokenId]) -> Result<Self> {
        if source_ids.is_empty() {
            return Err(SrbError::argument("cannot decode an empty source"));
        }
        let mut graph = Graph::new();
        let bound = BoundParams::bind(&mut graph, params, cfg)?;
        let enc = encode(&mut graph, &bound, cfg, source_ids)?;
        Ok(Session {
            graph,
            bound,
            enc,
            cfg,
        })
    }

    fn initial_state(&mut self) -> CellState {
        initial_decoder_state(&mut self.graph, self.cfg, &self.enc)
    }

    fn step(&mut self, state: CellState, prev: TokenId) -> Result<(CellState, StepDistribution)> {
        let out = decoder_step(&mut self.graph, &self.bound, self.cfg, &self.enc, state, prev)?;
        let logits = self.graph.value(out.logits);
        let dist = StepDistribution {
            log_probs: log_softmax_rows(logits).into_data(),
            probs: softmax_rows(logits).into_data(),
            attention: out.attention.map(|a| self.graph.value(a).data().to_vec()),
        };
        Ok((out.state, dist))
    }
}

/// Per-step record of a greedy decode.
pub struct DecodeTrace {
    pub hypothesis: Hypothesis,
    pub steps: Vec<StepDistribution>,
}

/// Greedy decoding that also returns every distribution it consulted.
pub fn greedy_decode_trace(
    params: &ModelParams,
    cfg: &ModelConfig,
    source_ids: &[TokenId],
    max_len: usize,
) -> Result<DecodeTrace> {
    let mut session = Session::new(params, cfg, source_ids)?;
    let mut state = session.initial_state();
    let mut prev = BOS;
    let mut hyp = Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        finished: true,
        eos: false,
    };
    let mut steps = Vec::new();
    while hyp.tokens.len() < max_len {
        let (next, dist) = session.step(state, prev)?;
        let best = argmax_allowed(&dist.log_probs);
        hyp.log_prob += dist.log_probs[best];
        steps.push(dist);
        if best == EOS {
            hyp.eos = true;
            break;
        }
        hyp.tokens.push(best);
        state = next;
        prev = best;
    }
    Ok(DecodeTrace {
        hypothesis: hyp,
        steps,
    })
}

/// Lowest id wins ties.
fn argmax_allowed(log_probs: &[f64]) -> TokenId {
    let mut best = None;
    for (id, &lp) in log_probs.iter().enumerate() {
        if !allowed(id) {
            continue;
        }
        match best {
            Some((_, b)) if lp <= b => {}
            _ => best = Some((id, lp)),
        }
    }
    best.expect("vocabulary has a non-reserved token").0
}

pub fn greedy_decode(
    params: &ModelParams,
    cfg: &ModelConfig,
    source_ids: &[TokenId],
    max_len: usize,
) -> Result<Vec<TokenId>> {
    Ok(greedy_decode_trace(params, cfg, source_ids, max_len)?
        .hypothesis
        .tokens)
}

struct Candidate {
    tokens: Vec<TokenId>,
    log_prob: f64,
    state: CellState,
}

/// Beam search returning the best finished hypothesis.
///
/// The greedy path is scored alongside the beam and returned if it ranks
/// higher, so the result never scores below greedy decoding.
pub fn beam_search(
    params: &ModelParams,
    cfg: &ModelConfig,
    source_ids: &[TokenId],
    options: &DecodeOptions,
) -> Result<Hypothesis> {
    if options.beam < 1 {
        return Err(SrbError::argument("beam width must be at least 1"));
    }
    let mut session = Session::new(params, cfg, source_ids)?;
    let max_len = options.max_len;
    let init = session.initial_state();
    let mut active = vec![Candidate {
        tokens: Vec::new(),
        log_prob: 0.0,
        state: init,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    if max_len == 0 {
        finished.push(Hypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
            finished: true,
            eos: false,
        });
        active.clear();
    }

    while !active.is_empty() {
        // (candidate index, token, score, next state)
        let mut expansions: Vec<(usize, TokenId, f64, CellState)> = Vec::new();
        for (ci, cand) in active.iter().enumerate() {
            let prev = cand.tokens.last().copied().unwrap_or(BOS);
            let (next, dist) = session.step(cand.state, prev)?;
            for (id, &lp) in dist.log_probs.iter().enumerate() {
                if allowed(id) {
                    expansions.push((ci, id, cand.log_prob + lp, next));
                }
            }
        }
        expansions.sort_by(|a, b| {
            b.2.partial_cmp(&a.2)
                .unwrap_or(Ordering::Equal)
                .then(a.0.cmp(&b.0))
                .then(a.1.cmp(&b.1))
        });
        expansions.truncate(options.beam);

        let mut next_active = Vec::with_capacity(expansions.len());
        for (ci, id, score, state) in expansions {
            let mut tokens = active[ci].tokens.clone();
            if id == EOS {
                finished.push(Hypothesis {
                    tokens,
                    log_prob: score,
                    finished: true,
                    eos: true,
                });
                continue;
            }
            tokens.push(id);
            if tokens.len() == max_len {
                finished.push(Hypothesis {
                    tokens,
                    log_prob: score,
                    finished: true,
                    eos: false,
                });
            } else {
                next_active.push(Candidate {
                    tokens,
                    log_prob: score,
                    state,
                });
            }
        }
        active = next_active;

        // Log-probabilities only decrease, so without length normalization no
        // active hypothesis can overtake a finished one that already beats it.
        if !options.length_normalize {
            if let (Some(best_done), Some(best_open)) = (
                finished.iter().map(|h| h.log_prob).reduce(f64::max),
                active.iter().map(|c| c.log_prob).reduce(f64::max),
            ) {
                if best_done >= best_open {
                    break;
                }
            }
        }
    }

    let mut best = pick_best(finished, options.length_normalize);
    if options.beam > 1 {
        let greedy = greedy_decode_trace(params, cfg, source_ids, max_len)?.hypothesis;
        if greedy.rank_score(options.length_normalize) > best.rank_score(options.length_normalize) {
            best = greedy;
        }
    }
    Ok(best)
}

fn pick_best(finished: Vec<Hypothesis>, length_normalize: bool) -> Hypothesis {
    let mut best: Option<Hypothesis> = None;
    for h in finished {
        let better = match &best {
            None => true,
            Some(b) => h.rank_score(length_normalize) > b.rank_score(length_normalize),
        };
        if better {
            best = Some(h);
        }
    }
    best.expect("search always finishes at least one hypothesis")
}

pub fn beam_decode(
    params: &ModelParams,
    cfg: &ModelConfig,
    source_ids: &[TokenId],
    beam: usize,
    max_len: usize,
) -> Result<Vec<TokenId>> {
    let options = DecodeOptions {
        beam,
        max_len,
        length_normalize: false,
    };
    Ok(beam_search(params, cfg, source_ids, &options)?.tokens)
}

/// Decodes with `options`, using plain greedy search when `beam == 1`.
pub fn decode(
    params: &ModelParams,
    cfg: &ModelConfig,
    source_ids: &[TokenId],
    options: &DecodeOptions,
) -> Result<Vec<TokenId>> {
    if options.beam == 1 {
        greedy_decode(params, cfg, source_ids, options.max_len)
    } else {
        Ok(beam_search(params, cfg, source_ids, options)?.tokens)
    }
}

/// Model score of `tokens` as a decoder output under the same conventions as
/// the search: EOS is scored unless the output is `max_len` long.
pub fn sequence_log_prob(
    params: &ModelParams,
    cfg: &ModelConfig,
    source_ids: &[TokenId],
    tokens: &[TokenId],
    max_len: usize,
) -> Result<f64> {
    if tokens.len() > max_len {
        return Err(SrbError::argument("output longer than max_len"));
    }
    let mut session = Session::new(params, cfg, source_ids)?;
    let mut state = session.initial_state();
    let mut prev = BOS;
    let mut total = 0.0;
    for &t in tokens {
        let (next, dist) = session.step(state, prev)?;
        total += dist.log_probs[t];
        state = next;
        prev = t;
    }
    if tokens.len() < max_len {
        let (_, dist) = session.step(state, prev)?;
        total += dist.log_probs[EOS];
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;

    fn cfg() -> ModelConfig {
        ModelConfig {
            vocab_size: 10,
            embed_dim: 4,
            hidden_dim: 6,
            gate_hidden_dim: 5,
            attn_dim: 6,
            lambda: 0.1,
            ..Default::default()
        }
    }

    #[test]
    fn zero_max_len_is_empty() {
        let c = cfg();
        let p = init_params(&c, 1).unwrap();
        assert!(greedy_decode(&p, &c, &[4, 5], 0).unwrap().is_empty());
        assert!(beam_decode(&p, &c, &[4, 5], 3, 0).unwrap().is_empty());
    }

    #[test]
    fn errors() {
        let c = cfg();
        let p = init_params(&c, 1).unwrap();
        assert!(greedy_decode(&p, &c, &[], 5).is_err());
        assert!(matches!(beam_decode(&p, &c, &[4], 0, 5), Err(SrbError::Argument(_))));
    }

    #[test]
    fn greedy_is_deterministic_and_clean() {
        let c = cfg();
        let p = init_params(&c, 2).unwrap();
        let a = greedy_decode(&p, &c, &[4, 5, 6], 8).unwrap();
        let b = greedy_decode(&p, &c, &[4, 5, 6], 8).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&t| t != PAD && t != BOS && t != EOS));
    }

    #[test]
    fn trace_score_matches_sequence_score() {
        let c = cfg();
        let p = init_params(&c, 3).unwrap();
        let trace = greedy_decode_trace(&p, &c, &[7, 8, 9], 5).unwrap();
        let s = sequence_log_prob(&p, &c, &[7, 8, 9], &trace.hypothesis.tokens, 5).unwrap();
        assert!((s - trace.hypothesis.log_prob).abs() < 1e-12);
    }

    #[test]
    fn argmax_ties_pick_lowest_allowed() {
        assert_eq!(argmax_allowed(&[0.0, 0.0, -1.0, -0.5, -0.5]), 3);
        assert_eq!(argmax_allowed(&[5.0, 5.0, -1.0, -2.0]), 2);
    }
}
