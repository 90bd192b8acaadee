use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Result, SrbError};
use crate::kv;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellKind {
    Lstm,
    Gru,
}

impl CellKind {
    /// Number of stacked gate blocks in the cell's weight matrices.
    pub fn gate_blocks(self) -> usize {
        match self {
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        })
    }
}

impl FromStr for CellKind {
    type Err = SrbError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lstm" => Ok(CellKind::Lstm),
            "gru" => Ok(CellKind::Gru),
            _ => Err(SrbError::argument(format!("unknown cell kind {s:?}"))),
        }
    }
}

/// Network hyperparameters and ablation switches.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub gate_hidden_dim: usize,
    /// Width of the additive attention scorer.
    pub attn_dim: usize,
    /// Weight of the relevance term in the loss.
    pub lambda: f64,
    pub cell_kind: CellKind,
    /// Scale encoder inputs by the learned importance gate.
    pub use_gate: bool,
    pub use_attention: bool,
    /// Include `-lambda * cos(V_s, V_t)` in the loss.
    pub use_srb: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 4000,
            embed_dim: 400,
            hidden_dim: 500,
            gate_hidden_dim: 1000,
            attn_dim: 500,
            lambda: 1e-4,
            cell_kind: CellKind::Lstm,
            use_gate: true,
            use_attention: true,
            use_srb: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("gate_hidden_dim", self.gate_hidden_dim),
            ("attn_dim", self.attn_dim),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(SrbError::argument(format!("{name} must be at least 1")));
            }
        }
        if crate::text::RESERVED >= self.vocab_size {
            return Err(SrbError::argument("vocab_size must exceed the reserved tokens"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(SrbError::argument(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }

    /// Applies one config-file entry. Returns `false` for keys this type does not own.
    pub fn apply(&mut self, key: &str, raw: &str) -> Result<bool> {
        match key {
            "vocab_size" => self.vocab_size = kv::value(key, raw)?,
            "embed_dim" => self.embed_dim = kv::value(key, raw)?,
            "hidden_dim" => self.hidden_dim = kv::value(key, raw)?,
            "gate_hidden_dim" => self.gate_hidden_dim = kv::value(key, raw)?,
            "attn_dim" => self.attn_dim = kv::value(key, raw)?,
            "lambda" => self.lambda = kv::value(key, raw)?,
            "cell_kind" => self.cell_kind = raw.parse()?,
            "use_gate" => self.use_gate = kv::flag(key, raw)?,
            "use_attention" => self.use_attention = kv::flag(key, raw)?,
            "use_srb" => self.use_srb = kv::flag(key, raw)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        for (k, v) in map {
            if !cfg.apply(k, v)? {
                return Err(SrbError::argument(format!("unknown model config key {k:?}")));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// `key=value` lines; `lambda` uses the shortest exact decimal form.
    pub fn to_kv(&self) -> String {
        format!(
            "vocab_size={}\nembed_dim={}\nhidden_dim={}\ngate_hidden_dim={}\nattn_dim={}\n\
             lambda={:?}\ncell_kind={}\nuse_gate={}\nuse_attention={}\nuse_srb={}\n",
            self.vocab_size,
            self.embed_dim,
            self.hidden_dim,
            self.gate_hidden_dim,
            self.attn_dim,
            self.lambda,
            self.cell_kind,
            self.use_gate,
            self.use_attention,
            self.use_srb
        )
    }
}
