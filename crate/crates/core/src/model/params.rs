use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Result, SrbError};

/// Half-width of the uniform weight initialization.
pub const INIT_RANGE: f64 = 0.08;

#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub value: Tensor,
}

/// An ordered set of uniquely named tensors.
///
/// Used for model parameters, their gradients and optimizer moments, which
/// all share one layout.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NamedTensors {
    entries: Vec<ParamTensor>,
    index: HashMap<String, usize>,
}

pub type ModelParams = NamedTensors;
pub type Gradients = NamedTensors;

impl NamedTensors {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<ParamTensor>) -> Result<Self> {
        let mut out = NamedTensors::new();
        for e in entries {
            out.insert(e.name, e.value)?;
        }
        Ok(out)
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(SrbError::consistency(format!("duplicate tensor name {name}")));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push(ParamTensor { name, value });
        Ok(())
    }

    /// A same-layout set filled with zeros.
    pub fn zeros_like(&self) -> Self {
        NamedTensors {
            entries: self
                .entries
                .iter()
                .map(|e| ParamTensor {
                    name: e.name.clone(),
                    value: Tensor::zeros(e.value.rows(), e.value.cols()),
                })
                .collect(),
            index: self.index.clone(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.entries[i].value)
    }

    pub fn expect(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| SrbError::consistency(format!("missing tensor {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamTensor> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut ParamTensor> {
        self.entries.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar values.
    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.entries.iter().map(|e| e.value.squared_norm()).sum()
    }

    /// Adds `other` elementwise. Layouts must match exactly.
    pub fn add_assign(&mut self, other: &NamedTensors) -> Result<()> {
        self.check_same_layout(other)?;
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            a.value.add_assign(&b.value);
        }
        Ok(())
    }

    pub fn scale(&mut self, k: f64) {
        for e in &mut self.entries {
            e.value.scale_in_place(k);
        }
    }

    pub fn check_same_layout(&self, other: &NamedTensors) -> Result<()> {
        if self.len() != other.len() {
            return Err(SrbError::consistency(format!(
                "tensor sets differ in size: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        for (a, b) in self.entries.iter().zip(&other.entries) {
            if a.name != b.name || a.value.shape() != b.value.shape() {
                return Err(SrbError::consistency(format!(
                    "layout mismatch: {} {:?} vs {} {:?}",
                    a.name,
                    a.value.shape(),
                    b.name,
                    b.value.shape()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Init {
    Uniform,
    Zero,
}

fn cell_layout(prefix: &str, input: usize, cfg: &ModelConfig, out: &mut Vec<(String, (usize, usize), Init)>) {
    let h = cfg.hidden_dim;
    let k = cfg.cell_kind.gate_blocks();
    out.push((format!("{prefix}.w_ih"), (input, k * h), Init::Uniform));
    out.push((format!("{prefix}.w_hh"), (h, k * h), Init::Uniform));
    out.push((format!("{prefix}.b"), (1, k * h), Init::Zero));
}

fn layout(cfg: &ModelConfig) -> Vec<(String, (usize, usize), Init)> {
    let (v, e, h, g, a) = (
        cfg.vocab_size,
        cfg.embed_dim,
        cfg.hidden_dim,
        cfg.gate_hidden_dim,
        cfg.attn_dim,
    );
    let mut out = vec![("embedding".to_string(), (v, e), Init::Uniform)];
    cell_layout("encoder.fwd", e, cfg, &mut out);
    cell_layout("encoder.bwd", e, cfg, &mut out);
    out.extend([
        ("encoder.combine.w".to_string(), (2 * h, h), Init::Uniform),
        ("encoder.combine.b".to_string(), (1, h), Init::Zero),
        ("gate.w".to_string(), (e + h, g), Init::Uniform),
        ("gate.b".to_string(), (1, g), Init::Zero),
        ("gate.v".to_string(), (g, 1), Init::Uniform),
        ("attention.w_query".to_string(), (h, a), Init::Uniform),
        ("attention.w_key".to_string(), (h, a), Init::Uniform),
        ("attention.v".to_string(), (a, 1), Init::Uniform),
    ]);
    cell_layout("decoder", e + h, cfg, &mut out);
    out.extend([
        ("output.w".to_string(), (2 * h, v), Init::Uniform),
        ("output.b".to_string(), (1, v), Init::Zero),
    ]);
    out
}

/// Names and shapes of every parameter for `cfg`, in storage order.
pub fn param_shapes(cfg: &ModelConfig) -> Vec<(String, (usize, usize))> {
    layout(cfg).into_iter().map(|(n, s, _)| (n, s)).collect()
}

/// Weights uniform in `±INIT_RANGE`, biases zero, drawn in layout order.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ModelParams> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = NamedTensors::new();
    for (name, (rows, cols), init) in layout(cfg) {
        let data = match init {
            Init::Zero => vec![0.0; rows * cols],
            Init::Uniform => (0..rows * cols)
                .map(|_| rng.gen_range(-INIT_RANGE..INIT_RANGE))
                .collect(),
        };
        params.insert(name, Tensor::new(rows, cols, data)?)?;
    }
    Ok(params)
}

/// Verifies that `params` has exactly the layout `cfg` implies.
pub fn check_params(params: &ModelParams, cfg: &ModelConfig) -> Result<()> {
    let expected = param_shapes(cfg);
    if expected.len() != params.len() {
        return Err(SrbError::consistency(format!(
            "expected {} parameters for this config, found {}",
            expected.len(),
            params.len()
        )));
    }
    for ((name, shape), p) in expected.iter().zip(params.iter()) {
        if *name != p.name || *shape != p.value.shape() {
            return Err(SrbError::consistency(format!(
                "parameter {} {:?} does not match config ({} {:?})",
                p.name,
                p.value.shape(),
                name,
                shape
            )));
        }
    }
    Ok(())
}

/// Graph handles for one recurrent cell's weights.
#[derive(Clone, Copy, Debug)]
pub struct CellWeights {
    pub w_ih: Var,
    pub w_hh: Var,
    pub b: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct GateWeights {
    pub w: Var,
    pub b: Var,
    pub v: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionWeights {
    pub w_query: Var,
    pub w_key: Var,
    pub v: Var,
}

/// All parameters of a [`ModelParams`] placed into one graph.
#[derive(Clone, Debug)]
pub struct BoundParams {
    pub embedding: Var,
    pub enc_fwd: CellWeights,
    pub enc_bwd: CellWeights,
    pub combine_w: Var,
    pub combine_b: Var,
    pub gate: GateWeights,
    pub attention: AttentionWeights,
    pub decoder: CellWeights,
    pub out_w: Var,
    pub out_b: Var,
    vars: Vec<Var>,
}

impl BoundParams {
    /// Inserts every parameter as a trainable leaf of `graph`.
    pub fn bind(graph: &mut Graph, params: &ModelParams, cfg: &ModelConfig) -> Result<Self> {
        check_params(params, cfg)?;
        let vars: Vec<Var> = params.iter().map(|p| graph.param(p.value.clone())).collect();
        let by_name: HashMap<&str, Var> = params.names().zip(vars.iter().copied()).collect();
        let v = |name: &str| by_name[name];
        let cell = |prefix: &str| CellWeights {
            w_ih: v(&format!("{prefix}.w_ih")),
            w_hh: v(&format!("{prefix}.w_hh")),
            b: v(&format!("{prefix}.b")),
        };
        Ok(BoundParams {
            embedding: v("embedding"),
            enc_fwd: cell("encoder.fwd"),
            enc_bwd: cell("encoder.bwd"),
            combine_w: v("encoder.combine.w"),
            combine_b: v("encoder.combine.b"),
            gate: GateWeights {
                w: v("gate.w"),
                b: v("gate.b"),
                v: v("gate.v"),
            },
            attention: AttentionWeights {
                w_query: v("attention.w_query"),
                w_key: v("attention.w_key"),
                v: v("attention.v"),
            },
            decoder: cell("decoder"),
            out_w: v("output.w"),
            out_b: v("output.b"),
            vars,
        })
    }

    /// Reads the accumulated gradient of every bound parameter.
    pub fn gradients(&self, graph: &Graph, params: &ModelParams) -> Gradients {
        NamedTensors {
            entries: params
                .iter()
                .zip(&self.vars)
                .map(|(p, &var)| ParamTensor {
                    name: p.name.clone(),
                    value: graph.grad(var).clone(),
                })
                .collect(),
            index: params.index.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            vocab_size: 10,
            embed_dim: 3,
            hidden_dim: 4,
            gate_hidden_dim: 5,
            attn_dim: 6,
            ..Default::default()
        }
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = init_params(&tiny(), 7).unwrap();
        let b = init_params(&tiny(), 7).unwrap();
        let c = init_params(&tiny(), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for p in a.iter() {
            let is_bias = p.name.ends_with(".b");
            for &x in p.value.data() {
                assert!(x.abs() <= INIT_RANGE);
                if is_bias {
                    assert_eq!(x, 0.0, "{}", p.name);
                }
            }
        }
        check_params(&a, &tiny()).unwrap();
    }

    #[test]
    fn shapes_follow_config() {
        let cfg = tiny();
        let p = init_params(&cfg, 1).unwrap();
        assert_eq!(p.get("embedding").unwrap().shape(), (10, 3));
        assert_eq!(p.get("encoder.fwd.w_ih").unwrap().shape(), (3, 16));
        assert_eq!(p.get("decoder.w_ih").unwrap().shape(), (7, 16));
        assert_eq!(p.get("output.w").unwrap().shape(), (8, 10));
        assert_eq!(p.get("gate.w").unwrap().shape(), (7, 5));
        let gru = ModelConfig {
            cell_kind: super::super::CellKind::Gru,
            ..cfg.clone()
        };
        let pg = init_params(&gru, 1).unwrap();
        assert_eq!(pg.get("decoder.w_hh").unwrap().shape(), (4, 12));
        assert!(check_params(&pg, &cfg).is_err());
    }

    #[test]
    fn names_unique() {
        let mut p = init_params(&tiny(), 1).unwrap();
        assert!(p.insert("embedding", Tensor::zeros(1, 1)).is_err());
    }
}
