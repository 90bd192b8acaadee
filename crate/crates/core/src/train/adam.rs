use crate::error::{Result, SrbError};
use crate::model::{Gradients, ModelParams, NamedTensors};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter first and second moments plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: NamedTensors,
    pub v: NamedTensors,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        AdamState {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

/// One bias-corrected Adam update. Every parameter must have a gradient of
/// matching shape.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut AdamState,
    config: &AdamConfig,
) -> Result<()> {
    for p in params.iter() {
        match grads.get(&p.name) {
            Some(g) if g.shape() == p.value.shape() => {}
            Some(g) => {
                return Err(SrbError::consistency(format!(
                    "gradient for {} has shape {:?}, parameter is {:?}",
                    p.name,
                    g.shape(),
                    p.value.shape()
                )))
            }
            None => return Err(SrbError::consistency(format!("missing gradient for {}", p.name))),
        }
    }
    state.m.check_same_layout(params)?;
    state.v.check_same_layout(params)?;

    state.step += 1;
    let t = state.step as i32;
    let AdamConfig {
        learning_rate: lr,
        beta1: b1,
        beta2: b2,
        epsilon: eps,
    } = *config;
    let correct1 = 1.0 - b1.powi(t);
    let correct2 = 1.0 - b2.powi(t);

    for p in params.iter_mut() {
        let g = grads.get(&p.name).expect("checked above");
        let m = state.m.get_mut(&p.name).expect("same layout");
        let v = state.v.get_mut(&p.name).expect("same layout");
        let (pd, md, vd) = (p.value.data_mut(), m.data_mut(), v.data_mut());
        for (((w, mi), vi), &gi) in pd.iter_mut().zip(md).zip(vd).zip(g.data()) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = *mi / correct1;
            let v_hat = *vi / correct2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.squared_norm().sqrt();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}
