use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f32, beta2: f32, eps: f32 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Optimizer {
    pub fn name(&self) -> &'static str {
        match self {
            Optimizer::Sgd => "sgd",
            Optimizer::Adam { .. } => "adam",
        }
    }
}

/// Moments and step count carried between optimizer steps.
#[derive(Clone, Debug, Default)]
pub struct OptimizerState {
    pub step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

/// Applies one update to `params` in place. Tensors pair up by position.
pub fn optimizer_step(
    state: &mut OptimizerState,
    optimizer: Optimizer,
    learning_rate: f32,
    params: &mut [&mut [f32]],
    grads: &[&[f32]],
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape(
            "optimizer",
            format!("{} parameter tensors, {} gradients", params.len(), grads.len()),
        ));
    }
    if let Some((i, (p, g))) = params.iter().zip(grads).enumerate().find(|(_, (p, g))| p.len() != g.len()) {
        return Err(Error::shape(
            "optimizer",
            format!("tensor {i}: {} parameters, {} gradients", p.len(), g.len()),
        ));
    }
    state.step += 1;
    match optimizer {
        Optimizer::Sgd => {
            for (p, g) in params.iter_mut().zip(grads) {
                for (p, &g) in p.iter_mut().zip(g.iter()) {
                    *p -= learning_rate * g;
                }
            }
        }
        Optimizer::Adam { beta1, beta2, eps } => {
            if state.m.is_empty() {
                state.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
                state.v = state.m.clone();
            } else if state.m.len() != grads.len() || state.m.iter().zip(grads).any(|(m, g)| m.len() != g.len()) {
                return Err(Error::shape("optimizer", "gradient layout changed between steps"));
            }
            let t = state.step as i32;
            let c1 = 1.0 - (beta1 as f64).powi(t);
            let c2 = 1.0 - (beta2 as f64).powi(t);
            let step_size = (learning_rate as f64 / c1) as f32;
            let c2_sqrt = c2.sqrt() as f32;
            for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
                for (((p, &g), m), v) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= step_size * *m / (v.sqrt() / c2_sqrt + eps);
                }
            }
        }
    }
    Ok(())
}
