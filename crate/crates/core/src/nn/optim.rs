use serde::{Deserialize, Serialize};

use super::network::Gradients;
use super::NnError;

/// Optimizer and schedule settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Epochs without a validation-accuracy improvement before stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 64,
            max_epochs: 50,
            seed: 0,
            patience: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        // A zero rate is allowed: it freezes the parameters, which the
        // determinism checks rely on.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::Config(format!("learning rate {} must be non-negative", self.learning_rate)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(NnError::Config(format!("{name} = {b} must lie in (0, 1)")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(NnError::Config("epsilon must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(NnError::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// ADAM moment estimates, one buffer per parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(block_lens: impl IntoIterator<Item = usize>) -> Self {
        let (m, v) = block_lens
            .into_iter()
            .map(|n| (vec![0.0; n], vec![0.0; n]))
            .unzip();
        OptimizerState { m, v, step: 0 }
    }
}

/// One bias-corrected ADAM update.
pub fn adam_step(
    params: &mut [&mut Vec<f64>],
    grads: &Gradients,
    state: &mut OptimizerState,
    config: &TrainConfig,
) -> Result<(), NnError> {
    if params.len() != grads.blocks.len() || params.len() != state.m.len() {
        return Err(NnError::Shape(format!(
            "adam: {} parameter blocks, {} gradient blocks, {} moment blocks",
            params.len(),
            grads.blocks.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(&grads.blocks).enumerate() {
        if p.len() != g.len() || p.len() != state.m[i].len() {
            return Err(NnError::Shape(format!("adam: block {i} length mismatch")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = config.learning_rate;
    for (i, p) in params.iter_mut().enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, w) in p.iter_mut().enumerate() {
            let g = grads.blocks[i][j];
            m[j] = b1 * m[j] + (1.0 - b1) * g;
            v[j] = b2 * v[j] + (1.0 - b2) * g * g;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }
    Ok(())
}
