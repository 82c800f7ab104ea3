use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Layer, LayerCache, LayerSpec};
use super::ops;
use super::{NnError, Tensor};

/// Declarative description of a network: input shape plus layer specs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

/// Sequential network over H×W×C tensors. The final layer's output is read as
/// class logits by the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: Architecture,
    layers: Vec<Layer>,
}

/// One gradient buffer per parameter block, aligned with [`Network::blocks`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub blocks: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for b in &mut self.blocks {
            for x in b {
                *x *= k;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks
            .iter()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Parameter count of one layer, for ledgers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerParams {
    pub name: String,
    pub count: usize,
}

/// Forward-pass record for [`Network::backward`].
pub struct Trace {
    caches: Vec<LayerCache>,
}

impl Network {
    /// Builds the layers and draws initial weights from a seeded generator.
    pub fn build(arch: Architecture, seed: u64) -> Result<Self, NnError> {
        let mut net = Self::build_uninit(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut net.layers {
            layer.init(&mut rng);
        }
        Ok(net)
    }

    /// Builds with all parameters zero.
    pub fn build_uninit(arch: Architecture) -> Result<Self, NnError> {
        if arch.input.contains(&0) {
            return Err(NnError::Spec(format!("input shape {:?} must be positive", arch.input)));
        }
        let mut shape = arch.input;
        let mut layers = Vec::with_capacity(arch.layers.len());
        for spec in &arch.layers {
            let layer = Layer::from_spec(spec, shape)?;
            shape = layer
                .output_shape(shape)
                .map_err(|e| NnError::Spec(format!("{}: {e}", spec.name())))?;
            layers.push(layer);
        }
        if layers.is_empty() {
            return Err(NnError::Spec("network has no layers".into()));
        }
        Ok(Network { arch, layers })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Output shape after every layer for the declared input.
    pub fn shape_trace(&self) -> Vec<(String, [usize; 3])> {
        let mut shape = self.arch.input;
        self.layers
            .iter()
            .zip(&self.arch.layers)
            .map(|(l, s)| {
                shape = l.output_shape(shape).expect("validated at build");
                (s.name().to_string(), shape)
            })
            .collect()
    }

    pub fn output_len(&self) -> usize {
        self.shape_trace().last().map(|(_, s)| s.iter().product()).unwrap_or(0)
    }

    pub fn param_ledger(&self) -> Vec<LayerParams> {
        self.layers
            .iter()
            .zip(&self.arch.layers)
            .map(|(l, s)| LayerParams {
                name: s.name().to_string(),
                count: l.param_count(),
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn blocks(&self) -> Vec<&Vec<f64>> {
        self.layers.iter().flat_map(|l| l.blocks()).collect()
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.layers.iter_mut().flat_map(|l| l.blocks_mut()).collect()
    }

    pub fn zero_grads(&self) -> Gradients {
        Gradients {
            blocks: self.blocks().iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<(), NnError> {
        if x.shape() != self.arch.input {
            return Err(NnError::Shape(format!(
                "network expects input {:?}, got {:?}",
                self.arch.input,
                x.shape()
            )));
        }
        Ok(())
    }

    /// Outputs of every layer, in order.
    pub fn forward_all(&self, x: &Tensor) -> Result<Vec<Tensor>, NnError> {
        self.check_input(x)?;
        let mut outs: Vec<Tensor> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = outs.last().unwrap_or(x);
            let y = layer.forward(input)?;
            outs.push(y);
        }
        Ok(outs)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        self.check_input(x)?;
        let mut cur = self.layers[0].forward(x)?;
        for layer in &self.layers[1..] {
            cur = layer.forward(&cur)?;
        }
        Ok(cur)
    }

    pub fn forward_train(&self, x: &Tensor) -> Result<(Tensor, Trace), NnError> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let (mut cur, c) = self.layers[0].forward_train(x)?;
        caches.push(c);
        for layer in &self.layers[1..] {
            let (y, c) = layer.forward_train(&cur)?;
            caches.push(c);
            cur = y;
        }
        Ok((cur, Trace { caches }))
    }

    /// Back-propagates `grad_out` (gradient of the loss w.r.t. the network
    /// output), accumulating into `grads`.
    pub fn backward(&self, trace: &Trace, grad_out: Vec<f64>, grads: &mut Gradients) {
        self.backward_impl(trace, grad_out, grads, false);
    }

    /// As [`Network::backward`], also returning the input gradient.
    pub fn backward_with_input(&self, trace: &Trace, grad_out: Vec<f64>, grads: &mut Gradients) -> Vec<f64> {
        self.backward_impl(trace, grad_out, grads, true)
            .expect("input gradient requested")
    }

    fn backward_impl(&self, trace: &Trace, grad_out: Vec<f64>, grads: &mut Gradients, input_grad: bool) -> Option<Vec<f64>> {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.blocks().len();
        }
        let mut g = Some(grad_out);
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let n = layer.blocks().len();
            let slot = &mut grads.blocks[offsets[i]..offsets[i] + n];
            let need_dx = i > 0 || input_grad;
            g = layer.backward(&trace.caches[i], g.take().expect("gradient flows"), slot, need_dx);
        }
        g
    }

    /// Softmax cross-entropy on the output logits: (loss, probabilities).
    pub fn loss(&self, x: &Tensor, label: usize) -> Result<(f64, Vec<f64>), NnError> {
        let probs = ops::softmax(self.forward(x)?.data());
        Ok((ops::cross_entropy_loss(&probs, label)?, probs))
    }

    /// Loss, probabilities, and accumulation of the parameter gradients.
    pub fn loss_and_grad(&self, x: &Tensor, label: usize, grads: &mut Gradients) -> Result<(f64, Vec<f64>), NnError> {
        let (logits, trace) = self.forward_train(x)?;
        let probs = ops::softmax(logits.data());
        let loss = ops::cross_entropy_loss(&probs, label)?;
        let g = ops::softmax_cross_entropy_backward(&probs, label);
        self.backward(&trace, g, grads);
        Ok((loss, probs))
    }
}
