//! Layer descriptors and their runtime counterparts with forward/backward.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ops::{self, Padding, Window};
use super::{NnError, Tensor};

/// Branch widths of an inception block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InceptionSpec {
    pub one_by_one: usize,
    pub reduce3: usize,
    pub three_by_three: usize,
    pub reduce5: usize,
    pub five_by_five: usize,
    pub pool_proj: usize,
}

impl InceptionSpec {
    pub fn out_channels(&self) -> usize {
        self.one_by_one + self.three_by_three + self.five_by_five + self.pool_proj
    }

    fn validate(&self) -> Result<(), NnError> {
        let w = [
            self.one_by_one,
            self.reduce3,
            self.three_by_three,
            self.reduce5,
            self.five_by_five,
            self.pool_proj,
        ];
        if w.contains(&0) {
            return Err(NnError::Spec(format!("inception widths must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        name: String,
        kernel: usize,
        stride: usize,
        out_channels: usize,
        padding: Padding,
        relu: bool,
    },
    Maxpool {
        name: String,
        kernel: usize,
        stride: usize,
        padding: Padding,
    },
    Avgpool {
        name: String,
        kernel: usize,
        stride: usize,
        padding: Padding,
    },
    Inception {
        name: String,
        #[serde(flatten)]
        widths: InceptionSpec,
        relu: bool,
    },
    FullyConnected {
        name: String,
        out_features: usize,
        relu: bool,
    },
    L2norm {
        name: String,
    },
}

impl LayerSpec {
    pub fn name(&self) -> &str {
        match self {
            LayerSpec::Conv { name, .. }
            | LayerSpec::Maxpool { name, .. }
            | LayerSpec::Avgpool { name, .. }
            | LayerSpec::Inception { name, .. }
            | LayerSpec::FullyConnected { name, .. }
            | LayerSpec::L2norm { name } => name,
        }
    }

    pub fn is_trainable(&self) -> bool {
        matches!(
            self,
            LayerSpec::Conv { .. } | LayerSpec::Inception { .. } | LayerSpec::FullyConnected { .. }
        )
    }
}

/// Convolution with optional ReLU. Weights laid out (ky, kx, c_in, c_out).
#[derive(Debug, Clone, PartialEq)]
pub struct Conv {
    pub k: usize,
    pub stride: usize,
    pub padding: Padding,
    pub c_in: usize,
    pub c_out: usize,
    pub relu: bool,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ConvCache {
    input: Tensor,
    cols: Option<Vec<f64>>,
    window: Window,
    output: Vec<f64>,
}

impl Conv {
    pub fn new(k: usize, stride: usize, padding: Padding, c_in: usize, c_out: usize, relu: bool) -> Self {
        Conv {
            k,
            stride,
            padding,
            c_in,
            c_out,
            relu,
            weights: vec![0.0; k * k * c_in * c_out],
            bias: vec![0.0; c_out],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn init(&mut self, rng: &mut impl Rng) {
        he_uniform(&mut self.weights, self.k * self.k * self.c_in, rng);
        self.bias.fill(0.0);
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let (mut y, _, _) = ops::conv2d_raw(x, &self.weights, &self.bias, self.k, self.stride, self.padding)?;
        if self.relu {
            ops::relu_in_place(y.data_mut());
        }
        Ok(y)
    }

    pub fn forward_train(&self, x: &Tensor) -> Result<(Tensor, ConvCache), NnError> {
        let (mut y, window, cols) =
            ops::conv2d_raw(x, &self.weights, &self.bias, self.k, self.stride, self.padding)?;
        if self.relu {
            ops::relu_in_place(y.data_mut());
        }
        let cache = ConvCache {
            input: x.clone(),
            cols,
            window,
            output: y.data().to_vec(),
        };
        Ok((y, cache))
    }

    /// `grads` = [dW, db]. Returns dX when `need_dx`.
    pub fn backward(&self, cache: &ConvCache, mut gy: Vec<f64>, grads: &mut [Vec<f64>], need_dx: bool) -> Option<Vec<f64>> {
        if self.relu {
            ops::relu_backward_in_place(&cache.output, &mut gy);
        }
        let (dw, db) = grads.split_at_mut(1);
        ops::conv2d_backward(
            &cache.input,
            cache.cols.as_deref(),
            &cache.window,
            &self.weights,
            &gy,
            &mut dw[0],
            &mut db[0],
            need_dx,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pool {
    pub k: usize,
    pub stride: usize,
    pub padding: Padding,
}

#[derive(Debug, Clone)]
pub enum PoolCache {
    Max { input_len: usize, arg: Vec<usize> },
    Avg { window: Window },
}

impl Pool {
    fn forward_max(&self, x: &Tensor) -> Result<(Tensor, PoolCache), NnError> {
        let (y, arg) = ops::maxpool2d_raw(x, self.k, self.stride, self.padding)?;
        Ok((
            y,
            PoolCache::Max {
                input_len: x.len(),
                arg,
            },
        ))
    }

    fn forward_avg(&self, x: &Tensor) -> Result<(Tensor, PoolCache), NnError> {
        let (h, w, c) = x.hwc()?;
        let window = Window::new(h, w, c, self.k, self.stride, self.padding)?;
        let y = ops::avgpool2d(x, self.k, self.stride, self.padding)?;
        Ok((y, PoolCache::Avg { window }))
    }

    fn backward(cache: &PoolCache, gy: &[f64]) -> Vec<f64> {
        match cache {
            PoolCache::Max { input_len, arg } => ops::maxpool2d_backward(*input_len, arg, gy),
            PoolCache::Avg { window } => ops::avgpool2d_backward(window, gy),
        }
    }
}

/// Four parallel branches concatenated along channels: 1×1; 1×1 reduce then
/// 3×3; 1×1 reduce then 5×5; 3×3/1 max pool then 1×1 projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Inception {
    pub spec: InceptionSpec,
    pub branch1: Conv,
    pub reduce3: Conv,
    pub branch3: Conv,
    pub reduce5: Conv,
    pub branch5: Conv,
    pub proj: Conv,
}

#[derive(Debug, Clone)]
pub struct InceptionCache {
    convs: [ConvCache; 6],
    pool: PoolCache,
}

const BRANCH_POOL: Pool = Pool {
    k: 3,
    stride: 1,
    padding: Padding::Same,
};

impl Inception {
    pub fn new(spec: InceptionSpec, c_in: usize, relu: bool) -> Self {
        Inception {
            spec,
            branch1: Conv::new(1, 1, Padding::Same, c_in, spec.one_by_one, relu),
            reduce3: Conv::new(1, 1, Padding::Same, c_in, spec.reduce3, relu),
            branch3: Conv::new(3, 1, Padding::Same, spec.reduce3, spec.three_by_three, relu),
            reduce5: Conv::new(1, 1, Padding::Same, c_in, spec.reduce5, relu),
            branch5: Conv::new(5, 1, Padding::Same, spec.reduce5, spec.five_by_five, relu),
            proj: Conv::new(1, 1, Padding::Same, c_in, spec.pool_proj, relu),
        }
    }

    /// In table column order: 1×1, 3×3 reduce, 3×3, 5×5 reduce, 5×5, pool proj.
    pub fn convs(&self) -> [&Conv; 6] {
        [
            &self.branch1,
            &self.reduce3,
            &self.branch3,
            &self.reduce5,
            &self.branch5,
            &self.proj,
        ]
    }

    pub fn convs_mut(&mut self) -> [&mut Conv; 6] {
        [
            &mut self.branch1,
            &mut self.reduce3,
            &mut self.branch3,
            &mut self.reduce5,
            &mut self.branch5,
            &mut self.proj,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.convs().iter().map(|c| c.param_count()).sum()
    }

    fn widths(&self) -> [usize; 4] {
        [
            self.spec.one_by_one,
            self.spec.three_by_three,
            self.spec.five_by_five,
            self.spec.pool_proj,
        ]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let b1 = self.branch1.forward(x)?;
        let b3 = self.branch3.forward(&self.reduce3.forward(x)?)?;
        let b5 = self.branch5.forward(&self.reduce5.forward(x)?)?;
        let pooled = ops::maxpool2d(x, BRANCH_POOL.k, BRANCH_POOL.stride, BRANCH_POOL.padding)?;
        let b4 = self.proj.forward(&pooled)?;
        concat_channels(&[&b1, &b3, &b5, &b4])
    }

    pub fn forward_train(&self, x: &Tensor) -> Result<(Tensor, InceptionCache), NnError> {
        let (b1, c1) = self.branch1.forward_train(x)?;
        let (r3, cr3) = self.reduce3.forward_train(x)?;
        let (b3, c3) = self.branch3.forward_train(&r3)?;
        let (r5, cr5) = self.reduce5.forward_train(x)?;
        let (b5, c5) = self.branch5.forward_train(&r5)?;
        let (pooled, pool) = BRANCH_POOL.forward_max(x)?;
        let (b4, c4) = self.proj.forward_train(&pooled)?;
        let y = concat_channels(&[&b1, &b3, &b5, &b4])?;
        Ok((
            y,
            InceptionCache {
                convs: [c1, cr3, c3, cr5, c5, c4],
                pool,
            },
        ))
    }

    /// `grads` holds the twelve blocks in [`Inception::convs`] order.
    pub fn backward(&self, cache: &InceptionCache, gy: &[f64], grads: &mut [Vec<f64>], need_dx: bool) -> Option<Vec<f64>> {
        let parts = split_channels(gy, &self.widths());
        let [g1, g3, g5, g4]: [Vec<f64>; 4] = parts.try_into().expect("four branches");
        let [c1, cr3, c3, cr5, c5, c4] = &cache.convs;
        let (gw1, rest) = grads.split_at_mut(2);
        let (gwr3, rest) = rest.split_at_mut(2);
        let (gw3, rest) = rest.split_at_mut(2);
        let (gwr5, rest) = rest.split_at_mut(2);
        let (gw5, gw4) = rest.split_at_mut(2);

        let dx1 = self.branch1.backward(c1, g1, gw1, need_dx);
        let dr3 = self.branch3.backward(c3, g3, gw3, true).expect("dx requested");
        let dx3 = self.reduce3.backward(cr3, dr3, gwr3, need_dx);
        let dr5 = self.branch5.backward(c5, g5, gw5, true).expect("dx requested");
        let dx5 = self.reduce5.backward(cr5, dr5, gwr5, need_dx);
        let dpool = self.proj.backward(c4, g4, gw4, true).expect("dx requested");
        if !need_dx {
            return None;
        }
        let mut dx = Pool::backward(&cache.pool, &dpool);
        for part in [dx1, dx3, dx5].into_iter().flatten() {
            for (d, v) in dx.iter_mut().zip(&part) {
                *d += v;
            }
        }
        Some(dx)
    }
}

fn concat_channels(parts: &[&Tensor]) -> Result<Tensor, NnError> {
    let (h, w, _) = parts[0].hwc()?;
    let mut widths = Vec::with_capacity(parts.len());
    for p in parts {
        let (ph, pw, pc) = p.hwc()?;
        if (ph, pw) != (h, w) {
            return Err(NnError::Shape("branch spatial extents differ".into()));
        }
        widths.push(pc);
    }
    let c: usize = widths.iter().sum();
    let mut out = Vec::with_capacity(h * w * c);
    for px in 0..h * w {
        for (p, &pc) in parts.iter().zip(&widths) {
            out.extend_from_slice(&p.data()[px * pc..][..pc]);
        }
    }
    Tensor::new(vec![h, w, c], out)
}

fn split_channels(g: &[f64], widths: &[usize]) -> Vec<Vec<f64>> {
    let c: usize = widths.iter().sum();
    let pixels = g.len() / c;
    let mut parts: Vec<Vec<f64>> = widths.iter().map(|w| Vec::with_capacity(w * pixels)).collect();
    for px in 0..pixels {
        let mut off = px * c;
        for (part, &w) in parts.iter_mut().zip(widths) {
            part.extend_from_slice(&g[off..off + w]);
            off += w;
        }
    }
    parts
}

/// Affine layer on the flattened input, weights laid out in×out.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub relu: bool,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    input: Vec<f64>,
    output: Vec<f64>,
}

impl Dense {
    pub fn new(n_in: usize, n_out: usize, relu: bool) -> Self {
        Dense {
            n_in,
            n_out,
            relu,
            weights: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn init(&mut self, rng: &mut impl Rng) {
        he_uniform(&mut self.weights, self.n_in, rng);
        self.bias.fill(0.0);
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let mut y = ops::fully_connected(x.data(), &self.weights, &self.bias)?;
        if self.relu {
            ops::relu_in_place(&mut y);
        }
        Ok(Tensor::vector(y))
    }

    pub fn forward_train(&self, x: &Tensor) -> Result<(Tensor, DenseCache), NnError> {
        let y = self.forward(x)?;
        let cache = DenseCache {
            input: x.data().to_vec(),
            output: y.data().to_vec(),
        };
        Ok((y, cache))
    }

    pub fn backward(&self, cache: &DenseCache, mut gy: Vec<f64>, grads: &mut [Vec<f64>], need_dx: bool) -> Option<Vec<f64>> {
        if self.relu {
            ops::relu_backward_in_place(&cache.output, &mut gy);
        }
        for (d, g) in grads[1].iter_mut().zip(&gy) {
            *d += g;
        }
        ops::gemm_tn(1, self.n_in, self.n_out, &cache.input, &gy, &mut grads[0]);
        if !need_dx {
            return None;
        }
        let mut dx = vec![0.0; self.n_in];
        ops::gemm_nt(1, self.n_out, self.n_in, &gy, &self.weights, &mut dx);
        Some(dx)
    }
}

/// Uniform He-style initialization: U(-√(6/fan_in), √(6/fan_in)).
fn he_uniform(w: &mut [f64], fan_in: usize, rng: &mut impl Rng) {
    let limit = (6.0 / fan_in as f64).sqrt();
    for v in w {
        *v = rng.random_range(-limit..limit);
    }
}

/// Runtime layer.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv(Conv),
    MaxPool(Pool),
    AvgPool(Pool),
    Inception(Box<Inception>),
    Dense(Dense),
    L2Norm,
}

#[derive(Debug, Clone)]
pub enum LayerCache {
    Conv(ConvCache),
    Pool(PoolCache),
    Inception(Box<InceptionCache>),
    Dense(DenseCache),
    L2Norm { input: Vec<f64>, output: Vec<f64> },
}

impl Layer {
    /// Builds the runtime layer for an input of `in_shape` (H×W×C).
    pub fn from_spec(spec: &LayerSpec, in_shape: [usize; 3]) -> Result<Self, NnError> {
        let [_, _, c_in] = in_shape;
        let positive = |what: &str, v: usize| {
            if v == 0 {
                Err(NnError::Spec(format!("{}: {what} must be positive", spec.name())))
            } else {
                Ok(())
            }
        };
        Ok(match spec {
            LayerSpec::Conv {
                kernel,
                stride,
                out_channels,
                padding,
                relu,
                ..
            } => {
                positive("kernel", *kernel)?;
                positive("stride", *stride)?;
                positive("out_channels", *out_channels)?;
                Layer::Conv(Conv::new(*kernel, *stride, *padding, c_in, *out_channels, *relu))
            }
            LayerSpec::Maxpool {
                kernel,
                stride,
                padding,
                ..
            }
            | LayerSpec::Avgpool {
                kernel,
                stride,
                padding,
                ..
            } => {
                positive("kernel", *kernel)?;
                positive("stride", *stride)?;
                let pool = Pool {
                    k: *kernel,
                    stride: *stride,
                    padding: *padding,
                };
                if matches!(spec, LayerSpec::Maxpool { .. }) {
                    Layer::MaxPool(pool)
                } else {
                    Layer::AvgPool(pool)
                }
            }
            LayerSpec::Inception { widths, relu, .. } => {
                widths.validate()?;
                Layer::Inception(Box::new(Inception::new(*widths, c_in, *relu)))
            }
            LayerSpec::FullyConnected {
                out_features, relu, ..
            } => {
                positive("out_features", *out_features)?;
                Layer::Dense(Dense::new(in_shape.iter().product(), *out_features, *relu))
            }
            LayerSpec::L2norm { .. } => Layer::L2Norm,
        })
    }

    pub fn output_shape(&self, in_shape: [usize; 3]) -> Result<[usize; 3], NnError> {
        let [h, w, c] = in_shape;
        let spatial = |k, s, p| -> Result<(usize, usize), NnError> {
            Ok((ops::out_extent(h, k, s, p)?.0, ops::out_extent(w, k, s, p)?.0))
        };
        Ok(match self {
            Layer::Conv(conv) => {
                let (oh, ow) = spatial(conv.k, conv.stride, conv.padding)?;
                [oh, ow, conv.c_out]
            }
            Layer::MaxPool(p) | Layer::AvgPool(p) => {
                let (oh, ow) = spatial(p.k, p.stride, p.padding)?;
                [oh, ow, c]
            }
            Layer::Inception(inc) => [h, w, inc.spec.out_channels()],
            Layer::Dense(d) => [1, 1, d.n_out],
            Layer::L2Norm => in_shape,
        })
    }

    pub fn init(&mut self, rng: &mut impl Rng) {
        match self {
            Layer::Conv(c) => c.init(rng),
            Layer::Inception(inc) => {
                for c in inc.convs_mut() {
                    c.init(rng);
                }
            }
            Layer::Dense(d) => d.init(rng),
            Layer::MaxPool(_) | Layer::AvgPool(_) | Layer::L2Norm => {}
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv(c) => c.param_count(),
            Layer::Inception(inc) => inc.param_count(),
            Layer::Dense(d) => d.param_count(),
            Layer::MaxPool(_) | Layer::AvgPool(_) | Layer::L2Norm => 0,
        }
    }

    /// Parameter blocks in canonical order (weights before bias).
    pub fn blocks(&self) -> Vec<&Vec<f64>> {
        match self {
            Layer::Conv(c) => vec![&c.weights, &c.bias],
            Layer::Inception(inc) => inc
                .convs()
                .into_iter()
                .flat_map(|c| [&c.weights, &c.bias])
                .collect(),
            Layer::Dense(d) => vec![&d.weights, &d.bias],
            Layer::MaxPool(_) | Layer::AvgPool(_) | Layer::L2Norm => vec![],
        }
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut Vec<f64>> {
        match self {
            Layer::Conv(c) => vec![&mut c.weights, &mut c.bias],
            Layer::Inception(inc) => inc
                .convs_mut()
                .into_iter()
                .flat_map(|c| [&mut c.weights, &mut c.bias])
                .collect(),
            Layer::Dense(d) => vec![&mut d.weights, &mut d.bias],
            Layer::MaxPool(_) | Layer::AvgPool(_) | Layer::L2Norm => vec![],
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        match self {
            Layer::Conv(c) => c.forward(x),
            Layer::MaxPool(p) => ops::maxpool2d(x, p.k, p.stride, p.padding),
            Layer::AvgPool(p) => ops::avgpool2d(x, p.k, p.stride, p.padding),
            Layer::Inception(inc) => inc.forward(x),
            Layer::Dense(d) => d.forward(x),
            Layer::L2Norm => Tensor::new(x.shape().to_vec(), ops::l2_normalize(x.data())),
        }
    }

    pub fn forward_train(&self, x: &Tensor) -> Result<(Tensor, LayerCache), NnError> {
        Ok(match self {
            Layer::Conv(c) => {
                let (y, cache) = c.forward_train(x)?;
                (y, LayerCache::Conv(cache))
            }
            Layer::MaxPool(p) => {
                let (y, cache) = p.forward_max(x)?;
                (y, LayerCache::Pool(cache))
            }
            Layer::AvgPool(p) => {
                let (y, cache) = p.forward_avg(x)?;
                (y, LayerCache::Pool(cache))
            }
            Layer::Inception(inc) => {
                let (y, cache) = inc.forward_train(x)?;
                (y, LayerCache::Inception(Box::new(cache)))
            }
            Layer::Dense(d) => {
                let (y, cache) = d.forward_train(x)?;
                (y, LayerCache::Dense(cache))
            }
            Layer::L2Norm => {
                let y = ops::l2_normalize(x.data());
                let cache = LayerCache::L2Norm {
                    input: x.data().to_vec(),
                    output: y.clone(),
                };
                (Tensor::new(x.shape().to_vec(), y)?, cache)
            }
        })
    }

    /// Accumulates parameter gradients into `grads` (this layer's blocks) and
    /// returns the input gradient when `need_dx`.
    pub fn backward(&self, cache: &LayerCache, gy: Vec<f64>, grads: &mut [Vec<f64>], need_dx: bool) -> Option<Vec<f64>> {
        match (self, cache) {
            (Layer::Conv(c), LayerCache::Conv(cc)) => c.backward(cc, gy, grads, need_dx),
            (Layer::MaxPool(_) | Layer::AvgPool(_), LayerCache::Pool(pc)) => {
                need_dx.then(|| Pool::backward(pc, &gy))
            }
            (Layer::Inception(inc), LayerCache::Inception(ic)) => inc.backward(ic, &gy, grads, need_dx),
            (Layer::Dense(d), LayerCache::Dense(dc)) => d.backward(dc, gy, grads, need_dx),
            (Layer::L2Norm, LayerCache::L2Norm { input, output }) => {
                need_dx.then(|| ops::l2_normalize_backward(input, output, &gy))
            }
            _ => unreachable!("cache does not belong to this layer"),
        }
    }
}
