//! Dense feed-forward networks with hand-rolled reverse-mode gradients.
//!
//! A [`DenseNet`] is a stack of [`DenseLayer`]s, each computing
//! `y = act(W x + b)` with `W` stored row-major `(out, in)`. The forward
//! pass records every layer's input and post-activation output in a
//! [`ForwardCache`]; the backward pass replays it with the chain rule.
//! All arithmetic is `f64`.

use rand::Rng;

use crate::error::{Error, Result};

/// Element-wise activation applied after the affine transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Identity,
}

/// Largest f64 strictly below 1. Saturating activations clamp into the open
/// interval their math promises even where f64 rounding would hit ±1 exactly.
const INSIDE_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh().clamp(-INSIDE_ONE, INSIDE_ONE),
            Activation::Sigmoid => {
                (1.0 / (1.0 + (-z).exp())).clamp(f64::MIN_POSITIVE, INSIDE_ONE)
            }
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `y = act(z)`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Value(format!("unknown activation `{other}`"))),
        }
    }
}

/// One dense layer: weights `(out, in)` row-major, bias `(out)`, activation.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `(out_dim, in_dim)`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    /// Zero weights and biases.
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        DenseLayer {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    /// Scaled uniform init: weights in `±sqrt(6/(in+out))`, biases zero.
    pub fn init<R: Rng>(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        DenseLayer { in_dim, out_dim, weights, bias: vec![0.0; out_dim], activation }
    }

    pub fn from_parts(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if weights.len() != in_dim * out_dim {
            return Err(Error::Shape(format!(
                "weight matrix has {} entries, expected {}x{}",
                weights.len(),
                out_dim,
                in_dim
            )));
        }
        if bias.len() != out_dim {
            return Err(Error::Shape(format!(
                "bias has {} entries, expected {}",
                bias.len(),
                out_dim
            )));
        }
        Ok(DenseLayer { in_dim, out_dim, weights, bias, activation })
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Sequential stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    pub layers: Vec<DenseLayer>,
}

/// Activation record from one forward pass: the input followed by every
/// layer's post-activation output.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `values[0]` is the net input, `values[i]` the output of layer `i-1`.
    values: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.values.last().expect("cache holds at least the input")
    }
}

/// Per-parameter gradients, shaped like the owning [`DenseNet`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGrads>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl GradientSet {
    pub fn zeros_like(net: &DenseNet) -> Self {
        GradientSet {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn matches(&self, net: &DenseNet) -> bool {
        self.layers.len() == net.layers.len()
            && self
                .layers
                .iter()
                .zip(&net.layers)
                .all(|(g, l)| g.weights.len() == l.weights.len() && g.bias.len() == l.bias.len())
    }

    pub fn scale(&mut self, factor: f64) {
        for layer in &mut self.layers {
            for w in &mut layer.weights {
                *w *= factor;
            }
            for b in &mut layer.bias {
                *b *= factor;
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().all(|&w| w == 0.0) && l.bias.iter().all(|&b| b == 0.0))
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().all(|w| w.is_finite()) && l.bias.iter().all(|b| b.is_finite()))
    }

    /// Iterate all gradient entries in parameter order (weights then bias per layer).
    pub fn iter_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four partial sums so the reduction vectorizes.
    let chunks = a.len() / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..chunks {
        let j = i * 4;
        s0 += a[j] * b[j];
        s1 += a[j + 1] * b[j + 1];
        s2 += a[j + 2] * b[j + 2];
        s3 += a[j + 3] * b[j + 3];
    }
    let mut sum = (s0 + s1) + (s2 + s3);
    for i in chunks * 4..a.len() {
        sum += a[i] * b[i];
    }
    sum
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl DenseNet {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Shape(format!(
                    "layer {} outputs {} values but layer {} expects {}",
                    i,
                    pair[0].out_dim,
                    i + 1,
                    pair[1].in_dim
                )));
            }
        }
        Ok(DenseNet { layers })
    }

    /// Two-layer net `in -> hidden -> out` with one activation throughout,
    /// the shape every component of this crate uses.
    pub fn two_layer<R: Rng>(
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        DenseNet {
            layers: vec![
                DenseLayer::init(in_dim, hidden, activation, rng),
                DenseLayer::init(hidden, out_dim, activation, rng),
            ],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    /// Forward pass. Returns the output and the activation record needed by
    /// [`DenseNet::backward`].
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} values, net expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(x.to_vec());
        for layer in &self.layers {
            let input = values.last().unwrap();
            let mut out = Vec::with_capacity(layer.out_dim);
            for o in 0..layer.out_dim {
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                out.push(layer.activation.apply(dot(row, input) + layer.bias[o]));
            }
            values.push(out);
        }
        let output = values.last().unwrap().clone();
        Ok((output, ForwardCache { values }))
    }

    /// Output only, when no backward pass will follow.
    pub fn infer(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x).map(|(y, _)| y)
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<()> {
        if cache.values.len() != self.layers.len() + 1 {
            return Err(Error::Shape(format!(
                "cache holds {} records, net with {} layers expects {}",
                cache.values.len(),
                self.layers.len(),
                self.layers.len() + 1
            )));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if cache.values[i].len() != layer.in_dim || cache.values[i + 1].len() != layer.out_dim {
                return Err(Error::Shape(format!(
                    "cache record {i} does not match layer {i} shape; \
                     was it produced by a different net?"
                )));
            }
        }
        Ok(())
    }

    /// Backward pass: upstream gradient `dy` in, input gradient and fresh
    /// parameter gradients out.
    pub fn backward(&self, cache: &ForwardCache, dy: &[f64]) -> Result<(Vec<f64>, GradientSet)> {
        let mut grads = GradientSet::zeros_like(self);
        let dx = self.backward_acc(cache, dy, &mut grads)?;
        Ok((dx, grads))
    }

    /// Backward pass accumulating parameter gradients into `acc` (scaled by 1).
    /// `acc` must be shape-congruent with this net.
    pub fn backward_acc(
        &self,
        cache: &ForwardCache,
        dy: &[f64],
        acc: &mut GradientSet,
    ) -> Result<Vec<f64>> {
        self.check_cache(cache)?;
        if dy.len() != self.output_dim() {
            return Err(Error::Shape(format!(
                "upstream gradient has {} values, output has {}",
                dy.len(),
                self.output_dim()
            )));
        }
        if !acc.matches(self) {
            return Err(Error::Shape("gradient accumulator does not match net".into()));
        }
        let mut delta = dy.to_vec();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.values[idx];
            let output = &cache.values[idx + 1];
            // dz = dy ⊙ act'(z), with act' read off the cached output.
            for (d, y) in delta.iter_mut().zip(output) {
                *d *= layer.activation.derivative_from_output(*y);
            }
            let lg = &mut acc.layers[idx];
            let mut dx = vec![0.0; layer.in_dim];
            for o in 0..layer.out_dim {
                let dz = delta[o];
                lg.bias[o] += dz;
                let row = o * layer.in_dim..(o + 1) * layer.in_dim;
                axpy(dz, input, &mut lg.weights[row.clone()]);
                axpy(dz, &layer.weights[row], &mut dx);
            }
            delta = dx;
        }
        Ok(delta)
    }

    /// Input gradient only; parameter gradients are not computed. Used when a
    /// loss flows *through* a frozen net into an upstream one.
    pub fn backward_input(&self, cache: &ForwardCache, dy: &[f64]) -> Result<Vec<f64>> {
        self.check_cache(cache)?;
        if dy.len() != self.output_dim() {
            return Err(Error::Shape(format!(
                "upstream gradient has {} values, output has {}",
                dy.len(),
                self.output_dim()
            )));
        }
        let mut delta = dy.to_vec();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let output = &cache.values[idx + 1];
            for (d, y) in delta.iter_mut().zip(output) {
                *d *= layer.activation.derivative_from_output(*y);
            }
            let mut dx = vec![0.0; layer.in_dim];
            for o in 0..layer.out_dim {
                let row = o * layer.in_dim..(o + 1) * layer.in_dim;
                axpy(delta[o], &layer.weights[row], &mut dx);
            }
            delta = dx;
        }
        Ok(delta)
    }

    /// Visit every parameter in a fixed order (weights then bias, layer by layer).
    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for layer in &mut self.layers {
            for w in &mut layer.weights {
                f(w);
            }
            for b in &mut layer.bias {
                f(b);
            }
        }
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
        out
    }
}
