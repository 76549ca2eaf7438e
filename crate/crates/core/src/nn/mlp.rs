use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `y = f(z)` (and `z` for relu).
    #[inline]
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// One affine layer; `weights` is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    #[inline]
    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (row, b) in self.weights.chunks_exact(self.inputs).zip(&self.biases) {
            let mut acc = *b;
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            out.push(acc);
        }
    }
}

/// Parameter-shaped buffer. Used for gradients and for optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            layers: mlp
                .layers
                .iter()
                .map(|l| Layer::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
            l.biases.iter_mut().for_each(|b| *b = 0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w *= factor);
            l.biases.iter_mut().for_each(|b| *b *= factor);
        }
    }

    /// Flat view in canonical order: layer 0 weights, layer 0 biases, layer 1 weights, ...
    pub fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.biases.as_slice()])
    }

    pub fn slices_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weights, &mut l.biases])
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .flat_map(|s| s.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Cached intermediate values of a forward pass, consumed by backprop.
#[derive(Debug, Clone, Default)]
pub struct ForwardTrace {
    /// `activations[0]` is the input; `activations[i + 1]` is the output of layer `i`.
    activations: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    hidden_activation: Activation,
    output_activation: Activation,
    layers: Vec<Layer>,
}

impl Mlp {
    /// Builds a network with Glorot-uniform weights and zero biases.
    pub fn new(
        layer_sizes: &[usize],
        hidden_activation: Activation,
        output_activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        let mut mlp = Self::zeros(layer_sizes, hidden_activation, output_activation)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut mlp.layers {
            let limit = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-limit..=limit);
            }
        }
        Ok(mlp)
    }

    pub fn zeros(
        layer_sizes: &[usize],
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidArchitecture(format!(
                "need at least an input and an output size, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::InvalidArchitecture(format!(
                "layer sizes must be positive, got {layer_sizes:?}"
            )));
        }
        let layers = layer_sizes
            .windows(2)
            .map(|w| Layer::zeros(w[0], w[1]))
            .collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            hidden_activation,
            output_activation,
            layers,
        })
    }

    /// Reassembles a network from explicit layers, validating that shapes chain.
    pub fn from_layers(
        layers: Vec<Layer>,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::InvalidArchitecture("no layers".into()))?;
        let mut layer_sizes = vec![first.inputs];
        for (i, l) in layers.iter().enumerate() {
            if l.inputs == 0 || l.outputs == 0 {
                return Err(Error::InvalidArchitecture(format!(
                    "layer {i} has a zero dimension"
                )));
            }
            if l.inputs != *layer_sizes.last().unwrap() {
                return Err(Error::InvalidArchitecture(format!(
                    "layer {i} expects {} inputs but previous layer emits {}",
                    l.inputs,
                    layer_sizes.last().unwrap()
                )));
            }
            if l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(Error::InvalidArchitecture(format!(
                    "layer {i} parameter buffers do not match {}x{}",
                    l.outputs, l.inputs
                )));
            }
            layer_sizes.push(l.outputs);
        }
        Ok(Self {
            layer_sizes,
            hidden_activation,
            output_activation,
            layers,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    pub fn slices_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weights, &mut l.biases])
    }

    fn activation_for(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), x.len())?;
        let mut current = x.to_vec();
        let mut next = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.affine(&current, &mut next);
            let act = self.activation_for(i);
            next.iter_mut().for_each(|v| *v = act.apply(*v));
            std::mem::swap(&mut current, &mut next);
        }
        Ok(current)
    }

    pub fn forward_trace(&self, x: &[f64], trace: &mut ForwardTrace) -> Result<()> {
        check_dim(self.input_dim(), x.len())?;
        let n = self.layers.len();
        trace.activations.resize_with(n + 1, Vec::new);
        trace.pre_activations.resize_with(n, Vec::new);
        trace.activations[0].clear();
        trace.activations[0].extend_from_slice(x);
        for (i, layer) in self.layers.iter().enumerate() {
            let (done, rest) = trace.activations.split_at_mut(i + 1);
            let z = &mut trace.pre_activations[i];
            layer.affine(&done[i], z);
            let act = self.activation_for(i);
            let a = &mut rest[0];
            a.clear();
            a.extend(z.iter().map(|v| act.apply(*v)));
        }
        Ok(())
    }

    /// Accumulates d(output . upstream)/d(params) into `grads` using a trace from
    /// [`Mlp::forward_trace`] on the same parameters.
    pub fn backward_accumulate(
        &self,
        trace: &ForwardTrace,
        upstream: &[f64],
        grads: &mut Gradients,
    ) -> Result<()> {
        check_dim(self.output_dim(), upstream.len())?;
        if trace.pre_activations.len() != self.layers.len() {
            return Err(Error::InvalidArgument(
                "trace does not belong to this network".into(),
            ));
        }
        let mut delta: Vec<f64> = upstream.to_vec();
        let mut prev_delta = Vec::new();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let act = self.activation_for(i);
            let z = &trace.pre_activations[i];
            let y = &trace.activations[i + 1];
            for ((d, zi), yi) in delta.iter_mut().zip(z).zip(y) {
                *d *= act.derivative(*zi, *yi);
            }
            let input = &trace.activations[i];
            let g = &mut grads.layers[i];
            for (o, d) in delta.iter().enumerate() {
                g.biases[o] += d;
                if *d != 0.0 {
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (gw, xi) in row.iter_mut().zip(input) {
                        *gw += d * xi;
                    }
                }
            }
            if i > 0 {
                prev_delta.clear();
                prev_delta.resize(layer.inputs, 0.0);
                for (row, d) in layer.weights.chunks_exact(layer.inputs).zip(&delta) {
                    if *d != 0.0 {
                        for (p, w) in prev_delta.iter_mut().zip(row) {
                            *p += d * w;
                        }
                    }
                }
                std::mem::swap(&mut delta, &mut prev_delta);
            }
        }
        Ok(())
    }

    /// Gradient of `output(x) . upstream` with respect to every parameter.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<Gradients> {
        let mut trace = ForwardTrace::default();
        self.forward_trace(x, &mut trace)?;
        let mut grads = Gradients::zeros_like(self);
        self.backward_accumulate(&trace, upstream, &mut grads)?;
        Ok(grads)
    }
}
