//! Bias-free fully-connected blocks with explicit reverse passes.
//!
//! A block is a chain of linear maps `W_k` (row-major `out × in`, the
//! `Linear`/`Conv2d(·,·,1)` weight convention), each followed by an optional
//! ReLU. [`DenseBlock`] maps one feature vector; [`PerCoordBlock`] applies the
//! same chain independently at every coordinate of a `channels × d` input,
//! which is exactly a stack of `1×1` convolutions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Widest layer supported by the allocation-free inference path.
pub const MAX_WIDTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Self::Relu => z.max(0.0),
            Self::Identity => z,
        }
    }

    /// Derivative with the convention `ReLU'(0) = 0`.
    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Self::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Identity => 1.0,
        }
    }
}

/// Layer widths and the activation following each layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl BlockSpec {
    pub fn new(widths: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        if widths.len() < 2 || activations.len() != widths.len() - 1 {
            return Err(Error::Shape(format!(
                "{} widths need {} activations, got {}",
                widths.len(),
                widths.len().saturating_sub(1),
                activations.len()
            )));
        }
        if widths.iter().any(|&w| w == 0 || w > MAX_WIDTH) {
            return Err(Error::Shape(format!("layer widths must lie in 1..={MAX_WIDTH}")));
        }
        Ok(Self { widths, activations })
    }

    pub fn n_layers(&self) -> usize {
        self.activations.len()
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1]).sum()
    }

    /// `(fan_in, fan_out, offset)` of every layer in the flat weight vector.
    pub fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.widths.windows(2).scan(0, |off, w| {
            let item = (w[0], w[1], *off);
            *off += w[0] * w[1];
            Some(item)
        })
    }

    /// Forward pass without caching.
    pub fn forward(&self, weights: &[f64], input: &[f64], out: &mut [f64]) {
        debug_assert_eq!(weights.len(), self.n_params());
        debug_assert_eq!(input.len(), self.input_dim());
        let mut a = [0.0; MAX_WIDTH];
        let mut b = [0.0; MAX_WIDTH];
        a[..input.len()].copy_from_slice(input);
        for ((fan_in, fan_out, off), act) in self.layers().zip(&self.activations) {
            let w = &weights[off..off + fan_in * fan_out];
            for (o, row) in b[..fan_out].iter_mut().zip(w.chunks_exact(fan_in)) {
                let z: f64 = row.iter().zip(&a[..fan_in]).map(|(wi, xi)| wi * xi).sum();
                *o = act.apply(z);
            }
            std::mem::swap(&mut a, &mut b);
        }
        out.copy_from_slice(&a[..self.output_dim()]);
    }

    /// Forward pass recording every layer input and pre-activation.
    pub fn forward_cached(&self, weights: &[f64], input: &[f64]) -> (Vec<f64>, ForwardCache) {
        let mut cache = ForwardCache { inputs: Vec::new(), pre_activations: Vec::new() };
        let mut a = input.to_vec();
        for ((fan_in, fan_out, off), act) in self.layers().zip(&self.activations) {
            let w = &weights[off..off + fan_in * fan_out];
            let z: Vec<f64> = w
                .chunks_exact(fan_in)
                .map(|row| row.iter().zip(&a).map(|(wi, xi)| wi * xi).sum())
                .collect();
            let next = z.iter().map(|&zi| act.apply(zi)).collect();
            cache.inputs.push(std::mem::replace(&mut a, next));
            cache.pre_activations.push(z);
        }
        (a, cache)
    }

    /// Reverse pass: returns `∂L/∂input` and accumulates `∂L/∂W` into
    /// `weight_grad`.
    pub fn backward(
        &self,
        weights: &[f64],
        cache: &ForwardCache,
        upstream: &[f64],
        weight_grad: &mut [f64],
    ) -> Result<Vec<f64>> {
        if cache.inputs.len() != self.n_layers() || cache.pre_activations.len() != self.n_layers() {
            return Err(Error::Usage("backward called without a matching forward cache".into()));
        }
        if upstream.len() != self.output_dim() || weight_grad.len() != self.n_params() {
            return Err(Error::Shape("upstream or weight-gradient buffer has the wrong size".into()));
        }
        let layers: Vec<_> = self.layers().collect();
        let mut delta = upstream.to_vec();
        for k in (0..self.n_layers()).rev() {
            let (fan_in, fan_out, off) = layers[k];
            let act = self.activations[k];
            for (d, &z) in delta.iter_mut().zip(&cache.pre_activations[k]) {
                *d *= act.derivative(z);
            }
            let input = &cache.inputs[k];
            let w = &weights[off..off + fan_in * fan_out];
            let gw = &mut weight_grad[off..off + fan_in * fan_out];
            let mut below = vec![0.0; fan_in];
            for o in 0..fan_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &w[o * fan_in..(o + 1) * fan_in];
                let grow = &mut gw[o * fan_in..(o + 1) * fan_in];
                for i in 0..fan_in {
                    grow[i] += d * input[i];
                    below[i] += d * row[i];
                }
            }
            delta = below;
        }
        Ok(delta)
    }
}

/// Activations recorded by [`BlockSpec::forward_cached`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForwardCache {
    inputs: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
}

/// Fully-connected block on a single feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseBlock {
    pub spec: BlockSpec,
    pub weights: Vec<f64>,
}

impl DenseBlock {
    pub fn new(spec: BlockSpec, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != spec.n_params() {
            return Err(Error::Shape(format!("expected {} weights, got {}", spec.n_params(), weights.len())));
        }
        Ok(Self { spec, weights })
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.spec.output_dim()];
        self.spec.forward(&self.weights, input, &mut out);
        out
    }

    pub fn forward_cached(&self, input: &[f64]) -> (Vec<f64>, ForwardCache) {
        self.spec.forward_cached(&self.weights, input)
    }

    /// `(∂L/∂input, ∂L/∂W)`
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut gw = vec![0.0; self.spec.n_params()];
        let gi = self.spec.backward(&self.weights, cache, upstream, &mut gw)?;
        Ok((gi, gw))
    }
}

/// The same channel-mixing chain applied at every coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct PerCoordBlock {
    pub spec: BlockSpec,
    pub weights: Vec<f64>,
}

/// Per-coordinate forward caches.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PerCoordCache(pub Vec<ForwardCache>);

impl PerCoordBlock {
    pub fn new(spec: BlockSpec, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != spec.n_params() {
            return Err(Error::Shape(format!("expected {} weights, got {}", spec.n_params(), weights.len())));
        }
        Ok(Self { spec, weights })
    }

    /// `channels[c][i]` → `out[c'][i]`.
    pub fn forward(&self, channels: &[Vec<f64>]) -> Vec<Vec<f64>> {
        per_coord_forward(&self.spec, &self.weights, channels)
    }

    pub fn forward_cached(&self, channels: &[Vec<f64>]) -> (Vec<Vec<f64>>, PerCoordCache) {
        let d = channels.first().map_or(0, Vec::len);
        let mut out = vec![vec![0.0; d]; self.spec.output_dim()];
        let mut caches = Vec::with_capacity(d);
        for i in 0..d {
            let input: Vec<f64> = channels.iter().map(|c| c[i]).collect();
            let (o, cache) = self.spec.forward_cached(&self.weights, &input);
            for (oc, v) in out.iter_mut().zip(o) {
                oc[i] = v;
            }
            caches.push(cache);
        }
        (out, PerCoordCache(caches))
    }

    /// `(∂L/∂channels, ∂L/∂W)`, weight gradients summed over coordinates.
    pub fn backward(&self, cache: &PerCoordCache, upstream: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let d = cache.0.len();
        if d == 0 {
            return Err(Error::Usage("backward called without a forward cache".into()));
        }
        if upstream.len() != self.spec.output_dim() || upstream.iter().any(|u| u.len() != d) {
            return Err(Error::Shape("upstream gradient has the wrong shape".into()));
        }
        let mut gw = vec![0.0; self.spec.n_params()];
        let mut gin = vec![vec![0.0; d]; self.spec.input_dim()];
        for (i, c) in cache.0.iter().enumerate() {
            let up: Vec<f64> = upstream.iter().map(|u| u[i]).collect();
            let g = self.spec.backward(&self.weights, c, &up, &mut gw)?;
            for (gc, v) in gin.iter_mut().zip(g) {
                gc[i] = v;
            }
        }
        Ok((gin, gw))
    }
}

/// Inference-only per-coordinate forward on borrowed weights.
pub fn per_coord_forward(spec: &BlockSpec, weights: &[f64], channels: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = channels.first().map_or(0, Vec::len);
    let mut out = vec![vec![0.0; d]; spec.output_dim()];
    let mut input = [0.0; MAX_WIDTH];
    let mut o = [0.0; MAX_WIDTH];
    let (n_in, n_out) = (spec.input_dim(), spec.output_dim());
    for i in 0..d {
        for (slot, c) in input[..n_in].iter_mut().zip(channels) {
            *slot = c[i];
        }
        spec.forward(weights, &input[..n_in], &mut o[..n_out]);
        for (oc, v) in out.iter_mut().zip(&o[..n_out]) {
            oc[i] = *v;
        }
    }
    out
}
