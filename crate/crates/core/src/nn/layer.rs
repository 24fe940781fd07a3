//! Dense layers and the feed-forward stack used by every head.
//!
//! Weights are stored `(in_dim, out_dim)` so a batch `x` of shape
//! `(batch, in_dim)` maps to `x * W + b`. `backward` needs the
//! [`ForwardCache`] produced by the matching `forward` call; a cache taken
//! before the parameters changed is rejected.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::{sigmoid, Gradients, Matrix, Parameters};
use crate::{Error, Result};

static NEXT_STAMP: AtomicU64 = AtomicU64::new(1);

fn fresh_stamp() -> u64 {
    NEXT_STAMP.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite glorot bound");
        let data = (0..in_dim * out_dim).map(|_| dist.sample(rng)).collect();
        Self {
            weight: Matrix::from_vec(in_dim, out_dim, data).expect("sized by construction"),
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            weight: Matrix::zeros(in_dim, out_dim),
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    fn validate(&self) -> Result<()> {
        if self.bias.len() != self.out_dim() {
            return Err(Error::shape("DenseLayer", self.out_dim(), self.bias.len()));
        }
        if !self.weight.is_finite() || self.bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::Validation("layer parameters must be finite".into()));
        }
        Ok(())
    }

    fn pre_activation(&self, x: &Matrix) -> Result<Matrix> {
        let mut z = x.matmul(&self.weight)?;
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(z)
    }
}

/// Feed-forward stack of dense layers.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "MlpRepr")]
pub struct Mlp {
    layers: Vec<DenseLayer>,
    #[serde(skip, default = "fresh_stamp")]
    stamp: u64,
}

#[derive(Deserialize)]
struct MlpRepr {
    layers: Vec<DenseLayer>,
}

impl TryFrom<MlpRepr> for Mlp {
    type Error = Error;

    fn try_from(r: MlpRepr) -> Result<Self> {
        Mlp::from_layers(r.layers)
    }
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Activations recorded by [`Mlp::forward`] for use in [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    stamp: u64,
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
    outputs: Vec<Matrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.outputs.last().expect("at least one layer")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Per-layer gradients with the same shapes as the source [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradTape {
    pub layers: Vec<LayerGrad>,
}

impl GradTape {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            layers: mlp
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weight: Matrix::zeros(l.in_dim(), l.out_dim()),
                    bias: vec![0.0; l.out_dim()],
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &GradTape) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.as_mut_slice().iter_mut().zip(b.weight.as_slice()) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weight.as_slice().iter().all(|&v| v == 0.0) && l.bias.iter().all(|&v| v == 0.0)
        })
    }

    /// Flattens into the tensor order of [`Mlp`]'s [`Parameters`] impl.
    pub fn into_gradients(self) -> Gradients {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in self.layers {
            out.push(l.weight.into_vec());
            out.push(l.bias);
        }
        Gradients(out)
    }
}

impl Mlp {
    /// Builds a Glorot-initialized stack. `dims` lists every width, input
    /// first; `activations` has one entry per layer.
    pub fn new<R: Rng + ?Sized>(
        dims: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(Error::Config(format!(
                "mlp needs n+1 dims for n activations, got {} dims and {} activations",
                dims.len(),
                activations.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::Config("layer widths must be > 0".into()));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &act)| DenseLayer::glorot(w[0], w[1], act, rng))
            .collect();
        Self::from_layers(layers)
    }

    /// Hidden layers use ReLU; the last layer uses `output`.
    pub fn with_hidden<R: Rng + ?Sized>(
        in_dim: usize,
        hidden: &[usize],
        out_dim: usize,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(in_dim);
        dims.extend_from_slice(hidden);
        dims.push(out_dim);
        let mut acts = vec![Activation::Relu; hidden.len()];
        acts.push(output);
        Self::new(&dims, &acts, rng)
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("mlp needs at least one layer".into()));
        }
        for l in &layers {
            l.validate()?;
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::shape(
                    "Mlp::from_layers",
                    format!("layer {} in_dim {}", i + 1, w[0].out_dim()),
                    w[1].in_dim(),
                ));
            }
        }
        Ok(Self {
            layers,
            stamp: fresh_stamp(),
        })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// Mutable access invalidates outstanding forward caches.
    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        self.stamp = fresh_stamp();
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.as_slice().len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.in_dim() {
            return Err(Error::shape("Mlp::forward", self.in_dim(), x.cols()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut outputs: Vec<Matrix> = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        for layer in &self.layers {
            let z = layer.pre_activation(&current)?;
            let a = z.map(|v| layer.activation.apply(v));
            inputs.push(current);
            pre.push(z);
            current = a.clone();
            outputs.push(a);
        }
        if !current.is_finite() {
            return Err(Error::Validation("non-finite forward output".into()));
        }
        Ok((
            current,
            ForwardCache {
                stamp: self.stamp,
                inputs,
                pre,
                outputs,
            },
        ))
    }

    /// Forward pass without keeping activations.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut current = x.clone();
        for layer in &self.layers {
            let activation = layer.activation;
            current = layer.pre_activation(&current)?.map(|v| activation.apply(v));
        }
        Ok(current)
    }

    /// Returns parameter gradients and the gradient with respect to the input.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Matrix) -> Result<(GradTape, Matrix)> {
        if cache.stamp != self.stamp || cache.pre.len() != self.layers.len() {
            return Err(Error::Contract(
                "forward cache does not belong to this network state".into(),
            ));
        }
        let out = cache.output();
        if upstream.shape() != out.shape() {
            return Err(Error::shape(
                "Mlp::backward",
                format!("{:?}", out.shape()),
                format!("{:?}", upstream.shape()),
            ));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = upstream.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let z = &cache.pre[i];
            let a = &cache.outputs[i];
            let mut dz = delta;
            for ((g, &zv), &av) in dz
                .as_mut_slice()
                .iter_mut()
                .zip(z.as_slice())
                .zip(a.as_slice())
            {
                *g *= layer.activation.derivative(zv, av);
            }
            let weight = cache.inputs[i].t_matmul(&dz)?;
            let mut bias = vec![0.0; layer.out_dim()];
            for r in 0..dz.rows() {
                for (b, g) in bias.iter_mut().zip(dz.row(r)) {
                    *b += g;
                }
            }
            delta = dz.matmul_t(&layer.weight)?;
            grads.push(LayerGrad { weight, bias });
        }
        grads.reverse();
        Ok((GradTape { layers: grads }, delta))
    }
}

impl Parameters for Mlp {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("layer{i}.weight"), l.weight.as_slice()));
            out.push((format!("layer{i}.bias"), l.bias.as_slice()));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.stamp = fresh_stamp();
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in self.layers.iter_mut() {
            out.push(l.weight.as_mut_slice());
            out.push(l.bias.as_mut_slice());
        }
        out
    }
}
