//! Two-layer perceptrons with cached forward passes and exact backprop.
//!
//! Weights are stored `(out, in)`. Batches are row-major `(batch, features)`,
//! so a layer computes `Y = act(X Wᵀ + b)`.

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

static STAMP: AtomicU64 = AtomicU64::new(1);

fn next_stamp() -> u64 {
    STAMP.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One fully connected layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        input_dim: usize,
        output_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (input_dim + output_dim) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
        let weights = Array2::from_shape_simple_fn((output_dim, input_dim), || dist.sample(rng));
        Self {
            weights,
            bias: Array1::zeros(output_dim),
            activation,
        }
    }

    pub fn zeros(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        Self {
            weights: Array2::zeros((output_dim, input_dim)),
            bias: Array1::zeros(output_dim),
            activation,
        }
    }
}

/// Exactly two dense layers: a hidden ReLU layer and an identity output head.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerStack {
    layers: Vec<Dense>,
    #[serde(skip, default = "next_stamp")]
    stamp: u64,
}

impl PartialEq for LayerStack {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Activations recorded by a forward pass, consumed by [`LayerStack::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    stamp: u64,
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.inputs[0].nrows()
    }

    /// Pre-activation values of layer `k`.
    pub fn pre_activation(&self, k: usize) -> &Array2<f64> {
        &self.pre[k]
    }
}

impl LayerStack {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.len() != 2 {
            return Err(invalid(format!(
                "a layer stack has exactly two layers, got {}",
                layers.len()
            )));
        }
        for l in &layers {
            if l.bias.len() != l.output_dim() || l.input_dim() == 0 || l.output_dim() == 0 {
                return Err(invalid("layer weight/bias shapes disagree"));
            }
            if l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(invalid("non-finite layer parameter"));
            }
        }
        if layers[0].output_dim() != layers[1].input_dim() {
            return Err(invalid(format!(
                "layer dimensions do not chain: {} -> {}",
                layers[0].output_dim(),
                layers[1].input_dim()
            )));
        }
        Ok(Self {
            layers,
            stamp: next_stamp(),
        })
    }

    /// ReLU hidden layer of width `hidden`, identity output, Glorot init.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden: usize, output_dim: usize, rng: &mut R) -> Self {
        let first = Dense::glorot(input_dim, hidden, Activation::Relu, rng);
        let second = Dense::glorot(hidden, output_dim, Activation::Identity, rng);
        Self::new(vec![first, second]).expect("consistent dimensions")
    }

    pub fn zeros(input_dim: usize, hidden: usize, output_dim: usize) -> Self {
        Self::new(vec![
            Dense::zeros(input_dim, hidden, Activation::Relu),
            Dense::zeros(hidden, output_dim, Activation::Identity),
        ])
        .expect("consistent dimensions")
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[1].output_dim()
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// Mutable access to one layer. Invalidates outstanding forward caches.
    pub fn layer_mut(&mut self, k: usize) -> &mut Dense {
        self.stamp = next_stamp();
        &mut self.layers[k]
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Appends parameters in layout order: per layer, weights row-major then bias.
    pub fn write_flat(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
    }

    /// Reads parameters from the front of `flat`, returning the remainder.
    pub fn read_flat<'a>(&mut self, flat: &'a [f64]) -> Result<&'a [f64]> {
        let n = self.num_params();
        if flat.len() < n {
            return Err(Error::Contract(format!(
                "flat parameter vector too short: need {n}, have {}",
                flat.len()
            )));
        }
        let (mine, rest) = flat.split_at(n);
        let mut it = mine.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w = it.next().unwrap());
            l.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        self.stamp = next_stamp();
        Ok(rest)
    }

    /// Single-vector forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        let x = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| invalid(e.to_string()))?;
        let (y, cache) = self.forward_batch(x)?;
        Ok((y.into_raw_vec_and_offset().0, cache))
    }

    /// Forward pass over a `(batch, input_dim)` matrix.
    pub fn forward_batch(&self, input: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        if input.ncols() != self.input_dim() {
            return Err(invalid(format!(
                "expected input width {}, got {}",
                self.input_dim(),
                input.ncols()
            )));
        }
        let mut inputs = Vec::with_capacity(2);
        let mut pre = Vec::with_capacity(2);
        let mut current = input.to_owned();
        for l in &self.layers {
            let z = current.dot(&l.weights.t()) + &l.bias;
            let act = l.activation;
            let y = z.mapv(|v| act.apply(v));
            inputs.push(current);
            pre.push(z);
            current = y;
        }
        Ok((
            current,
            ForwardCache {
                stamp: self.stamp,
                inputs,
                pre,
            },
        ))
    }

    /// Forward pass without keeping a cache.
    pub fn predict(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_batch(input)?.0)
    }

    /// Backpropagates `upstream = dL/d(output)` through the cached pass.
    /// Returns parameter gradients (summed over the batch) and `dL/d(input)`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        upstream: ArrayView2<f64>,
    ) -> Result<(StackGrads, Array2<f64>)> {
        if cache.stamp != self.stamp {
            return Err(Error::Contract(
                "forward cache is stale: parameters changed since the forward pass".into(),
            ));
        }
        if upstream.dim() != (cache.batch_size(), self.output_dim()) {
            return Err(Error::Contract(format!(
                "upstream gradient shape {:?} does not match ({}, {})",
                upstream.dim(),
                cache.batch_size(),
                self.output_dim()
            )));
        }
        let mut grads = vec![None, None];
        let mut g = upstream.to_owned();
        for k in (0..self.layers.len()).rev() {
            let l = &self.layers[k];
            let act = l.activation;
            if act != Activation::Identity {
                g.zip_mut_with(&cache.pre[k], |gv, &p| *gv *= act.derivative(p));
            }
            let dw = g.t().dot(&cache.inputs[k]);
            let db = g.sum_axis(Axis(0));
            let g_in = g.dot(&l.weights);
            grads[k] = Some(DenseGrad {
                weights: dw,
                bias: db,
            });
            g = g_in;
        }
        Ok((
            StackGrads {
                layers: grads.into_iter().map(Option::unwrap).collect(),
            },
            g,
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Gradient buffers laid out like a [`LayerStack`].
#[derive(Debug, Clone, PartialEq)]
pub struct StackGrads {
    pub layers: Vec<DenseGrad>,
}

impl StackGrads {
    pub fn zeros_like(net: &LayerStack) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| DenseGrad {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &StackGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights += &b.weights;
            a.bias += &b.bias;
        }
    }

    pub fn write_flat(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }
}
