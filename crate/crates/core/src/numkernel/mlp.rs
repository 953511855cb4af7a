//! Fully connected network with tanh hidden layers and a linear output layer,
//! plus its hand-derived backward pass.

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::params::Parameterized;
use super::rng::Rng;
use crate::error::{Error, Result};

/// One affine stage `y = W x + b`, with `W` stored as `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weight
            .iter_rows()
            .zip(&self.bias)
            .map(|(w, b)| super::matrix::dot(w, x) + b)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Gradients share the parameter layout.
pub type MlpGrads = Mlp;

impl Mlp {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("an MLP needs at least one layer"));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::shape(
                    "Mlp::new",
                    format!(
                        "layer {i}: bias length {} vs {} outputs",
                        layer.bias.len(),
                        layer.out_dim()
                    ),
                ));
            }
            if layer.weight.rows() == 0 || layer.weight.cols() == 0 {
                return Err(Error::invalid(format!("layer {i} has an empty weight matrix")));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::shape(
                    "Mlp::new",
                    format!(
                        "layer {i} outputs {} but layer {} expects {}",
                        pair[0].out_dim(),
                        i + 1,
                        pair[1].in_dim()
                    ),
                ));
            }
        }
        Ok(Self { layers })
    }

    /// Weights ~ U(-1/√fan_in, 1/√fan_in), biases zero. `sizes` lists every
    /// width from input to output.
    pub fn init(sizes: &[usize], rng: &mut Rng) -> Result<Self> {
        Self::build(sizes, |fan_in| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            rng.uniform_range(-bound, bound)
        })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        Self::build(sizes, |_| 0.0)
    }

    fn build(sizes: &[usize], mut draw: impl FnMut(usize) -> f64) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::invalid("need at least input and output sizes"));
        }
        let layers = sizes
            .windows(2)
            .map(|w| Dense {
                weight: Matrix::from_fn(w[1], w[0], |_, _| draw(w[0])),
                bias: vec![0.0; w[1]],
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Widths from input to output, the inverse of [`Mlp::init`]'s `sizes`.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Dense::out_dim))
            .collect()
    }

    fn check_input(&self, input: &[f64], context: &'static str) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::shape(
                context,
                format!(
                    "input length {} vs first-layer input dim {}",
                    input.len(),
                    self.input_dim()
                ),
            ));
        }
        if !input.iter().all(|v| v.is_finite()) {
            return Err(Error::non_finite(context));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input, "mlp_forward")?;
        let out = self.trace(input).pop().expect("trace holds the output");
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::non_finite("mlp_forward"))
        }
    }

    /// Activations of every stage, starting with the input itself.
    fn trace(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.apply(&acts[i]);
            if i != last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        acts
    }

    /// Gradients of `output · upstream` with respect to every parameter and
    /// to the input.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<(MlpGrads, Vec<f64>)> {
        self.check_input(input, "mlp_backward")?;
        if upstream.len() != self.output_dim() {
            return Err(Error::shape(
                "mlp_backward",
                format!("upstream length {} vs output dim {}", upstream.len(), self.output_dim()),
            ));
        }
        if !upstream.iter().all(|v| v.is_finite()) {
            return Err(Error::non_finite("mlp_backward"));
        }
        let acts = self.trace(input);
        let mut grads = self.zeroed_like();
        let mut delta = upstream.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let prev = &acts[l];
            let g = &mut grads.layers[l];
            for (o, &d) in delta.iter().enumerate() {
                g.bias[o] = d;
                for (k, &a) in prev.iter().enumerate() {
                    g.weight.set(o, k, d * a);
                }
            }
            let mut back = vec![0.0; layer.in_dim()];
            for (o, &d) in delta.iter().enumerate() {
                for (b, &w) in back.iter_mut().zip(layer.weight.row(o)) {
                    *b += w * d;
                }
            }
            if l > 0 {
                // prev is a tanh output: tanh' = 1 - tanh².
                for (b, &a) in back.iter_mut().zip(prev) {
                    *b *= 1.0 - a * a;
                }
            }
            delta = back;
        }
        Ok((grads, delta))
    }

    pub fn zeroed_like(&self) -> Mlp {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: Matrix::zeros(l.out_dim(), l.in_dim()),
                    bias: vec![0.0; l.out_dim()],
                })
                .collect(),
        }
    }

    /// `self += scale * other`, layouts assumed equal.
    pub fn add_scaled(&mut self, other: &Mlp, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.as_mut_slice().iter_mut().zip(b.weight.as_slice()) {
                *x += scale * y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += scale * y;
            }
        }
    }
}

impl Parameterized for Mlp {
    fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.as_slice().len() + l.bias.len())
            .sum()
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::shape(
                "Mlp::load_flat",
                format!("{} values for {} parameters", flat.len(), self.param_count()),
            ));
        }
        let mut rest = flat;
        for l in &mut self.layers {
            let (w, tail) = rest.split_at(l.weight.as_slice().len());
            l.weight.as_mut_slice().copy_from_slice(w);
            let (b, tail) = tail.split_at(l.bias.len());
            l.bias.copy_from_slice(b);
            rest = tail;
        }
        Ok(())
    }
}
