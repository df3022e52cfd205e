//! Fully-connected tanh networks mapping scaled time to `(T*, Cₗ*, φₛ)`.
//!
//! Parameters live in one flat vector. Layer `l` (input→hidden first,
//! hidden→output last) stores its weight matrix row-major as `out × in`,
//! immediately followed by its bias vector.

mod snapshot;

use std::ops::Range;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Dual;
use crate::error::{Error, Result};
use crate::physics::{StateJet, StateTriple};
use crate::scalar::{Real, Scalar};

pub use snapshot::{read_snapshot, write_snapshot, SnapshotMeta};

/// Number of network outputs: temperature, liquid concentration, solid fraction.
pub const N_OUTPUTS: usize = 3;

/// Hidden-layer depth `D` and width `W`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NetworkShape {
    pub depth: usize,
    pub width: usize,
}

/// Location of one layer inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSpan {
    pub rows: usize,
    pub cols: usize,
    pub weights: Range<usize>,
    pub biases: Range<usize>,
}

impl NetworkShape {
    pub fn new(depth: usize, width: usize) -> Result<Self> {
        if depth == 0 || width == 0 {
            return Err(Error::Config(format!(
                "network depth and width must be positive (got D={depth}, W={width})"
            )));
        }
        Ok(Self { depth, width })
    }

    /// Connection weights plus biases: `W + (D−1)W² + 3W` and `DW + 3`.
    pub fn n_params(&self) -> usize {
        self.n_weights() + self.depth * self.width + N_OUTPUTS
    }

    pub fn n_weights(&self) -> usize {
        let (d, w) = (self.depth, self.width);
        w + (d - 1) * w * w + N_OUTPUTS * w
    }

    /// Weights in the hidden layers only (the regularized ones).
    pub fn n_hidden_weights(&self) -> usize {
        self.n_weights() - N_OUTPUTS * self.width
    }

    /// `D + 1` layers; the last one is the linear output layer.
    pub fn n_layers(&self) -> usize {
        self.depth + 1
    }

    pub fn layers(&self) -> Vec<LayerSpan> {
        let mut spans = Vec::with_capacity(self.n_layers());
        let mut offset = 0;
        for l in 0..self.n_layers() {
            let cols = if l == 0 { 1 } else { self.width };
            let rows = if l == self.depth {
                N_OUTPUTS
            } else {
                self.width
            };
            let weights = offset..offset + rows * cols;
            let biases = weights.end..weights.end + rows;
            offset = biases.end;
            spans.push(LayerSpan {
                rows,
                cols,
                weights,
                biases,
            });
        }
        spans
    }

    /// `D·W`, the product used by the learning-rate rule.
    pub fn depth_times_width(&self) -> usize {
        self.depth * self.width
    }
}

impl std::fmt::Display for NetworkShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "D{}xW{}", self.depth, self.width)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network<T> {
    shape: NetworkShape,
    params: Vec<T>,
}

impl<T: Scalar> Network<T> {
    /// Glorot-uniform weights, zero biases; deterministic in `seed`.
    pub fn init(shape: NetworkShape, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![T::zero(); shape.n_params()];
        for span in shape.layers() {
            let limit = (6.0 / (span.rows + span.cols) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            for p in &mut params[span.weights] {
                *p = T::of(dist.sample(&mut rng));
            }
        }
        Self { shape, params }
    }

    pub fn zeros(shape: NetworkShape) -> Self {
        Self {
            shape,
            params: vec![T::zero(); shape.n_params()],
        }
    }

    /// Rebuild a network from a flat parameter vector.
    pub fn unflatten(shape: NetworkShape, params: Vec<T>) -> Result<Self> {
        if params.len() != shape.n_params() {
            return Err(Error::Config(format!(
                "{shape} expects {} parameters, got {}",
                shape.n_params(),
                params.len()
            )));
        }
        Ok(Self { shape, params })
    }

    pub fn flatten(&self) -> Vec<T> {
        self.params.clone()
    }

    pub fn shape(&self) -> NetworkShape {
        self.shape
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn layer_weights(&self, layer: usize) -> &[T] {
        let span = &self.shape.layers()[layer];
        &self.params[span.weights.clone()]
    }

    pub fn layer_biases(&self, layer: usize) -> &[T] {
        let span = &self.shape.layers()[layer];
        &self.params[span.biases.clone()]
    }

    /// All connection weights (biases excluded), layer by layer.
    pub fn weights(&self) -> Vec<T> {
        self.shape
            .layers()
            .into_iter()
            .flat_map(|s| self.params[s.weights].to_vec())
            .collect()
    }

    /// Output values at scaled time `t`.
    pub fn forward(&self, t: T) -> StateTriple<T> {
        let [temp, conc, phi] = evaluate(self.shape, &self.params, t);
        StateTriple { temp, conc, phi }
    }

    /// Outputs and their derivatives along the input direction `seed`
    /// (`seed = 1` gives d/dt*).
    pub fn forward_tangent(&self, t: T, seed: T) -> StateJet<T> {
        let params: Vec<Dual<T>> = self.params.iter().map(|&p| Dual::constant(p)).collect();
        let out = evaluate(self.shape, &params, Dual::seeded(t, seed));
        StateJet::from_duals(out)
    }
}

/// Evaluate the network with any [`Real`] scalar.
///
/// This is the reference evaluation path shared by plain evaluation,
/// forward-mode tangents and the tape-based gradient; the training kernel
/// in [`crate::autodiff::kernel`] is a fused specialization of it.
pub fn evaluate<S: Real>(shape: NetworkShape, params: &[S], input: S) -> [S; N_OUTPUTS] {
    assert_eq!(
        params.len(),
        shape.n_params(),
        "parameter vector does not match {shape}"
    );
    let mut act = vec![input];
    for (l, span) in shape.layers().into_iter().enumerate() {
        let w = &params[span.weights.clone()];
        let b = &params[span.biases.clone()];
        let hidden = l < shape.depth;
        act = (0..span.rows)
            .map(|r| {
                let row = &w[r * span.cols..(r + 1) * span.cols];
                let z = row
                    .iter()
                    .zip(&act)
                    .fold(b[r], |acc, (&wi, &ai)| acc + wi * ai);
                if hidden {
                    z.tanh_ad()
                } else {
                    z
                }
            })
            .collect();
    }
    [act[0], act[1], act[2]]
}
