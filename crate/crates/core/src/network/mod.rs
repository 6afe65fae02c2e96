//! Dense feed-forward networks with explicit reverse-mode gradients.
//!
//! Matrices are `ndarray` row-major: a batch is `[batch × features]` and a
//! layer's weights are `[out × in]`. Two network flavours are used by the
//! pipeline:
//!
//! - the encoder, whose raw output is divided row-wise by its Euclidean norm
//!   (`output_normalized = true`), producing unit latents;
//! - the classifier, ending in a single sigmoid unit.
//!
//! [`Mlp::forward_traced`] records the activations that [`Mlp::backward`]
//! consumes. A trace covers exactly one forward call; to share parameters
//! across several inputs (the two sides of a pair) stack them into one batch.

mod checkpoint;
mod loss;
mod optim;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use loss::{bce_loss, pair_distance_backward, pair_distances, LossValue, PairDistances, ARCCOS_GUARD, PREDICTION_CLAMP};
pub use optim::{Optimizer, OptimizerSpec};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, ZERO_NORM};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("backward called without a cached forward pass")]
    NoCachedForward,
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the pre-activation and the output.
    #[inline]
    fn derivative(self, pre: f64, post: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => post * (1.0 - post),
            Activation::Linear => 1.0,
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    weights: Array2<f64>,
    biases: Array1<f64>,
    activation: Activation,
    l2_penalty: f64,
}

impl DenseLayer {
    pub fn new(
        weights: Array2<f64>,
        biases: Array1<f64>,
        activation: Activation,
        l2_penalty: f64,
    ) -> Result<Self, NetworkError> {
        if biases.len() != weights.nrows() {
            return Err(NetworkError::ShapeMismatch(format!(
                "{} biases for {} output units",
                biases.len(),
                weights.nrows()
            )));
        }
        if !(l2_penalty >= 0.0 && l2_penalty.is_finite()) {
            return Err(NetworkError::InvalidNetwork(format!("l2_penalty {l2_penalty}")));
        }
        if weights.iter().chain(biases.iter()).any(|v| !v.is_finite()) {
            return Err(NetworkError::InvalidNetwork("non-finite parameter".into()));
        }
        Ok(Self {
            weights: weights.as_standard_layout().into_owned(),
            biases,
            activation,
            l2_penalty,
        })
    }

    /// He-style uniform init: `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, zero biases.
    pub fn he_uniform<R: Rng + ?Sized>(
        input: usize,
        output: usize,
        activation: Activation,
        l2_penalty: f64,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / input as f64).sqrt();
        let weights = Array2::from_shape_fn((output, input), |_| rng.random_range(-limit..limit));
        Self {
            weights,
            biases: Array1::zeros(output),
            activation,
            l2_penalty,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn biases(&self) -> &Array1<f64> {
        &self.biases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn l2_penalty(&self) -> f64 {
        self.l2_penalty
    }
}

/// Layer widths and activations for [`Mlp::build`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub units: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(units: usize, activation: Activation) -> Self {
        Self { units, activation }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
    output_normalized: bool,
}

/// Activations cached by [`Mlp::forward_traced`].
#[derive(Debug, Clone, Default)]
pub struct ForwardTrace {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
    /// Row norms of the raw output, when the output is L2-normalized.
    norms: Option<Array1<f64>>,
    output: Option<Array2<f64>>,
}

impl ForwardTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn output(&self) -> Option<&Array2<f64>> {
        self.output.as_ref()
    }

    pub fn is_empty(&self) -> bool {
        self.output.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

/// Parameter gradients of an [`Mlp`] plus the gradient w.r.t. its input.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
    pub input: Array2<f64>,
}

impl Gradients {
    pub fn global_norm(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|g| g.is_finite()))
    }

    /// Parameter gradients in the order of [`Mlp::parameters_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weights.as_slice().expect("standard layout"),
                    l.biases.as_slice().expect("contiguous"),
                ]
            })
            .collect()
    }
}

impl Mlp {
    pub fn new(layers: Vec<DenseLayer>, output_normalized: bool) -> Result<Self, NetworkError> {
        if layers.is_empty() {
            return Err(NetworkError::InvalidNetwork("no layers".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(NetworkError::ShapeMismatch(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].output_dim(),
                    i + 1,
                    pair[1].input_dim()
                )));
            }
        }
        let net = Self {
            layers,
            output_normalized,
        };
        if net.parameter_count() == 0 {
            return Err(NetworkError::InvalidNetwork("no parameters".into()));
        }
        Ok(net)
    }

    /// Builds a randomly initialised network. `l2_penalty` applies to every
    /// layer except the last.
    pub fn build<R: Rng + ?Sized>(
        input_dim: usize,
        specs: &[LayerSpec],
        l2_penalty: f64,
        output_normalized: bool,
        rng: &mut R,
    ) -> Result<Self, NetworkError> {
        if input_dim == 0 || specs.iter().any(|s| s.units == 0) {
            return Err(NetworkError::InvalidNetwork("zero-width layer".into()));
        }
        let mut layers = Vec::with_capacity(specs.len());
        let mut fan_in = input_dim;
        for (i, spec) in specs.iter().enumerate() {
            let penalty = if i + 1 < specs.len() { l2_penalty } else { 0.0 };
            layers.push(DenseLayer::he_uniform(
                fan_in,
                spec.units,
                spec.activation,
                penalty,
                rng,
            ));
            fan_in = spec.units;
        }
        Self::new(layers, output_normalized)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn output_normalized(&self) -> bool {
        self.output_normalized
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.biases.iter()).all(|v| v.is_finite()))
    }

    /// Mutable parameter buffers: weights then biases, layer by layer.
    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weights.as_slice_mut().expect("standard layout"),
                    l.biases.as_slice_mut().expect("contiguous"),
                ]
            })
            .collect()
    }

    pub fn parameters(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weights.as_slice().expect("standard layout"),
                    l.biases.as_slice().expect("contiguous"),
                ]
            })
            .collect()
    }

    /// `sum(l2_penalty * ||W||^2)` over penalized layers.
    pub fn l2_penalty_value(&self) -> f64 {
        self.layers
            .iter()
            .filter(|l| l.l2_penalty > 0.0)
            .map(|l| l.l2_penalty * l.weights.iter().map(|w| w * w).sum::<f64>())
            .sum()
    }

    fn check_input(&self, batch: &ArrayView2<'_, f64>) -> Result<(), NetworkError> {
        if batch.ncols() != self.input_dim() {
            return Err(NetworkError::ShapeMismatch(format!(
                "batch has {} columns, network expects {}",
                batch.ncols(),
                self.input_dim()
            )));
        }
        if batch.iter().any(|v| !v.is_finite()) {
            return Err(NetworkError::NonFiniteInput);
        }
        Ok(())
    }

    pub fn forward(&self, batch: ArrayView2<'_, f64>) -> Result<Array2<f64>, NetworkError> {
        self.check_input(&batch)?;
        let mut x = batch.to_owned();
        for layer in &self.layers {
            let act = layer.activation;
            x = x.dot(&layer.weights.t()) + &layer.biases;
            x.mapv_inplace(|v| act.apply(v));
        }
        if self.output_normalized {
            for mut row in x.rows_mut() {
                let norm = row.dot(&row).sqrt().max(ZERO_NORM);
                row /= norm;
            }
        }
        Ok(x)
    }

    pub fn forward_traced(
        &self,
        batch: ArrayView2<'_, f64>,
        trace: &mut ForwardTrace,
    ) -> Result<Array2<f64>, NetworkError> {
        self.check_input(&batch)?;
        trace.inputs.clear();
        trace.pre.clear();
        trace.post.clear();
        let mut x = batch.to_owned();
        for layer in &self.layers {
            let act = layer.activation;
            let pre = x.dot(&layer.weights.t()) + &layer.biases;
            let post = pre.mapv(|v| act.apply(v));
            trace.inputs.push(x);
            trace.pre.push(pre);
            x = post.clone();
            trace.post.push(post);
        }
        if self.output_normalized {
            let mut norms = Array1::zeros(x.nrows());
            for (mut row, n) in x.rows_mut().into_iter().zip(norms.iter_mut()) {
                let norm = row.dot(&row).sqrt().max(ZERO_NORM);
                row /= norm;
                *n = norm;
            }
            trace.norms = Some(norms);
        } else {
            trace.norms = None;
        }
        trace.output = Some(x.clone());
        Ok(x)
    }

    /// Reverse pass for the batch recorded in `trace`, given
    /// `upstream = dL/d(output)`. Adds `2 * l2_penalty * W` to the weight
    /// gradients of penalized layers.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        upstream: ArrayView2<'_, f64>,
    ) -> Result<Gradients, NetworkError> {
        let output = trace.output.as_ref().ok_or(NetworkError::NoCachedForward)?;
        if trace.pre.len() != self.layers.len() {
            return Err(NetworkError::ShapeMismatch(
                "trace was recorded by a different network".into(),
            ));
        }
        if upstream.dim() != output.dim() {
            return Err(NetworkError::ShapeMismatch(format!(
                "upstream gradient {:?} vs output {:?}",
                upstream.dim(),
                output.dim()
            )));
        }

        let mut grad = upstream.to_owned();
        if let Some(norms) = &trace.norms {
            // d(z/|z|)/dz = (I - u u^T) / |z| with u the normalized output.
            for ((mut g, u), &n) in grad
                .rows_mut()
                .into_iter()
                .zip(output.rows())
                .zip(norms.iter())
            {
                let along = g.dot(&u);
                g.zip_mut_with(&u, |gi, &ui| *gi = (*gi - along * ui) / n);
            }
        }

        let mut layers = Vec::with_capacity(self.layers.len());
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let act = layer.activation;
            let mut delta = grad;
            ndarray::Zip::from(&mut delta)
                .and(&trace.pre[idx])
                .and(&trace.post[idx])
                .for_each(|d, &pre, &post| *d *= act.derivative(pre, post));
            let mut d_weights = delta.t().dot(&trace.inputs[idx]);
            if layer.l2_penalty > 0.0 {
                d_weights.scaled_add(2.0 * layer.l2_penalty, &layer.weights);
            }
            let d_biases = delta.sum_axis(Axis(0));
            grad = delta.dot(&layer.weights);
            layers.push(LayerGradient {
                weights: d_weights,
                biases: d_biases,
            });
        }
        layers.reverse();
        Ok(Gradients {
            layers,
            input: grad,
        })
    }
}
