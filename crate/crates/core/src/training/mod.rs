//! Training loops: angular metric learning for the encoder, the
//! semi-supervised classifier on frozen latents, and the labeled-only
//! baselines.

mod bal;
mod sbc;
mod supervised;

pub use bal::{pair_batch_gradients, pair_loss, train_bal, BalEpoch, BalOutcome};
pub use sbc::{classifier_gradients, train_sbc, SbcEpoch, SbcOutcome, StepPhase, StepRecord};
pub use supervised::{
    train_entropy_baseline, train_full_supervised, train_supervised_classifier, SupervisedEpoch,
    SupervisedOutcome,
};

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::DataError;
use crate::geometry::GeometryError;
use crate::label::Label;
use crate::network::{Activation, LayerSpec, Mlp, NetworkError, OptimizerSpec};
use crate::pairing::PairingError;
use crate::seed::{rng_for, stream};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged: {0}")]
    DivergedTraining(String),
    #[error(transparent)]
    Pairing(#[from] PairingError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Data(#[from] DataError),
}

impl TrainError {
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            TrainError::DivergedTraining(_) | TrainError::Network(NetworkError::NonFiniteGradient)
        )
    }
}

/// Dense encoder: hidden ReLU layers, a linear latent layer, then row-wise
/// L2 normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderArch {
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub l2_penalty: f64,
}

impl Default for EncoderArch {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            latent_dim: 16,
            l2_penalty: 1e-4,
        }
    }
}

/// Classifier: hidden ReLU layers then one sigmoid unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierArch {
    pub hidden: Vec<usize>,
    pub l2_penalty: f64,
}

impl Default for ClassifierArch {
    fn default() -> Self {
        Self {
            hidden: vec![80, 20],
            l2_penalty: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub encoder_optimizer: OptimizerSpec,
    pub classifier_optimizer: OptimizerSpec,
    /// Anchors drawn per class for each pseudo-label.
    pub k: usize,
    pub seed: u64,
    pub early_stop_patience: Option<usize>,
    pub encoder: EncoderArch,
    pub classifier: ClassifierArch,
    /// Build the pair set once instead of once per epoch.
    pub freeze_pairs: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            encoder_optimizer: OptimizerSpec::encoder_default(),
            classifier_optimizer: OptimizerSpec::classifier_default(),
            k: 11,
            seed: 0,
            early_stop_patience: None,
            encoder: EncoderArch::default(),
            classifier: ClassifierArch::default(),
            freeze_pairs: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be >= 1".into()));
        }
        if self.k == 0 {
            return Err(TrainError::Config("k must be >= 1".into()));
        }
        if self.encoder.latent_dim < 2 {
            return Err(TrainError::Config("latent dimension must be >= 2".into()));
        }
        if self.encoder.hidden.iter().chain(&self.classifier.hidden).any(|&h| h == 0) {
            return Err(TrainError::Config("hidden layer widths must be >= 1".into()));
        }
        for l2 in [self.encoder.l2_penalty, self.classifier.l2_penalty] {
            if !(l2 >= 0.0 && l2.is_finite()) {
                return Err(TrainError::Config(format!("l2 penalty must be >= 0, got {l2}")));
            }
        }
        self.encoder_optimizer.validate().map_err(TrainError::Config)?;
        self.classifier_optimizer.validate().map_err(TrainError::Config)?;
        if self.early_stop_patience == Some(0) {
            return Err(TrainError::Config("early_stop_patience must be >= 1".into()));
        }
        Ok(())
    }

    /// Freshly initialised encoder for `input_dim` features.
    pub fn init_encoder(&self, input_dim: usize) -> Result<Mlp, TrainError> {
        let mut specs: Vec<LayerSpec> = self
            .encoder
            .hidden
            .iter()
            .map(|&h| LayerSpec::new(h, Activation::Relu))
            .collect();
        specs.push(LayerSpec::new(self.encoder.latent_dim, Activation::Linear));
        let mut rng = rng_for(self.seed, &[stream::ENCODER_INIT]);
        Ok(Mlp::build(input_dim, &specs, self.encoder.l2_penalty, true, &mut rng)?)
    }

    /// Freshly initialised classifier for `input_dim` latent features.
    pub fn init_classifier(&self, input_dim: usize) -> Result<Mlp, TrainError> {
        let mut specs: Vec<LayerSpec> = self
            .classifier
            .hidden
            .iter()
            .map(|&h| LayerSpec::new(h, Activation::Relu))
            .collect();
        specs.push(LayerSpec::new(1, Activation::Sigmoid));
        let mut rng = rng_for(self.seed, &[stream::CLASSIFIER_INIT]);
        Ok(Mlp::build(input_dim, &specs, self.classifier.l2_penalty, false, &mut rng)?)
    }
}

/// Tracks the best epoch for model selection and early stopping. Keys are
/// compared lexicographically, larger is better; ties keep the earlier epoch.
#[derive(Debug)]
pub(crate) struct Selector<T> {
    best: Option<(usize, [f64; 2], T)>,
    patience: Option<usize>,
    since_best: usize,
}

impl<T> Selector<T> {
    pub(crate) fn new(patience: Option<usize>) -> Self {
        Self {
            best: None,
            patience,
            since_best: 0,
        }
    }

    /// `snapshot` is only evaluated on improvement.
    pub(crate) fn offer(&mut self, epoch: usize, key: [f64; 2], snapshot: impl FnOnce() -> T) {
        let better = match &self.best {
            None => true,
            Some((_, best, _)) => key[0] > best[0] || (key[0] == best[0] && key[1] > best[1]),
        };
        if better {
            self.best = Some((epoch, key, snapshot()));
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
    }

    pub(crate) fn should_stop(&self) -> bool {
        matches!(self.patience, Some(p) if self.since_best >= p)
    }

    pub(crate) fn into_best(self) -> Option<(usize, [f64; 2], T)> {
        self.best
    }
}

pub(crate) fn shuffled<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(rng);
    order
}

pub(crate) fn gather(features: ArrayView2<'_, f64>, rows: &[usize]) -> Array2<f64> {
    features.select(Axis(0), rows)
}

pub(crate) fn ensure_finite(value: f64, what: &str) -> Result<(), TrainError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(TrainError::DivergedTraining(format!("{what} became non-finite")))
    }
}

/// Maps a network error from an optimizer step or backward pass onto
/// divergence where appropriate.
pub(crate) fn step_error(err: NetworkError) -> TrainError {
    match err {
        NetworkError::NonFiniteGradient => TrainError::DivergedTraining("non-finite gradient".into()),
        other => TrainError::Network(other),
    }
}

/// Classifier probabilities (of the negative class) for latent rows.
pub fn predict_probabilities(classifier: &Mlp, latents: ArrayView2<'_, f64>) -> Result<Vec<f64>, TrainError> {
    Ok(classifier.forward(latents)?.column(0).to_vec())
}

pub(crate) fn accuracy(probabilities: &[f64], labels: &[Label]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = probabilities
        .iter()
        .zip(labels)
        .filter(|&(&p, &l)| Label::from_probability(p, 0.5) == l)
        .count();
    hits as f64 / labels.len() as f64
}
