//! Semi-supervised classifier training on frozen latents.
//!
//! Each epoch: pseudo-label every unlabeled latent from fresh anchor draws,
//! then run the labeled phase (all labeled mini-batches), then the unlabeled
//! phase (all unlabeled mini-batches against the pseudo-labels). One
//! optimizer state is shared by both phases.

use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{
    accuracy, ensure_finite, gather, predict_probabilities, shuffled, step_error, Selector, TrainConfig,
    TrainError,
};
use crate::data::LabeledDataset;
use crate::geometry::{on_the_fly_label, AnchorSet};
use crate::label::Label;
use crate::network::{bce_loss, ForwardTrace, Gradients, Mlp, Optimizer};
use crate::seed::{rng_for, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepPhase {
    Labeled,
    Unlabeled,
}

/// One classifier optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub phase: StepPhase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbcEpoch {
    pub epoch: usize,
    pub labeled_loss: f64,
    pub unlabeled_loss: Option<f64>,
    pub validation_accuracy: Option<f64>,
    /// Share of unlabeled rows pseudo-labeled negative.
    pub pseudo_negative_fraction: Option<f64>,
    pub label_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct SbcOutcome {
    /// Snapshot with the best validation accuracy (ties broken by lower
    /// validation loss, then earlier epoch).
    pub classifier: Mlp,
    pub history: Vec<SbcEpoch>,
    pub best_epoch: Option<usize>,
    pub step_log: Vec<StepRecord>,
    /// Pseudo-labels of the unlabeled rows, one vector per epoch.
    pub pseudo_labels: Vec<Vec<Label>>,
    /// Wall-clock seconds spent generating pseudo-labels.
    pub label_seconds: f64,
    pub seconds: f64,
}

/// BCE loss and parameter gradients of `classifier` on latent rows.
pub fn classifier_gradients(
    classifier: &Mlp,
    latents: ArrayView2<'_, f64>,
    targets: &[f64],
) -> Result<(f64, Gradients), TrainError> {
    let mut trace = ForwardTrace::new();
    let out = classifier.forward_traced(latents, &mut trace)?;
    let loss = bce_loss(targets, out.column(0))?;
    ensure_finite(loss.value, "classifier loss")?;
    let upstream = loss.gradient.insert_axis(Axis(1));
    Ok((loss.value, classifier.backward(&trace, upstream.view())?))
}

/// One mini-batch BCE step of `classifier` on latent rows. Returns the
/// batch loss.
pub(crate) fn classifier_step(
    classifier: &mut Mlp,
    optimizer: &mut Optimizer,
    latents: ArrayView2<'_, f64>,
    targets: &[f64],
) -> Result<f64, TrainError> {
    let (loss, grads) = classifier_gradients(classifier, latents, targets)?;
    optimizer.step(classifier, &grads).map_err(step_error)?;
    if !classifier.is_finite() {
        return Err(TrainError::DivergedTraining("classifier parameters".into()));
    }
    Ok(loss)
}

/// Validation score key: `[accuracy, -loss]`.
pub(crate) fn classifier_score(
    classifier: &Mlp,
    latents: ArrayView2<'_, f64>,
    labels: &[Label],
) -> Result<[f64; 2], TrainError> {
    let probs = predict_probabilities(classifier, latents)?;
    let targets: Vec<f64> = labels.iter().map(|l| l.target()).collect();
    let loss = bce_loss(&targets, ndarray::ArrayView1::from(&probs))?.value;
    Ok([accuracy(&probs, labels), -loss])
}

fn split_by_class(latents: &Array2<f64>, labels: &[Label]) -> (Array2<f64>, Array2<f64>) {
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == Label::Positive).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == Label::Negative).collect();
    (latents.select(Axis(0), &pos), latents.select(Axis(0), &neg))
}

/// Trains a fresh classifier on the latents of `train` produced by the
/// frozen `encoder`.
///
/// Labeled rows are trained against their labels first; unlabeled rows are
/// then trained against on-the-fly labels recomputed every epoch. Anchor
/// draws use an RNG stream derived from `(seed, epoch, row)`.
pub fn train_sbc(
    train: &LabeledDataset,
    validation: Option<&LabeledDataset>,
    encoder: &Mlp,
    config: &TrainConfig,
) -> Result<SbcOutcome, TrainError> {
    config.validate()?;
    let start = Instant::now();
    let labeled = train.labeled_subset();
    if labeled.is_empty() {
        return Err(TrainError::Config("no labeled samples".into()));
    }
    let labeled_latents = encoder.forward(labeled.features.view())?;
    let labeled_targets = labeled.targets();
    let unlabeled_latents = encoder.forward(train.unlabeled_features().view())?;
    let n_unlabeled = unlabeled_latents.nrows();

    // Latents are fixed because the encoder is frozen, so they are computed
    // once rather than per epoch.
    let anchors = if n_unlabeled > 0 {
        let (pos, neg) = split_by_class(&labeled_latents, &labeled.labels);
        Some(AnchorSet::new(pos, neg, config.k)?)
    } else {
        None
    };

    let validation = match validation {
        Some(v) => {
            let subset = v.labeled_subset();
            if subset.is_empty() {
                None
            } else {
                Some((encoder.forward(subset.features.view())?, subset.labels))
            }
        }
        None => None,
    };

    let mut classifier = config.init_classifier(encoder.output_dim())?;
    let mut optimizer = Optimizer::new(config.classifier_optimizer);
    let mut selector = Selector::new(config.early_stop_patience);
    let mut history = Vec::with_capacity(config.epochs);
    let mut step_log = Vec::new();
    let mut pseudo_history = Vec::with_capacity(config.epochs);
    let mut label_seconds_total = 0.0;

    for epoch in 0..config.epochs {
        let e = epoch as u64;

        let label_start = Instant::now();
        let pseudo: Vec<Label> = match &anchors {
            Some(anchors) => unlabeled_latents
                .rows()
                .into_iter()
                .enumerate()
                .map(|(i, z)| {
                    let mut rng = rng_for(config.seed, &[stream::PSEUDO_LABELS, e, i as u64]);
                    on_the_fly_label(z.as_slice().expect("row-major latents"), anchors, &mut rng)
                })
                .collect::<Result<_, _>>()?,
            None => Vec::new(),
        };
        let label_seconds = label_start.elapsed().as_secs_f64();
        label_seconds_total += label_seconds;

        // Labeled phase.
        let order = shuffled(labeled.len(), &mut rng_for(config.seed, &[stream::LABELED_ORDER, e]));
        let (mut sum, mut seen) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let x = gather(labeled_latents.view(), chunk);
            let t: Vec<f64> = chunk.iter().map(|&i| labeled_targets[i]).collect();
            sum += classifier_step(&mut classifier, &mut optimizer, x.view(), &t)? * chunk.len() as f64;
            seen += chunk.len();
            step_log.push(StepRecord {
                epoch,
                phase: StepPhase::Labeled,
            });
        }
        let labeled_loss = sum / seen.max(1) as f64;

        // Unlabeled phase.
        let unlabeled_loss = if n_unlabeled > 0 {
            let order = shuffled(n_unlabeled, &mut rng_for(config.seed, &[stream::UNLABELED_ORDER, e]));
            let (mut sum, mut seen) = (0.0, 0usize);
            for chunk in order.chunks(config.batch_size) {
                let x = gather(unlabeled_latents.view(), chunk);
                let t: Vec<f64> = chunk.iter().map(|&i| pseudo[i].target()).collect();
                sum += classifier_step(&mut classifier, &mut optimizer, x.view(), &t)? * chunk.len() as f64;
                seen += chunk.len();
                step_log.push(StepRecord {
                    epoch,
                    phase: StepPhase::Unlabeled,
                });
            }
            Some(sum / seen as f64)
        } else {
            None
        };

        let (key, validation_accuracy) = match &validation {
            Some((latents, labels)) => {
                let key = classifier_score(&classifier, latents.view(), labels)?;
                (key, Some(key[0]))
            }
            None => (
                classifier_score(&classifier, labeled_latents.view(), &labeled.labels)?,
                None,
            ),
        };
        let pseudo_negative_fraction = (n_unlabeled > 0)
            .then(|| pseudo.iter().filter(|&&l| l == Label::Negative).count() as f64 / n_unlabeled as f64);
        history.push(SbcEpoch {
            epoch,
            labeled_loss,
            unlabeled_loss,
            validation_accuracy,
            pseudo_negative_fraction,
            label_seconds,
        });
        pseudo_history.push(pseudo);
        selector.offer(epoch, key, || classifier.clone());
        if selector.should_stop() {
            break;
        }
    }

    let (classifier, best_epoch) = match selector.into_best() {
        Some((epoch, _, snapshot)) => (snapshot, Some(epoch)),
        None => (classifier, None),
    };
    Ok(SbcOutcome {
        classifier,
        history,
        best_epoch,
        step_log,
        pseudo_labels: pseudo_history,
        label_seconds: label_seconds_total,
        seconds: start.elapsed().as_secs_f64(),
    })
}
