//! Labeled-only baselines.

use std::time::{Duration, Instant};

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use super::sbc::{classifier_score, classifier_step};
use super::{ensure_finite, gather, shuffled, step_error, Selector, TrainConfig, TrainError};
use crate::data::LabeledDataset;
use crate::network::{bce_loss, ForwardTrace, Mlp, Optimizer};
use crate::seed::{rng_for, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SupervisedOutcome {
    pub encoder: Mlp,
    pub classifier: Mlp,
    pub history: Vec<SupervisedEpoch>,
    pub best_epoch: Option<usize>,
    /// Time spent in encoder forward, backward and update.
    pub encoder_seconds: f64,
    /// Time spent in classifier forward, backward and update.
    pub classifier_seconds: f64,
}

/// Encoder and classifier trained end to end with BCE on the labeled rows
/// of `train` only. Uses the same architectures, initial weights and
/// optimizers as the semi-supervised pipeline.
pub fn train_entropy_baseline(
    train: &LabeledDataset,
    validation: Option<&LabeledDataset>,
    config: &TrainConfig,
) -> Result<SupervisedOutcome, TrainError> {
    config.validate()?;
    let labeled = train.labeled_subset();
    let (pos, neg) = labeled.class_counts();
    if pos == 0 || neg == 0 {
        return Err(TrainError::Config(format!(
            "labeled set needs both classes, has {pos} positive and {neg} negative"
        )));
    }
    let targets = labeled.targets();
    let validation = validation.map(|v| v.labeled_subset()).filter(|v| !v.is_empty());

    let mut encoder = config.init_encoder(train.p())?;
    let mut classifier = config.init_classifier(config.encoder.latent_dim)?;
    let mut enc_opt = Optimizer::new(config.encoder_optimizer);
    let mut clf_opt = Optimizer::new(config.classifier_optimizer);
    let mut selector = Selector::new(config.early_stop_patience);
    let mut history = Vec::with_capacity(config.epochs);
    let (mut enc_time, mut clf_time) = (Duration::ZERO, Duration::ZERO);

    for epoch in 0..config.epochs {
        let order = shuffled(labeled.len(), &mut rng_for(config.seed, &[stream::LABELED_ORDER, epoch as u64]));
        let (mut sum, mut seen) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let x = gather(labeled.features.view(), chunk);
            let t: Vec<f64> = chunk.iter().map(|&i| targets[i]).collect();

            let clock = Instant::now();
            let mut enc_trace = ForwardTrace::new();
            let z = encoder.forward_traced(x.view(), &mut enc_trace)?;
            enc_time += clock.elapsed();

            let clock = Instant::now();
            let mut clf_trace = ForwardTrace::new();
            let p = classifier.forward_traced(z.view(), &mut clf_trace)?;
            let loss = bce_loss(&t, p.column(0))?;
            ensure_finite(loss.value, "baseline loss")?;
            let clf_grads = classifier.backward(&clf_trace, loss.gradient.insert_axis(Axis(1)).view())?;
            clf_time += clock.elapsed();

            let clock = Instant::now();
            let enc_grads = encoder.backward(&enc_trace, clf_grads.input.view())?;
            enc_opt.step(&mut encoder, &enc_grads).map_err(step_error)?;
            enc_time += clock.elapsed();

            let clock = Instant::now();
            clf_opt.step(&mut classifier, &clf_grads).map_err(step_error)?;
            clf_time += clock.elapsed();

            if !encoder.is_finite() || !classifier.is_finite() {
                return Err(TrainError::DivergedTraining("baseline parameters".into()));
            }
            sum += loss.value * chunk.len() as f64;
            seen += chunk.len();
        }

        let (key, validation_accuracy) = match &validation {
            Some(v) => {
                let key = classifier_score(&classifier, encoder.forward(v.features.view())?.view(), &v.labels)?;
                (key, Some(key[0]))
            }
            None => (
                classifier_score(&classifier, encoder.forward(labeled.features.view())?.view(), &labeled.labels)?,
                None,
            ),
        };
        history.push(SupervisedEpoch {
            epoch,
            train_loss: sum / seen.max(1) as f64,
            validation_accuracy,
        });
        selector.offer(epoch, key, || (encoder.clone(), classifier.clone()));
        if selector.should_stop() {
            break;
        }
    }

    let ((encoder, classifier), best_epoch) = match selector.into_best() {
        Some((epoch, _, snapshot)) => (snapshot, Some(epoch)),
        None => ((encoder, classifier), None),
    };
    Ok(SupervisedOutcome {
        encoder,
        classifier,
        history,
        best_epoch,
        encoder_seconds: enc_time.as_secs_f64(),
        classifier_seconds: clf_time.as_secs_f64(),
    })
}

/// The entropy baseline on a fully labeled training set.
pub fn train_full_supervised(
    train: &LabeledDataset,
    validation: Option<&LabeledDataset>,
    config: &TrainConfig,
) -> Result<SupervisedOutcome, TrainError> {
    if !train.is_fully_labeled() {
        return Err(TrainError::Config("full supervision needs every row labeled".into()));
    }
    train_entropy_baseline(train, validation, config)
}

/// Classifier trained on the labeled latents of a frozen encoder, ignoring
/// unlabeled rows. Returns the classifier and its per-epoch validation
/// accuracy.
pub fn train_supervised_classifier(
    train: &LabeledDataset,
    validation: Option<&LabeledDataset>,
    encoder: &Mlp,
    config: &TrainConfig,
) -> Result<(Mlp, Vec<SupervisedEpoch>), TrainError> {
    config.validate()?;
    let labeled = train.labeled_subset();
    let latents = encoder.forward(labeled.features.view())?;
    let targets = labeled.targets();
    let validation = match validation.map(|v| v.labeled_subset()).filter(|v| !v.is_empty()) {
        Some(v) => Some((encoder.forward(v.features.view())?, v.labels)),
        None => None,
    };
    let mut classifier = config.init_classifier(encoder.output_dim())?;
    let mut optimizer = Optimizer::new(config.classifier_optimizer);
    let mut selector = Selector::new(config.early_stop_patience);
    let mut history = Vec::new();
    for epoch in 0..config.epochs {
        let order = shuffled(labeled.len(), &mut rng_for(config.seed, &[stream::LABELED_ORDER, epoch as u64]));
        let (mut sum, mut seen) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let x = gather(latents.view(), chunk);
            let t: Vec<f64> = chunk.iter().map(|&i| targets[i]).collect();
            sum += classifier_step(&mut classifier, &mut optimizer, x.view(), &t)? * chunk.len() as f64;
            seen += chunk.len();
        }
        let key = match &validation {
            Some((z, labels)) => classifier_score(&classifier, z.view(), labels)?,
            None => classifier_score(&classifier, latents.view(), &labeled.labels)?,
        };
        history.push(SupervisedEpoch {
            epoch,
            train_loss: sum / seen.max(1) as f64,
            validation_accuracy: validation.as_ref().map(|_| key[0]),
        });
        selector.offer(epoch, key, || classifier.clone());
        if selector.should_stop() {
            break;
        }
    }
    let classifier = selector.into_best().map(|b| b.2).unwrap_or(classifier);
    Ok((classifier, history))
}
