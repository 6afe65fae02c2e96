//! Encoder training on matched / unmatched pairs of labeled samples.
//!
//! Both sides of a pair go through the same encoder. The two sides of a
//! mini-batch are stacked into one `[2B × p]` forward pass so one backward
//! pass sums the gradients of the shared parameters.

use std::time::Instant;

use ndarray::{concatenate, s, ArrayView2, Axis};

use super::{ensure_finite, gather, shuffled, step_error, Selector, TrainConfig, TrainError};
use crate::data::LabeledDataset;
use crate::network::{
    bce_loss, pair_distance_backward, pair_distances, ForwardTrace, Gradients, Mlp, Optimizer,
};
use crate::pairing::{build_pairs, PairSet};
use crate::seed::{rng_for, stream};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BalEpoch {
    pub epoch: usize,
    /// Mean pair loss over the epoch's mini-batches.
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct BalOutcome {
    /// Snapshot with the lowest validation pair loss.
    pub encoder: Mlp,
    pub history: Vec<BalEpoch>,
    /// `None` when no epoch ran and the initial encoder is returned.
    pub best_epoch: Option<usize>,
    pub seconds: f64,
}

/// Pair loss of `encoder` over `pairs` (indices into `features` rows).
pub fn pair_loss(encoder: &Mlp, features: ArrayView2<'_, f64>, pairs: &PairSet) -> Result<f64, TrainError> {
    let left: Vec<usize> = pairs.pairs.iter().map(|p| p.0).collect();
    let right: Vec<usize> = pairs.pairs.iter().map(|p| p.1).collect();
    let zl = encoder.forward(gather(features, &left).view())?;
    let zr = encoder.forward(gather(features, &right).view())?;
    let d = pair_distances(zl.view(), zr.view())?;
    Ok(bce_loss(&pairs.target_values(), d.distances.view())?.value)
}

/// Loss and parameter gradients for one mini-batch of pairs.
pub fn pair_batch_gradients(
    encoder: &Mlp,
    features: ArrayView2<'_, f64>,
    pairs: &[(usize, usize)],
    targets: &[f64],
) -> Result<(f64, Gradients), TrainError> {
    let b = pairs.len();
    let rows: Vec<usize> = pairs.iter().map(|p| p.0).chain(pairs.iter().map(|p| p.1)).collect();
    let batch = gather(features, &rows);
    let mut trace = ForwardTrace::new();
    let z = encoder.forward_traced(batch.view(), &mut trace)?;
    let (zl, zr) = (z.slice(s![..b, ..]), z.slice(s![b.., ..]));
    let d = pair_distances(zl, zr)?;
    let loss = bce_loss(targets, d.distances.view())?;
    let (gl, gr) = pair_distance_backward(zl, zr, &d, loss.gradient.view());
    let upstream = concatenate(Axis(0), &[gl.view(), gr.view()]).expect("matching widths");
    let grads = encoder.backward(&trace, upstream.view())?;
    Ok((loss.value, grads))
}

/// Trains a fresh encoder on the labeled rows of `train`.
///
/// Pairs are rebuilt every epoch from a seed derived from the run seed
/// (unless `freeze_pairs` is set) and visited in shuffled order. The returned
/// encoder is the snapshot with the lowest validation pair loss; without a
/// validation set, the lowest training loss.
pub fn train_bal(
    train: &LabeledDataset,
    validation: Option<&LabeledDataset>,
    config: &TrainConfig,
) -> Result<BalOutcome, TrainError> {
    config.validate()?;
    let start = Instant::now();
    let labeled = train.labeled_subset();
    if config.batch_size > labeled.len() {
        return Err(TrainError::Config(format!(
            "batch_size {} exceeds the {} labeled samples",
            config.batch_size,
            labeled.len()
        )));
    }
    // Fail early on the pairing precondition.
    let frozen = build_pairs(&labeled.labels, &mut rng_for(config.seed, &[stream::PAIRS, 0]))?;

    let validation = match validation {
        Some(v) => {
            let subset = v.labeled_subset();
            let pairs = build_pairs(&subset.labels, &mut rng_for(config.seed, &[stream::VALIDATION_PAIRS]))?;
            Some((subset.features, pairs))
        }
        None => None,
    };

    let mut encoder = config.init_encoder(train.p())?;
    let mut optimizer = Optimizer::new(config.encoder_optimizer);
    let mut selector = Selector::new(config.early_stop_patience);
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let pairs = if config.freeze_pairs || epoch == 0 {
            frozen.clone()
        } else {
            build_pairs(&labeled.labels, &mut rng_for(config.seed, &[stream::PAIRS, epoch as u64]))?
        };
        let order = shuffled(pairs.len(), &mut rng_for(config.seed, &[stream::PAIR_ORDER, epoch as u64]));
        let targets = pairs.target_values();

        let (mut loss_sum, mut seen) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let batch_pairs: Vec<(usize, usize)> = chunk.iter().map(|&i| pairs.pairs[i]).collect();
            let batch_targets: Vec<f64> = chunk.iter().map(|&i| targets[i]).collect();
            let (loss, grads) =
                pair_batch_gradients(&encoder, labeled.features.view(), &batch_pairs, &batch_targets)?;
            ensure_finite(loss, "pair loss")?;
            optimizer.step(&mut encoder, &grads).map_err(step_error)?;
            if !encoder.is_finite() {
                return Err(TrainError::DivergedTraining("encoder parameters".into()));
            }
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        let train_loss = loss_sum / seen.max(1) as f64;

        let validation_loss = match &validation {
            Some((features, pairs)) => {
                let v = pair_loss(&encoder, features.view(), pairs)?;
                ensure_finite(v, "validation pair loss")?;
                Some(v)
            }
            None => None,
        };
        history.push(BalEpoch {
            epoch,
            train_loss,
            validation_loss,
        });
        selector.offer(epoch, [-validation_loss.unwrap_or(train_loss), 0.0], || encoder.clone());
        if selector.should_stop() {
            break;
        }
    }

    let (encoder, best_epoch) = match selector.into_best() {
        Some((epoch, _, snapshot)) => (snapshot, Some(epoch)),
        None => (encoder, None),
    };
    Ok(BalOutcome {
        encoder,
        history,
        best_epoch,
        seconds: start.elapsed().as_secs_f64(),
    })
}
