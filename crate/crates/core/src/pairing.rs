//! Matched / unmatched pair construction over the labeled subset.
//!
//! Every labeled sample contributes two pairs, in this order: one with a
//! random same-class partner (target distance 0) and one with a random
//! opposite-class partner (target distance 1). The pair set therefore has
//! exactly `2m` entries.

use rand::Rng;
use thiserror::Error;

use crate::label::Label;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PairingError {
    #[error("class {class:?} has {count} labeled samples; at least 2 are required")]
    ClassTooSmall { class: Label, count: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    /// `(i, j)` indices into the labeled subset.
    pub pairs: Vec<(usize, usize)>,
    /// 0 for a matching pair, 1 for a non-matching pair.
    pub targets: Vec<u8>,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn target_values(&self) -> Vec<f64> {
        self.targets.iter().map(|&t| t as f64).collect()
    }
}

/// Builds the pair set for `labels` (the labels of the labeled subset, in
/// subset order).
///
/// The same-class partner is drawn uniformly from the class minus `i`
/// itself, which has the distribution of a redraw-until-different loop
/// without its unbounded retries.
pub fn build_pairs<R: Rng + ?Sized>(labels: &[Label], rng: &mut R) -> Result<PairSet, PairingError> {
    let mut members: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    // Position of each sample inside its class list.
    let mut slot = vec![0usize; labels.len()];
    for (i, &l) in labels.iter().enumerate() {
        let class = class_index(l);
        slot[i] = members[class].len();
        members[class].push(i);
    }
    for (class, label) in [(0, Label::Positive), (1, Label::Negative)] {
        if members[class].len() < 2 {
            return Err(PairingError::ClassTooSmall {
                class: label,
                count: members[class].len(),
            });
        }
    }

    let mut pairs = Vec::with_capacity(2 * labels.len());
    let mut targets = Vec::with_capacity(2 * labels.len());
    for (i, &l) in labels.iter().enumerate() {
        let same = &members[class_index(l)];
        let mut pick = rng.random_range(0..same.len() - 1);
        if pick >= slot[i] {
            pick += 1;
        }
        pairs.push((i, same[pick]));
        targets.push(0);

        let other = &members[class_index(l.other())];
        pairs.push((i, other[rng.random_range(0..other.len())]));
        targets.push(1);
    }
    Ok(PairSet { pairs, targets })
}

#[inline]
fn class_index(l: Label) -> usize {
    match l {
        Label::Positive => 0,
        Label::Negative => 1,
    }
}
