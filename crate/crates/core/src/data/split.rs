//! Label masking, stratified folds, validation carve-out and feature
//! standardization.

use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, LabeledDataset};
use crate::label::{Label, LabelState};

pub const FOLD_COUNT: usize = 10;
/// Each repetition holds out this many consecutive folds as the test set
/// (2 of 10 gives an 80/20 split).
pub const TEST_FOLDS_PER_REPETITION: usize = 2;
pub const VALIDATION_FRACTION: f64 = 0.2;

/// Ground truth removed by [`mask_labels`], readable for evaluation only.
#[derive(Debug)]
pub struct HiddenLabels {
    truth: Vec<Label>,
    reads: AtomicUsize,
}

impl HiddenLabels {
    /// Full ground truth (hidden and visible rows). Counted as an access.
    pub fn reveal(&self) -> &[Label] {
        self.reads.fetch_add(1, Ordering::Relaxed);
        &self.truth
    }

    pub fn reads(&self) -> usize {
        self.reads.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }
}

/// Splits `total` across classes proportionally to `counts` by largest
/// remainder; ties go to the earlier class.
fn apportion(total: usize, counts: [usize; 2]) -> [usize; 2] {
    let n: usize = counts.iter().sum();
    let exact = counts.map(|c| total as f64 * c as f64 / n as f64);
    let mut quota = exact.map(|e| e.floor() as usize);
    let mut left = total - quota.iter().sum::<usize>();
    let mut order = [0usize, 1];
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &c in order.iter().cycle().take(4) {
        if left == 0 {
            break;
        }
        if quota[c] < counts[c] {
            quota[c] += 1;
            left -= 1;
        }
    }
    quota
}

/// Keeps labels on a stratified random `ceil(m_fraction * n)` rows and
/// marks the rest unlabeled.
pub fn mask_labels(
    dataset: &LabeledDataset,
    m_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, HiddenLabels), DataError> {
    if !(m_fraction > 0.0 && m_fraction <= 1.0) {
        return Err(DataError::BadParam(format!("m_fraction must lie in (0, 1], got {m_fraction}")));
    }
    let truth = dataset.truth()?;
    let n = truth.len();
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &l) in truth.iter().enumerate() {
        by_class[(l == Label::Negative) as usize].push(i);
    }
    // Guard against products like 0.3 * 10 = 3.0000000000000004.
    let total = ((m_fraction * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let quota = apportion(total.min(n), [by_class[0].len(), by_class[1].len()]);
    for (c, &q) in quota.iter().enumerate() {
        if q < 2 {
            let class = if c == 0 { Label::Positive } else { Label::Negative };
            return Err(DataError::ClassTooSmall { class, count: q });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states = vec![LabelState::Unlabeled; n];
    for (members, &q) in by_class.iter().zip(&quota) {
        for pick in rand::seq::index::sample(&mut rng, members.len(), q) {
            let row = members[pick];
            states[row] = truth[row].into();
        }
    }
    let masked = dataset.with_labels(states)?;
    Ok((
        masked,
        HiddenLabels {
            truth,
            reads: AtomicUsize::new(0),
        },
    ))
}

/// Stratified assignment of rows to [`FOLD_COUNT`] folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    assignments: Vec<usize>,
}

/// Row indices of one train/test repetition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub repetition: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl FoldPlan {
    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn fold(&self, f: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == f)
            .collect()
    }

    pub fn repetitions(&self) -> usize {
        FOLD_COUNT
    }

    /// Repetition `r` tests on folds `r, r+1, ...` (mod 10) and trains on
    /// the rest.
    pub fn repetition(&self, r: usize) -> FoldSplit {
        let is_test = |f: usize| (0..TEST_FOLDS_PER_REPETITION).any(|o| (r + o) % FOLD_COUNT == f);
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (i, &f) in self.assignments.iter().enumerate() {
            if is_test(f) {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        FoldSplit {
            repetition: r,
            train,
            test,
        }
    }
}

/// Stratified 10-fold partition of a fully labeled dataset.
pub fn make_folds(dataset: &LabeledDataset, seed: u64) -> Result<FoldPlan, DataError> {
    let truth = dataset.truth()?;
    let (pos, neg) = dataset.class_counts();
    if truth.len() < FOLD_COUNT || pos < FOLD_COUNT || neg < FOLD_COUNT {
        return Err(DataError::TooFewSamples(format!(
            "need >= {FOLD_COUNT} samples per class, have {pos} positive and {neg} negative"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![0; truth.len()];
    // Round-robin continues across classes so fold sizes differ by <= 1.
    let mut slot = 0;
    for class in [Label::Positive, Label::Negative] {
        let mut members: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] == class).collect();
        members.shuffle(&mut rng);
        for row in members {
            assignments[row] = slot % FOLD_COUNT;
            slot += 1;
        }
    }
    Ok(FoldPlan { assignments })
}

/// Carves a validation set of `fraction` of the rows, stratified by label
/// state (positive, negative, unlabeled). Returns `(train, validation)`
/// positions, each sorted.
pub fn validation_split(labels: &[LabelState], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut validation) = (Vec::new(), Vec::new());
    for state in [LabelState::Positive, LabelState::Negative, LabelState::Unlabeled] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == state).collect();
        members.shuffle(&mut rng);
        let take = (fraction * members.len() as f64).round() as usize;
        validation.extend_from_slice(&members[..take]);
        train.extend_from_slice(&members[take..]);
    }
    train.sort_unstable();
    validation.sort_unstable();
    (train, validation)
}

/// Per-column zero-mean / unit-variance transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
}

impl Standardizer {
    pub fn fit(features: &Array2<f64>) -> Self {
        let mean = features.mean_axis(Axis(0)).expect("non-empty features");
        let scale = features
            .std_axis(Axis(0), 0.0)
            .mapv(|s| if s > 1e-12 { s } else { 1.0 });
        Self { mean, scale }
    }

    pub fn transform(&self, features: &Array2<f64>) -> Array2<f64> {
        (features - &self.mean) / &self.scale
    }
}
