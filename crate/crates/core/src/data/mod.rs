//! Datasets with per-row label state, synthetic generators, CSV ingestion,
//! label masking and cross-validation splits.

mod csv_io;
mod split;
mod synthetic;

pub use csv_io::{load_csv, save_csv, LabelTokens};
pub use split::{
    make_folds, mask_labels, validation_split, FoldPlan, FoldSplit, HiddenLabels, Standardizer,
    FOLD_COUNT, TEST_FOLDS_PER_REPETITION, VALIDATION_FRACTION,
};
pub use synthetic::{generate_two_gaussians, generate_two_moons};

use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::{Array2, Axis};
use thiserror::Error;

use crate::label::{Label, LabelState};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("bad parameter: {0}")]
    BadParam(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    ParseError {
        line: u64,
        column: usize,
        message: String,
    },
    #[error("unknown label token {token:?} at line {line}")]
    UnknownLabelToken { line: u64, token: String },
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("class {class:?} has only {count} labeled samples")]
    ClassTooSmall { class: Label, count: usize },
    #[error("too few samples for cross-validation: {0}")]
    TooFewSamples(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Feature rows that carry a known label, in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSubset {
    pub features: Array2<f64>,
    pub labels: Vec<Label>,
}

impl LabeledSubset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `(positives, negatives)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l == Label::Positive).count();
        (pos, self.labels.len() - pos)
    }

    pub fn targets(&self) -> Vec<f64> {
        self.labels.iter().map(|l| l.target()).collect()
    }
}

/// Feature matrix `[n × p]` with a label state per row.
///
/// Accessors that expose unlabeled rows ([`LabeledDataset::features`],
/// [`LabeledDataset::unlabeled_features`]) bump a per-instance counter so
/// tests can assert that a trainer never touched unlabeled data.
#[derive(Debug)]
pub struct LabeledDataset {
    features: Array2<f64>,
    labels: Vec<LabelState>,
    feature_names: Vec<String>,
    provenance: String,
    unlabeled_reads: AtomicUsize,
}

impl Clone for LabeledDataset {
    fn clone(&self) -> Self {
        Self {
            features: self.features.clone(),
            labels: self.labels.clone(),
            feature_names: self.feature_names.clone(),
            provenance: self.provenance.clone(),
            unlabeled_reads: AtomicUsize::new(0),
        }
    }
}

impl PartialEq for LabeledDataset {
    fn eq(&self, other: &Self) -> bool {
        self.features == other.features
            && self.labels == other.labels
            && self.feature_names == other.feature_names
    }
}

impl LabeledDataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<LabelState>,
        provenance: impl Into<String>,
    ) -> Result<Self, DataError> {
        let names = (0..features.ncols()).map(|i| format!("x{i}")).collect();
        Self::with_feature_names(features, labels, names, provenance)
    }

    pub fn with_feature_names(
        features: Array2<f64>,
        labels: Vec<LabelState>,
        feature_names: Vec<String>,
        provenance: impl Into<String>,
    ) -> Result<Self, DataError> {
        if features.nrows() != labels.len() {
            return Err(DataError::Invalid(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if features.ncols() == 0 {
            return Err(DataError::Invalid("no feature columns".into()));
        }
        if feature_names.len() != features.ncols() {
            return Err(DataError::Invalid("feature name count differs from column count".into()));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(DataError::Invalid("non-finite feature".into()));
        }
        Ok(Self {
            features: features.as_standard_layout().into_owned(),
            labels,
            feature_names,
            provenance: provenance.into(),
            unlabeled_reads: AtomicUsize::new(0),
        })
    }

    pub fn from_labels(
        features: Array2<f64>,
        labels: &[Label],
        provenance: impl Into<String>,
    ) -> Result<Self, DataError> {
        Self::new(features, labels.iter().map(|&l| l.into()).collect(), provenance)
    }

    /// Number of rows.
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Feature dimensionality.
    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    /// Number of labeled rows.
    pub fn m(&self) -> usize {
        self.labels.iter().filter(|l| l.is_labeled()).count()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.labels.iter().all(|l| l.is_labeled())
    }

    /// True when labeled rows do not outnumber unlabeled ones.
    pub fn is_semi_supervised_regime(&self) -> bool {
        self.m() <= self.n() - self.m()
    }

    pub fn label_states(&self) -> &[LabelState] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// All feature rows, labeled and unlabeled.
    pub fn features(&self) -> &Array2<f64> {
        if self.labels.iter().any(|l| !l.is_labeled()) {
            self.unlabeled_reads.fetch_add(1, Ordering::Relaxed);
        }
        &self.features
    }

    /// Count of calls that exposed unlabeled rows.
    pub fn unlabeled_reads(&self) -> usize {
        self.unlabeled_reads.load(Ordering::Relaxed)
    }

    pub fn labeled_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.labels[i].is_labeled()).collect()
    }

    pub fn unlabeled_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.labels[i].is_labeled()).collect()
    }

    /// Labeled rows only. Never reads unlabeled rows.
    pub fn labeled_subset(&self) -> LabeledSubset {
        let idx = self.labeled_indices();
        LabeledSubset {
            features: self.features.select(Axis(0), &idx),
            labels: idx.iter().map(|&i| self.labels[i].label().expect("labeled")).collect(),
        }
    }

    pub fn unlabeled_features(&self) -> Array2<f64> {
        self.unlabeled_reads.fetch_add(1, Ordering::Relaxed);
        self.features.select(Axis(0), &self.unlabeled_indices())
    }

    /// `(labeled positives, labeled negatives)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l == LabelState::Positive).count();
        let neg = self.labels.iter().filter(|&&l| l == LabelState::Negative).count();
        (pos, neg)
    }

    /// Ground-truth labels of a fully labeled dataset.
    pub fn truth(&self) -> Result<Vec<Label>, DataError> {
        self.labels
            .iter()
            .map(|l| {
                l.label()
                    .ok_or_else(|| DataError::Invalid("dataset is not fully labeled".into()))
            })
            .collect()
    }

    /// New dataset from the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select(Axis(0), rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            provenance: self.provenance.clone(),
            unlabeled_reads: AtomicUsize::new(0),
        }
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &LabeledDataset) -> Result<LabeledDataset, DataError> {
        if self.p() != other.p() {
            return Err(DataError::Invalid(format!(
                "cannot append {} columns to {}",
                other.p(),
                self.p()
            )));
        }
        let features = ndarray::concatenate(Axis(0), &[self.features.view(), other.features.view()])
            .map_err(|e| DataError::Invalid(e.to_string()))?;
        let labels = self.labels.iter().chain(&other.labels).copied().collect();
        Self::with_feature_names(features, labels, self.feature_names.clone(), self.provenance.clone())
    }

    pub fn with_labels(&self, labels: Vec<LabelState>) -> Result<LabeledDataset, DataError> {
        Self::with_feature_names(
            self.features.clone(),
            labels,
            self.feature_names.clone(),
            self.provenance.clone(),
        )
    }

    pub fn with_features(&self, features: Array2<f64>) -> Result<LabeledDataset, DataError> {
        Self::with_feature_names(
            features,
            self.labels.clone(),
            self.feature_names.clone(),
            self.provenance.clone(),
        )
    }
}
