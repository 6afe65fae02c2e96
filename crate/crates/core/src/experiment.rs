//! Cross-validated experiment runner.
//!
//! A run splits the labeled rows of a dataset into 10 stratified folds and
//! performs 10 repetitions, each testing on two consecutive folds (20%) and
//! training on the other eight. Within a repetition the training rows are
//! standardized, masked down to `m_fraction` labels, and a stratified 20%
//! validation set is carved out before the chosen method is trained.
//!
//! Every random choice is derived from the run seed and the repetition
//! index, so different methods run with the same seed see identical folds,
//! masks, validation splits and initial weights.

use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    make_folds, mask_labels, validation_split, DataError, FoldPlan, LabeledDataset, Standardizer,
    VALIDATION_FRACTION,
};
use crate::eval::{
    aggregate, compute_metrics, latent_separability, project_2d, EvalError, MetricSummary, MetricsReport,
    ProjectionRow, Separability,
};
use crate::label::Label;
use crate::network::Mlp;
use crate::seed::{derive_seed, stream};
use crate::training::{
    predict_probabilities, train_bal, train_entropy_baseline, train_full_supervised, train_sbc, BalEpoch,
    SbcEpoch, StepRecord, SupervisedEpoch, TrainConfig, TrainError,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(#[from] DataError),
    #[error("training: {0}")]
    Train(#[from] TrainError),
    #[error("evaluation: {0}")]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Pair-trained encoder plus semi-supervised classifier.
    Sembc,
    /// Encoder and classifier trained end to end on the labeled rows only.
    Entropy,
    /// The entropy baseline with every training label visible.
    Full,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Sembc => "sembc",
            Method::Entropy => "entropy",
            Method::Full => "full",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOptions {
    pub method: Method,
    pub m_fraction: f64,
    pub config: TrainConfig,
    pub standardize: bool,
    /// Parallel repetitions; results are merged in repetition order.
    pub jobs: usize,
    /// Run only the first `repetitions` of the 10 (all when `None`).
    pub repetitions: Option<usize>,
}

impl ExperimentOptions {
    pub fn new(method: Method, m_fraction: f64, config: TrainConfig) -> Self {
        Self {
            method,
            m_fraction,
            config,
            standardize: true,
            jobs: 1,
            repetitions: None,
        }
    }
}

/// Per-fold entry of the metrics report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub encoder_seconds: f64,
    pub classifier_seconds: f64,
    /// Seconds spent generating on-the-fly labels (0 for baselines).
    pub label_seconds: f64,
}

/// The metrics JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub dataset: String,
    pub method: Method,
    pub seed: u64,
    pub m_fraction: f64,
    pub k: usize,
    pub folds: Vec<FoldMetrics>,
    pub mean: MetricSummary,
    pub std: MetricSummary,
}

impl MetricsFile {
    /// Copy with every wall-clock field zeroed.
    pub fn without_timings(&self) -> Self {
        let mut out = self.clone();
        for f in &mut out.folds {
            f.encoder_seconds = 0.0;
            f.classifier_seconds = 0.0;
            f.label_seconds = 0.0;
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    pub fn total_label_seconds(&self) -> f64 {
        self.folds.iter().map(|f| f.label_seconds).sum()
    }
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub fold: usize,
    pub seed: u64,
    pub metrics: MetricsReport,
    pub encoder_seconds: f64,
    pub classifier_seconds: f64,
    pub label_seconds: f64,
    /// Angular separability of the test-set latents.
    pub separability: Option<Separability>,
    pub bal_history: Vec<BalEpoch>,
    pub bal_best_epoch: Option<usize>,
    pub sbc_history: Vec<SbcEpoch>,
    pub sbc_best_epoch: Option<usize>,
    pub supervised_history: Vec<SupervisedEpoch>,
    pub step_log: Vec<StepRecord>,
    pub encoder: Mlp,
    pub classifier: Mlp,
    pub standardizer: Option<Standardizer>,
    /// Test rows, as indices into the labeled rows of the input dataset.
    pub test_rows: Vec<usize>,
    /// Labeled-row indices whose labels were visible to training.
    pub labeled_rows: Vec<usize>,
    pub n_train: usize,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub n_validation: usize,
}

impl FoldOutcome {
    pub fn fold_metrics(&self) -> FoldMetrics {
        let m = &self.metrics;
        FoldMetrics {
            fold: self.fold,
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            tp: m.confusion.tp,
            fp: m.confusion.fp,
            tn: m.confusion.tn,
            fn_: m.confusion.fn_,
            encoder_seconds: self.encoder_seconds,
            classifier_seconds: self.classifier_seconds,
            label_seconds: self.label_seconds,
        }
    }

    /// Latents of arbitrary rows of the original feature space.
    pub fn encode(&self, features: &Array2<f64>) -> Result<Array2<f64>, ExperimentError> {
        encode_rows(&self.encoder, self.standardizer.as_ref(), features)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub metrics: MetricsFile,
    pub folds: Vec<FoldOutcome>,
}

/// Per-fold record in the run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldManifest {
    pub fold: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub bal_best_epoch: Option<usize>,
    pub bal_history: Vec<BalEpoch>,
    pub sbc_best_epoch: Option<usize>,
    pub sbc_history: Vec<SbcEpoch>,
    pub supervised_history: Vec<SupervisedEpoch>,
    pub separability: Option<Separability>,
    pub metrics: FoldMetrics,
}

/// Run manifest: configuration, seeds, per-epoch losses, per-fold metrics
/// and timings. `spec` carries the caller's run description verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub version: u32,
    pub spec: serde_json::Value,
    pub options: ExperimentOptions,
    pub folds: Vec<FoldManifest>,
    pub metrics: MetricsFile,
}

pub const MANIFEST_FORMAT: &str = "ldssl-run";
pub const MANIFEST_VERSION: u32 = 1;

impl ExperimentResult {
    pub fn manifest(&self, options: &ExperimentOptions, spec: serde_json::Value) -> RunManifest {
        RunManifest {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            spec,
            options: options.clone(),
            folds: self
                .folds
                .iter()
                .map(|f| FoldManifest {
                    fold: f.fold,
                    seed: f.seed,
                    n_train: f.n_train,
                    n_labeled: f.n_labeled,
                    n_unlabeled: f.n_unlabeled,
                    n_validation: f.n_validation,
                    n_test: f.test_rows.len(),
                    bal_best_epoch: f.bal_best_epoch,
                    bal_history: f.bal_history.clone(),
                    sbc_best_epoch: f.sbc_best_epoch,
                    sbc_history: f.sbc_history.clone(),
                    supervised_history: f.supervised_history.clone(),
                    separability: f.separability,
                    metrics: f.fold_metrics(),
                })
                .collect(),
            metrics: self.metrics.clone(),
        }
    }
}

fn validate(options: &ExperimentOptions) -> Result<(), ExperimentError> {
    if !(options.m_fraction > 0.0 && options.m_fraction <= 1.0) {
        return Err(ExperimentError::Config(format!(
            "m must lie in (0, 1], got {}",
            options.m_fraction
        )));
    }
    if options.jobs == 0 {
        return Err(ExperimentError::Config("jobs must be >= 1".into()));
    }
    options.config.validate()?;
    Ok(())
}

/// Runs the cross-validated experiment.
///
/// Labeled rows of `dataset` are split into folds; any unlabeled rows are
/// appended to every training split as extra unlabeled data.
pub fn run_experiment(dataset: &LabeledDataset, options: &ExperimentOptions) -> Result<ExperimentResult, ExperimentError> {
    validate(options)?;
    let base = dataset.select(&dataset.labeled_indices());
    let extra = {
        let rows = dataset.unlabeled_indices();
        (!rows.is_empty()).then(|| dataset.select(&rows))
    };
    let seed = options.config.seed;
    let plan = make_folds(&base, derive_seed(seed, &[stream::FOLDS]))?;
    let reps = options.repetitions.unwrap_or(plan.repetitions()).min(plan.repetitions());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs)
        .build()
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    let folds: Vec<FoldOutcome> = pool.install(|| {
        (0..reps)
            .into_par_iter()
            .map(|r| run_fold(&base, extra.as_ref(), &plan, r, options))
            .collect::<Result<_, _>>()
    })?;

    let reports: Vec<MetricsReport> = folds.iter().map(|f| f.metrics).collect();
    let (mean, std) = aggregate(&reports);
    let metrics = MetricsFile {
        dataset: dataset.provenance().to_string(),
        method: options.method,
        seed,
        m_fraction: options.m_fraction,
        k: options.config.k,
        folds: folds.iter().map(FoldOutcome::fold_metrics).collect(),
        mean,
        std,
    };
    Ok(ExperimentResult { metrics, folds })
}

fn run_fold(
    base: &LabeledDataset,
    extra: Option<&LabeledDataset>,
    plan: &FoldPlan,
    r: usize,
    options: &ExperimentOptions,
) -> Result<FoldOutcome, ExperimentError> {
    let run_seed = options.config.seed;
    let r64 = r as u64;
    let split = plan.repetition(r);
    let mut train_all = base.select(&split.train);
    let mut test = base.select(&split.test);
    let mut extra = extra.cloned();

    let standardizer = if options.standardize {
        let s = Standardizer::fit(train_all.features());
        train_all = train_all.with_features(s.transform(train_all.features()))?;
        test = test.with_features(s.transform(test.features()))?;
        if let Some(e) = extra.take() {
            extra = Some(e.with_features(s.transform(e.features()))?);
        }
        Some(s)
    } else {
        None
    };

    let masked = if options.method == Method::Full || options.m_fraction >= 1.0 {
        train_all
    } else {
        mask_labels(&train_all, options.m_fraction, derive_seed(run_seed, &[stream::MASK, r64]))?.0
    };
    let n_base_train = masked.n();
    let pool = match &extra {
        Some(e) => masked.concat(e)?,
        None => masked,
    };
    let (train_idx, val_idx) = validation_split(
        pool.label_states(),
        VALIDATION_FRACTION,
        derive_seed(run_seed, &[stream::VALIDATION_SPLIT, r64]),
    );
    let train = pool.select(&train_idx);
    let validation = pool.select(&val_idx);

    let labeled_rows: Vec<usize> = train_idx
        .iter()
        .filter(|&&i| i < n_base_train && pool.label_states()[i].is_labeled())
        .map(|&i| split.train[i])
        .collect();

    let config = TrainConfig {
        seed: derive_seed(run_seed, &[stream::REPETITION, r64]),
        ..options.config.clone()
    };

    let mut outcome = FoldOutcome {
        fold: r,
        seed: config.seed,
        metrics: MetricsReport::from_confusion(Default::default()),
        encoder_seconds: 0.0,
        classifier_seconds: 0.0,
        label_seconds: 0.0,
        separability: None,
        bal_history: Vec::new(),
        bal_best_epoch: None,
        sbc_history: Vec::new(),
        sbc_best_epoch: None,
        supervised_history: Vec::new(),
        step_log: Vec::new(),
        encoder: config.init_encoder(train.p())?,
        classifier: config.init_classifier(config.encoder.latent_dim)?,
        standardizer,
        test_rows: split.test.clone(),
        labeled_rows,
        n_train: train.n(),
        n_labeled: train.m(),
        n_unlabeled: train.n() - train.m(),
        n_validation: validation.m(),
    };

    match options.method {
        Method::Sembc => {
            let bal = train_bal(&train, Some(&validation), &config)?;
            let sbc = train_sbc(&train, Some(&validation), &bal.encoder, &config)?;
            outcome.encoder_seconds = bal.seconds;
            outcome.classifier_seconds = sbc.seconds - sbc.label_seconds;
            outcome.label_seconds = sbc.label_seconds;
            outcome.bal_history = bal.history;
            outcome.bal_best_epoch = bal.best_epoch;
            outcome.sbc_history = sbc.history;
            outcome.sbc_best_epoch = sbc.best_epoch;
            outcome.step_log = sbc.step_log;
            outcome.encoder = bal.encoder;
            outcome.classifier = sbc.classifier;
        }
        Method::Entropy | Method::Full => {
            let sup = if options.method == Method::Full {
                train_full_supervised(&train, Some(&validation), &config)?
            } else {
                train_entropy_baseline(&train, Some(&validation), &config)?
            };
            outcome.encoder_seconds = sup.encoder_seconds;
            outcome.classifier_seconds = sup.classifier_seconds;
            outcome.supervised_history = sup.history;
            outcome.encoder = sup.encoder;
            outcome.classifier = sup.classifier;
        }
    }

    let truth = test.truth()?;
    let latents = outcome.encoder.forward(test.features().view()).map_err(TrainError::from)?;
    let probs = predict_probabilities(&outcome.classifier, latents.view())?;
    outcome.metrics = compute_metrics(&truth, &probs, 0.5)?;
    outcome.separability = latent_separability(latents.view(), &truth).ok();
    Ok(outcome)
}

/// Projection rows, raw latents and true labels of the exported rows.
pub type ProjectionExport = (Vec<ProjectionRow>, Array2<f64>, Vec<Label>);

/// Latents of raw feature rows under an optional standardizer.
pub fn encode_rows(
    encoder: &Mlp,
    standardizer: Option<&Standardizer>,
    features: &Array2<f64>,
) -> Result<Array2<f64>, ExperimentError> {
    let x = match standardizer {
        Some(s) => s.transform(features),
        None => features.clone(),
    };
    Ok(encoder.forward(x.view()).map_err(TrainError::from)?)
}

/// Test metrics of a trained encoder/classifier pair on labeled rows.
pub fn evaluate_model(
    encoder: &Mlp,
    classifier: &Mlp,
    standardizer: Option<&Standardizer>,
    dataset: &LabeledDataset,
) -> Result<MetricsReport, ExperimentError> {
    let base = dataset.select(&dataset.labeled_indices());
    let latents = encode_rows(encoder, standardizer, base.features())?;
    let probs = predict_probabilities(classifier, latents.view())?;
    Ok(compute_metrics(&base.truth()?, &probs, 0.5)?)
}

/// 2-D projection of every labeled row of `dataset`. `labeled_rows` marks
/// rows (indices into the labeled rows) whose labels training saw.
pub fn project_model(
    encoder: &Mlp,
    classifier: &Mlp,
    standardizer: Option<&Standardizer>,
    dataset: &LabeledDataset,
    labeled_rows: &[usize],
) -> Result<ProjectionExport, ExperimentError> {
    let base = dataset.select(&dataset.labeled_indices());
    let truth = base.truth()?;
    let latents = encode_rows(encoder, standardizer, base.features())?;
    let probs = predict_probabilities(classifier, latents.view())?;
    let projection = match project_2d(latents.view()) {
        Ok(p) => p,
        Err(EvalError::DegenerateCovariance { projection, .. }) => *projection,
        Err(e) => return Err(e.into()),
    };
    let labeled: std::collections::HashSet<usize> = labeled_rows.iter().copied().collect();
    let rows = (0..base.n())
        .map(|i| ProjectionRow {
            x: projection.coords[[i, 0]],
            y: projection.coords[[i, 1]],
            true_label: truth[i],
            labeled: labeled.contains(&i),
            predicted: Label::from_probability(probs[i], 0.5),
        })
        .collect();
    Ok((rows, latents, truth))
}

/// [`project_model`] for one fold of a finished experiment.
pub fn fold_projection(
    dataset: &LabeledDataset,
    fold: &FoldOutcome,
) -> Result<ProjectionExport, ExperimentError> {
    project_model(
        &fold.encoder,
        &fold.classifier,
        fold.standardizer.as_ref(),
        dataset,
        &fold.labeled_rows,
    )
}

/// Writes the metrics JSON document.
pub fn write_metrics(path: &Path, metrics: &MetricsFile) -> std::io::Result<()> {
    std::fs::write(path, metrics.to_json())
}

/// Reads a metrics JSON document.
pub fn read_metrics(path: &Path) -> Result<MetricsFile, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}
