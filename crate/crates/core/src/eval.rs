//! Classification metrics, latent-space diagnostics and 2-D projection.
//!
//! Class convention: the positive class is label 0, so a classifier output
//! `p >= threshold` predicts the negative class.
//!
//! Precision, recall and F1 are macro-averaged over the two classes; F1 is
//! the harmonic mean of the macro precision and macro recall. Positive-class
//! figures are reported alongside.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{angular_distance, GeometryError};
use crate::label::Label;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("threshold must lie in (0, 1), got {0}")]
    BadThreshold(f64),
    #[error("class {class:?} has {count} samples; at least 2 are required")]
    ClassTooSmall { class: Label, count: usize },
    #[error("need at least 3 points to project, got {0}")]
    TooFewPoints(usize),
    /// The covariance has rank below 2; `projection` holds the padded result.
    #[error("covariance has rank {rank} < 2")]
    DegenerateCovariance { rank: usize, projection: Box<Projection> },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub confusion: Confusion,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub positive_precision: f64,
    pub positive_recall: f64,
    pub positive_f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

impl MetricsReport {
    pub fn from_confusion(c: Confusion) -> Self {
        let positive_precision = ratio(c.tp, c.tp + c.fp);
        let positive_recall = ratio(c.tp, c.tp + c.fn_);
        let negative_precision = ratio(c.tn, c.tn + c.fn_);
        let negative_recall = ratio(c.tn, c.tn + c.fp);
        let precision = (positive_precision + negative_precision) / 2.0;
        let recall = (positive_recall + negative_recall) / 2.0;
        Self {
            confusion: c,
            accuracy: ratio(c.tp + c.tn, c.total()),
            precision,
            recall,
            f1: harmonic(precision, recall),
            positive_precision,
            positive_recall,
            positive_f1: harmonic(positive_precision, positive_recall),
        }
    }
}

pub fn confusion(truth: &[Label], predicted: &[Label]) -> Result<Confusion, EvalError> {
    if truth.len() != predicted.len() {
        return Err(EvalError::LengthMismatch(truth.len(), predicted.len()));
    }
    let mut c = Confusion::default();
    for (&t, &p) in truth.iter().zip(predicted) {
        match (t, p) {
            (Label::Positive, Label::Positive) => c.tp += 1,
            (Label::Negative, Label::Positive) => c.fp += 1,
            (Label::Negative, Label::Negative) => c.tn += 1,
            (Label::Positive, Label::Negative) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Metrics for predicted probabilities of the negative class.
pub fn compute_metrics(truth: &[Label], probabilities: &[f64], threshold: f64) -> Result<MetricsReport, EvalError> {
    if truth.len() != probabilities.len() {
        return Err(EvalError::LengthMismatch(truth.len(), probabilities.len()));
    }
    if truth.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(EvalError::BadThreshold(threshold));
    }
    let predicted: Vec<Label> = probabilities
        .iter()
        .map(|&p| Label::from_probability(p, threshold))
        .collect();
    Ok(MetricsReport::from_confusion(confusion(truth, &predicted)?))
}

/// Mean and population standard deviation of the four headline metrics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSummary {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MetricSummary {
    pub fn get(&self, metric: &str) -> Option<f64> {
        match metric {
            "accuracy" => Some(self.accuracy),
            "precision" => Some(self.precision),
            "recall" => Some(self.recall),
            "f1" => Some(self.f1),
            _ => None,
        }
    }
}

pub const METRIC_NAMES: [&str; 4] = ["accuracy", "precision", "recall", "f1"];

/// `(mean, std)` across folds; std uses the fold count as divisor.
pub fn aggregate(reports: &[MetricsReport]) -> (MetricSummary, MetricSummary) {
    if reports.is_empty() {
        return (MetricSummary::default(), MetricSummary::default());
    }
    let n = reports.len() as f64;
    let stat = |f: fn(&MetricsReport) -> f64| {
        let mean = reports.iter().map(f).sum::<f64>() / n;
        let var = reports.iter().map(|r| (f(r) - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    };
    let (a, sa) = stat(|r| r.accuracy);
    let (p, sp) = stat(|r| r.precision);
    let (r, sr) = stat(|r| r.recall);
    let (f, sf) = stat(|r| r.f1);
    (
        MetricSummary {
            accuracy: a,
            precision: p,
            recall: r,
            f1: f,
        },
        MetricSummary {
            accuracy: sa,
            precision: sp,
            recall: sr,
            f1: sf,
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Separability {
    pub intra: f64,
    pub inter: f64,
    /// `inter / intra` (intra floored at 1e-12).
    pub ratio: f64,
}

impl Separability {
    pub fn gap(&self) -> f64 {
        self.inter - self.intra
    }
}

/// Above this many pairs, separability is estimated from a fixed-seed
/// random sample of [`SEPARABILITY_SAMPLE`] pairs.
pub const SEPARABILITY_EXHAUSTIVE_LIMIT: usize = 2_000_000;
pub const SEPARABILITY_SAMPLE: usize = 200_000;

/// Mean angular distance within classes and across classes.
pub fn latent_separability(latents: ArrayView2<'_, f64>, labels: &[Label]) -> Result<Separability, EvalError> {
    if latents.nrows() != labels.len() {
        return Err(EvalError::LengthMismatch(latents.nrows(), labels.len()));
    }
    let pos = labels.iter().filter(|&&l| l == Label::Positive).count();
    for (class, count) in [(Label::Positive, pos), (Label::Negative, labels.len() - pos)] {
        if count < 2 {
            return Err(EvalError::ClassTooSmall { class, count });
        }
    }
    let rows: Vec<Vec<f64>> = latents.rows().into_iter().map(|r| r.to_vec()).collect();
    let n = rows.len();
    let (mut intra, mut n_intra, mut inter, mut n_inter) = (0.0, 0usize, 0.0, 0usize);
    let mut visit = |i: usize, j: usize| -> Result<(), EvalError> {
        let d = angular_distance(&rows[i], &rows[j])?;
        if labels[i] == labels[j] {
            intra += d;
            n_intra += 1;
        } else {
            inter += d;
            n_inter += 1;
        }
        Ok(())
    };
    if n * (n - 1) / 2 <= SEPARABILITY_EXHAUSTIVE_LIMIT {
        for i in 0..n {
            for j in i + 1..n {
                visit(i, j)?;
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eb_a2a7);
        for _ in 0..SEPARABILITY_SAMPLE {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            visit(i, j)?;
        }
    }
    let intra = intra / n_intra.max(1) as f64;
    let inter = inter / n_inter.max(1) as f64;
    Ok(Separability {
        intra,
        inter,
        ratio: inter / intra.max(1e-12),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// `[n × 2]` coordinates on the top two principal axes.
    pub coords: Array2<f64>,
    /// Variance along each of the two axes.
    pub explained_variance: [f64; 2],
    pub total_variance: f64,
}

/// PCA onto the top two principal components of the mean-centred latents.
/// Each axis is oriented so its largest-magnitude loading is positive.
pub fn project_2d(latents: ArrayView2<'_, f64>) -> Result<Projection, EvalError> {
    let (n, q) = latents.dim();
    if n < 3 {
        return Err(EvalError::TooFewPoints(n));
    }
    let mean = latents.mean_axis(Axis(0)).expect("n >= 3");
    let centred = &latents - &mean;
    let cov = centred.t().dot(&centred) / (n - 1) as f64;
    let total_variance = (0..q).map(|i| cov[[i, i]]).sum::<f64>();

    let eig = SymmetricEigen::new(DMatrix::from_fn(q, q, |i, j| cov[[i, j]]));
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap().then(a.cmp(&b)));
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rank = eig
        .eigenvalues
        .iter()
        .filter(|&&v| v > 1e-12 * scale.max(1e-300))
        .count();

    let mut coords = Array2::zeros((n, 2));
    let mut explained = [0.0; 2];
    for (axis, &idx) in order.iter().take(2.min(rank)).enumerate() {
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        let lead = v
            .iter()
            .copied()
            .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let dir = ndarray::Array1::from(v);
        coords.column_mut(axis).assign(&centred.dot(&dir));
        explained[axis] = eig.eigenvalues[idx].max(0.0);
    }
    let projection = Projection {
        coords,
        explained_variance: explained,
        total_variance,
    };
    if rank < 2 {
        return Err(EvalError::DegenerateCovariance {
            rank,
            projection: Box::new(projection),
        });
    }
    Ok(projection)
}

/// One row of the projection export.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionRow {
    pub x: f64,
    pub y: f64,
    pub true_label: Label,
    pub labeled: bool,
    pub predicted: Label,
}

/// Writes `x,y,true_label,labeled_flag,predicted_label`; labels as 0/1
/// (0 = positive).
pub fn write_projection_csv(path: &Path, rows: &[ProjectionRow]) -> Result<(), EvalError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "x,y,true_label,labeled_flag,predicted_label")?;
    for r in rows {
        writeln!(
            out,
            "{:?},{:?},{},{},{}",
            r.x,
            r.y,
            r.true_label.target() as u8,
            r.labeled as u8,
            r.predicted.target() as u8
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Writes raw latents (`z0..z{q-1}`) with the true label, for external tools.
pub fn write_latents_csv(path: &Path, latents: ArrayView2<'_, f64>, truth: &[Label]) -> Result<(), EvalError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header: Vec<String> = (0..latents.ncols()).map(|i| format!("z{i}")).collect();
    writeln!(out, "{},true_label", header.join(","))?;
    for (row, t) in latents.rows().into_iter().zip(truth) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(out, "{},{}", cells.join(","), t.target() as u8)?;
    }
    out.flush()?;
    Ok(())
}
