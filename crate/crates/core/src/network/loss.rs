//! Binary cross-entropy and the pairwise angular-distance head.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::NetworkError;
use crate::geometry::{GeometryError, ZERO_NORM};

/// Predictions are clamped to `[PREDICTION_CLAMP, 1 - PREDICTION_CLAMP]`
/// before taking logs.
pub const PREDICTION_CLAMP: f64 = 1e-7;

/// Cosine values are clamped to `[-1 + ARCCOS_GUARD, 1 - ARCCOS_GUARD]` when
/// evaluating the derivative of `arccos`.
pub const ARCCOS_GUARD: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    /// dL/d(prediction), one entry per sample.
    pub gradient: Array1<f64>,
}

/// Mean binary cross-entropy. The gradient is evaluated at the clamped
/// prediction, so saturated predictions still receive a restoring signal.
pub fn bce_loss(targets: &[f64], predictions: ArrayView1<'_, f64>) -> Result<LossValue, NetworkError> {
    if targets.len() != predictions.len() {
        return Err(NetworkError::ShapeMismatch(format!(
            "{} targets vs {} predictions",
            targets.len(),
            predictions.len()
        )));
    }
    if targets.is_empty() {
        return Err(NetworkError::ShapeMismatch("empty batch".into()));
    }
    let batch = targets.len() as f64;
    let mut value = 0.0;
    let mut gradient = Array1::zeros(targets.len());
    for ((&t, &p), g) in targets.iter().zip(predictions.iter()).zip(gradient.iter_mut()) {
        let p = p.clamp(PREDICTION_CLAMP, 1.0 - PREDICTION_CLAMP);
        value -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
        *g = (p - t) / (p * (1.0 - p) * batch);
    }
    Ok(LossValue {
        value: (value / batch).max(0.0),
        gradient,
    })
}

/// Row-wise cosine similarities and angular distances between two batches.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDistances {
    pub cosines: Array1<f64>,
    pub distances: Array1<f64>,
}

pub fn pair_distances(
    left: ArrayView2<'_, f64>,
    right: ArrayView2<'_, f64>,
) -> Result<PairDistances, NetworkError> {
    if left.dim() != right.dim() {
        return Err(NetworkError::ShapeMismatch(format!(
            "pair sides {:?} vs {:?}",
            left.dim(),
            right.dim()
        )));
    }
    let mut cosines = Array1::zeros(left.nrows());
    for ((a, b), c) in left.rows().into_iter().zip(right.rows()).zip(cosines.iter_mut()) {
        let (na, nb) = (a.dot(&a).sqrt(), b.dot(&b).sqrt());
        if na < ZERO_NORM || nb < ZERO_NORM {
            return Err(GeometryError::ZeroNormVector.into());
        }
        *c = (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0);
    }
    let distances = cosines.mapv(|s| s.acos() / std::f64::consts::PI);
    Ok(PairDistances { cosines, distances })
}

/// Gradients w.r.t. both sides of each pair given `dL/d(distance)`.
pub fn pair_distance_backward(
    left: ArrayView2<'_, f64>,
    right: ArrayView2<'_, f64>,
    pairs: &PairDistances,
    grad_distance: ArrayView1<'_, f64>,
) -> (Array2<f64>, Array2<f64>) {
    let mut grad_left = Array2::zeros(left.dim());
    let mut grad_right = Array2::zeros(right.dim());
    for i in 0..left.nrows() {
        let (a, b) = (left.row(i), right.row(i));
        let s = pairs.cosines[i];
        let guarded = s.clamp(-1.0 + ARCCOS_GUARD, 1.0 - ARCCOS_GUARD);
        let dd_ds = -1.0 / (std::f64::consts::PI * (1.0 - guarded * guarded).sqrt());
        let g = grad_distance[i] * dd_ds;
        let (na, nb) = (a.dot(&a).sqrt(), b.dot(&b).sqrt());
        let inv = 1.0 / (na * nb);
        // ds/da = b/(|a||b|) - s a/|a|^2, symmetric for b.
        let mut gl = grad_left.row_mut(i);
        gl.zip_mut_with(&a, |o, &ai| *o = -s * ai / (na * na));
        gl.scaled_add(inv, &b);
        gl *= g;
        let mut gr = grad_right.row_mut(i);
        gr.zip_mut_with(&b, |o, &bi| *o = -s * bi / (nb * nb));
        gr.scaled_add(inv, &a);
        gr *= g;
    }
    (grad_left, grad_right)
}
