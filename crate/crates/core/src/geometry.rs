//! Angular geometry of latent vectors.
//!
//! Everything here is a pure function of its inputs (and, for
//! [`on_the_fly_label`], of the caller's random source). Latent vectors are
//! plain `&[f64]` slices; [`LatentVector`] is a validated owned wrapper for
//! API boundaries.

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use thiserror::Error;

use crate::label::Label;

/// Norms below this are treated as zero.
pub const ZERO_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("vector has (near) zero norm")]
    ZeroNormVector,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("latent vector must have dimension >= 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("latent vector contains a non-finite entry")]
    NonFinite,
    #[error("need k = {k} anchors per class, have {positives} positive and {negatives} negative")]
    InsufficientAnchors {
        k: usize,
        positives: usize,
        negatives: usize,
    },
    #[error("anchor count k must be >= 1")]
    ZeroK,
}

/// An owned latent vector (dimension >= 2, all entries finite).
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    pub fn new(values: Vec<f64>) -> Result<Self, GeometryError> {
        if values.len() < 2 {
            return Err(GeometryError::DimensionTooSmall(values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for LatentVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<(), GeometryError> {
    if a.len() != b.len() {
        return Err(GeometryError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, GeometryError> {
    check_dims(a, b)?;
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    let (na, nb) = (na.sqrt(), nb.sqrt());
    if na < ZERO_NORM || nb < ZERO_NORM {
        return Err(GeometryError::ZeroNormVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Angle between `a` and `b` divided by pi; lies in `[0, 1]`.
pub fn angular_distance(a: &[f64], b: &[f64]) -> Result<f64, GeometryError> {
    Ok(cosine_similarity(a, b)?.acos() / std::f64::consts::PI)
}

/// `d_same / (d_same + d_other)`, or 0.5 when both distances vanish.
#[inline]
pub fn normalized_from_distances(d_same: f64, d_other: f64) -> f64 {
    if d_same < ZERO_NORM && d_other < ZERO_NORM {
        0.5
    } else {
        d_same / (d_same + d_other)
    }
}

/// Distance from `z` to `same`, normalized by the distances to both `same`
/// and `other`.
pub fn normalized_cross_distance(
    z: &[f64],
    same: &[f64],
    other: &[f64],
) -> Result<f64, GeometryError> {
    let d_same = angular_distance(z, same)?;
    let d_other = angular_distance(z, other)?;
    Ok(normalized_from_distances(d_same, d_other))
}

/// Labeled latents available as anchors, plus the per-class draw count `k`.
#[derive(Debug, Clone)]
pub struct AnchorSet {
    positives: Array2<f64>,
    negatives: Array2<f64>,
    k: usize,
}

impl AnchorSet {
    /// Rows of `positives` / `negatives` are latent vectors of the labeled
    /// positive and negative samples.
    pub fn new(positives: Array2<f64>, negatives: Array2<f64>, k: usize) -> Result<Self, GeometryError> {
        if k == 0 {
            return Err(GeometryError::ZeroK);
        }
        if positives.nrows() < k || negatives.nrows() < k {
            return Err(GeometryError::InsufficientAnchors {
                k,
                positives: positives.nrows(),
                negatives: negatives.nrows(),
            });
        }
        if positives.ncols() != negatives.ncols() {
            return Err(GeometryError::DimensionMismatch {
                left: positives.ncols(),
                right: negatives.ncols(),
            });
        }
        Ok(Self {
            positives,
            negatives,
            k,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.positives.ncols()
    }

    pub fn positives(&self) -> &Array2<f64> {
        &self.positives
    }

    pub fn negatives(&self) -> &Array2<f64> {
        &self.negatives
    }

    pub fn positive(&self, i: usize) -> ArrayView1<'_, f64> {
        self.positives.row(i)
    }

    pub fn negative(&self, i: usize) -> ArrayView1<'_, f64> {
        self.negatives.row(i)
    }
}

/// Row indices of one random anchor draw: `k` distinct positives and `k`
/// distinct negatives. Entry `j` of each list forms the j-th anchor couple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorDraw {
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

/// Draws `k` anchors per class without replacement. Positives are drawn
/// first, then negatives.
pub fn draw_anchors<R: Rng + ?Sized>(anchors: &AnchorSet, rng: &mut R) -> AnchorDraw {
    let k = anchors.k;
    let positives = rand::seq::index::sample(rng, anchors.positives.nrows(), k).into_vec();
    let negatives = rand::seq::index::sample(rng, anchors.negatives.nrows(), k).into_vec();
    AnchorDraw {
        positives,
        negatives,
    }
}

/// Summed normalized cross-distances `(to positives, to negatives)` for a
/// fixed draw.
pub fn cross_distance_sums(
    z: &[f64],
    anchors: &AnchorSet,
    draw: &AnchorDraw,
) -> Result<(f64, f64), GeometryError> {
    if z.len() != anchors.dim() {
        return Err(GeometryError::DimensionMismatch {
            left: z.len(),
            right: anchors.dim(),
        });
    }
    let (mut to_pos, mut to_neg) = (0.0, 0.0);
    for (&pi, &ni) in draw.positives.iter().zip(&draw.negatives) {
        let pos = anchors.positive(pi);
        let neg = anchors.negative(ni);
        let d_pos = angular_distance(z, pos.as_slice().expect("row-major anchors"))?;
        let d_neg = angular_distance(z, neg.as_slice().expect("row-major anchors"))?;
        to_pos += normalized_from_distances(d_pos, d_neg);
        to_neg += normalized_from_distances(d_neg, d_pos);
    }
    Ok((to_pos, to_neg))
}

/// Label for a fixed draw: positive unless strictly closer to the negatives.
pub fn label_from_draw(
    z: &[f64],
    anchors: &AnchorSet,
    draw: &AnchorDraw,
) -> Result<Label, GeometryError> {
    let (to_pos, to_neg) = cross_distance_sums(z, anchors, draw)?;
    Ok(if to_pos <= to_neg {
        Label::Positive
    } else {
        Label::Negative
    })
}

/// Pseudo-label of an unlabeled latent `z` from a fresh random draw of `k`
/// positive and `k` negative anchors.
pub fn on_the_fly_label<R: Rng + ?Sized>(
    z: &[f64],
    anchors: &AnchorSet,
    rng: &mut R,
) -> Result<Label, GeometryError> {
    let draw = draw_anchors(anchors, rng);
    label_from_draw(z, anchors, &draw)
}
