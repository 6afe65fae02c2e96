use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DataError, LabeledDataset};
use crate::label::LabelState;

fn check_n(n: usize) -> Result<(), DataError> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(DataError::BadParam(format!("n must be a positive even number, got {n}")));
    }
    Ok(())
}

/// Two isotropic unit-variance Gaussians in 2-D, centred at
/// `(-separation/2, 0)` (positive) and `(+separation/2, 0)` (negative).
/// Positives occupy the first `n/2` rows.
pub fn generate_two_gaussians(n: usize, separation: f64, seed: u64) -> Result<LabeledDataset, DataError> {
    check_n(n)?;
    if !(separation > 0.0 && separation.is_finite()) {
        return Err(DataError::BadParam(format!("separation must be positive, got {separation}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = n / 2;
    let mut features = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let (centre, label) = if i < half {
            (-separation / 2.0, LabelState::Positive)
        } else {
            (separation / 2.0, LabelState::Negative)
        };
        let dx: f64 = StandardNormal.sample(&mut rng);
        let dy: f64 = StandardNormal.sample(&mut rng);
        features[[i, 0]] = centre + dx;
        features[[i, 1]] = dy;
        labels.push(label);
    }
    LabeledDataset::new(
        features,
        labels,
        format!("two-gaussians(n={n}, separation={separation}, seed={seed})"),
    )
}

/// Two interleaved half-circles. The positive class lies on the upper unit
/// half-circle, the negative class on the lower half-circle shifted to
/// `(1, 0.5)`. Angles are evenly spaced over `[0, pi]`; Gaussian noise with
/// standard deviation `noise` is added to each coordinate.
pub fn generate_two_moons(n: usize, noise: f64, seed: u64) -> Result<LabeledDataset, DataError> {
    check_n(n)?;
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(DataError::BadParam(format!("noise must be >= 0, got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = n / 2;
    let step = if half > 1 {
        std::f64::consts::PI / (half - 1) as f64
    } else {
        0.0
    };
    let mut features = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let t = (i % half) as f64 * step;
        let (x, y, label) = if i < half {
            (t.cos(), t.sin(), LabelState::Positive)
        } else {
            (1.0 - t.cos(), 0.5 - t.sin(), LabelState::Negative)
        };
        let (nx, ny) = if noise > 0.0 {
            let dx: f64 = StandardNormal.sample(&mut rng);
            let dy: f64 = StandardNormal.sample(&mut rng);
            (noise * dx, noise * dy)
        } else {
            (0.0, 0.0)
        };
        features[[i, 0]] = x + nx;
        features[[i, 1]] = y + ny;
        labels.push(label);
    }
    LabeledDataset::new(
        features,
        labels,
        format!("two-moons(n={n}, noise={noise}, seed={seed})"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_class_counts_and_determinism() {
        let a = generate_two_gaussians(100, 4.0, 3).unwrap();
        assert_eq!(a.class_counts(), (50, 50));
        let b = generate_two_gaussians(100, 4.0, 3).unwrap();
        assert_eq!(a.features(), b.features());
        let c = generate_two_gaussians(100, 4.0, 4).unwrap();
        assert_ne!(a.features(), c.features());
    }

    #[test]
    fn gaussian_means_recoverable() {
        // Sample means must land within 3 standard errors of +-separation/2.
        let n = 20_000;
        let ds = generate_two_gaussians(n, 10.0, 9).unwrap();
        let f = ds.features();
        let half = n / 2;
        let se = 3.0 / (half as f64).sqrt();
        let mean = |rows: std::ops::Range<usize>, col: usize| {
            rows.clone().map(|i| f[[i, col]]).sum::<f64>() / rows.len() as f64
        };
        assert!((mean(0..half, 0) + 5.0).abs() < se);
        assert!((mean(half..n, 0) - 5.0).abs() < se);
        assert!(mean(0..half, 1).abs() < se);
        assert!(mean(half..n, 1).abs() < se);
    }

    #[test]
    fn tiny_gaussian_dataset() {
        let ds = generate_two_gaussians(4, 10.0, 1).unwrap();
        let f = ds.features();
        // With separation 10 and unit noise the class means are far apart.
        let pos = (f[[0, 0]] + f[[1, 0]]) / 2.0;
        let neg = (f[[2, 0]] + f[[3, 0]]) / 2.0;
        let tol = 3.0 / 2f64.sqrt() * 2.0;
        assert!((pos + 5.0).abs() < tol && (neg - 5.0).abs() < tol);
    }

    #[test]
    fn noiseless_moons_on_circle() {
        let ds = generate_two_moons(200, 0.0, 0).unwrap();
        assert_eq!(ds.class_counts(), (100, 100));
        let f = ds.features();
        for i in 0..100 {
            let (x, y) = (f[[i, 0]], f[[i, 1]]);
            assert!(((x * x + y * y).sqrt() - 1.0).abs() < 1e-9);
            assert!(y >= -1e-12);
        }
        for i in 100..200 {
            let (x, y) = (f[[i, 0]] - 1.0, f[[i, 1]] - 0.5);
            assert!(((x * x + y * y).sqrt() - 1.0).abs() < 1e-9);
            assert!(y <= 1e-12);
        }
    }

    #[test]
    fn bad_params() {
        assert!(matches!(generate_two_moons(3, 0.1, 0), Err(DataError::BadParam(_))));
        assert!(matches!(generate_two_moons(10, -0.1, 0), Err(DataError::BadParam(_))));
        assert!(matches!(generate_two_gaussians(10, 0.0, 0), Err(DataError::BadParam(_))));
        assert!(matches!(generate_two_gaussians(0, 1.0, 0), Err(DataError::BadParam(_))));
    }
}
