//! SGD with momentum and Adam, both with optional global-norm clipping.

use serde::{Deserialize, Serialize};

use super::{Gradients, Mlp, NetworkError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerSpec {
    SgdMomentum {
        learning_rate: f64,
        momentum: f64,
        clipnorm: Option<f64>,
    },
    Adam {
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        clipnorm: Option<f64>,
    },
}

impl OptimizerSpec {
    /// SGD, lr 0.01, momentum 0.9, clipnorm 1.0.
    pub fn encoder_default() -> Self {
        OptimizerSpec::SgdMomentum {
            learning_rate: 0.01,
            momentum: 0.9,
            clipnorm: Some(1.0),
        }
    }

    /// Adam, lr 0.001.
    pub fn classifier_default() -> Self {
        Self::adam(0.001)
    }

    pub fn adam(learning_rate: f64) -> Self {
        OptimizerSpec::Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            clipnorm: None,
        }
    }

    pub fn sgd(learning_rate: f64, momentum: f64, clipnorm: Option<f64>) -> Self {
        OptimizerSpec::SgdMomentum {
            learning_rate,
            momentum,
            clipnorm,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        match *self {
            OptimizerSpec::SgdMomentum { learning_rate, .. } | OptimizerSpec::Adam { learning_rate, .. } => {
                learning_rate
            }
        }
    }

    pub fn clipnorm(&self) -> Option<f64> {
        match *self {
            OptimizerSpec::SgdMomentum { clipnorm, .. } | OptimizerSpec::Adam { clipnorm, .. } => clipnorm,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.learning_rate() > 0.0 && self.learning_rate().is_finite()) {
            return Err(format!("learning rate must be positive, got {}", self.learning_rate()));
        }
        if let Some(c) = self.clipnorm() {
            if c.is_nan() || c <= 0.0 {
                return Err(format!("clipnorm must be positive, got {c}"));
            }
        }
        match *self {
            OptimizerSpec::SgdMomentum { momentum, .. } if !(0.0..1.0).contains(&momentum) => {
                Err(format!("momentum must lie in [0, 1), got {momentum}"))
            }
            OptimizerSpec::Adam { beta1, beta2, epsilon, .. }
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || epsilon.is_nan() || epsilon <= 0.0 =>
            {
                Err("adam betas must lie in [0, 1) and epsilon be positive".into())
            }
            _ => Ok(()),
        }
    }
}

/// Optimizer state: step counter plus moment buffers shaped like the
/// parameters, allocated on the first step.
#[derive(Debug, Clone)]
pub struct Optimizer {
    spec: OptimizerSpec,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(spec: OptimizerSpec) -> Self {
        Self {
            spec,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn spec(&self) -> &OptimizerSpec {
        &self.spec
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to `net` from `grads`.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<(), NetworkError> {
        let grads = grads.slices();
        let mut params = net.parameters_mut();
        self.apply(&mut params, &grads)
    }

    /// Applies one update to arbitrary parameter buffers.
    pub fn apply(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<(), NetworkError> {
        if params.len() != grads.len()
            || params.iter().zip(grads).any(|(p, g)| p.len() != g.len())
        {
            return Err(NetworkError::ShapeMismatch("gradients do not match parameters".into()));
        }
        if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(NetworkError::NonFiniteGradient);
        }
        if self.first.is_empty() {
            self.first = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            if matches!(self.spec, OptimizerSpec::Adam { .. }) {
                self.second = self.first.clone();
            }
        } else if self.first.len() != grads.len()
            || self.first.iter().zip(grads).any(|(b, g)| b.len() != g.len())
        {
            return Err(NetworkError::ShapeMismatch(
                "optimizer state was built for differently shaped parameters".into(),
            ));
        }

        let scale = match self.spec.clipnorm() {
            Some(limit) => {
                let norm = grads
                    .iter()
                    .flat_map(|g| g.iter())
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt();
                if norm > limit {
                    limit / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };

        self.step += 1;
        match self.spec {
            OptimizerSpec::SgdMomentum {
                learning_rate,
                momentum,
                ..
            } => {
                for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.first) {
                    for ((p, &g), v) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
                        *v = momentum * *v + scale * g;
                        *p -= learning_rate * *v;
                    }
                }
            }
            OptimizerSpec::Adam {
                learning_rate,
                beta1,
                beta2,
                epsilon,
                ..
            } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    for (((p, &g), m), v) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                        let g = scale * g;
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        let m_hat = *m / c1;
                        let v_hat = *v / c2;
                        *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_plain_step() {
        let mut opt = Optimizer::new(OptimizerSpec::sgd(0.01, 0.0, None));
        let mut p = [0.0];
        opt.apply(&mut [&mut p[..]], &[&[1.0][..]]).unwrap();
        assert!((p[0] + 0.01).abs() < 1e-15);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn sgd_momentum_accumulates() {
        let mut opt = Optimizer::new(OptimizerSpec::sgd(0.1, 0.9, None));
        let mut p = [0.0];
        opt.apply(&mut [&mut p[..]], &[&[1.0][..]]).unwrap();
        opt.apply(&mut [&mut p[..]], &[&[1.0][..]]).unwrap();
        // v1 = 1, v2 = 1.9
        assert!((p[0] + 0.1 * (1.0 + 1.9)).abs() < 1e-12);
    }

    #[test]
    fn clipnorm_rescales_global_norm() {
        let mut opt = Optimizer::new(OptimizerSpec::sgd(1.0, 0.0, Some(1.0)));
        let mut a = [0.0];
        let mut b = [0.0];
        opt.apply(&mut [&mut a[..], &mut b[..]], &[&[3.0][..], &[4.0][..]]).unwrap();
        assert!((a[0] + 0.6).abs() < 1e-12 && (b[0] + 0.8).abs() < 1e-12);
    }

    #[test]
    fn clipnorm_leaves_small_gradients() {
        let mut opt = Optimizer::new(OptimizerSpec::sgd(1.0, 0.0, Some(1.0)));
        let mut a = [0.0, 0.0];
        opt.apply(&mut [&mut a[..]], &[&[0.3, 0.4][..]]).unwrap();
        assert_eq!(a, [-0.3, -0.4]);
    }

    #[test]
    fn adam_first_step_is_learning_rate() {
        let mut opt = Optimizer::new(OptimizerSpec::adam(0.001));
        let mut p = [0.0];
        opt.apply(&mut [&mut p[..]], &[&[10.0][..]]).unwrap();
        assert!((p[0] + 0.001).abs() < 1e-9);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut opt = Optimizer::new(OptimizerSpec::adam(0.001));
        let mut p = [0.0];
        let err = opt.apply(&mut [&mut p[..]], &[&[f64::NAN][..]]);
        assert!(matches!(err, Err(NetworkError::NonFiniteGradient)));
        assert_eq!(p[0], 0.0);
        assert_eq!(opt.steps(), 0);
    }

    #[test]
    fn shape_change_rejected() {
        let mut opt = Optimizer::new(OptimizerSpec::sgd(0.1, 0.5, None));
        let mut p = [0.0, 0.0];
        opt.apply(&mut [&mut p[..]], &[&[1.0, 1.0][..]]).unwrap();
        let mut q = [0.0];
        assert!(opt.apply(&mut [&mut q[..]], &[&[1.0][..]]).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(OptimizerSpec::encoder_default().validate().is_ok());
        assert!(OptimizerSpec::classifier_default().validate().is_ok());
        assert!(OptimizerSpec::sgd(0.1, 1.0, None).validate().is_err());
        assert!(OptimizerSpec::sgd(-0.1, 0.5, None).validate().is_err());
        assert!(OptimizerSpec::sgd(0.1, 0.5, Some(0.0)).validate().is_err());
    }
}
