//! Flat-parameter optimizers: AdamW with decoupled weight decay, and a
//! multiplicative Adam variant that updates weights by sign-aware
//! exponential factors (useful for distance layers, whose loss surface is
//! scale-sensitive in a way additive steps handle poorly).

use crate::error::{Error, Result};

/// Optimizer choice plus hyperparameters; pure configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    AdamW { lr: f64, beta1: f64, beta2: f64, eps: f64, weight_decay: f64 },
    /// Multiplicative Adam: `theta *= exp(-clip(lr * sgn(theta) * g / (sqrt(v_hat) + eps)))`.
    MAdam { lr: f64, beta2: f64, eps: f64, clip: f64 },
}

impl OptimizerKind {
    pub fn adamw_default() -> Self {
        OptimizerKind::AdamW { lr: 0.003, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }

    pub fn madam_default() -> Self {
        OptimizerKind::MAdam { lr: 0.01, beta2: 0.999, eps: 1e-8, clip: 3.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Param(format!("{name} must be finite and positive, got {v}")))
            }
        };
        let unit = |name: &str, v: f64| {
            if v.is_finite() && (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Param(format!("{name} must lie in [0,1), got {v}")))
            }
        };
        match *self {
            OptimizerKind::AdamW { lr, beta1, beta2, eps, weight_decay } => {
                positive("lr", lr)?;
                unit("beta1", beta1)?;
                unit("beta2", beta2)?;
                positive("eps", eps)?;
                if !(weight_decay.is_finite() && weight_decay >= 0.0) {
                    return Err(Error::Param(format!(
                        "weight_decay must be finite and nonnegative, got {weight_decay}"
                    )));
                }
            }
            OptimizerKind::MAdam { lr, beta2, eps, clip } => {
                positive("lr", lr)?;
                unit("beta2", beta2)?;
                positive("eps", eps)?;
                positive("clip", clip)?;
            }
        }
        Ok(())
    }
}

/// Optimizer state over one flat parameter vector.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, n_params: usize) -> Result<Self> {
        kind.validate()?;
        let m = match kind {
            OptimizerKind::AdamW { .. } => vec![0.0; n_params],
            OptimizerKind::MAdam { .. } => Vec::new(),
        };
        Ok(Optimizer { kind, m, v: vec![0.0; n_params], step: 0 })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Apply one update in place. Gradients must be finite; the offending
    /// flat index is reported otherwise.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.v.len() || grads.len() != self.v.len() {
            return Err(Error::shape_mismatch(self.v.len(), (params.len(), grads.len())));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient {} at flat parameter index {i}",
                grads[i]
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        match self.kind {
            OptimizerKind::AdamW { lr, beta1, beta2, eps, weight_decay } => {
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                for i in 0..params.len() {
                    let g = grads[i];
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                    let m_hat = self.m[i] / bc1;
                    let v_hat = self.v[i] / bc2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + eps) + lr * weight_decay * params[i];
                }
            }
            OptimizerKind::MAdam { lr, beta2, eps, clip } => {
                let bc2 = 1.0 - beta2.powi(t);
                for i in 0..params.len() {
                    let g = grads[i];
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                    let v_hat = self.v[i] / bc2;
                    let sign = if params[i] >= 0.0 { 1.0 } else { -1.0 };
                    let exponent = (lr * sign * g / (v_hat.sqrt() + eps)).clamp(-clip, clip);
                    params[i] *= (-exponent).exp();
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
    fn adamw_first_step_is_minus_lr() {
        // With zero state and unit gradient both bias corrections cancel,
        // so the very first step moves by exactly lr / (1 + eps).
        let kind =
            OptimizerKind::AdamW { lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 };
        let mut opt = Optimizer::new(kind, 1).unwrap();
        let mut p = vec![0.0];
        opt.step(&mut p, &[1.0]).unwrap();
        assert!((p[0] + 0.01).abs() < 1e-9, "{}", p[0]);
        // A constant gradient keeps m_hat = g and v_hat = g^2: each step
        // subtracts lr again.
        for _ in 0..9 {
            opt.step(&mut p, &[1.0]).unwrap();
        }
        assert!((p[0] + 0.1).abs() < 1e-6, "{}", p[0]);
        assert_eq!(opt.steps_taken(), 10);
    }

    #[test]
    fn adamw_decay_is_decoupled() {
        // Zero gradient: the update reduces to pure decay, untouched by the
        // adaptive denominator.
        let kind =
            OptimizerKind::AdamW { lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.1 };
        let mut opt = Optimizer::new(kind, 2).unwrap();
        let mut p = vec![1.0, -2.0];
        opt.step(&mut p, &[0.0, 0.0]).unwrap();
        assert!((p[0] - 0.999).abs() < 1e-15);
        assert!((p[1] + 1.998).abs() < 1e-15);
    }

    #[test]
    fn madam_scales_multiplicatively() {
        let mut opt = Optimizer::new(OptimizerKind::madam_default(), 3).unwrap();
        let mut p = vec![1.0, -1.0, 0.0];
        opt.step(&mut p, &[1.0, 1.0, 1.0]).unwrap();
        // v_hat = 1 on the first step, so the exponent is lr/(1+eps).
        assert!((p[0] - (-0.01_f64).exp()).abs() < 1e-8, "{}", p[0]);
        // Negative weight, positive gradient: sgn flips the exponent and
        // the weight grows in magnitude while keeping its sign.
        assert!((p[1] + (0.01_f64).exp()).abs() < 1e-8, "{}", p[1]);
        // Exact zero never moves under a multiplicative update.
        assert_eq!(p[2], 0.0);
    }

    #[test]
    fn madam_exponent_clipping() {
        // Bias correction bounds the raw exponent by lr/sqrt(1-beta2), so a
        // sub-lr clip is the easiest way to see clipping engage: the first
        // step's exponent would be ~lr but is capped at 0.005.
        let kind = OptimizerKind::MAdam { lr: 0.01, beta2: 0.999, eps: 1e-8, clip: 0.005 };
        let mut opt = Optimizer::new(kind, 1).unwrap();
        let mut p = vec![1.0];
        opt.step(&mut p, &[1.0]).unwrap();
        assert!((p[0] - (-0.005_f64).exp()).abs() < 1e-12, "{}", p[0]);
        // Both directions clip: a negative weight grows by at most exp(clip).
        let mut opt = Optimizer::new(kind, 1).unwrap();
        let mut p = vec![-1.0];
        opt.step(&mut p, &[1.0]).unwrap();
        assert!((p[0] + (0.005_f64).exp()).abs() < 1e-12, "{}", p[0]);
    }

    #[test]
    fn rejects_bad_shapes_and_gradients() {
        let mut opt = Optimizer::new(OptimizerKind::adamw_default(), 2).unwrap();
        let mut p = vec![0.0, 0.0];
        assert!(matches!(opt.step(&mut p, &[1.0]), Err(Error::Shape { .. })));
        match opt.step(&mut p, &[1.0, f64::NAN]) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("index 1"), "{msg}"),
            other => panic!("expected numeric error, got {other:?}"),
        }
        // A rejected step must not advance the step counter.
        assert_eq!(opt.steps_taken(), 0);
    }

    #[test]
    fn validates_hyperparameters() {
        assert!(OptimizerKind::AdamW { lr: 0.0, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
            .validate()
            .is_err());
        assert!(OptimizerKind::AdamW { lr: 0.01, beta1: 1.0, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
            .validate()
            .is_err());
        assert!(OptimizerKind::AdamW { lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: -0.1 }
            .validate()
            .is_err());
        assert!(OptimizerKind::MAdam { lr: 0.01, beta2: 0.999, eps: 1e-8, clip: 0.0 }
            .validate()
            .is_err());
        assert!(Optimizer::new(
            OptimizerKind::MAdam { lr: f64::NAN, beta2: 0.999, eps: 1e-8, clip: 3.0 },
            4
        )
        .is_err());
    }
}
