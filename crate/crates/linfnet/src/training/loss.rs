//! Classification losses on raw logits: multi-class hinge (the natural
//! choice when the score margin is what gets certified) and scaled
//! cross-entropy.

use crate::error::{Error, Result};

/// Loss applied to a logit vector and a target class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Loss {
    /// `max(0, margin - (logit_y - max_{j!=y} logit_j))`.
    Hinge { margin: f64 },
    /// Cross-entropy of `softmax(scale * logits)` against the target.
    CrossEntropy { scale: f64 },
}

impl Loss {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Loss::Hinge { margin } => {
                if !(margin.is_finite() && margin > 0.0) {
                    return Err(Error::Param(format!(
                        "hinge margin must be finite and positive, got {margin}"
                    )));
                }
            }
            Loss::CrossEntropy { scale } => {
                if !(scale.is_finite() && scale > 0.0) {
                    return Err(Error::Param(format!(
                        "cross-entropy scale must be finite and positive, got {scale}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn loss(&self, logits: &[f64], y: usize) -> Result<f64> {
        match *self {
            Loss::Hinge { margin } => hinge_loss(logits, y, margin),
            Loss::CrossEntropy { scale } => cross_entropy_loss(logits, y, scale),
        }
    }

    /// Loss value together with its gradient in the logits.
    pub fn loss_and_grad(&self, logits: &[f64], y: usize) -> Result<(f64, Vec<f64>)> {
        match *self {
            Loss::Hinge { margin } => hinge_grad(logits, y, margin),
            Loss::CrossEntropy { scale } => cross_entropy_grad(logits, y, scale),
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            Loss::Hinge { margin } => format!("hinge:{margin}"),
            Loss::CrossEntropy { scale } => format!("ce:{scale}"),
        }
    }

    /// Inverse of [`Loss::describe`], e.g. `hinge:0.4` or `ce:1`.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || Error::Param(format!("unknown loss {text:?} (want hinge:M or ce:S)"));
        let (kind, value) = text.split_once(':').ok_or_else(bad)?;
        let value: f64 = value.trim().parse().map_err(|_| bad())?;
        let loss = match kind.trim() {
            "hinge" => Loss::Hinge { margin: value },
            "ce" => Loss::CrossEntropy { scale: value },
            _ => return Err(bad()),
        };
        loss.validate()?;
        Ok(loss)
    }
}

fn check_target(logits: &[f64], y: usize) -> Result<()> {
    if logits.len() < 2 {
        return Err(Error::Param(format!(
            "loss needs at least 2 logits, got {}",
            logits.len()
        )));
    }
    if y >= logits.len() {
        return Err(Error::Label { got: y, classes: logits.len() });
    }
    Ok(())
}

/// Strongest rival logit and its (lowest) index.
fn best_other(logits: &[f64], y: usize) -> (f64, usize) {
    let mut best = f64::NEG_INFINITY;
    let mut idx = 0;
    for (j, &v) in logits.iter().enumerate() {
        if j != y && v > best {
            best = v;
            idx = j;
        }
    }
    (best, idx)
}

pub fn hinge_loss(logits: &[f64], y: usize, margin: f64) -> Result<f64> {
    Ok(hinge_grad(logits, y, margin)?.0)
}

pub fn hinge_grad(logits: &[f64], y: usize, margin: f64) -> Result<(f64, Vec<f64>)> {
    Loss::Hinge { margin }.validate()?;
    check_target(logits, y)?;
    let (rival, rival_idx) = best_other(logits, y);
    let loss = (margin - (logits[y] - rival)).max(0.0);
    let mut grad = vec![0.0; logits.len()];
    if loss > 0.0 {
        grad[y] = -1.0;
        grad[rival_idx] = 1.0;
    }
    Ok((loss, grad))
}

pub fn cross_entropy_loss(logits: &[f64], y: usize, scale: f64) -> Result<f64> {
    Ok(cross_entropy_grad(logits, y, scale)?.0)
}

pub fn cross_entropy_grad(logits: &[f64], y: usize, scale: f64) -> Result<(f64, Vec<f64>)> {
    Loss::CrossEntropy { scale }.validate()?;
    check_target(logits, y)?;
    // Max-subtracted log-sum-exp keeps the exponentials in range.
    let m = logits.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(scale * v));
    let mut sum = 0.0;
    let mut probs = vec![0.0; logits.len()];
    for (p, &v) in probs.iter_mut().zip(logits) {
        *p = (scale * v - m).exp();
        sum += *p;
    }
    let loss = m + sum.ln() - scale * logits[y];
    let mut grad = probs;
    for (j, g) in grad.iter_mut().enumerate() {
        *g = scale * (*g / sum - if j == y { 1.0 } else { 0.0 });
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hinge_matches_hand_computation() {
        // Margin of the true class: 2.0 - 1.7 = 0.3, short of 0.5 by 0.2.
        let (loss, grad) = hinge_grad(&[2.0, 0.5, 1.7], 0, 0.5).unwrap();
        assert!((loss - 0.2).abs() < 1e-15);
        assert_eq!(grad, vec![-1.0, 0.0, 1.0]);
        // Satisfied margin: zero loss, zero gradient.
        let (loss, grad) = hinge_grad(&[2.0, 0.5, 1.7], 0, 0.2).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grad, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn hinge_rival_tie_takes_lowest_index() {
        let (_, grad) = hinge_grad(&[1.0, 3.0, 3.0], 0, 1.0).unwrap();
        assert_eq!(grad, vec![-1.0, 1.0, 0.0]);
    }

    #[test]
    fn cross_entropy_frozen_values() {
        // Uniform logits: -ln(1/k) regardless of the common value or scale.
        let loss = cross_entropy_loss(&[0.7; 4], 2, 3.0).unwrap();
        assert!((loss - 4.0_f64.ln()).abs() < 1e-14);
        // Two logits one apart: ln(1 + e^-1).
        let loss = cross_entropy_loss(&[1.0, 0.0], 0, 1.0).unwrap();
        assert!((loss - 0.3132616875182228).abs() < 1e-14);
        // Scale sharpens: ln(1 + e^-4), written via an independent formula.
        let loss = cross_entropy_loss(&[1.0, 0.0], 0, 4.0).unwrap();
        assert!((loss - (-4.0_f64).exp().ln_1p()).abs() < 1e-14);
    }

    #[test]
    fn cross_entropy_grad_is_scaled_softmax_residual() {
        let (_, grad) = cross_entropy_grad(&[1.0, 0.0], 0, 1.0).unwrap();
        let sigma = 1.0 / (1.0 + (-1.0_f64).exp());
        assert!((grad[0] - (sigma - 1.0)).abs() < 1e-14);
        assert!((grad[1] - (1.0 - sigma)).abs() < 1e-14);
        // Gradient components of a softmax residual always sum to zero.
        let (_, grad) = cross_entropy_grad(&[0.3, -2.0, 5.1, 0.0], 2, 2.5).unwrap();
        assert!(grad.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_grad_matches_finite_differences() {
        let logits = vec![0.4, -1.2, 2.0, 0.9];
        let (_, grad) = cross_entropy_grad(&logits, 1, 1.7).unwrap();
        for i in 0..logits.len() {
            let h = 1e-6;
            let mut lo = logits.clone();
            let mut hi = logits.clone();
            lo[i] -= h;
            hi[i] += h;
            let num = (cross_entropy_loss(&hi, 1, 1.7).unwrap()
                - cross_entropy_loss(&lo, 1, 1.7).unwrap())
                / (2.0 * h);
            assert!((grad[i] - num).abs() < 1e-8, "coord {i}: {} vs {num}", grad[i]);
        }
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let loss = cross_entropy_loss(&[800.0, -800.0], 0, 1.0).unwrap();
        assert_eq!(loss, 0.0);
        let loss = cross_entropy_loss(&[800.0, -800.0], 1, 1.0).unwrap();
        assert!((loss - 1600.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_targets_and_params() {
        assert!(matches!(
            hinge_grad(&[1.0, 2.0], 2, 0.5),
            Err(Error::Label { got: 2, classes: 2 })
        ));
        assert!(matches!(
            cross_entropy_grad(&[1.0, 2.0], 5, 1.0),
            Err(Error::Label { got: 5, classes: 2 })
        ));
        assert!(hinge_grad(&[1.0], 0, 0.5).is_err());
        assert!(Loss::Hinge { margin: 0.0 }.validate().is_err());
        assert!(Loss::Hinge { margin: f64::NAN }.validate().is_err());
        assert!(Loss::CrossEntropy { scale: -1.0 }.validate().is_err());
    }

    #[test]
    fn describe_parse_round_trip() {
        for loss in [Loss::Hinge { margin: 0.4 }, Loss::CrossEntropy { scale: 2.0 }] {
            assert_eq!(Loss::parse(&loss.describe()).unwrap(), loss);
        }
        assert!(Loss::parse("hinge").is_err());
        assert!(Loss::parse("l2:1").is_err());
        assert!(Loss::parse("ce:0").is_err());
    }
}
