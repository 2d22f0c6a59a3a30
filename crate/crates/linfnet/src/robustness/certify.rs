//! Sound certification of single networks. Every distance layer is
//! 1-Lipschitz per output in the l-infinity metric, so an input shift of at
//! most `r` moves each backbone output by at most `r`. For a headless
//! network that turns the logit margin directly into a certified radius;
//! with an affine head the backbone interval is pushed through the head by
//! interval arithmetic instead.
//!
//! Certification refuses to run on surrogate-mode networks: the smooth
//! approximations overshoot the true max, and a bound computed on them says
//! nothing about the exact network.

use crate::error::{Error, Result};
use crate::layers::Network;

/// Radii above this are reported as-is rather than searched further; a head
/// that ignores its input entirely is certified at any radius.
pub(crate) const RADIUS_CAP: f64 = 1e6;

/// Index of the largest logit, lowest index winning ties.
pub fn predict(logits: &[f64]) -> usize {
    let mut best = f64::NEG_INFINITY;
    let mut idx = 0;
    for (j, &v) in logits.iter().enumerate() {
        if v > best {
            best = v;
            idx = j;
        }
    }
    idx
}

/// `logits[y] - max_{j != y} logits[j]`; positive iff `y` strictly wins.
pub fn logit_margin(logits: &[f64], y: usize) -> Result<f64> {
    if logits.len() < 2 {
        return Err(Error::Param(format!("margin needs at least 2 logits, got {}", logits.len())));
    }
    if y >= logits.len() {
        return Err(Error::Label { got: y, classes: logits.len() });
    }
    let mut rival = f64::NEG_INFINITY;
    for (j, &v) in logits.iter().enumerate() {
        if j != y && v > rival {
            rival = v;
        }
    }
    Ok(logits[y] - rival)
}

pub(crate) fn require_exact(net: &Network) -> Result<()> {
    if let Some((idx, mode)) = net.first_surrogate() {
        return Err(Error::CertificationRefused(format!(
            "layer {idx} runs surrogate mode {mode}; bounds are only sound in exact mode"
        )));
    }
    Ok(())
}

/// Would the prediction provably stay `y` for every perturbation of
/// l-infinity size at most `r`? Sound, not complete: `false` means unknown.
pub fn certify_at(net: &Network, x: &[f64], y: usize, r: f64) -> Result<bool> {
    require_exact(net)?;
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::Param(format!("radius must be finite and nonnegative, got {r}")));
    }
    let trace = net.forward_trace(x)?;
    match net.head() {
        None => Ok(logit_margin(trace.logits(), y)? > 2.0 * r),
        Some(_) => {
            if y >= net.output_width() {
                return Err(Error::Label { got: y, classes: net.output_width() });
            }
            Ok(head_certified(net, trace.backbone_out(), y, r))
        }
    }
}

/// Largest radius this module can certify at `x` for class `y`: the margin
/// radius for headless networks, a bisection of the interval check when a
/// head is present. Misclassified points get radius 0.
pub fn certified_radius(net: &Network, x: &[f64], y: usize) -> Result<f64> {
    require_exact(net)?;
    let trace = net.forward_trace(x)?;
    match net.head() {
        None => Ok(logit_margin(trace.logits(), y)?.max(0.0) / 2.0),
        Some(_) => {
            if y >= net.output_width() {
                return Err(Error::Label { got: y, classes: net.output_width() });
            }
            let backbone = trace.backbone_out();
            let check = |r: f64| head_certified(net, backbone, y, r);
            if !check(0.0) {
                return Ok(0.0);
            }
            // Grow to bracket the frontier, then bisect. The returned value
            // is the largest radius actually checked, keeping it sound.
            let mut lo = 0.0;
            let mut hi = 1e-3;
            while check(hi) {
                lo = hi;
                hi *= 2.0;
                if hi > RADIUS_CAP {
                    return Ok(lo);
                }
            }
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if check(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(lo)
        }
    }
}

/// Logit interval of a head network whose backbone outputs each live
/// within `r` of the given clean values: the box is pushed through the
/// head by interval arithmetic.
pub(crate) fn head_logit_interval(
    net: &Network,
    backbone: &[f64],
    r: f64,
) -> (Vec<f64>, Vec<f64>) {
    let head = net.head().expect("caller checked");
    let (mut lo, mut hi): (Vec<f64>, Vec<f64>) = backbone
        .iter()
        .map(|&b| (b - r, b + r))
        .unzip();
    if net.negate_logits() {
        let nlo: Vec<f64> = hi.iter().map(|v| -v).collect();
        let nhi: Vec<f64> = lo.iter().map(|v| -v).collect();
        lo = nlo;
        hi = nhi;
    }
    head.propagate_interval(&lo, &hi)
}

/// Interval check for head networks: certified when the target logit's
/// floor beats every rival's ceiling.
fn head_certified(net: &Network, backbone: &[f64], y: usize, r: f64) -> bool {
    let (llo, lhi) = head_logit_interval(net, backbone, r);
    (0..llo.len()).all(|j| j == y || llo[y] > lhi[j])
}
