//! The distance-neuron family: exact l-infinity units and their smooth
//! surrogates.
//!
//! A unit holds a template `w` and bias `b` and maps an input `z` to
//! `max_i |z_i - w_i| + b`. The exact form is 1-Lipschitz w.r.t. the
//! l-infinity norm but has a one-hot subgradient, so training also uses two
//! smooth surrogates that approach it as `p` grows:
//!
//! * `PNorm(p)`:     `(sum_i |z_i - w_i|^p)^(1/p) + b`, `p > 1`
//! * `LogSumExp(p)`: `ln(sum_i exp(p |z_i - w_i|)) / p + b`, `p > 0`
//!
//! Both are evaluated in max-factored form so large `p` never overflows.
//! A residual variant mixes in an aligned input coordinate with weight
//! `c in [0, 1)`, which preserves the Lipschitz property by convexity.

use crate::error::{Error, Result};

/// Which operator a distance unit applies to `|z - w|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NeuronMode {
    /// `max_i |z_i - w_i| + b`; 1-Lipschitz, one-hot subgradient.
    Exact,
    /// p-norm surrogate, requires `p > 1`.
    PNorm(f64),
    /// Scaled log-sum-exp surrogate, requires `p > 0`.
    LogSumExp(f64),
}

impl NeuronMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NeuronMode::Exact => Ok(()),
            NeuronMode::PNorm(p) => {
                if p.is_finite() && p > 1.0 {
                    Ok(())
                } else {
                    Err(Error::Param(format!("PNorm requires finite p > 1, got {p}")))
                }
            }
            NeuronMode::LogSumExp(p) => {
                if p.is_finite() && p > 0.0 {
                    Ok(())
                } else {
                    Err(Error::Param(format!("LogSumExp requires finite p > 0, got {p}")))
                }
            }
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, NeuronMode::Exact)
    }

    /// Compact text form used in model descriptors and metrics
    /// (`exact`, `pnorm:8`, `lse:20`).
    pub fn describe(&self) -> String {
        match *self {
            NeuronMode::Exact => "exact".to_string(),
            NeuronMode::PNorm(p) => format!("pnorm:{p}"),
            NeuronMode::LogSumExp(p) => format!("lse:{p}"),
        }
    }

    pub fn parse(s: &str) -> Result<NeuronMode> {
        let mode = if s == "exact" {
            NeuronMode::Exact
        } else if let Some(p) = s.strip_prefix("pnorm:") {
            let p: f64 = p
                .parse()
                .map_err(|_| Error::Format(format!("bad pnorm parameter {p:?}")))?;
            NeuronMode::PNorm(p)
        } else if let Some(p) = s.strip_prefix("lse:") {
            let p: f64 = p
                .parse()
                .map_err(|_| Error::Format(format!("bad lse parameter {p:?}")))?;
            NeuronMode::LogSumExp(p)
        } else {
            return Err(Error::Format(format!("unknown neuron mode {s:?}")));
        };
        mode.validate()?;
        Ok(mode)
    }
}

/// Sign with `sgn(0) = +1` (and `sgn(-0.0) = +1`), so subgradient choices
/// are deterministic.
#[inline]
pub(crate) fn sgn(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Exponent below which `exp` terms are dropped: `e^-40 ~ 4e-18` is
/// invisible next to the max term's contribution of 1.
const EXP_CUTOFF: f64 = -40.0;

/// Max over `|z_i - w_i|` plus the lowest-index argmax and the sign of the
/// winning difference.
#[inline]
pub(crate) fn unit_exact(z: &[f64], w: &[f64]) -> (f64, usize, f64) {
    debug_assert_eq!(z.len(), w.len());
    let mut best = -1.0;
    let mut arg = 0usize;
    let mut sg = 1.0;
    for i in 0..z.len() {
        let d = z[i] - w[i];
        let a = d.abs();
        if a > best {
            best = a;
            arg = i;
            sg = sgn(d);
        }
    }
    (best, arg, sg)
}

/// `(sum_i |z_i - w_i|^p)^(1/p)`, computed as `m * (sum (|d_i|/m)^p)^(1/p)`
/// so the powers never overflow. Terms below the underflow cutoff are
/// dropped; they cannot move the sum at 64-bit precision.
pub(crate) fn unit_pnorm(z: &[f64], w: &[f64], p: f64) -> f64 {
    debug_assert_eq!(z.len(), w.len());
    let mut m = 0.0f64;
    for i in 0..z.len() {
        let a = (z[i] - w[i]).abs();
        if a > m {
            m = a;
        }
    }
    if m == 0.0 {
        return 0.0;
    }
    let thr = (EXP_CUTOFF / p).exp() * m;
    let mut s = 0.0f64;
    for i in 0..z.len() {
        let a = (z[i] - w[i]).abs();
        if a >= thr {
            s += (a / m).powf(p);
        }
    }
    m * s.powf(1.0 / p)
}

/// `ln(sum_i exp(p |z_i - w_i|)) / p` in max-subtracted form
/// `m + ln(sum_i exp(p (|d_i| - m))) / p`; the shifted exponents are all
/// non-positive, so the sum lies in `[1, d]` and the result in
/// `[m, m + ln(d)/p]`.
pub(crate) fn unit_lse(z: &[f64], w: &[f64], p: f64) -> f64 {
    debug_assert_eq!(z.len(), w.len());
    let mut m = 0.0f64;
    for i in 0..z.len() {
        let a = (z[i] - w[i]).abs();
        if a > m {
            m = a;
        }
    }
    let mut s = 0.0f64;
    for i in 0..z.len() {
        let t = p * ((z[i] - w[i]).abs() - m);
        if t >= EXP_CUTOFF {
            s += t.exp();
        }
    }
    m + s.ln() / p
}

/// Adds `scale` times the unit gradient to `dz` and `-scale` times it to
/// `dw_row` (the distance depends on `z_i - w_i` only, so the two gradients
/// are negatives of each other). Returns nothing for the all-zero
/// difference in surrogate modes: the zero vector is a valid subgradient of
/// a norm at the origin.
pub(crate) fn accum_unit_grad(
    z: &[f64],
    w: &[f64],
    mode: &NeuronMode,
    scale: f64,
    dz: &mut [f64],
    mut dw_row: Option<&mut [f64]>,
) {
    debug_assert_eq!(z.len(), w.len());
    match *mode {
        NeuronMode::Exact => {
            let (_, arg, sg) = unit_exact(z, w);
            dz[arg] += scale * sg;
            if let Some(dw) = dw_row.as_deref_mut() {
                dw[arg] -= scale * sg;
            }
        }
        NeuronMode::PNorm(p) => {
            let mut m = 0.0f64;
            for i in 0..z.len() {
                let a = (z[i] - w[i]).abs();
                if a > m {
                    m = a;
                }
            }
            if m == 0.0 {
                return;
            }
            let thr = (EXP_CUTOFF / p).exp() * m;
            let mut s = 0.0f64;
            for i in 0..z.len() {
                let a = (z[i] - w[i]).abs();
                if a >= thr {
                    s += (a / m).powf(p);
                }
            }
            // d norm / d d_i = sgn(d_i) (|d_i| / norm)^(p-1)
            //              = sgn(d_i) (|d_i|/m)^(p-1) / s^((p-1)/p)
            let denom = s / s.powf(1.0 / p);
            for i in 0..z.len() {
                let d = z[i] - w[i];
                let a = d.abs();
                if a < thr {
                    continue;
                }
                let g = scale * sgn(d) * (a / m).powf(p - 1.0) / denom;
                dz[i] += g;
                if let Some(dw) = dw_row.as_deref_mut() {
                    dw[i] -= g;
                }
            }
        }
        NeuronMode::LogSumExp(p) => {
            let mut m = 0.0f64;
            for i in 0..z.len() {
                let a = (z[i] - w[i]).abs();
                if a > m {
                    m = a;
                }
            }
            let mut s = 0.0f64;
            for i in 0..z.len() {
                let t = p * ((z[i] - w[i]).abs() - m);
                if t >= EXP_CUTOFF {
                    s += t.exp();
                }
            }
            for i in 0..z.len() {
                let d = z[i] - w[i];
                let t = p * (d.abs() - m);
                if t < EXP_CUTOFF {
                    continue;
                }
                let g = scale * sgn(d) * t.exp() / s;
                dz[i] += g;
                if let Some(dw) = dw_row.as_deref_mut() {
                    dw[i] -= g;
                }
            }
        }
    }
}

fn check_pair(z: &[f64], w: &[f64]) -> Result<()> {
    if z.len() != w.len() {
        return Err(Error::shape_mismatch(z.len(), w.len()));
    }
    if z.is_empty() {
        return Err(Error::Param("distance neuron needs at least one input".into()));
    }
    Ok(())
}

/// Single-unit forward pass for any mode.
pub fn dist_neuron_forward(z: &[f64], w: &[f64], b: f64, mode: &NeuronMode) -> Result<f64> {
    check_pair(z, w)?;
    mode.validate()?;
    let dist = match *mode {
        NeuronMode::Exact => unit_exact(z, w).0,
        NeuronMode::PNorm(p) => unit_pnorm(z, w, p),
        NeuronMode::LogSumExp(p) => unit_lse(z, w, p),
    };
    Ok(dist + b)
}

/// Single-unit gradients `(dz, dw, db)`. In Exact mode `dz` is one-hot at
/// the lowest-index argmax with value `sgn(z_k - w_k)`; the surrogate modes
/// are smooth. Always `dw = -dz` and `db = 1`.
pub fn dist_neuron_grad(
    z: &[f64],
    w: &[f64],
    _b: f64,
    mode: &NeuronMode,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    check_pair(z, w)?;
    mode.validate()?;
    let mut dz = vec![0.0; z.len()];
    let mut dw = vec![0.0; z.len()];
    accum_unit_grad(z, w, mode, 1.0, &mut dz, Some(&mut dw));
    Ok((dz, dw, 1.0))
}

/// Residual unit `c*z_j + (1-c)*max_i |z_i - w_i| + b`: a convex mix of a
/// skip coordinate and an exact distance, hence still 1-Lipschitz.
pub fn residual_unit_forward(z: &[f64], w: &[f64], b: f64, c: f64, j: usize) -> Result<f64> {
    check_pair(z, w)?;
    if !(0.0..1.0).contains(&c) {
        return Err(Error::Param(format!("residual coefficient must be in [0,1), got {c}")));
    }
    if j >= z.len() {
        return Err(Error::Param(format!(
            "residual skip index {j} out of range for width {}",
            z.len()
        )));
    }
    Ok(c * z[j] + (1.0 - c) * unit_exact(z, w).0 + b)
}
