//! Quantifies how far surrogate-neuron gradients sit from the exact
//! neuron's one-hot subgradient.
//!
//! The exact unit max_i |z_i - w_i| + b has gradient e_k * sgn(z_k - w_k)
//! at any input whose largest coordinate gap is unique. The smooth
//! surrogates spread that mass across coordinates, which is what makes
//! them trainable; as p grows they re-concentrate onto the argmax. The
//! profile reports the l1 distance to the one-hot limit for both
//! surrogate families over a caller-chosen list of p values, so the
//! sparsity/smoothness trade-off can be read off a table.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{dist_neuron_grad, NeuronMode};

/// Minimum gap between the largest and second-largest |z_i - w_i| for the
/// one-hot reference gradient to be considered well-defined.
pub const SPARSITY_GAP_TOL: f64 = 1e-2;

/// One profiled value of `p`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparsityRow {
    pub p: f64,
    /// l1 distance of the p-norm surrogate's input gradient to the one-hot
    /// subgradient.
    pub pnorm_l1: f64,
    /// Same distance for the log-sum-exp surrogate.
    pub lse_l1: f64,
}

/// Profiles surrogate gradient sparsity for a single unit at input `z`
/// with weights `w`.
///
/// Requires |z - w| to have a unique maximum with a gap of at least
/// [`SPARSITY_GAP_TOL`] to the runner-up; near ties make the one-hot
/// reference ill-conditioned and are rejected. Every `p` must be valid
/// for both surrogate families, i.e. p > 1.
pub fn gradient_sparsity_profile(
    z: &[f64],
    w: &[f64],
    p_list: &[f64],
) -> Result<Vec<SparsityRow>> {
    if z.len() != w.len() {
        return Err(Error::shape_mismatch(z.len(), w.len()));
    }
    if z.len() < 2 {
        return Err(Error::Param(
            "sparsity profile needs at least 2 coordinates".into(),
        ));
    }
    if p_list.is_empty() {
        return Err(Error::Param("p list is empty".into()));
    }

    let diffs: Vec<f64> = z.iter().zip(w).map(|(a, b)| (a - b).abs()).collect();
    let k = diffs
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.partial_cmp(b).unwrap().then(ib.cmp(ia)))
        .map(|(i, _)| i)
        .unwrap();
    let runner_up = diffs
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != k)
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let gap = diffs[k] - runner_up;
    if gap < SPARSITY_GAP_TOL {
        return Err(Error::Param(format!(
            "largest coordinate gap {:.6} and runner-up {:.6} are within {SPARSITY_GAP_TOL}; \
             the one-hot reference gradient is degenerate",
            diffs[k], runner_up
        )));
    }

    // The gap check above guarantees z[k] != w[k], so the sign is clean.
    let sign_k = if z[k] - w[k] > 0.0 { 1.0 } else { -1.0 };
    let l1_to_onehot = |dz: &[f64]| -> f64 {
        dz.iter()
            .enumerate()
            .map(|(i, &g)| {
                let target = if i == k { sign_k } else { 0.0 };
                (g - target).abs()
            })
            .sum()
    };

    p_list
        .iter()
        .map(|&p| {
            let (dz_pnorm, _, _) = dist_neuron_grad(z, w, 0.0, &NeuronMode::PNorm(p))?;
            let (dz_lse, _, _) = dist_neuron_grad(z, w, 0.0, &NeuronMode::LogSumExp(p))?;
            Ok(SparsityRow {
                p,
                pnorm_l1: l1_to_onehot(&dz_pnorm),
                lse_l1: l1_to_onehot(&dz_lse),
            })
        })
        .collect()
}
