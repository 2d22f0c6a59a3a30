//! A-priori certified-error bounds evaluated numerically.
//!
//! Two bounds are implemented. The first is a margin-style generalization
//! bound for 1-Lipschitz classifiers: given training margins, a radius `r`,
//! and a grid of margin thresholds δ, it reports the threshold minimizing
//!
//!   (1/n) Σ 𝕀[margin_i ≤ δ + r]  +  C·L·W²/(δ√n)  +  √(ln log₂(2/δ) / n)
//!
//! plus a confidence term t/√n. The capacity constant C is not pinned down
//! by theory, so the caller supplies it and the report carries a caveat.
//!
//! The second bound covers uniform fusion ensembles drawn from a pool of
//! base models: if μ_i is the expected certified radius of a random base at
//! sample i, an m-member ensemble has certified training error at radius r
//! of at most (1/n) Σ 𝕀[r ≥ μ_i − √(ln(n/t)/(2m))] with probability 1−t
//! over the draw. Since μ_i is unknown, pool means μ̂_i stand in for it.
//! `theorem3_empirical_check` measures how often random ensembles actually
//! violate the resulting bound.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::ensemble::{CombinationMode, EnsembleModel};
use crate::error::{Error, Result};
use crate::layers::Network;
use crate::numcore::{Rng, Tensor};
use crate::robustness::certify;
use crate::robustness::eval::certified_train_error;
use crate::robustness::model::Model;

/// One row of the δ-grid scan performed by [`theorem2_margin_bound`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaTerm {
    /// Margin threshold δ.
    pub delta: f64,
    /// Fraction of samples with margin ≤ δ + r.
    pub margin_term: f64,
    /// Capacity term C·L·W²/(δ√n).
    pub complexity_term: f64,
    /// Grid-union term √(ln log₂(2/δ) / n).
    pub grid_term: f64,
    /// Sum of the three terms above.
    pub total: f64,
}

/// Output of [`theorem2_margin_bound`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Theorem2Report {
    /// Number of margins supplied.
    pub n: usize,
    /// Perturbation radius the bound certifies against.
    pub r: f64,
    /// Confidence parameter; the bound holds with probability 1 − 2e^(−2t²).
    pub t: f64,
    /// Network width used in the capacity term.
    pub width: usize,
    /// Network depth used in the capacity term.
    pub depth: usize,
    /// User-supplied capacity constant C.
    pub c: f64,
    /// Per-δ breakdown, in grid order.
    pub terms: Vec<DeltaTerm>,
    /// δ achieving the smallest total (first on ties).
    pub chosen_delta: f64,
    /// Confidence term t/√n added on top of the minimum.
    pub t_term: f64,
    /// min_δ total + t/√n. May exceed 1, in which case it is vacuous.
    pub bound: f64,
    pub caveats: Vec<String>,
}

/// Output of [`theorem3_bound`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Theorem3Report {
    /// Number of samples (rows of ρ).
    pub n: usize,
    /// Ensemble size the bound is evaluated for (columns of ρ).
    pub m: usize,
    /// Perturbation radius.
    pub r: f64,
    /// Failure probability budget.
    pub t: f64,
    /// Per-sample mean certified radius across the pool.
    pub mu_hat: Vec<f64>,
    /// Deviation allowance √(ln(n/t)/(2m)) subtracted from each μ̂_i.
    pub threshold: f64,
    /// (1/n) Σ 𝕀[r ≥ μ̂_i − threshold].
    pub bound: f64,
    pub caveats: Vec<String>,
}

fn check_prob_params(r: f64, t: f64, t_max_one: bool) -> Result<()> {
    if !r.is_finite() || r < 0.0 {
        return Err(Error::Param(format!(
            "radius must be finite and non-negative, got {r}"
        )));
    }
    if !t.is_finite() || t <= 0.0 || (t_max_one && t > 1.0) {
        let range = if t_max_one { "(0, 1]" } else { "(0, ∞)" };
        return Err(Error::Param(format!("t must lie in {range}, got {t}")));
    }
    Ok(())
}

/// Evaluates the margin-based generalization bound over a δ grid.
///
/// `margins` are per-sample values y-logit minus best-other-logit (scaled
/// however the caller's analysis requires); `n` is taken as `margins.len()`.
/// Each δ in `delta_grid` must lie in (0, 1]. The capacity term uses the
/// caller-provided width `w`, depth `l`, and constant `c`; the reported
/// bound is only meaningful up to that constant.
pub fn theorem2_margin_bound(
    margins: &[f64],
    r: f64,
    delta_grid: &[f64],
    w: usize,
    l: usize,
    t: f64,
    c: f64,
) -> Result<Theorem2Report> {
    if margins.is_empty() {
        return Err(Error::Param("margin list is empty".into()));
    }
    if let Some(bad) = margins.iter().find(|m| !m.is_finite()) {
        return Err(Error::Param(format!("non-finite margin {bad}")));
    }
    if delta_grid.is_empty() {
        return Err(Error::Param("delta grid is empty".into()));
    }
    if let Some(bad) = delta_grid
        .iter()
        .find(|d| !d.is_finite() || **d <= 0.0 || **d > 1.0)
    {
        return Err(Error::Param(format!(
            "delta grid values must lie in (0, 1], got {bad}"
        )));
    }
    check_prob_params(r, t, false)?;
    if w == 0 || l == 0 {
        return Err(Error::Param(format!(
            "width and depth must be positive, got width {w} depth {l}"
        )));
    }
    if !c.is_finite() || c < 0.0 {
        return Err(Error::Param(format!(
            "capacity constant must be finite and non-negative, got {c}"
        )));
    }

    let n = margins.len();
    let sqrt_n = (n as f64).sqrt();
    let capacity = c * l as f64 * (w as f64) * (w as f64);
    let terms: Vec<DeltaTerm> = delta_grid
        .iter()
        .map(|&delta| {
            let hits = margins.iter().filter(|&&m| m <= delta + r).count();
            let margin_term = hits as f64 / n as f64;
            let complexity_term = capacity / (delta * sqrt_n);
            // log₂(2/δ) ≥ 1 for δ ≤ 1, so the inner ln is non-negative.
            let grid_term = ((2.0 / delta).log2().ln() / n as f64).sqrt();
            DeltaTerm {
                delta,
                margin_term,
                complexity_term,
                grid_term,
                total: margin_term + complexity_term + grid_term,
            }
        })
        .collect();

    let best = terms
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.total.partial_cmp(&b.total).unwrap().then(ia.cmp(ib)))
        .map(|(_, term)| term)
        .unwrap();
    let t_term = t / sqrt_n;

    Ok(Theorem2Report {
        n,
        r,
        t,
        width: w,
        depth: l,
        c,
        chosen_delta: best.delta,
        t_term,
        bound: best.total + t_term,
        terms,
        caveats: vec![
            "capacity term holds only up to the unspecified constant C".into(),
            "bound may exceed 1, in which case it is vacuous".into(),
        ],
    })
}

/// Evaluates the ensemble certified-error bound from a radius matrix.
///
/// `rho` is an n×m matrix: entry (i, j) is base j's certified radius at
/// sample i, clamped to [0, 1]. Row means estimate the unknown expected
/// radii μ_i, and the bound holds with probability at least 1 − t over the
/// random draw of an m-member uniform fusion ensemble from the same base
/// distribution.
pub fn theorem3_bound(rho: &Tensor, r: f64, t: f64) -> Result<Theorem3Report> {
    if rho.shape().len() != 2 {
        return Err(Error::shape_mismatch("rank-2 radius matrix", rho.shape()));
    }
    let (n, m) = (rho.rows(), rho.cols());
    if n == 0 || m == 0 {
        return Err(Error::shape_mismatch("non-empty radius matrix", rho.shape()));
    }
    if let Some(bad) = rho.data().iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
        return Err(Error::Param(format!(
            "radius matrix entries must lie in [0, 1], got {bad}"
        )));
    }
    check_prob_params(r, t, true)?;

    let threshold = ((n as f64 / t).ln() / (2.0 * m as f64)).sqrt();
    let mu_hat: Vec<f64> = (0..n)
        .map(|i| rho.row(i).iter().sum::<f64>() / m as f64)
        .collect();
    let hits = mu_hat.iter().filter(|&&mu| r >= mu - threshold).count();

    Ok(Theorem3Report {
        n,
        m,
        r,
        t,
        mu_hat,
        threshold,
        bound: hits as f64 / n as f64,
        caveats: vec![
            "row means substitute the unknown expected radii μ_i".into(),
            format!("holds with probability at least {} over the ensemble draw", 1.0 - t),
        ],
    })
}

/// Monte-Carlo check of the ensemble bound against actual ensembles.
///
/// Builds the full n×M certified-radius matrix for the pool on `train_set`
/// (clamped to [0, 1]), evaluates [`theorem3_bound`] at (`r`, `t`, `m`),
/// then draws `trials` uniform fusion ensembles of `m` distinct pool
/// members and measures each one's certified training error at radius `r`.
/// Returns the fraction of trials whose error strictly exceeds the bound.
pub fn theorem3_empirical_check(
    pool: &[Network],
    train_set: &Dataset,
    r: f64,
    m: usize,
    t: f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if m == 0 || pool.len() < m {
        return Err(Error::Param(format!(
            "need a pool of at least m = {m} bases, got {}",
            pool.len()
        )));
    }
    if trials == 0 {
        return Err(Error::Param("trials must be positive".into()));
    }
    check_prob_params(r, t, true)?;

    let big_m = pool.len();
    let n = train_set.len();
    let radii: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let x = train_set.feature_row(i);
            let y = train_set.label(i);
            pool.iter()
                .map(move |base| certify::certified_radius(base, x, y).map(|v| v.clamp(0.0, 1.0)))
        })
        .collect::<Result<_>>()?;
    let rho = Tensor::new(&[n, big_m], radii)?;
    let bound = theorem3_bound(&rho, r, t)?.bound;

    let mut rng = Rng::new(seed);
    let mut indices: Vec<usize> = (0..big_m).collect();
    let mut violations = 0usize;
    for _ in 0..trials {
        rng.shuffle(&mut indices);
        let members: Vec<Network> = indices[..m].iter().map(|&j| pool[j].clone()).collect();
        let ensemble = Model::Ensemble(EnsembleModel::uniform(members, CombinationMode::Fusion)?);
        if certified_train_error(&ensemble, train_set, r)? > bound {
            violations += 1;
        }
    }
    Ok(violations as f64 / trials as f64)
}
