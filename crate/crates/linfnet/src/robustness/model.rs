//! One handle over everything that can be evaluated, attacked, and
//! certified: a single network or an ensemble.
//!
//! The decision rule depends on the variant. Single networks and Fusion
//! ensembles predict by logit argmax; Fusion stays 1-Lipschitz (convex
//! combination of 1-Lipschitz maps), so the margin certificate carries
//! over unchanged. Voting ensembles are certified through a different
//! rule: the weighted argmax vote. A sample is certified at radius `r`
//! when bases holding more than half the total weight each individually
//! certify at `r`; their votes cannot change, so the vote outcome cannot
//! either. The softmax-averaging inference path of a Voting ensemble is
//! evaluated (see `voting_forward`) but never certified — averaged
//! probabilities have no sound margin in logit space.

use crate::ensemble::{CombinationMode, EnsembleModel};
use crate::error::{Error, Result};
use crate::layers::Network;
use crate::robustness::certify::{self, head_logit_interval, logit_margin, predict, RADIUS_CAP};

/// A single network or an ensemble, with one certification interface.
#[derive(Debug, Clone)]
pub enum Model {
    Single(Network),
    Ensemble(EnsembleModel),
}

impl From<Network> for Model {
    fn from(net: Network) -> Self {
        Model::Single(net)
    }
}

impl From<EnsembleModel> for Model {
    fn from(e: EnsembleModel) -> Self {
        Model::Ensemble(e)
    }
}

impl Model {
    pub fn input_width(&self) -> usize {
        match self {
            Model::Single(n) => n.input_width(),
            Model::Ensemble(e) => e.input_width(),
        }
    }

    pub fn output_width(&self) -> usize {
        match self {
            Model::Single(n) => n.output_width(),
            Model::Ensemble(e) => e.output_width(),
        }
    }

    /// True when every component network runs the exact neuron.
    pub fn is_exact(&self) -> bool {
        match self {
            Model::Single(n) => n.is_exact(),
            Model::Ensemble(e) => e.is_exact(),
        }
    }

    /// True when every component network carries EMA-averaged weights.
    pub fn is_ema(&self) -> bool {
        match self {
            Model::Single(n) => n.ema,
            Model::Ensemble(e) => e.bases().iter().all(|b| b.ema),
        }
    }

    /// Human-readable name of the decision rule this model is evaluated
    /// and certified under.
    pub fn decision_rule(&self) -> &'static str {
        match self {
            Model::Single(_) => "logit argmax",
            Model::Ensemble(e) => match e.mode() {
                CombinationMode::Fusion => "fused logit argmax",
                CombinationMode::Voting => "weighted argmax vote",
            },
        }
    }

    /// Inference scores: logits for single networks and Fusion ensembles,
    /// averaged probabilities for Voting ensembles.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Model::Single(n) => n.forward(x),
            Model::Ensemble(e) => e.forward(x),
        }
    }

    /// The class this model assigns to `x` under its decision rule.
    ///
    /// For Voting ensembles this is the weighted argmax vote — the rule
    /// the certificate covers — not the argmax of averaged probabilities.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        match self {
            Model::Single(n) => Ok(predict(&n.forward(x)?)),
            Model::Ensemble(e) => match e.mode() {
                CombinationMode::Fusion => Ok(predict(&e.fusion_forward(x)?)),
                CombinationMode::Voting => {
                    let mut tally = vec![0.0; e.output_width()];
                    for (w, base) in e.weights().iter().zip(e.bases()) {
                        tally[predict(&base.forward(x)?)] += w;
                    }
                    Ok(predict(&tally))
                }
            },
        }
    }

    /// Logit margin under the model's (logit-space) decision rule.
    /// Voting ensembles have none and are rejected.
    pub fn margin(&self, x: &[f64], y: usize) -> Result<f64> {
        match self {
            Model::Single(n) => logit_margin(&n.forward(x)?, y),
            Model::Ensemble(e) => e.margin(x, y),
        }
    }

    /// Would the prediction provably stay `y` for every perturbation of
    /// l-infinity size at most `r`? Sound, not complete.
    pub fn certify_at(&self, x: &[f64], y: usize, r: f64) -> Result<bool> {
        match self {
            Model::Single(n) => certify::certify_at(n, x, y, r),
            Model::Ensemble(e) => {
                require_exact_bases(e)?;
                check_radius(r)?;
                match e.mode() {
                    CombinationMode::Voting => {
                        let mut locked = 0.0;
                        for (w, base) in e.weights().iter().zip(e.bases()) {
                            if certify::certify_at(base, x, y, r)? {
                                locked += w;
                            }
                        }
                        Ok(locked > 0.5)
                    }
                    CombinationMode::Fusion => {
                        if e.bases().iter().all(|b| !b.has_head()) {
                            return Ok(logit_margin(&e.fusion_forward(x)?, y)? > 2.0 * r);
                        }
                        let caches = fusion_caches(e, x)?;
                        fused_interval_certified(e, &caches, y, r)
                    }
                }
            }
        }
    }

    /// Largest radius this module can certify at `x` for class `y`;
    /// 0 for misclassified points. Voting ensembles are not supported:
    /// their certificate is the boolean majority rule of
    /// [`Model::certify_at`], not a margin radius.
    pub fn certified_radius(&self, x: &[f64], y: usize) -> Result<f64> {
        match self {
            Model::Single(n) => certify::certified_radius(n, x, y),
            Model::Ensemble(e) => {
                require_exact_bases(e)?;
                match e.mode() {
                    CombinationMode::Voting => Err(Error::UnsupportedMode(
                        "certified radius of a voting ensemble; use certify_at's majority rule"
                            .into(),
                    )),
                    CombinationMode::Fusion => {
                        if e.bases().iter().all(|b| !b.has_head()) {
                            let margin = logit_margin(&e.fusion_forward(x)?, y)?;
                            return Ok(margin.max(0.0) / 2.0);
                        }
                        // Bisect the fused interval check, reusing each
                        // base's forward pass across probes. The returned
                        // value is the largest radius actually checked.
                        let caches = fusion_caches(e, x)?;
                        let check = |r: f64| {
                            fused_interval_certified(e, &caches, y, r).unwrap_or(false)
                        };
                        if !check(0.0) {
                            return Ok(0.0);
                        }
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
        }
    }
}

fn check_radius(r: f64) -> Result<()> {
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::Param(format!("radius must be finite and nonnegative, got {r}")));
    }
    Ok(())
}

/// Every base must run the exact neuron; the error names the offender.
fn require_exact_bases(e: &EnsembleModel) -> Result<()> {
    for (i, base) in e.bases().iter().enumerate() {
        if let Some((idx, mode)) = base.first_surrogate() {
            return Err(Error::CertificationRefused(format!(
                "base {i} layer {idx} runs surrogate mode {mode}; bounds are only sound in exact mode"
            )));
        }
    }
    Ok(())
}

/// Per-base state reused across radius probes: the clean logits for
/// headless bases, the backbone outputs for head bases.
enum BaseCache {
    Headless(Vec<f64>),
    Headed(Vec<f64>),
}

fn fusion_caches(e: &EnsembleModel, x: &[f64]) -> Result<Vec<BaseCache>> {
    e.bases()
        .iter()
        .map(|base| {
            let trace = base.forward_trace(x)?;
            Ok(if base.has_head() {
                BaseCache::Headed(trace.backbone_out().to_vec())
            } else {
                BaseCache::Headless(trace.logits().to_vec())
            })
        })
        .collect()
}

/// Fused logit interval at radius `r`: the weighted sum of per-base
/// intervals (each base's logits move by at most `r` when headless, or
/// are interval-propagated through its head). Certified when the target
/// logit's floor beats every rival's ceiling.
fn fused_interval_certified(
    e: &EnsembleModel,
    caches: &[BaseCache],
    y: usize,
    r: f64,
) -> Result<bool> {
    let k = e.output_width();
    if y >= k {
        return Err(Error::Label { got: y, classes: k });
    }
    let mut flo = vec![0.0; k];
    let mut fhi = vec![0.0; k];
    for ((w, base), cache) in e.weights().iter().zip(e.bases()).zip(caches) {
        let (lo, hi) = match cache {
            BaseCache::Headless(logits) => {
                (logits.iter().map(|v| v - r).collect::<Vec<_>>(),
                 logits.iter().map(|v| v + r).collect::<Vec<_>>())
            }
            BaseCache::Headed(backbone) => head_logit_interval(base, backbone, r),
        };
        for j in 0..k {
            flo[j] += w * lo[j];
            fhi[j] += w * hi[j];
        }
    }
    Ok((0..k).all(|j| j == y || flo[y] > fhi[j]))
}
