//! Dataset-level evaluation: clean, robust (attacked), and certified
//! accuracy in one report, plus the two error estimators that sandwich the
//! true robust error — an attack-based lower estimate and a sound
//! margin-based upper estimate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::ensemble::CombinationMode;
use crate::error::{Error, Result};
use crate::numcore::Rng;
use crate::robustness::attack::{pgd_attack, AttackConfig};
use crate::robustness::certify::predict;
use crate::robustness::model::Model;

/// Everything one evaluation run produces. Accuracies are fractions in
/// `[0, 1]`; the CLI renders them as percentages.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertReport {
    /// Samples evaluated.
    pub n: usize,
    /// Budget used for both certification and the attack.
    pub epsilon: f64,
    /// The decision rule the numbers refer to.
    pub decision_rule: String,
    /// Whether the evaluated weights were EMA shadows.
    pub ema: bool,
    pub clean: f64,
    pub robust: f64,
    pub certified: f64,
    /// Voting ensembles only: clean accuracy of the probability-averaging
    /// inference path, which is evaluated but never certified.
    pub clean_prob_avg: Option<f64>,
    /// Per-sample certified radii (absent for Voting ensembles, whose
    /// certificate is a boolean majority rule, not a radius).
    pub radii: Option<Vec<f64>>,
    /// Per-sample certification outcome at `epsilon`.
    pub certified_at_r: Vec<bool>,
    pub caveats: Vec<String>,
}

fn check_budget(name: &str, r: f64) -> Result<()> {
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::Param(format!("{name} must be finite and nonnegative, got {r}")));
    }
    Ok(())
}

/// Per-sample attack with a stream derived from the sample index, so
/// reports are independent of evaluation order and thread count.
fn sample_attack_cfg(base: &AttackConfig, index: usize) -> AttackConfig {
    AttackConfig { seed: Rng::new(base.seed).derive(index as u64).seed(), ..base.clone() }
}

struct SampleOutcome {
    clean: bool,
    robust: bool,
    certified: bool,
    radius: Option<f64>,
    prob_clean: Option<bool>,
}

/// Evaluates clean, robust, and certified accuracy at one budget.
///
/// `attack.epsilon` must equal `epsilon`: the ordering guarantee
/// `certified <= robust <= clean` only holds when the attacker and the
/// certifier talk about the same ball.
pub fn eval_suite(
    model: &Model,
    ds: &Dataset,
    epsilon: f64,
    attack: &AttackConfig,
) -> Result<CertReport> {
    check_budget("epsilon", epsilon)?;
    attack.validate()?;
    if attack.epsilon != epsilon {
        return Err(Error::Param(format!(
            "attack budget {} differs from evaluation epsilon {epsilon}",
            attack.epsilon
        )));
    }
    let voting = matches!(model, Model::Ensemble(e) if e.mode() == CombinationMode::Voting);
    let outcomes: Vec<SampleOutcome> = (0..ds.len())
        .into_par_iter()
        .map(|i| -> Result<SampleOutcome> {
            let x = ds.feature_row(i);
            let y = ds.label(i);
            let clean = model.predict(x)? == y;
            let certified = model.certify_at(x, y, epsilon)?;
            let radius = if voting { None } else { Some(model.certified_radius(x, y)?) };
            let robust = pgd_attack(model, x, y, &sample_attack_cfg(attack, i))?.is_none();
            let prob_clean = match model {
                Model::Ensemble(e) if voting => {
                    Some(predict(&e.voting_forward(x)?) == y)
                }
                _ => None,
            };
            Ok(SampleOutcome { clean, robust, certified, radius, prob_clean })
        })
        .collect::<Result<_>>()?;

    let n = outcomes.len();
    let frac = |f: &dyn Fn(&SampleOutcome) -> bool| {
        outcomes.iter().filter(|o| f(o)).count() as f64 / n as f64
    };
    let mut caveats = vec![
        "certification is sound but incomplete: an uncertified sample is unknown, not \
         necessarily attackable"
            .to_string(),
        "robust accuracy is an attack-based upper estimate of true robustness".to_string(),
    ];
    if voting {
        caveats.push(
            "certificates cover the weighted-vote decision rule; the probability-averaging \
             inference path (clean_prob_avg) is evaluated but never certified"
                .to_string(),
        );
    }
    Ok(CertReport {
        n,
        epsilon,
        decision_rule: model.decision_rule().to_string(),
        ema: model.is_ema(),
        clean: frac(&|o| o.clean),
        robust: frac(&|o| o.robust),
        certified: frac(&|o| o.certified),
        clean_prob_avg: if voting {
            Some(frac(&|o| o.prob_clean == Some(true)))
        } else {
            None
        },
        radii: if voting {
            None
        } else {
            Some(outcomes.iter().map(|o| o.radius.unwrap_or(0.0)).collect())
        },
        certified_at_r: outcomes.iter().map(|o| o.certified).collect(),
        caveats,
    })
}

/// Sound upper estimate of the certified training error at radius `r`:
/// the fraction of samples whose certified radius does not exceed `r`.
/// The exact worst-case error is intractable; this dominates it.
pub fn certified_train_error(model: &Model, ds: &Dataset, r: f64) -> Result<f64> {
    check_budget("radius", r)?;
    let flags: Vec<bool> = (0..ds.len())
        .into_par_iter()
        .map(|i| Ok(model.certified_radius(ds.feature_row(i), ds.label(i))? <= r))
        .collect::<Result<_>>()?;
    Ok(flags.iter().filter(|&&b| b).count() as f64 / flags.len() as f64)
}

/// Attack-based lower estimate of the robust error at radius `r`: the
/// fraction of samples misclassified clean or successfully attacked. The
/// true error takes a supremum over the ball; an attack only samples it.
pub fn robust_error_empirical(
    model: &Model,
    ds: &Dataset,
    r: f64,
    attack: &AttackConfig,
) -> Result<f64> {
    check_budget("radius", r)?;
    attack.validate()?;
    if attack.epsilon != r {
        return Err(Error::Param(format!(
            "attack budget {} differs from requested radius {r}",
            attack.epsilon
        )));
    }
    let flags: Vec<bool> = (0..ds.len())
        .into_par_iter()
        .map(|i| {
            let adv =
                pgd_attack(model, ds.feature_row(i), ds.label(i), &sample_attack_cfg(attack, i))?;
            Ok(adv.is_some())
        })
        .collect::<Result<_>>()?;
    Ok(flags.iter().filter(|&&b| b).count() as f64 / flags.len() as f64)
}
