//! Projected gradient descent in the l-infinity ball.
//!
//! The attack maximizes cross-entropy by signed gradient steps, projecting
//! back onto the intersection of the epsilon-ball around the clean input
//! and the unit box after every step. It is an empirical lower bound on a
//! model's robust error: failure to find an adversarial point proves
//! nothing, but success is a concrete counterexample — which is what makes
//! it a useful adversary for checking that certification never oversteps.

use crate::ensemble::{softmax, CombinationMode, EnsembleModel};
use crate::error::{Error, Result};
use crate::numcore::Rng;
use crate::robustness::model::Model;
use crate::training::cross_entropy_grad;

/// Attack budget and search effort.
#[derive(Debug, Clone)]
pub struct AttackConfig {
    /// Perturbation radius (l-infinity, input units).
    pub epsilon: f64,
    /// Gradient steps per restart.
    pub steps: usize,
    /// Step size per iteration.
    pub step_size: f64,
    /// Number of random starts inside the ball.
    pub restarts: usize,
    /// Seed for the restart noise.
    pub seed: u64,
}

impl AttackConfig {
    /// Evaluation defaults: 20 steps of `epsilon/4` from one random start.
    pub fn eval_default(epsilon: f64) -> Self {
        AttackConfig {
            epsilon,
            steps: 20,
            step_size: if epsilon > 0.0 { epsilon / 4.0 } else { 1e-3 },
            restarts: 1,
            seed: 0,
        }
    }

    /// Stress defaults for soundness checks: 100 steps, 10 restarts.
    pub fn soundness_default(epsilon: f64) -> Self {
        AttackConfig { steps: 100, restarts: 10, ..AttackConfig::eval_default(epsilon) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::Param(format!(
                "attack epsilon must be finite and nonnegative, got {}",
                self.epsilon
            )));
        }
        if self.steps == 0 {
            return Err(Error::Param("attack needs at least one step".into()));
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::Param(format!(
                "attack step size must be positive, got {}",
                self.step_size
            )));
        }
        if self.restarts == 0 {
            return Err(Error::Param("attack needs at least one restart".into()));
        }
        Ok(())
    }
}

/// Searches the epsilon-ball around `x` for a point the model misclassifies.
///
/// Returns the first adversarial input found, or `None` if every restart
/// fails. A clean input the model already gets wrong is returned as-is.
/// Success is judged under the model's decision rule; gradients follow
/// whatever mode the networks are currently in.
pub fn pgd_attack(
    model: &Model,
    x: &[f64],
    y: usize,
    cfg: &AttackConfig,
) -> Result<Option<Vec<f64>>> {
    cfg.validate()?;
    if x.len() != model.input_width() {
        return Err(Error::shape_mismatch(model.input_width(), x.len()));
    }
    if y >= model.output_width() {
        return Err(Error::Label { got: y, classes: model.output_width() });
    }
    if x.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::Param("attack input must lie in the unit box".into()));
    }
    if model.predict(x)? != y {
        return Ok(Some(x.to_vec()));
    }
    let eps = cfg.epsilon;
    let base = Rng::new(cfg.seed);
    for restart in 0..cfg.restarts {
        // Each restart draws from its own stream so that adding restarts
        // never changes the earlier ones.
        let mut rng = base.derive(restart as u64);
        let mut xp: Vec<f64> = x
            .iter()
            .map(|&v| (v + rng.uniform(-eps, eps).unwrap_or(0.0)).clamp(0.0, 1.0))
            .collect();
        if model.predict(&xp)? != y {
            return Ok(Some(xp));
        }
        for _ in 0..cfg.steps {
            let grad = loss_input_grad(model, &xp, y)?;
            for (v, (g, &clean)) in xp.iter_mut().zip(grad.iter().zip(x)) {
                let sign = if *g > 0.0 {
                    1.0
                } else if *g < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                *v = (*v + cfg.step_size * sign)
                    .clamp(clean - eps, clean + eps)
                    .clamp(0.0, 1.0);
            }
            if model.predict(&xp)? != y {
                return Ok(Some(xp));
            }
        }
    }
    Ok(None)
}

/// Gradient of the attack loss with respect to the input.
///
/// Single networks and Fusion ensembles use cross-entropy on (fused)
/// logits. For Voting ensembles the vote itself is piecewise constant, so
/// the attack climbs the differentiable surrogate `-log(p_bar[y])` of the
/// averaged probabilities; success is still judged on the vote.
fn loss_input_grad(model: &Model, x: &[f64], y: usize) -> Result<Vec<f64>> {
    match model {
        Model::Single(net) => {
            let trace = net.forward_trace(x)?;
            let (_, dlogits) = cross_entropy_grad(trace.logits(), y, 1.0)?;
            net.input_grad(&trace, &dlogits)
        }
        Model::Ensemble(e) => match e.mode() {
            CombinationMode::Fusion => fusion_input_grad(e, x, y),
            CombinationMode::Voting => voting_input_grad(e, x, y),
        },
    }
}

fn fusion_input_grad(e: &EnsembleModel, x: &[f64], y: usize) -> Result<Vec<f64>> {
    let traces: Vec<_> =
        e.bases().iter().map(|b| b.forward_trace(x)).collect::<Result<_>>()?;
    let mut fused = vec![0.0; e.output_width()];
    for (w, t) in e.weights().iter().zip(&traces) {
        for (f, l) in fused.iter_mut().zip(t.logits()) {
            *f += w * l;
        }
    }
    let (_, dlogits) = cross_entropy_grad(&fused, y, 1.0)?;
    let mut grad = vec![0.0; x.len()];
    for ((w, base), trace) in e.weights().iter().zip(e.bases()).zip(&traces) {
        let upstream: Vec<f64> = dlogits.iter().map(|d| w * d).collect();
        let g = base.input_grad(trace, &upstream)?;
        for (a, v) in grad.iter_mut().zip(&g) {
            *a += v;
        }
    }
    Ok(grad)
}

fn voting_input_grad(e: &EnsembleModel, x: &[f64], y: usize) -> Result<Vec<f64>> {
    let traces: Vec<_> =
        e.bases().iter().map(|b| b.forward_trace(x)).collect::<Result<_>>()?;
    let probs: Vec<Vec<f64>> = traces.iter().map(|t| softmax(t.logits())).collect();
    let mut p_bar_y = 0.0;
    for (w, p) in e.weights().iter().zip(&probs) {
        p_bar_y += w * p[y];
    }
    // d(-log p_bar[y])/dlogits_i = -(w_i / p_bar[y]) * p_i[y] * (e_y - p_i),
    // the chain rule through each base's softmax.
    let mut grad = vec![0.0; x.len()];
    for (((w, base), trace), p) in
        e.weights().iter().zip(e.bases()).zip(&traces).zip(&probs)
    {
        let scale = -w * p[y] / p_bar_y;
        let upstream: Vec<f64> = (0..p.len())
            .map(|j| scale * (if j == y { 1.0 } else { 0.0 } - p[j]))
            .collect();
        let g = base.input_grad(trace, &upstream)?;
        for (a, v) in grad.iter_mut().zip(&g) {
            *a += v;
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{DistLayer, Layer, NeuronMode, Network};
    use crate::numcore::{Rng, Tensor};
    use crate::robustness::certify::{certified_radius, predict};

    fn random_net(widths: &[usize], seed: u64) -> Network {
        let mut rng = Rng::new(seed);
        Network::dense(widths, NeuronMode::Exact, None, true, &mut rng).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(AttackConfig::eval_default(0.1).validate().is_ok());
        assert!(AttackConfig::eval_default(0.0).validate().is_ok());
        let bad = AttackConfig { epsilon: -0.1, ..AttackConfig::eval_default(0.1) };
        assert!(bad.validate().is_err());
        let bad = AttackConfig { steps: 0, ..AttackConfig::eval_default(0.1) };
        assert!(bad.validate().is_err());
        let bad = AttackConfig { step_size: 0.0, ..AttackConfig::eval_default(0.1) };
        assert!(bad.validate().is_err());
        let bad = AttackConfig { restarts: 0, ..AttackConfig::eval_default(0.1) };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_budget_attacks_nothing() {
        let net = random_net(&[3, 6, 2], 31);
        let model = Model::from(net.clone());
        let mut rng = Rng::new(5);
        let cfg = AttackConfig::eval_default(0.0);
        for _ in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| rng.next_f64()).collect();
            let y = predict(&net.forward(&x).unwrap());
            assert!(pgd_attack(&model, &x, y, &cfg).unwrap().is_none());
            // The wrong label is "attacked" by the clean input itself.
            let wrong = 1 - y;
            assert_eq!(pgd_attack(&model, &x, wrong, &cfg).unwrap().unwrap(), x);
        }
    }

    #[test]
    fn flips_a_one_dimensional_prototype_pair() {
        // Two units measure the distance to prototypes 0.5 and 0.0; with
        // negated logits the prediction is the nearer prototype. From
        // x = 0.1 (label 1, prototype 0.0) a budget of 0.5 lets the attack
        // walk toward 0.5 and flip the prediction.
        let layer = DistLayer::new(
            Tensor::new(&[2, 1], vec![0.5, 0.0]).unwrap(),
            Tensor::zeros(&[2]),
            NeuronMode::Exact,
            None,
        )
        .unwrap();
        let net = Network::new(vec![Layer::Dist(layer)], None, true).unwrap();
        let model = Model::from(net.clone());
        let x = [0.1];
        assert_eq!(predict(&net.forward(&x).unwrap()), 1);
        let cfg = AttackConfig { seed: 3, ..AttackConfig::eval_default(0.5) };
        let adv = pgd_attack(&model, &x, 1, &cfg).unwrap().expect("attack must succeed");
        assert_eq!(predict(&net.forward(&adv).unwrap()), 0);
        // The midpoint 0.25 already flips via the lowest-index tie rule, and
        // the attack stops at the first success, so allow equality.
        assert!(adv[0] >= 0.25, "must have moved toward the 0.5 prototype, got {}", adv[0]);
        assert!((adv[0] - x[0]).abs() <= 0.5 + 1e-12, "budget respected");
    }

    #[test]
    fn never_beats_certification_on_random_nets() {
        // The central soundness property at unit-test scale: points
        // certified at r are unattackable at r.
        let net = random_net(&[4, 10, 3], 47);
        let model = Model::from(net.clone());
        let mut rng = Rng::new(9);
        let mut exercised = 0;
        for trial in 0..30 {
            let x: Vec<f64> = (0..4).map(|_| rng.next_f64()).collect();
            let y = predict(&net.forward(&x).unwrap());
            let rho = certified_radius(&net, &x, y).unwrap();
            if rho == 0.0 {
                continue;
            }
            exercised += 1;
            let r = (rho * 0.98).min(1.0);
            let cfg = AttackConfig {
                seed: trial as u64,
                ..AttackConfig::soundness_default(r)
            };
            assert!(
                pgd_attack(&model, &x, y, &cfg).unwrap().is_none(),
                "attack broke a certificate at trial {trial}"
            );
        }
        assert!(exercised > 10, "no positive radii; test is vacuous");
    }

    #[test]
    fn adversarial_points_stay_feasible() {
        let net = random_net(&[3, 8, 4], 73);
        let model = Model::from(net);
        let mut rng = Rng::new(2);
        let cfg = AttackConfig { steps: 40, ..AttackConfig::eval_default(0.3) };
        let mut hits = 0;
        for _ in 0..40 {
            let x: Vec<f64> = (0..3).map(|_| rng.next_f64()).collect();
            let y = model.predict(&x).unwrap();
            if let Some(adv) = pgd_attack(&model, &x, y, &cfg).unwrap() {
                hits += 1;
                for (a, &c) in adv.iter().zip(&x) {
                    assert!((0.0..=1.0).contains(a), "left the unit box: {a}");
                    assert!((a - c).abs() <= 0.3 + 1e-12, "left the ball: {} vs {}", a, c);
                }
            }
        }
        assert!(hits > 0, "attack never succeeded; feasibility was not exercised");
    }

    #[test]
    fn deterministic_and_restart_monotone() {
        let net = random_net(&[4, 8, 3], 55);
        let model = Model::from(net);
        let mut rng = Rng::new(14);
        let xs: Vec<Vec<f64>> =
            (0..30).map(|_| (0..4).map(|_| rng.next_f64()).collect()).collect();
        let count = |cfg: &AttackConfig| -> usize {
            xs.iter()
                .filter(|x| {
                    let y = model.predict(x).unwrap();
                    pgd_attack(&model, x, y, cfg).unwrap().is_some()
                })
                .count()
        };
        let c1 = AttackConfig { seed: 8, ..AttackConfig::eval_default(0.15) };
        assert_eq!(count(&c1), count(&c1), "same seed must reproduce");
        // More restarts and more steps can only add successes on a fixed
        // seed schedule: earlier restarts replay identically.
        let more_restarts = AttackConfig { restarts: 5, ..c1.clone() };
        let more_steps = AttackConfig { steps: c1.steps * 3, ..c1.clone() };
        assert!(count(&more_restarts) >= count(&c1));
        assert!(count(&more_steps) >= count(&c1));
    }

    #[test]
    fn attacks_ensembles_in_both_modes() {
        use crate::ensemble::EnsembleModel;
        let bases: Vec<Network> = (0..3).map(|s| random_net(&[3, 6, 3], 90 + s)).collect();
        let fusion =
            Model::from(EnsembleModel::uniform(bases.clone(), CombinationMode::Fusion).unwrap());
        let voting =
            Model::from(EnsembleModel::uniform(bases, CombinationMode::Voting).unwrap());
        let mut rng = Rng::new(6);
        let cfg = AttackConfig { steps: 40, restarts: 3, ..AttackConfig::eval_default(0.4) };
        let mut fusion_hits = 0;
        let mut voting_hits = 0;
        for _ in 0..25 {
            let x: Vec<f64> = (0..3).map(|_| rng.next_f64()).collect();
            let yf = fusion.predict(&x).unwrap();
            if let Some(adv) = pgd_attack(&fusion, &x, yf, &cfg).unwrap() {
                fusion_hits += 1;
                assert_ne!(fusion.predict(&adv).unwrap(), yf);
            }
            let yv = voting.predict(&x).unwrap();
            if let Some(adv) = pgd_attack(&voting, &x, yv, &cfg).unwrap() {
                voting_hits += 1;
                // Success is judged on the vote rule.
                assert_ne!(voting.predict(&adv).unwrap(), yv);
            }
        }
        assert!(fusion_hits > 0, "fusion attack never exercised");
        assert!(voting_hits > 0, "voting attack never exercised");
    }

    #[test]
    fn rejects_bad_inputs() {
        let net = random_net(&[3, 4, 2], 1);
        let model = Model::from(net);
        let cfg = AttackConfig::eval_default(0.1);
        assert!(pgd_attack(&model, &[0.1, 0.2], 0, &cfg).is_err());
        assert!(pgd_attack(&model, &[0.1, 0.2, 1.4], 0, &cfg).is_err());
        assert!(matches!(
            pgd_attack(&model, &[0.1, 0.2, 0.3], 9, &cfg),
            Err(Error::Label { .. })
        ));
    }
}
