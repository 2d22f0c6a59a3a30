//! Convex combinations of trained base networks.
//!
//! An ensemble holds `m` base networks with convex weights and one of two
//! combination modes. Fusion averages base *logits*, which keeps the
//! ensemble 1-Lipschitz whenever the bases are (a convex combination of
//! 1-Lipschitz maps is 1-Lipschitz), so the margin certificate still
//! applies. Voting averages base *softmax outputs*; the result is a
//! probability vector and is never certified through the margin.

use std::path::Path;

use crate::config::KvMap;
use crate::error::{Error, Result};
use crate::layers::{deserialize_model, model_crc, serialize_model, Network};
use crate::robustness::logit_margin;
use crate::training::{train, TrainConfig, TrainOutput};

/// How base outputs are combined into one prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CombinationMode {
    /// Weighted average of base logits (1-Lipschitz preserving).
    #[default]
    Fusion,
    /// Weighted average of base softmax outputs.
    Voting,
}

impl CombinationMode {
    /// Stable lowercase name used in manifests and reports.
    pub fn describe(&self) -> &'static str {
        match self {
            CombinationMode::Fusion => "fusion",
            CombinationMode::Voting => "voting",
        }
    }

    /// Inverse of [`CombinationMode::describe`].
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "fusion" => Ok(CombinationMode::Fusion),
            "voting" => Ok(CombinationMode::Voting),
            other => Err(Error::Config(format!(
                "unknown combination mode {other:?} (expected fusion or voting)"
            ))),
        }
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let hi = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - hi).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / total).collect()
}

/// Tolerance on `sum(weights) == 1`; uniform weights written as shortest
/// round-trip decimals stay well inside this.
const WEIGHT_SUM_TOL: f64 = 1e-9;

/// `m` base networks with convex weights and a combination mode.
#[derive(Debug, Clone)]
pub struct EnsembleModel {
    bases: Vec<Network>,
    weights: Vec<f64>,
    mode: CombinationMode,
}

impl EnsembleModel {
    /// Validates the convexity and shape invariants.
    ///
    /// Weights must be finite, nonnegative, and sum to 1 (within 1e-9);
    /// all bases must agree on input and output width.
    pub fn new(bases: Vec<Network>, weights: Vec<f64>, mode: CombinationMode) -> Result<Self> {
        if bases.is_empty() {
            return Err(Error::Param("ensemble needs at least one base network".into()));
        }
        if weights.len() != bases.len() {
            return Err(Error::shape_mismatch(bases.len(), weights.len()));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Param(format!("weight {i} is {w}; weights must be in [0, 1]")));
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Param(format!("weights sum to {total}, not 1 (convexity)")));
        }
        let (din, dout) = (bases[0].input_width(), bases[0].output_width());
        for (i, b) in bases.iter().enumerate() {
            if b.input_width() != din || b.output_width() != dout {
                return Err(Error::Shape {
                    expected: format!("{din} -> {dout} (base 0)"),
                    got: format!("{} -> {} (base {i})", b.input_width(), b.output_width()),
                });
            }
        }
        Ok(EnsembleModel { bases, weights, mode })
    }

    /// Uniform weights `1/m` over the given bases.
    pub fn uniform(bases: Vec<Network>, mode: CombinationMode) -> Result<Self> {
        let m = bases.len();
        if m == 0 {
            return Err(Error::Param("ensemble needs at least one base network".into()));
        }
        EnsembleModel::new(bases, vec![1.0 / m as f64; m], mode)
    }

    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bases(&self) -> &[Network] {
        &self.bases
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mode(&self) -> CombinationMode {
        self.mode
    }

    pub fn input_width(&self) -> usize {
        self.bases[0].input_width()
    }

    pub fn output_width(&self) -> usize {
        self.bases[0].output_width()
    }

    /// True when every base runs the exact neuron (certification gate).
    pub fn is_exact(&self) -> bool {
        self.bases.iter().all(|b| b.is_exact())
    }

    /// Weighted average of base logits. Fusion mode only.
    pub fn fusion_forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.mode != CombinationMode::Fusion {
            return Err(Error::UnsupportedMode(
                "fusion_forward on a voting ensemble".into(),
            ));
        }
        self.weighted_logit_sum(x)
    }

    /// Weighted average of base softmax outputs (a probability vector).
    /// Voting mode only.
    pub fn voting_forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.mode != CombinationMode::Voting {
            return Err(Error::UnsupportedMode(
                "voting_forward on a fusion ensemble".into(),
            ));
        }
        let mut acc = vec![0.0; self.output_width()];
        for (w, base) in self.weights.iter().zip(&self.bases) {
            let probs = softmax(&base.forward(x)?);
            for (a, p) in acc.iter_mut().zip(&probs) {
                *a += w * p;
            }
        }
        Ok(acc)
    }

    /// Mode-appropriate scores: logits for Fusion, probabilities for
    /// Voting. Argmax over either is the ensemble's prediction.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self.mode {
            CombinationMode::Fusion => self.fusion_forward(x),
            CombinationMode::Voting => self.voting_forward(x),
        }
    }

    /// Fusion margin `logit_y - max_{j != y} logit_j`. Voting ensembles
    /// have no logit-space margin and are rejected.
    pub fn margin(&self, x: &[f64], y: usize) -> Result<f64> {
        if self.mode != CombinationMode::Voting {
            return logit_margin(&self.weighted_logit_sum(x)?, y);
        }
        Err(Error::UnsupportedMode(
            "margin of a voting ensemble (softmax averaging has no logit margin)".into(),
        ))
    }

    fn weighted_logit_sum(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.output_width()];
        for (w, base) in self.weights.iter().zip(&self.bases) {
            let logits = base.forward(x)?;
            for (a, l) in acc.iter_mut().zip(&logits) {
                *a += w * l;
            }
        }
        Ok(acc)
    }
}

/// Free-function forms of the two inference paths.
pub fn fusion_forward(ensemble: &EnsembleModel, x: &[f64]) -> Result<Vec<f64>> {
    ensemble.fusion_forward(x)
}

pub fn voting_forward(ensemble: &EnsembleModel, x: &[f64]) -> Result<Vec<f64>> {
    ensemble.voting_forward(x)
}

pub fn ensemble_margin(ensemble: &EnsembleModel, x: &[f64], y: usize) -> Result<f64> {
    ensemble.margin(x, y)
}

/// What ensemble training returns: the combined model (evaluation
/// networks — EMA shadows when enabled, exact mode) plus each base's raw
/// training output for metrics or checkpointing.
#[derive(Debug)]
pub struct EnsembleTrainOutput {
    pub model: EnsembleModel,
    pub runs: Vec<TrainOutput>,
}

/// Trains `m` bases with identical configuration except the seed
/// (`base_seed + 0 .. base_seed + m - 1`), the only source of
/// heterogeneity, and combines them with uniform weights.
///
/// A base that fails to train aborts the whole run; the error message
/// names the base index.
pub fn train_ensemble(
    cfg: &TrainConfig,
    m: usize,
    base_seed: u64,
    mode: CombinationMode,
    train_set: &crate::data::Dataset,
    val_set: &crate::data::Dataset,
) -> Result<EnsembleTrainOutput> {
    if m == 0 {
        return Err(Error::Param("ensemble size m must be at least 1".into()));
    }
    cfg.validate()?;
    let mut runs = Vec::with_capacity(m);
    let mut bases = Vec::with_capacity(m);
    for i in 0..m {
        let mut base_cfg = cfg.clone();
        base_cfg.seed = base_seed + i as u64;
        let out = train(&base_cfg, train_set, val_set).map_err(|e| match e {
            Error::Training { last_good_epoch, message } => {
                Error::Training { last_good_epoch, message: format!("base {i}: {message}") }
            }
            other => Error::Training {
                last_good_epoch: None,
                message: format!("base {i}: {other}"),
            },
        })?;
        bases.push(out.eval_network()?);
        runs.push(out);
    }
    let model = EnsembleModel::uniform(bases, mode)?;
    Ok(EnsembleTrainOutput { model, runs })
}

/// Writes `<stem>.base<i>.lnfc` files next to the manifest and the
/// manifest itself (flat key=value: m, mode, per-base weight, file name,
/// and CRC-32). The manifest stores bare file names so the bundle can be
/// moved as a directory.
pub fn save_ensemble(ensemble: &EnsembleModel, manifest_path: impl AsRef<Path>) -> Result<()> {
    let manifest_path = manifest_path.as_ref();
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new(""));
    let stem = manifest_path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Config(format!("bad manifest path {manifest_path:?}")))?;

    let mut manifest = String::new();
    manifest.push_str(&format!("m = {}\n", ensemble.len()));
    manifest.push_str(&format!("mode = {}\n", ensemble.mode().describe()));
    for (i, (base, w)) in ensemble.bases().iter().zip(ensemble.weights()).enumerate() {
        let bytes = serialize_model(base);
        let crc = model_crc(&bytes)?;
        let name = format!("{stem}.base{i}.lnfc");
        std::fs::write(dir.join(&name), &bytes)?;
        manifest.push_str(&format!("weight.{i} = {w}\n"));
        manifest.push_str(&format!("base.{i} = {name}\n"));
        manifest.push_str(&format!("base.{i}.crc = {crc}\n"));
    }
    std::fs::write(manifest_path, manifest)?;
    Ok(())
}

/// Reads a manifest written by [`save_ensemble`], cross-checking each
/// base file's embedded CRC-32 against the manifest copy before
/// deserializing, and re-validates the ensemble invariants.
pub fn load_ensemble(manifest_path: impl AsRef<Path>) -> Result<EnsembleModel> {
    let manifest_path = manifest_path.as_ref();
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new(""));
    let text = std::fs::read_to_string(manifest_path)?;
    let mut kv = KvMap::parse(&text)?;
    let m = kv.take_usize("m")?;
    if m == 0 {
        return Err(Error::Config("manifest declares m = 0".into()));
    }
    let mode = CombinationMode::parse(&kv.take("mode")?)?;
    let mut weights = Vec::with_capacity(m);
    let mut bases = Vec::with_capacity(m);
    for i in 0..m {
        weights.push(kv.take_f64(&format!("weight.{i}"))?);
        let name = kv.take(&format!("base.{i}"))?;
        let stored = kv.take_u64(&format!("base.{i}.crc"))?;
        if stored > u32::MAX as u64 {
            return Err(Error::Config(format!("base.{i}.crc {stored} is not a CRC-32")));
        }
        let bytes = std::fs::read(dir.join(&name))?;
        let embedded = model_crc(&bytes)?;
        if embedded != stored as u32 {
            return Err(Error::Checksum { stored: stored as u32, computed: embedded });
        }
        bases.push(deserialize_model(&bytes)?);
    }
    kv.finish()?;
    EnsembleModel::new(bases, weights, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{DistLayer, Layer, NeuronMode};
    use crate::numcore::{Rng, Tensor};

    fn linf(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn random_net(widths: &[usize], seed: u64) -> Network {
        let mut rng = Rng::new(seed);
        Network::dense(widths, NeuronMode::Exact, None, true, &mut rng).unwrap()
    }

    /// A single-layer net with zero weights and the given biases: on the
    /// all-zeros input every unit outputs max_j |0 - 0| + b = b.
    fn constant_at_zero(biases: &[f64]) -> Network {
        let k = biases.len();
        let layer = DistLayer::new(
            Tensor::zeros(&[k, 2]),
            Tensor::new(&[k], biases.to_vec()).unwrap(),
            NeuronMode::Exact,
            None,
        )
        .unwrap();
        Network::new(vec![Layer::Dist(layer)], None, false).unwrap()
    }

    #[test]
    fn fusion_single_base_is_identity() {
        let net = random_net(&[4, 6, 3], 11);
        let e = EnsembleModel::uniform(vec![net.clone()], CombinationMode::Fusion).unwrap();
        let x = [0.1, 0.9, 0.4, 0.2];
        assert_eq!(e.fusion_forward(&x).unwrap(), net.forward(&x).unwrap());
    }

    #[test]
    fn fusion_of_identical_bases_is_idempotent() {
        let net = random_net(&[4, 5, 3], 3);
        let e = EnsembleModel::uniform(
            vec![net.clone(), net.clone(), net.clone()],
            CombinationMode::Fusion,
        )
        .unwrap();
        let x = [0.3, 0.8, 0.05, 0.6];
        let single = net.forward(&x).unwrap();
        let fused = e.fusion_forward(&x).unwrap();
        for (a, b) in fused.iter().zip(&single) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn fusion_weighted_average_by_hand() {
        let b1 = constant_at_zero(&[1.0, 0.0]);
        let b2 = constant_at_zero(&[0.0, 1.0]);
        let e =
            EnsembleModel::new(vec![b1, b2], vec![0.25, 0.75], CombinationMode::Fusion).unwrap();
        let out = e.fusion_forward(&[0.0, 0.0]).unwrap();
        assert_eq!(out, vec![0.25, 0.75]);
    }

    #[test]
    fn voting_single_base_is_softmax_and_argmax_matches_fusion() {
        let net = random_net(&[4, 6, 3], 17);
        let v = EnsembleModel::uniform(vec![net.clone()], CombinationMode::Voting).unwrap();
        let f = EnsembleModel::uniform(vec![net.clone()], CombinationMode::Fusion).unwrap();
        let x = [0.7, 0.2, 0.9, 0.1];
        let probs = v.voting_forward(&x).unwrap();
        let expect = softmax(&net.forward(&x).unwrap());
        assert_eq!(probs, expect);
        let am = |v: &[f64]| {
            v.iter().enumerate().fold((0usize, f64::NEG_INFINITY), |(bi, bv), (i, &x)| {
                if x > bv { (i, x) } else { (bi, bv) }
            })
        };
        assert_eq!(am(&probs).0, am(&f.fusion_forward(&x).unwrap()).0);
    }

    #[test]
    fn voting_sums_to_one_and_respects_agreement() {
        let bases: Vec<Network> = (0..3).map(|s| random_net(&[5, 8, 4], 100 + s)).collect();
        let voting = EnsembleModel::uniform(bases.clone(), CombinationMode::Voting).unwrap();
        let mut rng = Rng::new(7);
        let mut agreements = 0;
        for _ in 0..200 {
            let x: Vec<f64> = (0..5).map(|_| rng.next_f64()).collect();
            let probs = voting.voting_forward(&x).unwrap();
            let total: f64 = probs.iter().sum();
            assert!((total - 1.0).abs() < 1e-12, "probabilities sum to {total}");

            let am = |v: &[f64]| {
                v.iter().enumerate().fold((0usize, f64::NEG_INFINITY), |(bi, bv), (i, &p)| {
                    if p > bv { (i, p) } else { (bi, bv) }
                }).0
            };
            let picks: Vec<usize> =
                bases.iter().map(|b| am(&b.forward(&x).unwrap())).collect();
            if picks.iter().all(|&p| p == picks[0]) {
                agreements += 1;
                assert_eq!(am(&probs), picks[0], "agreeing bases must carry the vote");
            }
        }
        assert!(agreements > 0, "no agreeing samples; test is vacuous");
    }

    #[test]
    fn convexity_and_shape_enforcement() {
        let mk = || vec![random_net(&[3, 4, 2], 1), random_net(&[3, 4, 2], 2)];
        assert!(EnsembleModel::new(mk(), vec![0.5, 0.5], CombinationMode::Fusion).is_ok());
        // Negative weight.
        assert!(matches!(
            EnsembleModel::new(mk(), vec![-0.5, 1.5], CombinationMode::Fusion),
            Err(Error::Param(_))
        ));
        // Not normalized.
        assert!(matches!(
            EnsembleModel::new(mk(), vec![0.5, 0.4], CombinationMode::Fusion),
            Err(Error::Param(_))
        ));
        // Non-finite weight.
        assert!(matches!(
            EnsembleModel::new(mk(), vec![f64::NAN, 1.0], CombinationMode::Fusion),
            Err(Error::Param(_))
        ));
        // Weight count mismatch.
        assert!(matches!(
            EnsembleModel::new(mk(), vec![1.0], CombinationMode::Fusion),
            Err(Error::Shape { .. })
        ));
        // No bases at all.
        assert!(matches!(
            EnsembleModel::new(vec![], vec![], CombinationMode::Fusion),
            Err(Error::Param(_))
        ));
        // Mismatched widths.
        let odd = vec![random_net(&[3, 4, 2], 1), random_net(&[3, 4, 5], 2)];
        assert!(matches!(
            EnsembleModel::new(odd, vec![0.5, 0.5], CombinationMode::Fusion),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn mode_gates() {
        let e = EnsembleModel::uniform(vec![random_net(&[3, 2], 5)], CombinationMode::Voting)
            .unwrap();
        let x = [0.1, 0.2, 0.3];
        assert!(matches!(e.fusion_forward(&x), Err(Error::UnsupportedMode(_))));
        assert!(matches!(e.margin(&x, 0), Err(Error::UnsupportedMode(_))));
        let f = EnsembleModel::uniform(vec![random_net(&[3, 2], 5)], CombinationMode::Fusion)
            .unwrap();
        assert!(matches!(f.voting_forward(&x), Err(Error::UnsupportedMode(_))));
    }

    #[test]
    fn margin_is_weighted_base_margin_in_two_class_case() {
        // Hand case: constant logits (3, 1) and (0, 2), uniform weights.
        // Base margins for y=0 are +2 and -2; the fusion margin is their
        // average, 0.
        let b1 = constant_at_zero(&[3.0, 1.0]);
        let b2 = constant_at_zero(&[0.0, 2.0]);
        let e = EnsembleModel::uniform(vec![b1, b2], CombinationMode::Fusion).unwrap();
        assert_eq!(e.margin(&[0.0, 0.0], 0).unwrap(), 0.0);

        // Random two-class ensembles: with only one competitor class the
        // fusion margin is linear in the bases, so it equals the weighted
        // base-margin average up to roundoff.
        let mut rng = Rng::new(33);
        for trial in 0..50 {
            let bases: Vec<Network> =
                (0..3).map(|s| random_net(&[4, 6, 2], 1000 + 10 * trial + s)).collect();
            let raw: Vec<f64> = (0..3).map(|_| rng.next_f64()).collect();
            let total: f64 = raw.iter().sum();
            let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
            let e = EnsembleModel::new(bases.clone(), weights.clone(), CombinationMode::Fusion)
                .unwrap();
            let x: Vec<f64> = (0..4).map(|_| rng.next_f64()).collect();
            let y = trial as usize % 2;
            let expect: f64 = bases
                .iter()
                .zip(&weights)
                .map(|(b, w)| w * logit_margin(&b.forward(&x).unwrap(), y).unwrap())
                .sum();
            let got = e.margin(&x, y).unwrap();
            assert!((got - expect).abs() < 1e-12, "trial {trial}: {got} vs {expect}");
        }
    }

    #[test]
    fn fusion_of_exact_bases_stays_one_lipschitz() {
        let bases: Vec<Network> = (0..5).map(|s| random_net(&[6, 10, 4], 200 + s)).collect();
        let e = EnsembleModel::uniform(bases, CombinationMode::Fusion).unwrap();
        let mut rng = Rng::new(90);
        for _ in 0..1000 {
            let a: Vec<f64> = (0..6).map(|_| 2.0 * rng.next_f64() - 0.5).collect();
            let b: Vec<f64> = (0..6).map(|_| 2.0 * rng.next_f64() - 0.5).collect();
            let fa = e.fusion_forward(&a).unwrap();
            let fb = e.fusion_forward(&b).unwrap();
            let lhs = linf(&fa, &fb);
            let rhs = linf(&a, &b);
            assert!(lhs <= rhs + 1e-9, "ensemble expanded {lhs} > {rhs}");
        }
    }

    #[test]
    fn train_ensemble_m1_matches_train_and_m3_is_deterministic() {
        use crate::data::synth_corners;
        use crate::training::ArchSpec;

        let ds = synth_corners(2, 6, 0.5, 20, 9).unwrap();
        let mut cfg = TrainConfig::new(ArchSpec::dense(vec![8]), 3, 0.1);
        cfg.batch_size = 20;
        cfg.p_exact_from_epoch = 2;

        let single = {
            let mut c = cfg.clone();
            c.seed = 40;
            train(&c, &ds, &ds).unwrap()
        };
        let e1 = train_ensemble(&cfg, 1, 40, CombinationMode::Fusion, &ds, &ds).unwrap();
        assert_eq!(
            e1.model.bases()[0].params_flat(),
            single.eval_network().unwrap().params_flat(),
            "m=1 ensemble must match a plain training run"
        );

        let e3a = train_ensemble(&cfg, 3, 7, CombinationMode::Fusion, &ds, &ds).unwrap();
        let e3b = train_ensemble(&cfg, 3, 7, CombinationMode::Fusion, &ds, &ds).unwrap();
        for (a, b) in e3a.model.bases().iter().zip(e3b.model.bases()) {
            assert_eq!(serialize_model(a), serialize_model(b), "re-run must be bit-identical");
        }
        // Different seeds are the heterogeneity source: bases must differ
        // pairwise.
        let blobs: Vec<Vec<u8>> = e3a.model.bases().iter().map(serialize_model).collect();
        for i in 0..blobs.len() {
            for j in i + 1..blobs.len() {
                assert_ne!(blobs[i], blobs[j], "bases {i} and {j} are identical");
            }
        }
        assert_eq!(e3a.model.weights(), &[1.0 / 3.0; 3]);
        assert_eq!(e3a.runs.len(), 3);
    }

    #[test]
    fn train_ensemble_failure_names_the_base() {
        use crate::data::synth_corners;
        use crate::training::ArchSpec;

        let ds = synth_corners(2, 4, 0.5, 10, 1).unwrap();
        let mut cfg = TrainConfig::new(ArchSpec::dense(vec![4]), 2, 0.1);
        cfg.batch_size = 10;
        cfg.p_exact_from_epoch = 1;
        if let crate::training::OptimizerKind::AdamW { ref mut lr, .. } = cfg.optimizer {
            *lr = 1e308; // guarantees divergence in the first base
        }
        let err = train_ensemble(&cfg, 2, 0, CombinationMode::Fusion, &ds, &ds).unwrap_err();
        match err {
            Error::Training { message, .. } => {
                assert!(message.starts_with("base 0:"), "message was {message:?}")
            }
            other => panic!("expected Training, got {other:?}"),
        }
    }

    #[test]
    fn manifest_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let bases: Vec<Network> = (0..3).map(|s| random_net(&[4, 5, 3], 300 + s)).collect();
        let e = EnsembleModel::new(
            bases,
            vec![0.5, 0.25, 0.25],
            CombinationMode::Voting,
        )
        .unwrap();
        let manifest = dir.path().join("trio.ensemble");
        save_ensemble(&e, &manifest).unwrap();

        let back = load_ensemble(&manifest).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back.mode(), CombinationMode::Voting);
        assert_eq!(back.weights(), e.weights());
        for (a, b) in back.bases().iter().zip(e.bases()) {
            assert_eq!(serialize_model(a), serialize_model(b));
        }

        // Flip one payload byte in a base file: the embedded CRC no longer
        // matches the manifest's copy.
        let victim = dir.path().join("trio.base1.lnfc");
        let mut bytes = std::fs::read(&victim).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        std::fs::write(&victim, &bytes).unwrap();
        assert!(matches!(load_ensemble(&manifest), Err(Error::Checksum { .. })));
        // Restore, then tamper with the manifest weights instead.
        save_ensemble(&e, &manifest).unwrap();
        let text = std::fs::read_to_string(&manifest).unwrap();
        std::fs::write(&manifest, text.replace("weight.0 = 0.5", "weight.0 = 0.9")).unwrap();
        assert!(matches!(load_ensemble(&manifest), Err(Error::Param(_))));
        // And a missing base file.
        save_ensemble(&e, &manifest).unwrap();
        std::fs::remove_file(dir.path().join("trio.base2.lnfc")).unwrap();
        assert!(matches!(load_ensemble(&manifest), Err(Error::Io(_))));
    }
}
