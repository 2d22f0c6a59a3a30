//! The training loop. Deterministic by construction: initialization,
//! shuffling, and augmentation all draw from one sequential generator, and
//! minibatch gradients are reduced over fixed-size chunks in a fixed order,
//! so two runs with the same config and data produce bit-identical weights
//! regardless of thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::layers::{AffineHead, ConvDistLayer, DistLayer, Layer, Network, NeuronMode};
use crate::numcore::Rng;
use crate::robustness::{certify_at, predict};
use crate::training::{
    augment_waug, p_schedule, Augment, EmaState, Loss, Optimizer, OptimizerKind, SurrogateKind,
};

/// Samples per parallel gradient chunk. Fixed so the reduction order (and
/// thus the floating-point result) does not depend on the thread count.
const GRAD_CHUNK: usize = 16;

/// Architecture recipe, resolved against a dataset when training starts.
#[derive(Debug, Clone, PartialEq)]
pub enum ArchSpec {
    /// Fully-connected distance layers `input -> hidden.. -> classes`. With
    /// `head`, the backbone stops at the last hidden width and an affine
    /// (ReLU) head `last_hidden -> head.. -> classes` produces the logits.
    /// `residual_c` applies to every equal-width backbone layer.
    Dense {
        hidden: Vec<usize>,
        residual_c: Option<f64>,
        head: Option<Vec<usize>>,
        negate: bool,
    },
    /// Two strided 5x5 distance convolutions (16 then 32 channels, stride
    /// 2) followed by a dense distance layer onto the classes. Needs
    /// single-channel image data.
    Lenet { negate: bool },
}

impl ArchSpec {
    /// Plain dense backbone with logit negation — the usual starting point.
    pub fn dense(hidden: Vec<usize>) -> Self {
        ArchSpec::Dense { hidden, residual_c: None, head: None, negate: true }
    }

    pub fn build(
        &self,
        input_dim: usize,
        image_dims: Option<(usize, usize, usize)>,
        classes: usize,
        rng: &mut Rng,
    ) -> Result<Network> {
        if classes < 2 {
            return Err(Error::Param(format!("need at least 2 classes, got {classes}")));
        }
        match self {
            ArchSpec::Dense { hidden, residual_c, head, negate } => match head {
                None => {
                    let mut widths = vec![input_dim];
                    widths.extend(hidden);
                    widths.push(classes);
                    Network::dense(&widths, NeuronMode::Exact, *residual_c, *negate, rng)
                }
                Some(head_hidden) => {
                    if hidden.is_empty() {
                        return Err(Error::Param(
                            "a head needs at least one distance layer under it".into(),
                        ));
                    }
                    let mut widths = vec![input_dim];
                    widths.extend(hidden);
                    let net =
                        Network::dense(&widths, NeuronMode::Exact, *residual_c, *negate, rng)?;
                    let mut dims = vec![*hidden.last().unwrap()];
                    dims.extend(head_hidden);
                    dims.push(classes);
                    net.with_head(AffineHead::mlp(&dims, rng)?)
                }
            },
            ArchSpec::Lenet { negate } => {
                let (h, w, c) = image_dims.ok_or_else(|| {
                    Error::Param("lenet preset needs image-shaped inputs".into())
                })?;
                if c != 1 {
                    return Err(Error::Param(format!(
                        "lenet preset supports single-channel images, got {c} channels"
                    )));
                }
                let _ = input_dim; // the dataset guarantees h*w*c == input_dim
                let conv1 =
                    ConvDistLayer::random(16, (5, 5), (2, 2), (c, h, w), NeuronMode::Exact, rng)?;
                let s1 = conv1.out_shape();
                let conv2 =
                    ConvDistLayer::random(32, (5, 5), (2, 2), s1, NeuronMode::Exact, rng)?;
                let s2 = conv2.out_shape();
                let dense = DistLayer::random(
                    classes,
                    s2.0 * s2.1 * s2.2,
                    NeuronMode::Exact,
                    None,
                    rng,
                )?;
                Network::new(
                    vec![Layer::Conv(conv1), Layer::Conv(conv2), Layer::Dist(dense)],
                    None,
                    *negate,
                )
            }
        }
    }
}

/// Everything a training run depends on besides the data itself.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub arch: ArchSpec,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: Loss,
    pub optimizer: OptimizerKind,
    pub surrogate: SurrogateKind,
    pub p_start: f64,
    pub p_end: f64,
    /// First epoch that runs the exact neuron; earlier epochs anneal the
    /// surrogate's `p` geometrically from `p_start` to `p_end`.
    pub p_exact_from_epoch: usize,
    pub ema_decay: Option<f64>,
    pub augment: Augment,
    /// Perturbation budget used for the per-epoch certified metric (and,
    /// via the default hinge margin, the training target).
    pub epsilon: f64,
    /// Initialize the first (dense) layer's weight rows from training
    /// samples drawn by the run's generator, so each unit starts as the
    /// distance to a data prototype instead of to uniform noise.
    pub prototype_init: bool,
}

impl TrainConfig {
    /// Defaults: hinge loss at margin `2 * epsilon`, AdamW, p-norm
    /// annealing 8 -> 1000 with the last fifth of the epochs exact,
    /// EMA decay 0.99, batch 128, no augmentation.
    pub fn new(arch: ArchSpec, epochs: usize, epsilon: f64) -> Self {
        TrainConfig {
            arch,
            epochs,
            batch_size: 128,
            seed: 0,
            loss: Loss::Hinge { margin: 2.0 * epsilon },
            optimizer: OptimizerKind::adamw_default(),
            surrogate: SurrogateKind::PNorm,
            p_start: 8.0,
            p_end: 1000.0,
            p_exact_from_epoch: epochs.saturating_sub((epochs / 5).max(1)),
            ema_decay: Some(0.99),
            augment: Augment::None,
            epsilon,
            prototype_init: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Param("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Param("batch size must be positive".into()));
        }
        self.loss.validate()?;
        self.optimizer.validate()?;
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::Param(format!(
                "epsilon must be finite and nonnegative, got {}",
                self.epsilon
            )));
        }
        if self.p_exact_from_epoch > self.epochs {
            return Err(Error::Param(format!(
                "p_exact_from_epoch {} lies beyond the last epoch {}",
                self.p_exact_from_epoch,
                self.epochs - 1
            )));
        }
        if self.p_exact_from_epoch > 0 {
            // A surrogate phase exists; its endpoints must be valid modes.
            self.surrogate.mode(self.p_start).validate()?;
            self.surrogate.mode(self.p_end).validate()?;
            if self.p_end < self.p_start {
                return Err(Error::Param(format!(
                    "p_end {} below p_start {}",
                    self.p_end, self.p_start
                )));
            }
        }
        if let Some(d) = self.ema_decay {
            if !(d.is_finite() && (0.0..1.0).contains(&d)) {
                return Err(Error::Param(format!("ema decay must lie in [0,1), got {d}")));
            }
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Neuron mode the epoch trained in, e.g. `pnorm:8` or `exact`.
    pub p_mode: String,
    /// Mean training loss over the epoch.
    pub loss: f64,
    /// Validation accuracy of the exact-mode evaluation network.
    pub clean: f64,
    /// Fraction of validation points certified at the config's epsilon.
    pub certified: f64,
    /// Empirical robust accuracy; filled in by post-hoc attack evaluation,
    /// never by the trainer itself.
    pub robust: Option<f64>,
    /// Whether the evaluated parameters were the EMA shadow.
    pub ema: bool,
}

/// What a training run returns.
#[derive(Debug)]
pub struct TrainOutput {
    /// The raw (non-averaged) network, left in the last epoch's mode.
    pub network: Network,
    pub ema: Option<EmaState>,
    pub metrics: Vec<EpochMetrics>,
}

impl TrainOutput {
    /// The network to evaluate and ship: EMA shadow weights when averaging
    /// was on, in exact mode either way.
    pub fn eval_network(&self) -> Result<Network> {
        eval_view(&self.network, self.ema.as_ref().map(|e| e.shadow()))
    }
}

/// Exact-mode copy of `net`, optionally with substituted (EMA) parameters.
pub fn eval_view(net: &Network, shadow: Option<&[f64]>) -> Result<Network> {
    let mut view = net.clone();
    if let Some(s) = shadow {
        view.load_params(s)?;
        view.ema = true;
    }
    view.set_mode(NeuronMode::Exact)?;
    Ok(view)
}

/// Train a network on `train_set`, reporting per-epoch metrics on
/// `val_set`. Diverging runs (non-finite loss, logits, or gradients) fail
/// with [`Error::Training`] carrying the last epoch that completed.
pub fn train(cfg: &TrainConfig, train_set: &Dataset, val_set: &Dataset) -> Result<TrainOutput> {
    cfg.validate()?;
    if train_set.dim() != val_set.dim() || train_set.num_classes() != val_set.num_classes() {
        return Err(Error::DataConsistency(format!(
            "train set is {}-dimensional with {} classes, validation {} with {}",
            train_set.dim(),
            train_set.num_classes(),
            val_set.dim(),
            val_set.num_classes()
        )));
    }
    if !cfg.augment.is_none() && train_set.image_dims().is_none() {
        return Err(Error::Param(format!(
            "augmentation needs image-shaped data, dataset {:?} has none",
            train_set.name()
        )));
    }

    let mut rng = Rng::new(cfg.seed);
    let mut net = cfg.arch.build(
        train_set.dim(),
        train_set.image_dims(),
        train_set.num_classes(),
        &mut rng,
    )?;
    if cfg.prototype_init {
        seed_prototypes(&mut net, train_set, &mut rng)?;
    }
    let mut params = net.params_flat();
    let mut opt = Optimizer::new(cfg.optimizer, params.len())?;
    let mut ema = match cfg.ema_decay {
        Some(d) => Some(EmaState::new(params.clone(), d)?),
        None => None,
    };

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut last_good: Option<usize> = None;

    for epoch in 0..cfg.epochs {
        let mode = p_schedule(epoch, cfg);
        net.set_mode(mode)?;
        rng.shuffle(&mut order);

        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            // Augmentation draws happen here, sequentially, so the gradient
            // work below can fan out without touching the generator.
            let mut inputs = Vec::with_capacity(batch.len());
            let mut labels = Vec::with_capacity(batch.len());
            for &i in batch {
                let x = match cfg.augment {
                    Augment::Waug { pad, flip } if pad > 0 || flip => {
                        augment_waug(&train_set.image(i)?, &mut rng, pad, flip)?.into_data()
                    }
                    _ => train_set.feature_row(i).to_vec(),
                };
                inputs.push(x);
                labels.push(train_set.label(i));
            }

            let step = batch_gradient(&net, &inputs, &labels, &cfg.loss)
                .and_then(|(batch_loss, grads)| {
                    if !batch_loss.is_finite() {
                        return Err(Error::Numeric(format!("loss became {batch_loss}")));
                    }
                    opt.step(&mut params, &grads)?;
                    Ok(batch_loss)
                });
            let batch_loss = match step {
                Ok(l) => l,
                Err(Error::Numeric(message)) => {
                    return Err(Error::Training {
                        last_good_epoch: last_good,
                        message: format!("diverged at epoch {epoch}: {message}"),
                    });
                }
                Err(e) => return Err(e),
            };
            loss_sum += batch_loss * batch.len() as f64;
            seen += batch.len();
            net.load_params(&params)?;
            if let Some(e) = &mut ema {
                e.update(&params)?;
            }
        }

        let eval_net = eval_view(&net, ema.as_ref().map(|e| e.shadow()))?;
        let (clean, certified) = eval_clean_certified(&eval_net, val_set, cfg.epsilon)?;
        metrics.push(EpochMetrics {
            epoch,
            p_mode: mode.describe(),
            loss: loss_sum / seen as f64,
            clean,
            certified,
            robust: None,
            ema: ema.is_some(),
        });
        last_good = Some(epoch);
    }

    Ok(TrainOutput { network: net, ema, metrics })
}

/// Overwrite the first layer's weight rows with training samples.
fn seed_prototypes(net: &mut Network, train_set: &Dataset, rng: &mut Rng) -> Result<()> {
    let (rows, cols) = match &net.layers()[0] {
        Layer::Dist(l) => (l.out_width(), l.in_width()),
        Layer::Conv(_) => {
            return Err(Error::Param(
                "prototype initialization needs a dense first layer".into(),
            ))
        }
    };
    let mut params = net.params_flat();
    for r in 0..rows {
        let sample = rng.below(train_set.len() as u64) as usize;
        params[r * cols..(r + 1) * cols].copy_from_slice(train_set.feature_row(sample));
    }
    net.load_params(&params)
}

/// Mean loss and mean parameter gradient over one minibatch. Parallel over
/// fixed chunks, merged sequentially in chunk order.
fn batch_gradient(
    net: &Network,
    inputs: &[Vec<f64>],
    labels: &[usize],
    loss: &Loss,
) -> Result<(f64, Vec<f64>)> {
    let partials: Vec<Result<(f64, Vec<f64>)>> = inputs
        .par_chunks(GRAD_CHUNK)
        .zip(labels.par_chunks(GRAD_CHUNK))
        .map(|(xs, ys)| {
            let mut grads = vec![0.0; net.param_count()];
            let mut loss_sum = 0.0;
            for (x, &y) in xs.iter().zip(ys) {
                let trace = net.forward_trace(x)?;
                if let Some(bad) = trace.logits().iter().find(|v| !v.is_finite()) {
                    return Err(Error::Numeric(format!("logit became {bad}")));
                }
                let (l, dlogits) = loss.loss_and_grad(trace.logits(), y)?;
                loss_sum += l;
                // A satisfied hinge has an all-zero gradient; skip the
                // backward pass entirely.
                if dlogits.iter().any(|g| *g != 0.0) {
                    net.backward_acc(&trace, &dlogits, &mut grads)?;
                }
            }
            Ok((loss_sum, grads))
        })
        .collect();

    let mut total = vec![0.0; net.param_count()];
    let mut loss_sum = 0.0;
    for part in partials {
        let (l, g) = part?;
        loss_sum += l;
        for (t, v) in total.iter_mut().zip(&g) {
            *t += v;
        }
    }
    let scale = 1.0 / inputs.len() as f64;
    for v in total.iter_mut() {
        *v *= scale;
    }
    Ok((loss_sum * scale, total))
}

/// Clean accuracy and certified-at-epsilon accuracy of an exact-mode
/// network on a dataset.
pub fn eval_clean_certified(net: &Network, ds: &Dataset, epsilon: f64) -> Result<(f64, f64)> {
    let outcomes: Result<Vec<(bool, bool)>> = (0..ds.len())
        .into_par_iter()
        .map(|i| {
            let x = ds.feature_row(i);
            let y = ds.label(i);
            let correct = predict(&net.forward(x)?) == y;
            let certified = certify_at(net, x, y, epsilon)?;
            Ok((correct, certified))
        })
        .collect();
    let outcomes = outcomes?;
    let n = outcomes.len() as f64;
    let clean = outcomes.iter().filter(|(c, _)| *c).count() as f64 / n;
    let certified = outcomes.iter().filter(|(_, c)| *c).count() as f64 / n;
    Ok((clean, certified))
}
