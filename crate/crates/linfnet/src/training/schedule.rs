//! The p-annealing schedule. Distance networks cannot be trained directly
//! in exact mode — the max gradient is too sparse — so training starts on a
//! smooth surrogate with small `p` and sharpens it geometrically until the
//! final epochs run the exact neuron.

use crate::error::{Error, Result};
use crate::layers::NeuronMode;
use crate::training::TrainConfig;

/// Which smooth family stands in for the max during annealing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurrogateKind {
    PNorm,
    LogSumExp,
}

impl SurrogateKind {
    pub fn describe(&self) -> &'static str {
        match self {
            SurrogateKind::PNorm => "pnorm",
            SurrogateKind::LogSumExp => "lse",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text.trim() {
            "pnorm" => Ok(SurrogateKind::PNorm),
            "lse" => Ok(SurrogateKind::LogSumExp),
            other => Err(Error::Param(format!(
                "unknown surrogate {other:?} (want pnorm or lse)"
            ))),
        }
    }

    pub fn mode(&self, p: f64) -> NeuronMode {
        match self {
            SurrogateKind::PNorm => NeuronMode::PNorm(p),
            SurrogateKind::LogSumExp => NeuronMode::LogSumExp(p),
        }
    }
}

/// Neuron mode for a given epoch: geometric interpolation from `p_start` to
/// `p_end` over the surrogate epochs, exact mode from `p_exact_from_epoch`
/// on. The last surrogate epoch lands exactly on `p_end`.
pub fn p_schedule(epoch: usize, cfg: &TrainConfig) -> NeuronMode {
    if epoch >= cfg.p_exact_from_epoch {
        return NeuronMode::Exact;
    }
    let exponent = if cfg.p_exact_from_epoch > 1 {
        epoch as f64 / (cfg.p_exact_from_epoch - 1) as f64
    } else {
        0.0
    };
    let p = cfg.p_start * (cfg.p_end / cfg.p_start).powf(exponent);
    cfg.surrogate.mode(p)
}
