//! Losses, optimizers, EMA, p-annealing, augmentation, and the training
//! loop itself.

mod augment;
mod ema;
mod loss;
mod optim;
mod schedule;
mod trainer;

pub use augment::{augment_waug, Augment};
pub use ema::EmaState;
pub use loss::{cross_entropy_grad, cross_entropy_loss, hinge_grad, hinge_loss, Loss};
pub use optim::{Optimizer, OptimizerKind};
pub use schedule::{p_schedule, SurrogateKind};
pub use trainer::{
    eval_clean_certified, eval_view, train, ArchSpec, EpochMetrics, TrainConfig, TrainOutput,
};
