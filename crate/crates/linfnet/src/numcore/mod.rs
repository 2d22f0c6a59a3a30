//! Dense tensor arithmetic, deterministic random number generation, and
//! gradient checking shared by all other modules.

mod gradcheck;
mod rng;
mod tensor;

pub use gradcheck::{grad_check, grad_check_masked, GradReport};
pub use rng::Rng;
pub use tensor::Tensor;
