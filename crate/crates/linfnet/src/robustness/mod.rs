//! Attacks, sound certification, and certified generalization bounds.

mod attack;
mod bounds;
mod certify;
mod eval;
mod model;
mod sparsity;

pub use attack::{pgd_attack, AttackConfig};
pub use bounds::{
    theorem2_margin_bound, theorem3_bound, theorem3_empirical_check, DeltaTerm, Theorem2Report,
    Theorem3Report,
};
pub use certify::{certified_radius, certify_at, logit_margin, predict};
pub use eval::{certified_train_error, eval_suite, robust_error_empirical, CertReport};
pub use model::Model;
pub use sparsity::{gradient_sparsity_profile, SparsityRow, SPARSITY_GAP_TOL};
