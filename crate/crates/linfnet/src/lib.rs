//! Training, ensembling, attacking, and sound certification of 1-Lipschitz
//! networks built from l-infinity-distance neurons.
//!
//! Every neuron computes `max_i |z_i - w_i| + b`, which is 1-Lipschitz with
//! respect to the l-infinity norm; compositions of such layers inherit the
//! property, so a logit margin directly yields a certified robustness
//! radius with no relaxation. Because the exact neuron has sparse,
//! non-smooth gradients, training goes through smooth surrogates (p-norms
//! or a scaled log-sum-exp) whose sharpness is annealed toward the exact
//! operator over the course of training.

pub mod config;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod layers;
pub mod numcore;
pub mod robustness;
pub mod training;

pub use error::{Error, Result};
