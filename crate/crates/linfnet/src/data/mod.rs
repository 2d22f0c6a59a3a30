//! Dataset container, IDX loading, synthetic data, and class-gap analysis.

mod dataset;
mod gap;
mod idx;
mod synth;

pub use dataset::Dataset;
pub use gap::{class_gap, GapReport};
pub use idx::load_idx;
pub use synth::synth_corners;
