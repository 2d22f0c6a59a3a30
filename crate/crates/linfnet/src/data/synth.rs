//! Synthetic hypercube-corner classification data with a guaranteed
//! inter-class separation in the l-infinity metric.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numcore::{Rng, Tensor};

/// Generate `k * n_per_class` points in `[0,1]^d`. Class `c` lives at the
/// corner whose `j`-th coordinate is bit `j` of `c`; every coordinate is
/// jittered by uniform noise in `(-(1-gap)/2, (1-gap)/2)` and clipped to
/// `[0,1]`, so samples from different classes stay at least `gap` apart in
/// the l-infinity metric. Samples are emitted class-major.
pub fn synth_corners(
    k: usize,
    d: usize,
    gap: f64,
    n_per_class: usize,
    seed: u64,
) -> Result<Dataset> {
    if k < 2 {
        return Err(Error::Param(format!("need at least 2 classes, got {k}")));
    }
    if d == 0 {
        return Err(Error::Param("dimension must be positive".into()));
    }
    if d < usize::BITS as usize && k > (1usize << d) {
        return Err(Error::Param(format!(
            "{k} classes exceed the {} corners of the {d}-cube",
            1usize << d
        )));
    }
    if !(gap > 0.0 && gap < 1.0) {
        return Err(Error::Param(format!("gap must lie in (0,1), got {gap}")));
    }
    if n_per_class == 0 {
        return Err(Error::Param("need at least one sample per class".into()));
    }
    let radius = (1.0 - gap) / 2.0;
    let mut rng = Rng::new(seed);
    let n = k * n_per_class;
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for class in 0..k {
        for _ in 0..n_per_class {
            for j in 0..d {
                let corner = if j < usize::BITS as usize && (class >> j) & 1 == 1 {
                    1.0
                } else {
                    0.0
                };
                let v = corner + rng.uniform(-radius, radius)?;
                data.push(v.clamp(0.0, 1.0));
            }
            labels.push(class);
        }
    }
    let features = Tensor::new(&[n, d], data)?;
    Dataset::new(
        features,
        labels,
        k,
        None,
        None,
        format!("synth-corners-k{k}-d{d}-gap{gap}"),
    )
}
