//! In-memory dataset: features in `[0,1]`, integer labels, and (for pixel
//! data) the raw 0-255 bytes the features were scaled from.

use crate::error::{Error, Result};
use crate::numcore::Tensor;

/// A labeled dataset. Features are an `n x d` tensor with every value in
/// `[0,1]`; when `raw` is present it holds the original 0-255 bytes and
/// `features = raw / 255` exactly.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Tensor,
    labels: Vec<usize>,
    raw: Option<Vec<u8>>,
    /// `(height, width, channels)` when the rows are images.
    image_dims: Option<(usize, usize, usize)>,
    name: String,
    k: usize,
}

impl Dataset {
    pub fn new(
        features: Tensor,
        labels: Vec<usize>,
        k: usize,
        raw: Option<Vec<u8>>,
        image_dims: Option<(usize, usize, usize)>,
        name: String,
    ) -> Result<Self> {
        if features.shape().len() != 2 {
            return Err(Error::shape_mismatch("rank-2 features", features.shape()));
        }
        let (n, d) = (features.rows(), features.cols());
        if n == 0 || d == 0 {
            return Err(Error::Param("dataset must be nonempty".into()));
        }
        if labels.len() != n {
            return Err(Error::DataConsistency(format!(
                "{n} feature rows but {} labels",
                labels.len()
            )));
        }
        if k == 0 {
            return Err(Error::Param("dataset needs at least one class".into()));
        }
        for (i, &y) in labels.iter().enumerate() {
            if y >= k {
                return Err(Error::Label { got: y, classes: k });
            }
            let _ = i;
        }
        for (i, &v) in features.data().iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::DataConsistency(format!(
                    "feature value {v} at flat index {i} outside [0,1]"
                )));
            }
        }
        if let Some(raw) = &raw {
            if raw.len() != n * d {
                return Err(Error::DataConsistency(format!(
                    "raw byte count {} does not match {n}x{d} features",
                    raw.len()
                )));
            }
            for (i, (&b, &f)) in raw.iter().zip(features.data()).enumerate() {
                if f != b as f64 / 255.0 {
                    return Err(Error::DataConsistency(format!(
                        "feature {f} at flat index {i} is not raw byte {b} / 255"
                    )));
                }
            }
        }
        if let Some((h, w, c)) = image_dims {
            if h * w * c != d {
                return Err(Error::DataConsistency(format!(
                    "image dims {h}x{w}x{c} do not flatten to feature width {d}"
                )));
            }
        }
        Ok(Dataset { features, labels, raw, image_dims, name, k })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires n > 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn raw_bytes(&self) -> Option<&[u8]> {
        self.raw.as_deref()
    }

    pub fn image_dims(&self) -> Option<(usize, usize, usize)> {
        self.image_dims
    }

    /// Row `i` as an image tensor shaped `(height, width, channels)`.
    pub fn image(&self, i: usize) -> Result<Tensor> {
        let (h, w, c) = self
            .image_dims
            .ok_or_else(|| Error::Param(format!("dataset {:?} has no image shape", self.name)))?;
        Tensor::new(&[h, w, c], self.feature_row(i).to_vec())
    }

    /// The first `limit` samples as a new dataset (class counts may end up
    /// unbalanced; callers slice deliberately).
    pub fn take(&self, limit: usize) -> Result<Dataset> {
        if limit == 0 || limit > self.len() {
            return Err(Error::Param(format!(
                "cannot take {limit} samples from a dataset of {}",
                self.len()
            )));
        }
        let d = self.dim();
        let features = Tensor::new(
            &[limit, d],
            self.features.data()[..limit * d].to_vec(),
        )?;
        Dataset::new(
            features,
            self.labels[..limit].to_vec(),
            self.k,
            self.raw.as_ref().map(|r| r[..limit * d].to_vec()),
            self.image_dims,
            self.name.clone(),
        )
    }
}
