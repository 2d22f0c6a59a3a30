//! Dataset selection shared by subcommands and config files: an IDX pair
//! or a synthetic corner task, plus optional take/crop/concat transforms.

use std::path::PathBuf;

use clap::Args;
use linfnet::data::{load_idx, synth_corners, Dataset};
use linfnet::numcore::Tensor;
use linfnet::{Error, Result};

/// Where a dataset comes from and how to prepare it.
#[derive(Debug, Clone, Default)]
pub struct DataSpec {
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// `k,d,gap,n_per_class,seed`.
    pub synth: Option<String>,
    /// Keep only the first N samples.
    pub take: Option<usize>,
    /// Center-crop images by this margin on every side.
    pub crop: Option<usize>,
    /// Append the complement `1 - x` of every feature.
    pub concat: bool,
}

/// Command-line face of [`DataSpec`].
#[derive(Debug, Args)]
pub struct DataArgs {
    /// IDX image file (optionally gzip-compressed).
    #[arg(long, requires = "labels", conflicts_with = "synth")]
    pub images: Option<PathBuf>,
    /// IDX label file matching --images.
    #[arg(long, requires = "images")]
    pub labels: Option<PathBuf>,
    /// Synthetic corner task instead of files: k,d,gap,n_per_class,seed.
    #[arg(long, value_name = "K,D,GAP,N,SEED")]
    pub synth: Option<String>,
    /// Use only the first N samples.
    #[arg(long, value_name = "N")]
    pub take: Option<usize>,
    /// Center-crop images by this margin on every side.
    #[arg(long, value_name = "MARGIN")]
    pub crop: Option<usize>,
    /// Append the complement 1-x of every feature (distance units then see
    /// both polarities of the input).
    #[arg(long)]
    pub concat: bool,
}

impl DataArgs {
    pub fn spec(&self) -> DataSpec {
        DataSpec {
            images: self.images.clone(),
            labels: self.labels.clone(),
            synth: self.synth.clone(),
            take: self.take,
            crop: self.crop,
            concat: self.concat,
        }
    }

    pub fn load(&self) -> Result<Dataset> {
        self.spec().load()
    }
}

impl DataSpec {
    pub fn load(&self) -> Result<Dataset> {
        let mut ds = match (&self.images, &self.labels, &self.synth) {
            (Some(images), Some(labels), None) => load_idx(images, labels)?,
            (None, None, Some(spec)) => parse_synth(spec)?,
            (None, None, None) => {
                return Err(Error::Config(
                    "no dataset given: need --images/--labels or --synth".into(),
                ))
            }
            _ => {
                return Err(Error::Config(
                    "give either an IDX pair or a synthetic spec, not both".into(),
                ))
            }
        };
        if let Some(n) = self.take {
            ds = take(&ds, n)?;
        }
        if let Some(margin) = self.crop {
            ds = center_crop(&ds, margin)?;
        }
        if self.concat {
            ds = concat_complement(&ds)?;
        }
        Ok(ds)
    }
}

fn parse_synth(spec: &str) -> Result<Dataset> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    if parts.len() != 5 {
        return Err(Error::Config(format!(
            "synthetic spec wants k,d,gap,n_per_class,seed; got {spec:?}"
        )));
    }
    let field = |i: usize, name: &str| -> Result<f64> {
        parts[i]
            .parse()
            .map_err(|_| Error::Config(format!("synthetic spec {name}: bad number {:?}", parts[i])))
    };
    let k = field(0, "k")? as usize;
    let d = field(1, "d")? as usize;
    let gap = field(2, "gap")?;
    let n_per_class = field(3, "n_per_class")? as usize;
    let seed = field(4, "seed")? as u64;
    synth_corners(k, d, gap, n_per_class, seed)
}

fn take(ds: &Dataset, n: usize) -> Result<Dataset> {
    if n == 0 || n > ds.len() {
        return Err(Error::Param(format!(
            "take must be in [1, {}], got {n}",
            ds.len()
        )));
    }
    let d = ds.dim();
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        data.extend_from_slice(ds.feature_row(i));
        labels.push(ds.label(i));
    }
    let raw = ds.raw_bytes().map(|r| r[..n * d].to_vec());
    Dataset::new(
        Tensor::new(&[n, d], data)?,
        labels,
        ds.num_classes(),
        raw,
        ds.image_dims(),
        format!("{}-take{n}", ds.name()),
    )
}

fn center_crop(ds: &Dataset, margin: usize) -> Result<Dataset> {
    let (h, w, c) = ds.image_dims().ok_or_else(|| {
        Error::Param("crop needs image-shaped data (IDX input)".into())
    })?;
    if c != 1 {
        return Err(Error::Param(format!("crop supports single-channel images, got {c}")));
    }
    if 2 * margin >= h || 2 * margin >= w {
        return Err(Error::Param(format!(
            "crop margin {margin} swallows the whole {h}x{w} image"
        )));
    }
    let (nh, nw) = (h - 2 * margin, w - 2 * margin);
    let mut data = Vec::with_capacity(ds.len() * nh * nw);
    let mut labels = Vec::with_capacity(ds.len());
    for i in 0..ds.len() {
        let row = ds.feature_row(i);
        for y in 0..nh {
            for x in 0..nw {
                data.push(row[(y + margin) * w + (x + margin)]);
            }
        }
        labels.push(ds.label(i));
    }
    Dataset::new(
        Tensor::new(&[ds.len(), nh * nw], data)?,
        labels,
        ds.num_classes(),
        None,
        Some((nh, nw, 1)),
        format!("{}-crop{margin}", ds.name()),
    )
}

fn concat_complement(ds: &Dataset) -> Result<Dataset> {
    let d = ds.dim();
    let mut data = Vec::with_capacity(ds.len() * 2 * d);
    let mut labels = Vec::with_capacity(ds.len());
    for i in 0..ds.len() {
        let row = ds.feature_row(i);
        data.extend_from_slice(row);
        data.extend(row.iter().map(|v| 1.0 - v));
        labels.push(ds.label(i));
    }
    Dataset::new(
        Tensor::new(&[ds.len(), 2 * d], data)?,
        labels,
        ds.num_classes(),
        None,
        None,
        format!("{}-cat", ds.name()),
    )
}
