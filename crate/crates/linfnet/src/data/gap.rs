//! Minimum inter-class l-infinity distance of a dataset. The gap bounds how
//! large a certified radius can get before training accuracy must drop, so
//! it is worth measuring before picking a perturbation budget.

use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use rayon::prelude::*;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Result of a [`class_gap`] scan.
#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    /// Number of leading samples the scan covered.
    pub samples_used: usize,
    /// Minimum cross-class distance in raw byte units (0-255), when the
    /// dataset carries raw bytes.
    pub raw_units: Option<f64>,
    /// The same distance in feature units (raw / 255 for byte data).
    pub feature_units: f64,
}

/// Minimum l-infinity distance between two samples of different classes,
/// over the first `limit` samples (all of them when `limit` is `None`).
/// Byte-backed datasets are scanned in the exact integer domain. Errors with
/// [`Error::UndefinedGap`] when the window holds fewer than two classes.
pub fn class_gap(ds: &Dataset, limit: Option<usize>) -> Result<GapReport> {
    let n = match limit {
        Some(0) => return Err(Error::Param("sample limit must be positive".into())),
        Some(l) => l.min(ds.len()),
        None => ds.len(),
    };
    let first = ds.label(0);
    if (1..n).all(|i| ds.label(i) == first) {
        return Err(Error::UndefinedGap);
    }
    let report = if let Some(raw) = ds.raw_bytes() {
        let min = raw_gap(raw, ds.labels(), ds.dim(), n);
        GapReport {
            samples_used: n,
            raw_units: Some(min as f64),
            feature_units: min as f64 / 255.0,
        }
    } else {
        GapReport {
            samples_used: n,
            raw_units: None,
            feature_units: feature_gap(ds, n),
        }
    };
    Ok(report)
}

/// Exact integer scan. Each pair's running maximum bails out as soon as it
/// reaches the best bound seen so far; the bound is shared across threads
/// through an atomic, which only ever strengthens pruning — the returned
/// minimum is exact either way.
fn raw_gap(raw: &[u8], labels: &[usize], d: usize, n: usize) -> u32 {
    let best = AtomicU32::new(u32::MAX);
    (0..n - 1).into_par_iter().for_each(|i| {
        let a = &raw[i * d..(i + 1) * d];
        let la = labels[i];
        let mut local = best.load(Ordering::Relaxed);
        for j in i + 1..n {
            if labels[j] == la {
                continue;
            }
            let b = &raw[j * d..(j + 1) * d];
            let mut pair_max: u32 = 0;
            for k in 0..d {
                let diff = (a[k] as i32 - b[k] as i32).unsigned_abs();
                if diff > pair_max {
                    pair_max = diff;
                    if pair_max >= local {
                        break;
                    }
                }
            }
            if pair_max < local {
                local = best.fetch_min(pair_max, Ordering::Relaxed).min(pair_max);
            }
        }
    });
    best.load(Ordering::Relaxed)
}

fn feature_gap(ds: &Dataset, n: usize) -> f64 {
    // Nonnegative f64 bit patterns order like the floats themselves, so an
    // integer atomic works as a shared running minimum.
    let best = AtomicU64::new(f64::INFINITY.to_bits());
    (0..n - 1).into_par_iter().for_each(|i| {
        let a = ds.feature_row(i);
        let la = ds.label(i);
        let mut local = f64::from_bits(best.load(Ordering::Relaxed));
        for j in i + 1..n {
            if ds.label(j) == la {
                continue;
            }
            let b = ds.feature_row(j);
            let mut pair_max = 0.0_f64;
            for k in 0..a.len() {
                let diff = (a[k] - b[k]).abs();
                if diff > pair_max {
                    pair_max = diff;
                    if pair_max >= local {
                        break;
                    }
                }
            }
            if pair_max < local {
                local =
                    f64::from_bits(best.fetch_min(pair_max.to_bits(), Ordering::Relaxed))
                        .min(pair_max);
            }
        }
    });
    f64::from_bits(best.load(Ordering::Relaxed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{Rng, Tensor};

    fn byte_dataset(rows: &[&[u8]], labels: &[usize], k: usize) -> Dataset {
        let d = rows[0].len();
        let raw: Vec<u8> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        let features = Tensor::new(
            &[rows.len(), d],
            raw.iter().map(|&b| b as f64 / 255.0).collect(),
        )
        .unwrap();
        Dataset::new(features, labels.to_vec(), k, Some(raw), None, "bytes".into()).unwrap()
    }

    #[test]
    fn hand_example_in_both_units() {
        let ds = byte_dataset(
            &[&[10, 200], &[10, 149], &[60, 200]],
            &[0, 1, 0],
            2,
        );
        let rep = class_gap(&ds, None).unwrap();
        // Cross-class pairs: (0,1) at 51, (2,1) at max(50,51)=51. The
        // same-class pair (0,2) at 50 must not count.
        assert_eq!(rep.raw_units, Some(51.0));
        assert_eq!(rep.feature_units, 0.2);
        assert_eq!(rep.samples_used, 3);
    }

    #[test]
    fn single_class_window_is_undefined() {
        let ds = byte_dataset(&[&[0], &[10], &[255]], &[0, 0, 1], 2);
        assert!(matches!(class_gap(&ds, Some(2)), Err(Error::UndefinedGap)));
        assert!(class_gap(&ds, Some(3)).is_ok());
        assert!(class_gap(&ds, Some(0)).is_err());
    }

    #[test]
    fn limit_caps_and_oversized_limit_is_full_scan() {
        let ds = byte_dataset(&[&[0], &[100], &[101]], &[0, 1, 0], 2);
        // Full scan: min(100, 1) = 1. First two samples only: 100.
        assert_eq!(class_gap(&ds, Some(2)).unwrap().raw_units, Some(100.0));
        assert_eq!(class_gap(&ds, Some(50)).unwrap().raw_units, Some(1.0));
    }

    #[test]
    fn matches_brute_force_on_random_bytes() {
        let mut rng = Rng::new(31);
        let (n, d, k) = (40, 6, 3);
        let rows: Vec<Vec<u8>> = (0..n)
            .map(|_| (0..d).map(|_| (rng.below(256)) as u8).collect())
            .collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.below(k as u64) as usize).collect();
        let refs: Vec<&[u8]> = rows.iter().map(|r| r.as_slice()).collect();
        let ds = byte_dataset(&refs, &labels, k);

        let mut brute = u32::MAX;
        for i in 0..n {
            for j in i + 1..n {
                if labels[i] == labels[j] {
                    continue;
                }
                let m = rows[i]
                    .iter()
                    .zip(&rows[j])
                    .map(|(&a, &b)| (a as i32 - b as i32).unsigned_abs())
                    .max()
                    .unwrap();
                brute = brute.min(m);
            }
        }
        let rep = class_gap(&ds, None).unwrap();
        assert_eq!(rep.raw_units, Some(brute as f64));
    }

    #[test]
    fn feature_path_without_raw_bytes() {
        let ds = crate::data::synth_corners(2, 5, 0.6, 8, 3).unwrap();
        let rep = class_gap(&ds, None).unwrap();
        assert!(rep.raw_units.is_none());
        assert!(rep.feature_units >= 0.6);
        assert!(rep.feature_units <= 1.0);
    }
}
