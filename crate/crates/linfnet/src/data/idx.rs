//! IDX image/label loading (the MNIST container format), with transparent
//! gzip decompression.

use std::io::Read as _;
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numcore::Tensor;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Load an image/label pair of IDX files into a dataset. Either file may be
/// gzip-compressed (detected by the 0x1f 0x8b signature). Features are the
/// raw bytes divided by 255; classes run `0..=max_label`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = read_maybe_gzip(images_path)?;
    let labels = read_maybe_gzip(labels_path)?;
    let (raw, h, w) = parse_images(&images)?;
    let label_bytes = parse_labels(&labels)?;
    if label_bytes.len() != raw.len() / (h * w) {
        return Err(Error::DataConsistency(format!(
            "{} images but {} labels",
            raw.len() / (h * w),
            label_bytes.len()
        )));
    }
    let labels: Vec<usize> = label_bytes.iter().map(|&b| b as usize).collect();
    let k = labels.iter().copied().max().unwrap_or(0) + 1;
    let features = Tensor::new(
        &[label_bytes.len(), h * w],
        raw.iter().map(|&b| b as f64 / 255.0).collect(),
    )?;
    let name = images_path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".into());
    Dataset::new(features, labels, k, Some(raw), Some((h, w, 1)), name)
}

fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(&bytes[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::Format(format!("gzip stream in {path:?}: {e}")))?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

fn be_u32(bytes: &[u8], pos: usize, what: &str) -> Result<u32> {
    let end = pos + 4;
    if bytes.len() < end {
        return Err(Error::Truncated { needed: end, got: bytes.len() });
    }
    let _ = what;
    Ok(u32::from_be_bytes([bytes[pos], bytes[pos + 1], bytes[pos + 2], bytes[pos + 3]]))
}

fn parse_images(bytes: &[u8]) -> Result<(Vec<u8>, usize, usize)> {
    let magic = be_u32(bytes, 0, "image magic")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format(format!(
            "image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"
        )));
    }
    let n = be_u32(bytes, 4, "image count")? as usize;
    let h = be_u32(bytes, 8, "rows")? as usize;
    let w = be_u32(bytes, 12, "cols")? as usize;
    if n == 0 || h == 0 || w == 0 {
        return Err(Error::Format(format!("degenerate image dims {n}x{h}x{w}")));
    }
    let needed = 16 + n * h * w;
    if bytes.len() < needed {
        return Err(Error::Truncated { needed, got: bytes.len() });
    }
    if bytes.len() > needed {
        return Err(Error::Format(format!(
            "{} trailing bytes after image payload",
            bytes.len() - needed
        )));
    }
    Ok((bytes[16..].to_vec(), h, w))
}

fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, "label magic")?;
    if magic != LABEL_MAGIC {
        return Err(Error::Format(format!(
            "label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"
        )));
    }
    let n = be_u32(bytes, 4, "label count")? as usize;
    if n == 0 {
        return Err(Error::Format("empty label file".into()));
    }
    let needed = 8 + n;
    if bytes.len() < needed {
        return Err(Error::Truncated { needed, got: bytes.len() });
    }
    if bytes.len() > needed {
        return Err(Error::Format(format!(
            "{} trailing bytes after label payload",
            bytes.len() - needed
        )));
    }
    Ok(bytes[8..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn image_file(n: usize, h: usize, w: usize, pixels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
        b.extend_from_slice(&(n as u32).to_be_bytes());
        b.extend_from_slice(&(h as u32).to_be_bytes());
        b.extend_from_slice(&(w as u32).to_be_bytes());
        b.extend_from_slice(pixels);
        b
    }

    fn label_file(labels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
        b.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        b.extend_from_slice(labels);
        b
    }

    fn write_pair(dir: &Path, images: &[u8], labels: &[u8]) -> (std::path::PathBuf, std::path::PathBuf) {
        let ip = dir.join("imgs.idx");
        let lp = dir.join("labels.idx");
        std::fs::write(&ip, images).unwrap();
        std::fs::write(&lp, labels).unwrap();
        (ip, lp)
    }

    #[test]
    fn loads_plain_pair() {
        let dir = tempfile::tempdir().unwrap();
        let pixels: Vec<u8> = (0..2 * 2 * 3).map(|i| (i * 20) as u8).collect();
        let (ip, lp) = write_pair(dir.path(), &image_file(2, 2, 3, &pixels), &label_file(&[1, 4]));
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dim(), 6);
        assert_eq!(ds.num_classes(), 5);
        assert_eq!(ds.image_dims(), Some((2, 3, 1)));
        assert_eq!(ds.label(1), 4);
        assert_eq!(ds.feature_row(0)[1], 20.0 / 255.0);
        assert_eq!(ds.raw_bytes().unwrap(), &pixels[..]);
    }

    #[test]
    fn loads_gzipped_pair() {
        let dir = tempfile::tempdir().unwrap();
        let pixels: Vec<u8> = (0..4).map(|i| (i * 60) as u8).collect();
        let gz = |data: &[u8]| {
            let mut enc =
                flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
            enc.write_all(data).unwrap();
            enc.finish().unwrap()
        };
        let (ip, lp) = write_pair(
            dir.path(),
            &gz(&image_file(2, 2, 1, &pixels)),
            &gz(&label_file(&[0, 1])),
        );
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.raw_bytes().unwrap(), &pixels[..]);
    }

    #[test]
    fn wrong_magic_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        // Image file carrying the label magic: malformed, not truncated.
        let mut bad = image_file(1, 1, 1, &[7]);
        bad[..4].copy_from_slice(&LABEL_MAGIC.to_be_bytes());
        let (ip, lp) = write_pair(dir.path(), &bad, &label_file(&[0]));
        match load_idx(&ip, &lp) {
            Err(Error::Format(msg)) => assert!(msg.contains("0x00000801"), "{msg}"),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn short_payload_is_truncation_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = image_file(2, 2, 2, &[0; 8]);
        img.truncate(19); // header promises 16 + 8 bytes
        let (ip, lp) = write_pair(dir.path(), &img, &label_file(&[0, 1]));
        assert!(matches!(
            load_idx(&ip, &lp),
            Err(Error::Truncated { needed: 24, got: 19 })
        ));
    }

    #[test]
    fn count_mismatch_is_consistency_error() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_pair(
            dir.path(),
            &image_file(2, 1, 1, &[3, 9]),
            &label_file(&[0, 1, 1]),
        );
        assert!(matches!(load_idx(&ip, &lp), Err(Error::DataConsistency(_))));
    }
}
