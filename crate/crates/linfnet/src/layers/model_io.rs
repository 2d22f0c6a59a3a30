//! Bit-exact model serialization.
//!
//! File layout:
//!
//! ```text
//! "LNFC"                      4 bytes magic
//! version                     u32 little-endian (currently 1)
//! descriptor length           u32 little-endian
//! descriptor                  UTF-8 flat key=value lines (architecture)
//! payload                     per layer: weights row-major then bias,
//!                             each value f64 little-endian
//! crc32                       u32 little-endian, IEEE polynomial, over
//!                             all preceding bytes
//! ```
//!
//! The payload order equals [`Network::params_flat`], so round-trips are
//! bit-identical. Structural problems surface as magic/format/truncation
//! errors; any byte flip elsewhere is caught by the checksum.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numcore::Tensor;

use super::network::{AffineHead, ConvDistLayer, DistLayer, HeadLayer, Layer, Network};
use super::neuron::NeuronMode;

const MAGIC: &[u8; 4] = b"LNFC";
const VERSION: u32 = 1;

fn descriptor_text(net: &Network) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "num_layers={}", net.layers().len());
    for (i, layer) in net.layers().iter().enumerate() {
        match layer {
            Layer::Dist(l) => {
                let _ = writeln!(s, "layer.{i}.kind=dist");
                let _ = writeln!(s, "layer.{i}.in={}", l.in_width());
                let _ = writeln!(s, "layer.{i}.out={}", l.out_width());
                let _ = writeln!(s, "layer.{i}.mode={}", l.mode().describe());
                if let Some(c) = l.residual_c() {
                    let _ = writeln!(s, "layer.{i}.residual_c={c}");
                }
            }
            Layer::Conv(l) => {
                let (ic, ih, iw) = l.in_shape();
                let (kh, kw) = l.kernel_hw();
                let _ = writeln!(s, "layer.{i}.kind=conv");
                let _ = writeln!(s, "layer.{i}.in_c={ic}");
                let _ = writeln!(s, "layer.{i}.in_h={ih}");
                let _ = writeln!(s, "layer.{i}.in_w={iw}");
                let _ = writeln!(s, "layer.{i}.out_c={}", l.out_channels());
                let _ = writeln!(s, "layer.{i}.kh={kh}");
                let _ = writeln!(s, "layer.{i}.kw={kw}");
                let _ = writeln!(s, "layer.{i}.stride_y={}", l.stride().0);
                let _ = writeln!(s, "layer.{i}.stride_x={}", l.stride().1);
                let _ = writeln!(s, "layer.{i}.mode={}", l.mode().describe());
            }
        }
    }
    if let Some(h) = net.head() {
        let _ = writeln!(s, "head.layers={}", h.layers().len());
        for (j, hl) in h.layers().iter().enumerate() {
            let _ = writeln!(s, "head.{j}.in={}", hl.in_width());
            let _ = writeln!(s, "head.{j}.out={}", hl.out_width());
            let _ = writeln!(s, "head.{j}.relu={}", u8::from(hl.relu()));
        }
    }
    let _ = writeln!(s, "negate={}", u8::from(net.negate_logits()));
    let _ = writeln!(s, "ema={}", u8::from(net.ema));
    s
}

/// Serializes a network to the LNFC byte format.
pub fn serialize_model(net: &Network) -> Vec<u8> {
    let desc = descriptor_text(net);
    let params = net.params_flat();
    let mut out = Vec::with_capacity(16 + desc.len() + params.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(desc.len() as u32).to_le_bytes());
    out.extend_from_slice(desc.as_bytes());
    for v in &params {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Truncated { needed: self.pos + n, got: self.buf.len() });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32_le(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64_le(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]]))
    }
}

struct Descriptor {
    map: BTreeMap<String, String>,
}

impl Descriptor {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for line in text.lines() {
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("descriptor line without '=': {line:?}")))?;
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Format(format!("duplicate descriptor key {k:?}")));
            }
        }
        Ok(Descriptor { map })
    }

    fn take(&mut self, key: &str) -> Result<String> {
        self.map
            .remove(key)
            .ok_or_else(|| Error::Format(format!("descriptor missing key {key:?}")))
    }

    fn take_opt(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn take_usize(&mut self, key: &str) -> Result<usize> {
        let v = self.take(key)?;
        v.parse()
            .map_err(|_| Error::Format(format!("descriptor key {key:?}: bad integer {v:?}")))
    }

    fn take_bool(&mut self, key: &str) -> Result<bool> {
        match self.take(key)?.as_str() {
            "0" => Ok(false),
            "1" => Ok(true),
            v => Err(Error::Format(format!("descriptor key {key:?}: expected 0 or 1, got {v:?}"))),
        }
    }

    fn finish(self) -> Result<()> {
        if self.map.is_empty() {
            Ok(())
        } else {
            let keys: Vec<_> = self.map.keys().cloned().collect();
            Err(Error::Format(format!("unknown descriptor keys: {}", keys.join(", "))))
        }
    }
}

/// Parses LNFC bytes back into a network. The checksum is verified after
/// the structure parses, so truncation and corruption report distinctly.
pub fn deserialize_model(bytes: &[u8]) -> Result<Network> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:02x?}, expected \"LNFC\"",
            &magic
        )));
    }
    let version = r.u32_le()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported model format version {version}")));
    }
    let desc_len = r.u32_le()? as usize;
    let desc_bytes = r.take(desc_len)?;
    let desc_text = std::str::from_utf8(desc_bytes)
        .map_err(|e| Error::Format(format!("descriptor is not UTF-8: {e}")))?;
    let mut desc = Descriptor::parse(desc_text)?;

    let num_layers = desc.take_usize("num_layers")?;
    let mut layers = Vec::with_capacity(num_layers);
    for i in 0..num_layers {
        let kind = desc.take(&format!("layer.{i}.kind"))?;
        match kind.as_str() {
            "dist" => {
                let in_w = desc.take_usize(&format!("layer.{i}.in"))?;
                let out_w = desc.take_usize(&format!("layer.{i}.out"))?;
                let mode = NeuronMode::parse(&desc.take(&format!("layer.{i}.mode"))?)?;
                let residual_c = match desc.take_opt(&format!("layer.{i}.residual_c")) {
                    Some(v) => Some(v.parse::<f64>().map_err(|_| {
                        Error::Format(format!("layer {i}: bad residual coefficient {v:?}"))
                    })?),
                    None => None,
                };
                layers.push(Layer::Dist(DistLayer::new(
                    Tensor::zeros(&[out_w, in_w]),
                    Tensor::zeros(&[out_w]),
                    mode,
                    residual_c,
                )?));
            }
            "conv" => {
                let in_c = desc.take_usize(&format!("layer.{i}.in_c"))?;
                let in_h = desc.take_usize(&format!("layer.{i}.in_h"))?;
                let in_w = desc.take_usize(&format!("layer.{i}.in_w"))?;
                let out_c = desc.take_usize(&format!("layer.{i}.out_c"))?;
                let kh = desc.take_usize(&format!("layer.{i}.kh"))?;
                let kw = desc.take_usize(&format!("layer.{i}.kw"))?;
                let sy = desc.take_usize(&format!("layer.{i}.stride_y"))?;
                let sx = desc.take_usize(&format!("layer.{i}.stride_x"))?;
                let mode = NeuronMode::parse(&desc.take(&format!("layer.{i}.mode"))?)?;
                layers.push(Layer::Conv(ConvDistLayer::new(
                    Tensor::zeros(&[out_c, in_c, kh, kw]),
                    Tensor::zeros(&[out_c]),
                    (sy, sx),
                    (in_c, in_h, in_w),
                    mode,
                )?));
            }
            other => return Err(Error::Format(format!("unknown layer kind {other:?}"))),
        }
    }

    let head = match desc.take_opt("head.layers") {
        Some(n) => {
            let n: usize = n
                .parse()
                .map_err(|_| Error::Format(format!("bad head layer count {n:?}")))?;
            let mut hls = Vec::with_capacity(n);
            for j in 0..n {
                let in_w = desc.take_usize(&format!("head.{j}.in"))?;
                let out_w = desc.take_usize(&format!("head.{j}.out"))?;
                let relu = desc.take_bool(&format!("head.{j}.relu"))?;
                hls.push(HeadLayer::new(
                    Tensor::zeros(&[out_w, in_w]),
                    Tensor::zeros(&[out_w]),
                    relu,
                )?);
            }
            Some(AffineHead::new(hls)?)
        }
        None => None,
    };

    let negate = desc.take_bool("negate")?;
    let ema = desc.take_bool("ema")?;
    desc.finish()?;

    let mut net = Network::new(layers, head, negate)?;
    net.ema = ema;

    let mut params = Vec::with_capacity(net.param_count());
    for k in 0..net.param_count() {
        let v = r.f64_le()?;
        if !v.is_finite() {
            return Err(Error::Numeric(format!("non-finite parameter {v} at flat index {k}")));
        }
        params.push(v);
    }

    let crc_pos = r.pos;
    let stored = r.u32_le()?;
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after checksum",
            bytes.len() - r.pos
        )));
    }
    let computed = crc32fast::hash(&bytes[..crc_pos]);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    net.load_params(&params)?;
    Ok(net)
}

/// Writes a network to `path` in the LNFC format.
pub fn save_model(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, serialize_model(net))?;
    Ok(())
}

/// Reads a network from an LNFC file.
pub fn load_model(path: impl AsRef<Path>) -> Result<Network> {
    let bytes = std::fs::read(&path)?;
    deserialize_model(&bytes)
}

/// The embedded CRC-32 of a serialized model (the last four bytes).
pub fn model_crc(bytes: &[u8]) -> Result<u32> {
    if bytes.len() < 4 {
        return Err(Error::Truncated { needed: 4, got: bytes.len() });
    }
    let tail = &bytes[bytes.len() - 4..];
    Ok(u32::from_le_bytes([tail[0], tail[1], tail[2], tail[3]]))
}
