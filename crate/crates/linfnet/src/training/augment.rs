//! Width-augmentation for image inputs: zero-pad, random-crop back to the
//! original size, and optionally mirror horizontally. All randomness comes
//! from the caller's generator so training stays replayable.

use crate::error::{Error, Result};
use crate::numcore::{Rng, Tensor};

/// Augmentation policy carried by a training config.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Augment {
    None,
    Waug { pad: usize, flip: bool },
}

impl Augment {
    pub fn is_none(&self) -> bool {
        matches!(self, Augment::None) || matches!(self, Augment::Waug { pad: 0, flip: false })
    }
}

/// Pad an `(H, W, C)` image with `pad` zero pixels on every side, crop a
/// random `H x W` window (offsets drawn uniformly from `{0..2*pad}^2`, row
/// offset first), then mirror left-right with probability 1/2 when `flip`
/// is set. With `pad = 0` and `flip = false` this is the identity and draws
/// nothing from the generator.
pub fn augment_waug(image: &Tensor, rng: &mut Rng, pad: usize, flip: bool) -> Result<Tensor> {
    let shape = image.shape();
    if shape.len() != 3 {
        return Err(Error::shape_mismatch("rank-3 (H,W,C) image", shape));
    }
    let (h, w, c) = (shape[0], shape[1], shape[2]);
    if pad == 0 && !flip {
        return Ok(image.clone());
    }
    let (dy, dx) = if pad > 0 {
        (rng.below(2 * pad as u64 + 1) as usize, rng.below(2 * pad as u64 + 1) as usize)
    } else {
        (0, 0)
    };
    let mirror = flip && rng.coin();
    let src = image.data();
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        // Output row y reads padded row y+dy, i.e. input row y+dy-pad.
        let sy = (y + dy) as isize - pad as isize;
        if sy < 0 || sy >= h as isize {
            continue;
        }
        for x in 0..w {
            let ox = if mirror { w - 1 - x } else { x };
            let sx = (x + dx) as isize - pad as isize;
            if sx < 0 || sx >= w as isize {
                continue;
            }
            let src_at = (sy as usize * w + sx as usize) * c;
            let dst_at = (y * w + ox) * c;
            out[dst_at..dst_at + c].copy_from_slice(&src[src_at..src_at + c]);
        }
    }
    Tensor::new(shape, out)
}
