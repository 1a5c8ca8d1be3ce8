//! Binary morphology with square (Chebyshev) structuring elements.
//!
//! Pixels outside the image count as background for erosion, so a mask that
//! fills the frame loses a border frame when eroded.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::raster::BitMask;

/// Square structuring element of odd side length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct StructuringElement(usize);

impl StructuringElement {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 || size.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "structuring element size must be odd and >= 1, got {size}"
            )));
        }
        Ok(Self(size))
    }

    pub fn size(self) -> usize {
        self.0
    }

    pub fn radius(self) -> usize {
        self.0 / 2
    }
}

impl TryFrom<usize> for StructuringElement {
    type Error = Error;

    fn try_from(size: usize) -> Result<Self> {
        Self::new(size)
    }
}

impl From<StructuringElement> for usize {
    fn from(k: StructuringElement) -> usize {
        k.0
    }
}

/// Sets every pixel within Chebyshev distance `radius` of a set pixel.
pub fn dilate(mask: &BitMask, radius: usize) -> BitMask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = mask.dims();
    let horizontal = window_pass_rows(mask.bits(), w, h, radius, |count, _len| count > 0);
    let bits = window_pass_cols(&horizontal, w, h, radius, |count, _len| count > 0);
    BitMask::new(w, h, bits).expect("dimensions preserved")
}

/// Keeps a pixel iff its whole `(2r+1)^2` window lies inside the image and
/// inside the mask.
pub fn erode(mask: &BitMask, radius: usize) -> BitMask {
    if radius == 0 {
        return mask.clone();
    }
    let full = 2 * radius + 1;
    let (w, h) = mask.dims();
    let horizontal = window_pass_rows(mask.bits(), w, h, radius, |count, len| {
        len == full && count == len
    });
    let bits = window_pass_cols(&horizontal, w, h, radius, |count, len| {
        len == full && count == len
    });
    BitMask::new(w, h, bits).expect("dimensions preserved")
}

/// Inner ring `mask - erode(mask)` and outer ring `dilate(mask) - mask`.
pub fn rings(mask: &BitMask, width: usize) -> (BitMask, BitMask) {
    let inner = mask.minus(&erode(mask, width));
    let outer = dilate(mask, width).minus(mask);
    (inner, outer)
}

pub fn open(mask: &BitMask, radius: usize) -> BitMask {
    dilate(&erode(mask, radius), radius)
}

/// Dual of [`open`]: fills background gaps narrower than the kernel.
pub fn close(mask: &BitMask, radius: usize) -> BitMask {
    open(&mask.not(), radius).not()
}

/// Opening followed by closing: drops specks and fills pinholes smaller than `k`.
pub fn morph_clean(mask: &BitMask, k: StructuringElement) -> BitMask {
    close(&open(mask, k.radius()), k.radius())
}

/// Applies `keep(count, window_len)` to a sliding window of half-width `radius`
/// along each row. `window_len` is the number of in-image pixels in the window.
fn window_pass_rows(
    bits: &[bool],
    w: usize,
    h: usize,
    radius: usize,
    keep: impl Fn(usize, usize) -> bool + Sync + Send,
) -> Vec<bool> {
    let mut out = vec![false; w * h];
    par::for_each_row(&mut out, w, |y, row| {
        let src = &bits[y * w..(y + 1) * w];
        let mut prefix = vec![0usize; w + 1];
        for (i, b) in src.iter().enumerate() {
            prefix[i + 1] = prefix[i] + *b as usize;
        }
        for (x, o) in row.iter_mut().enumerate() {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius + 1).min(w);
            *o = keep(prefix[hi] - prefix[lo], hi - lo);
        }
    });
    out
}

fn window_pass_cols(
    bits: &[bool],
    w: usize,
    h: usize,
    radius: usize,
    keep: impl Fn(usize, usize) -> bool + Sync + Send,
) -> Vec<bool> {
    // prefix[y * w + x] = set pixels in column x above row y
    let mut prefix = vec![0usize; (h + 1) * w];
    for y in 0..h {
        for x in 0..w {
            prefix[(y + 1) * w + x] = prefix[y * w + x] + bits[y * w + x] as usize;
        }
    }
    let mut out = vec![false; w * h];
    par::for_each_row(&mut out, w, |y, row| {
        let lo = y.saturating_sub(radius);
        let hi = (y + radius + 1).min(h);
        for (x, o) in row.iter_mut().enumerate() {
            *o = keep(prefix[hi * w + x] - prefix[lo * w + x], hi - lo);
        }
    });
    out
}
