//! Image, mask and rectangle value types.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// RGB raster with channels normalized to `[0, 1]`, row-major, interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuf {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ImageBuf {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::InvalidImage(format!(
                "expected {} values for {width}x{height}, got {}",
                width * height * 3,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!(
                "channel value {v} outside [0,1]"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let rgb = rgb.map(|c| c.clamp(0.0, 1.0));
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Builds an image from a per-pixel function; values are clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y).map(|c| c.clamp(0.0, 1.0)));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        for (c, v) in rgb.into_iter().enumerate() {
            self.data[i + c] = v.clamp(0.0, 1.0);
        }
    }

    /// Pixel by linear index.
    pub fn at(&self, idx: usize) -> [f32; 3] {
        let i = idx * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Rounds every channel to the nearest 8-bit level.
    pub fn quantized(mut self) -> Self {
        for v in &mut self.data {
            *v = quantize(*v);
        }
        self
    }

    /// Copies this image's pixels wherever `mask` is set, leaving `dst` elsewhere.
    pub fn composite_into(&self, dst: &mut ImageBuf, mask: &BitMask) -> Result<()> {
        check_dims(self.dims(), dst.dims())?;
        check_dims(self.dims(), mask.dims())?;
        for (idx, _) in mask.bits().iter().enumerate().filter(|(_, b)| **b) {
            let i = idx * 3;
            dst.data[i..i + 3].copy_from_slice(&self.data[i..i + 3]);
        }
        Ok(())
    }
}

/// Rounds a normalized channel value to the nearest `k / 255`.
pub fn quantize(v: f32) -> f32 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

pub(crate) fn check_dims(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}

/// Binary foreground mask, `true` = object.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BitMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::InvalidMask(format!(
                "expected {} bits for {width}x{height}, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn from_rect(width: usize, height: usize, rect: Rect) -> Self {
        Self::from_fn(width, height, |x, y| rect.contains(x, y))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    pub fn is_full(&self) -> bool {
        self.bits.iter().all(|b| *b)
    }

    pub fn not(&self) -> BitMask {
        BitMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    fn zip_with(&self, other: &BitMask, f: impl Fn(bool, bool) -> bool) -> BitMask {
        assert_eq!(self.dims(), other.dims(), "mask dimensions differ");
        BitMask {
            width: self.width,
            height: self.height,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        }
    }

    pub fn and(&self, other: &BitMask) -> BitMask {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn or(&self, other: &BitMask) -> BitMask {
        self.zip_with(other, |a, b| a || b)
    }

    /// Pixels set in `self` but not in `other`.
    pub fn minus(&self, other: &BitMask) -> BitMask {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn is_subset_of(&self, other: &BitMask) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).all(|(a, b)| !a || *b)
    }

    pub fn intersects(&self, other: &BitMask) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).any(|(a, b)| *a && *b)
    }

    /// Coordinates of all set pixels in row-major order.
    pub fn points(&self) -> Vec<(usize, usize)> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(|(i, _)| (i % self.width, i / self.width))
            .collect()
    }

    /// Tight bounding box of set pixels.
    pub fn tight_bbox(&self) -> Option<Rect> {
        let mut r: Option<(usize, usize, usize, usize)> = None;
        for (x, y) in self.points() {
            r = Some(match r {
                None => (x, y, x + 1, y + 1),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x + 1), y1.max(y + 1)),
            });
        }
        r.map(|(x0, y0, x1, y1)| Rect { x0, y0, x1, y1 })
    }

    /// Restricts the mask to `rect`.
    pub fn crop_to(&self, rect: Rect) -> BitMask {
        BitMask::from_fn(self.width, self.height, |x, y| {
            rect.contains(x, y) && self.get(x, y)
        })
    }

    /// Shifts the mask by `(dx, dy)`; pixels leaving the frame are dropped.
    pub fn translated(&self, dx: i64, dy: i64) -> BitMask {
        let (w, h) = (self.width as i64, self.height as i64);
        BitMask::from_fn(self.width, self.height, |x, y| {
            let sx = x as i64 - dx;
            let sy = y as i64 - dy;
            sx >= 0 && sy >= 0 && sx < w && sy < h && self.get(sx as usize, sy as usize)
        })
    }
}

/// Per-pixel value in `[0, 1]`; typically an average of binary masks.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl SoftMask {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::InvalidMask(format!(
                "expected {} values for {width}x{height}, got {}",
                width * height,
                values.len()
            )));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidMask("soft mask value outside [0,1]".into()));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// Fraction of `masks` that set each pixel.
    pub fn average(masks: &[BitMask]) -> Result<Self> {
        let first = masks
            .first()
            .ok_or_else(|| Error::InvalidMask("no masks to average".into()))?;
        let (w, h) = first.dims();
        let mut acc = vec![0u32; w * h];
        for m in masks {
            check_dims((w, h), m.dims())?;
            for (a, b) in acc.iter_mut().zip(m.bits()) {
                *a += *b as u32;
            }
        }
        let n = masks.len() as f32;
        Ok(Self {
            width: w,
            height: h,
            values: acc.into_iter().map(|a| a as f32 / n).collect(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Pixels whose value is at least `threshold`.
    pub fn binarize(&self, threshold: f32) -> BitMask {
        BitMask {
            width: self.width,
            height: self.height,
            bits: self.values.iter().map(|v| *v >= threshold).collect(),
        }
    }
}

/// Axis-aligned pixel rectangle, `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Rect {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Result<Self> {
        if x0 >= x1 || y0 >= y1 {
            return Err(Error::InvalidConfig(format!(
                "degenerate rect ({x0},{y0})-({x1},{y1})"
            )));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            x0: 0,
            y0: 0,
            x1: width,
            y1: height,
        }
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x0 >= self.x0 && other.x1 <= self.x1 && other.y0 >= self.y0 && other.y1 <= self.y1
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.x0 < self.x1 && self.y0 < self.y1 && self.x1 <= width && self.y1 <= height
    }

    /// Center in continuous pixel coordinates.
    pub fn center(&self) -> (f64, f64) {
        (
            (self.x0 + self.x1) as f64 / 2.0,
            (self.y0 + self.y1) as f64 / 2.0,
        )
    }

    pub fn diagonal(&self) -> f64 {
        (self.width() as f64).hypot(self.height() as f64)
    }
}

/// Tight bounding box of `mask`, scaled about its center by `rate` and clamped
/// to the image.
///
/// Each side length grows to the smallest integer `>= len * rate` with the
/// same parity as `len`, so the center stays on the same (half-)pixel. For
/// even lengths this is `ceil(half_extent * rate)` per side.
pub fn bbox_of(mask: &BitMask, rate: f64) -> Result<Rect> {
    if rate <= 0.0 || !rate.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "box rate must be positive, got {rate}"
        )));
    }
    let tight = mask.tight_bbox().ok_or(Error::EmptyMask)?;
    let (x0, x1) = scale_span(tight.x0, tight.x1, rate, mask.width());
    let (y0, y1) = scale_span(tight.y0, tight.y1, rate, mask.height());
    Ok(Rect { x0, y0, x1, y1 })
}

fn scale_span(lo: usize, hi: usize, rate: f64, limit: usize) -> (usize, usize) {
    let len = (hi - lo) as i64;
    let mut scaled = ((len as f64) * rate - 1e-9).ceil().max(1.0) as i64;
    if (scaled - len).rem_euclid(2) != 0 {
        scaled += 1;
    }
    let twice_center = (lo + hi) as i64;
    let new_lo = (twice_center - scaled) / 2;
    let new_hi = (twice_center + scaled) / 2;
    (new_lo.max(0) as usize, (new_hi.min(limit as i64)) as usize)
}
