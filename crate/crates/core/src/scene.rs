//! Synthetic scenes with known foreground/background textures.
//!
//! A scene is a seeded value-noise background, a second value-noise texture
//! inside a ground-truth object mask, and an "alternate" background
//! realization that differs from the original background at every pixel.
//! The oracle painter draws on these to reproduce idealized painting behavior.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BitMask, ImageBuf, Rect};

/// Seeded multi-octave value noise around a base color.
///
/// Channel value = `base + amplitude * (2n - 1)` with `n` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextureSpec {
    pub base: [f32; 3],
    pub amplitude: f32,
    /// Lattice spacing of the coarsest octave, in pixels.
    pub cell: f32,
    pub octaves: u32,
    pub seed: u64,
}

impl TextureSpec {
    /// Noise in `[0, 1]` for channel `c` at `(x, y)`.
    pub fn noise(&self, x: usize, y: usize, c: usize) -> f32 {
        value_noise(
            self.seed,
            c as u64,
            self.cell,
            self.octaves,
            x as f32,
            y as f32,
        )
    }

    pub fn value(&self, x: usize, y: usize) -> [f32; 3] {
        std::array::from_fn(|c| self.channel(c, self.noise(x, y, c)))
    }

    /// A second realization whose noise is offset by a re-seeded amount in
    /// `[0.25, 0.75]` (mod 1), so every channel differs from [`Self::value`]
    /// by at least `amplitude / 2`.
    pub fn alternate_value(&self, x: usize, y: usize) -> [f32; 3] {
        let reseed = self.seed ^ 0xA5A5_5A5A_D00D_F00D;
        std::array::from_fn(|c| {
            let m = value_noise(
                reseed,
                c as u64,
                self.cell,
                self.octaves,
                x as f32,
                y as f32,
            );
            let n = (self.noise(x, y, c) + 0.25 + 0.5 * m).fract();
            self.channel(c, n)
        })
    }

    fn channel(&self, c: usize, n: f32) -> f32 {
        (self.base[c] + self.amplitude * (2.0 * n - 1.0)).clamp(0.0, 1.0)
    }

    pub fn render(&self, width: usize, height: usize) -> ImageBuf {
        ImageBuf::from_fn(width, height, |x, y| self.value(x, y)).quantized()
    }

    pub fn render_alternate(&self, width: usize, height: usize) -> ImageBuf {
        ImageBuf::from_fn(width, height, |x, y| self.alternate_value(x, y)).quantized()
    }
}

fn hash(seed: u64, c: u64, octave: u64, ix: i64, iy: i64) -> f32 {
    // splitmix64 finalizer over the packed lattice key
    let mut z = seed
        .wrapping_add(c.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(octave.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add((ix as u64).wrapping_mul(0x8CB9_2BA7_2F3D_8DD7))
        .wrapping_add((iy as u64).wrapping_mul(0xABC9_8388_FB8F_AC03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 40) as f32 / (1u64 << 24) as f32
}

fn value_noise(seed: u64, c: u64, cell: f32, octaves: u32, x: f32, y: f32) -> f32 {
    let mut total = 0.0;
    let mut norm = 0.0;
    let mut amp = 1.0;
    let mut cell = cell.max(1.0);
    for o in 0..octaves.max(1) {
        let (fx, fy) = (x / cell, y / cell);
        let (ix, iy) = (fx.floor() as i64, fy.floor() as i64);
        let (tx, ty) = (smooth(fx - ix as f32), smooth(fy - iy as f32));
        let o = o as u64;
        let a = hash(seed, c, o, ix, iy);
        let b = hash(seed, c, o, ix + 1, iy);
        let d = hash(seed, c, o, ix, iy + 1);
        let e = hash(seed, c, o, ix + 1, iy + 1);
        let top = a + (b - a) * tx;
        let bottom = d + (e - d) * tx;
        total += amp * (top + (bottom - top) * ty);
        norm += amp;
        amp *= 0.5;
        cell = (cell * 0.5).max(1.0);
    }
    (total / norm).clamp(0.0, 1.0)
}

fn smooth(t: f32) -> f32 {
    t * t * (3.0 - 2.0 * t)
}

/// Full description of a synthetic scene; enough to re-render it exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub background: TextureSpec,
    pub foreground: TextureSpec,
    #[serde(with = "rle")]
    pub gt_mask: BitMask,
    /// Std-dev of Gaussian noise added to every painted channel.
    pub noise_sigma: f32,
    /// Minimum per-pixel RGB distance between foreground and background textures.
    pub texture_gap: f32,
    pub gt_bbox: Rect,
}

impl SceneSpec {
    pub fn new(
        seed: u64,
        background: TextureSpec,
        foreground: TextureSpec,
        gt_mask: BitMask,
        noise_sigma: f32,
    ) -> Result<Self> {
        let (width, height) = gt_mask.dims();
        let gt_bbox = gt_mask.tight_bbox().ok_or(Error::EmptyMask)?;
        let bg = background.render(width, height);
        let fg = foreground.render(width, height);
        let texture_gap = min_distance(&fg, &bg);
        Ok(Self {
            width,
            height,
            seed,
            background,
            foreground,
            gt_mask,
            noise_sigma,
            texture_gap,
            gt_bbox,
        })
    }

    pub fn render(&self) -> ImageBuf {
        let bg = self.background.render(self.width, self.height);
        let mut img = bg;
        self.foreground
            .render(self.width, self.height)
            .composite_into(&mut img, &self.gt_mask)
            .expect("same dims");
        img
    }

    pub fn with_noise(mut self, sigma: f32) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

/// Smallest per-pixel RGB L2 distance between two images.
pub fn min_distance(a: &ImageBuf, b: &ImageBuf) -> f32 {
    a.data()
        .chunks_exact(3)
        .zip(b.data().chunks_exact(3))
        .map(|(p, q)| {
            p.iter()
                .zip(q)
                .map(|(u, v)| (u - v) * (u - v))
                .sum::<f32>()
                .sqrt()
        })
        .fold(f32::INFINITY, f32::min)
}

/// Run-length encoding `{width, height, runs}` with runs alternating
/// background/foreground, starting with background.
mod rle {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Rle {
        width: usize,
        height: usize,
        runs: Vec<usize>,
    }

    pub fn serialize<S: Serializer>(mask: &BitMask, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0;
        for b in mask.bits() {
            if *b == current {
                len += 1;
            } else {
                runs.push(len);
                current = *b;
                len = 1;
            }
        }
        runs.push(len);
        Rle {
            width: mask.width(),
            height: mask.height(),
            runs,
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BitMask, D::Error> {
        let rle = Rle::deserialize(d)?;
        let mut bits = Vec::with_capacity(rle.width * rle.height);
        for (i, run) in rle.runs.iter().enumerate() {
            bits.extend(std::iter::repeat_n(i % 2 == 1, *run));
        }
        BitMask::new(rle.width, rle.height, bits).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tex(seed: u64) -> TextureSpec {
        TextureSpec {
            base: [0.3, 0.5, 0.7],
            amplitude: 0.1,
            cell: 8.0,
            octaves: 3,
            seed,
        }
    }

    #[test]
    fn noise_in_range_and_deterministic() {
        let t = tex(5);
        for y in 0..40 {
            for x in 0..40 {
                for c in 0..3 {
                    let n = t.noise(x, y, c);
                    assert!((0.0..=1.0).contains(&n));
                    assert_eq!(n, t.noise(x, y, c));
                }
            }
        }
        assert_ne!(tex(5).render(16, 16), tex(6).render(16, 16));
    }

    #[test]
    fn alternate_differs_everywhere() {
        let t = tex(9);
        let a = t.render(64, 64);
        let b = t.render_alternate(64, 64);
        // per channel >= amplitude / 2 before quantization, so L2 >= sqrt(3) * 0.05 - rounding
        assert!(min_distance(&a, &b) > 0.07);
    }

    #[test]
    fn scene_json_roundtrip() {
        let gt = BitMask::from_fn(20, 10, |x, y| (5..12).contains(&x) && (2..8).contains(&y));
        let s = SceneSpec::new(
            1,
            tex(1),
            TextureSpec {
                base: [0.8, 0.2, 0.2],
                ..tex(2)
            },
            gt,
            0.0,
        )
        .unwrap();
        let back: SceneSpec = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        assert_eq!(
            s.gt_bbox,
            Rect {
                x0: 5,
                y0: 2,
                x1: 12,
                y1: 8
            }
        );
        assert!(s.texture_gap > 0.3);
    }
}
