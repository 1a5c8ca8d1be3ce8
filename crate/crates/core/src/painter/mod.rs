//! Generative painting behind a single keep-mask interface.
//!
//! Inpainting keeps the background estimate and fills the object estimate;
//! outpainting keeps the object estimate and fills the rest. Every backend
//! must return samples that equal the input exactly on kept pixels.

mod oracle;
mod remote;

pub use oracle::{difference_mask, OraclePainter};
pub use remote::RemotePainter;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{check_dims, quantize, BitMask, ImageBuf};

/// Which side of the current estimate is being painted.
///
/// Only in-process backends consume this; the wire protocol derives the
/// distinction from the keep mask alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PaintMode {
    Inpaint,
    Outpaint,
}

#[derive(Debug, Clone, Copy)]
pub struct PaintRequest<'a> {
    pub image: &'a ImageBuf,
    /// Pixels kept as conditioning; everything else is painted.
    pub keep_mask: &'a BitMask,
    pub n_samples: usize,
    /// Sample `i` is drawn with seed `seed + i`.
    pub seed: u64,
    pub diffusion_steps: usize,
    pub mode: PaintMode,
}

impl PaintRequest<'_> {
    pub fn validate(&self) -> Result<()> {
        check_dims(self.image.dims(), self.keep_mask.dims())
            .map_err(|e| Error::InvalidMask(format!("keep mask does not match image: {e}")))?;
        if self.n_samples == 0 {
            return Err(Error::InvalidConfig("n_samples must be >= 1".into()));
        }
        Ok(())
    }

    pub fn sample_seed(&self, i: usize) -> u64 {
        self.seed.wrapping_add(i as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PaintResult {
    pub samples: Vec<ImageBuf>,
}

pub trait Painter: Send + Sync {
    fn paint(&self, req: &PaintRequest<'_>) -> Result<PaintResult>;

    fn name(&self) -> String;
}

/// Fills every painted pixel with the mean color of the kept pixels,
/// rounded to 8-bit levels. With nothing kept the fill is mid-gray.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanFillPainter;

impl MeanFillPainter {
    pub fn fill_color(image: &ImageBuf, keep: &BitMask) -> [f32; 3] {
        let mut sum = [0f64; 3];
        let mut n = 0usize;
        for (i, _) in keep.bits().iter().enumerate().filter(|(_, k)| **k) {
            let p = image.at(i);
            for c in 0..3 {
                sum[c] += p[c] as f64;
            }
            n += 1;
        }
        if n == 0 {
            return [quantize(0.5); 3];
        }
        sum.map(|s| quantize((s / n as f64) as f32))
    }
}

impl Painter for MeanFillPainter {
    fn paint(&self, req: &PaintRequest<'_>) -> Result<PaintResult> {
        req.validate()?;
        let fill = Self::fill_color(req.image, req.keep_mask);
        let mut painted = ImageBuf::filled(req.image.width(), req.image.height(), fill);
        req.image.composite_into(&mut painted, req.keep_mask)?;
        Ok(PaintResult {
            samples: vec![painted; req.n_samples],
        })
    }

    fn name(&self) -> String {
        "meanfill".into()
    }
}
