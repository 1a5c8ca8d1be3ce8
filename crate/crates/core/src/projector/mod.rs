//! Feature projection of an image into a per-pixel C-channel map.

mod patch_stats;
mod remote;

pub use patch_stats::PatchStatsProjector;
pub use remote::RemoteProjector;

use crate::error::{Error, Result};
use crate::raster::ImageBuf;

/// Per-pixel feature vectors at full image resolution, interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 || data.len() != width * height * channels {
            return Err(Error::InvalidImage(format!(
                "feature map {width}x{height}x{channels} cannot hold {} values",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidImage("non-finite feature value".into()));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
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

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Feature vector of the pixel at linear index `idx`.
    pub fn vector(&self, idx: usize) -> &[f32] {
        &self.data[idx * self.channels..(idx + 1) * self.channels]
    }
}

/// Image-to-feature function. Implementations must be deterministic.
pub trait Projector: Send + Sync {
    fn project(&self, image: &ImageBuf) -> Result<FeatureMap>;

    fn name(&self) -> String;
}

/// Uses raw RGB values as features.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityProjector;

impl Projector for IdentityProjector {
    fn project(&self, image: &ImageBuf) -> Result<FeatureMap> {
        FeatureMap::new(image.width(), image.height(), 3, image.data().to_vec())
    }

    fn name(&self) -> String {
        "identity".into()
    }
}
