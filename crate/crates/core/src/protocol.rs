//! JSON wire format shared by the remote painter and projector clients.
//!
//! Rasters travel as base64 PNG, zero-padded onto a square canvas (512 px by
//! default) with the original centered; `pad` tells the server where the valid
//! region lies. Feature grids travel as base64 little-endian `f32` in
//! channel-major order.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::raster::{BitMask, ImageBuf};

pub const DEFAULT_CANVAS: usize = 512;
pub const PAINT_PATH: &str = "/v1/paint";
pub const PROJECT_PATH: &str = "/v1/project";
pub const HEALTH_PATH: &str = "/v1/health";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pad {
    pub left: usize,
    pub top: usize,
    pub orig_w: usize,
    pub orig_h: usize,
}

impl Pad {
    /// Centers a `width x height` raster on a `canvas x canvas` square.
    pub fn centered(width: usize, height: usize, canvas: usize) -> Result<Self> {
        if width > canvas || height > canvas {
            return Err(Error::InvalidImage(format!(
                "{width}x{height} image exceeds the {canvas}x{canvas} canvas"
            )));
        }
        Ok(Self {
            left: (canvas - width) / 2,
            top: (canvas - height) / 2,
            orig_w: width,
            orig_h: height,
        })
    }

    fn check_fits(&self, canvas_w: usize, canvas_h: usize) -> Result<()> {
        if self.left + self.orig_w > canvas_w || self.top + self.orig_h > canvas_h {
            return Err(Error::Protocol(format!(
                "pad {self:?} does not fit a {canvas_w}x{canvas_h} raster"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaintRequestBody {
    pub image: String,
    pub keep_mask: String,
    pub n_samples: usize,
    pub seed: u64,
    pub diffusion_steps: usize,
    pub pad: Pad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaintResponseBody {
    pub samples: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectRequestBody {
    pub image: String,
    pub pad: Pad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectResponseBody {
    pub stride: usize,
    pub channels: usize,
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

pub fn pad_image(img: &ImageBuf, pad: Pad, canvas: usize) -> ImageBuf {
    let mut out = ImageBuf::filled(canvas, canvas, [0.0; 3]);
    for y in 0..pad.orig_h {
        for x in 0..pad.orig_w {
            out.set_pixel(x + pad.left, y + pad.top, img.pixel(x, y));
        }
    }
    out
}

pub fn pad_mask(mask: &BitMask, pad: Pad, canvas: usize) -> BitMask {
    BitMask::from_fn(canvas, canvas, |x, y| {
        x >= pad.left
            && y >= pad.top
            && x < pad.left + pad.orig_w
            && y < pad.top + pad.orig_h
            && mask.get(x - pad.left, y - pad.top)
    })
}

pub fn crop_image(img: &ImageBuf, pad: Pad) -> Result<ImageBuf> {
    pad.check_fits(img.width(), img.height())?;
    Ok(ImageBuf::from_fn(pad.orig_w, pad.orig_h, |x, y| {
        img.pixel(x + pad.left, y + pad.top)
    }))
}

pub fn crop_mask(mask: &BitMask, pad: Pad) -> Result<BitMask> {
    pad.check_fits(mask.width(), mask.height())?;
    Ok(BitMask::from_fn(pad.orig_w, pad.orig_h, |x, y| {
        mask.get(x + pad.left, y + pad.top)
    }))
}

pub fn image_to_b64(img: &ImageBuf) -> Result<String> {
    Ok(STANDARD.encode(io::encode_image_png(img)?))
}

pub fn mask_to_b64(mask: &BitMask) -> Result<String> {
    Ok(STANDARD.encode(io::encode_mask_png(mask)?))
}

fn b64_bytes(s: &str, what: &str) -> Result<Vec<u8>> {
    STANDARD
        .decode(s)
        .map_err(|e| Error::Protocol(format!("{what}: bad base64: {e}")))
}

pub fn image_from_b64(s: &str) -> Result<ImageBuf> {
    io::decode_image_png(&b64_bytes(s, "image")?)
        .map_err(|e| Error::Protocol(format!("image: {e}")))
}

pub fn mask_from_b64(s: &str) -> Result<BitMask> {
    io::decode_mask_png(&b64_bytes(s, "mask")?).map_err(|e| Error::Protocol(format!("mask: {e}")))
}

pub fn features_to_b64(values: &[f32]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn features_from_b64(s: &str) -> Result<Vec<f32>> {
    let bytes = b64_bytes(s, "features")?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Protocol(format!(
            "feature payload of {} bytes is not f32-aligned",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}
