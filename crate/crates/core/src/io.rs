//! PNG encoding: 8-bit RGB for images, 8-bit grayscale (0 / 255) for masks.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::raster::{BitMask, ImageBuf, SoftMask};

pub fn image_to_rgb8(img: &ImageBuf) -> RgbImage {
    let bytes = img
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    RgbImage::from_raw(img.width() as u32, img.height() as u32, bytes).expect("buffer size")
}

pub fn rgb8_to_image(rgb: &RgbImage) -> ImageBuf {
    let data = rgb.as_raw().iter().map(|b| *b as f32 / 255.0).collect();
    ImageBuf::new(rgb.width() as usize, rgb.height() as usize, data).expect("buffer size")
}

pub fn mask_to_gray8(mask: &BitMask) -> GrayImage {
    let bytes = mask
        .bits()
        .iter()
        .map(|b| if *b { 255 } else { 0 })
        .collect();
    GrayImage::from_raw(mask.width() as u32, mask.height() as u32, bytes).expect("buffer size")
}

/// Converts a strict 0/255 grayscale raster to a mask.
pub fn gray8_to_mask(gray: &GrayImage) -> Result<BitMask> {
    let mut bits = Vec::with_capacity(gray.as_raw().len());
    for v in gray.as_raw() {
        match v {
            0 => bits.push(false),
            255 => bits.push(true),
            other => {
                return Err(Error::InvalidMask(format!(
                    "mask value {other} is neither 0 nor 255"
                )))
            }
        }
    }
    BitMask::new(gray.width() as usize, gray.height() as usize, bits)
}

fn decode(bytes: &[u8]) -> Result<DynamicImage> {
    Ok(image::load_from_memory_with_format(
        bytes,
        ImageFormat::Png,
    )?)
}

fn encode(img: DynamicImage) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn decode_image_png(bytes: &[u8]) -> Result<ImageBuf> {
    match decode(bytes)? {
        DynamicImage::ImageRgb8(rgb) => Ok(rgb8_to_image(&rgb)),
        other => Err(Error::InvalidImage(format!(
            "expected 8-bit RGB PNG, got {:?}",
            other.color()
        ))),
    }
}

pub fn decode_mask_png(bytes: &[u8]) -> Result<BitMask> {
    match decode(bytes)? {
        DynamicImage::ImageLuma8(gray) => gray8_to_mask(&gray),
        other => Err(Error::InvalidMask(format!(
            "expected 8-bit grayscale PNG, got {:?}",
            other.color()
        ))),
    }
}

pub fn encode_image_png(img: &ImageBuf) -> Result<Vec<u8>> {
    encode(DynamicImage::ImageRgb8(image_to_rgb8(img)))
}

pub fn encode_mask_png(mask: &BitMask) -> Result<Vec<u8>> {
    encode(DynamicImage::ImageLuma8(mask_to_gray8(mask)))
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuf> {
    decode_image_png(&std::fs::read(path)?)
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<BitMask> {
    decode_mask_png(&std::fs::read(path)?)
}

/// Loads any 8-bit grayscale PNG, setting pixels `>= threshold`. For
/// ground-truth files with anti-aliased edges.
pub fn load_mask_thresholded(path: impl AsRef<Path>, threshold: u8) -> Result<BitMask> {
    match decode(&std::fs::read(path)?)? {
        DynamicImage::ImageLuma8(gray) => BitMask::new(
            gray.width() as usize,
            gray.height() as usize,
            gray.as_raw().iter().map(|v| *v >= threshold).collect(),
        ),
        other => Err(Error::InvalidMask(format!(
            "expected 8-bit grayscale PNG, got {:?}",
            other.color()
        ))),
    }
}

pub fn save_image(img: &ImageBuf, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_image_png(img)?)?;
    Ok(())
}

pub fn save_mask(mask: &BitMask, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_mask_png(mask)?)?;
    Ok(())
}

/// Writes a soft mask scaled by 255.
pub fn save_soft_mask(mask: &SoftMask, path: impl AsRef<Path>) -> Result<()> {
    let bytes = mask
        .values()
        .iter()
        .map(|v| (v * 255.0).round() as u8)
        .collect();
    let gray =
        GrayImage::from_raw(mask.width() as u32, mask.height() as u32, bytes).expect("buffer size");
    std::fs::write(path, encode(DynamicImage::ImageLuma8(gray))?)?;
    Ok(())
}

/// Draws the mask boundary (set pixels with an unset 4-neighbor) in red.
pub fn overlay_boundary(img: &ImageBuf, mask: &BitMask) -> Result<ImageBuf> {
    crate::raster::check_dims(img.dims(), mask.dims())?;
    let (w, h) = mask.dims();
    let mut out = img.clone();
    for (x, y) in mask.points() {
        let edge = x == 0
            || y == 0
            || x + 1 == w
            || y + 1 == h
            || !mask.get(x - 1, y)
            || !mask.get(x + 1, y)
            || !mask.get(x, y - 1)
            || !mask.get(x, y + 1);
        if edge {
            out.set_pixel(x, y, [1.0, 0.0, 0.0]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgb_roundtrip_is_exact_for_8bit_values() {
        let img = ImageBuf::from_fn(5, 3, |x, y| [x as f32 / 255.0, y as f32 * 7.0 / 255.0, 1.0]);
        let back = decode_image_png(&encode_image_png(&img).unwrap()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn mask_roundtrip() {
        let m = BitMask::from_fn(6, 4, |x, y| (x + y) % 3 == 0);
        assert_eq!(decode_mask_png(&encode_mask_png(&m).unwrap()).unwrap(), m);
    }

    #[test]
    fn mask_loader_rejects_gray_levels_and_rgb() {
        let gray = GrayImage::from_raw(2, 1, vec![0, 128]).unwrap();
        let bytes = encode(DynamicImage::ImageLuma8(gray)).unwrap();
        assert!(decode_mask_png(&bytes).is_err());
        let rgb = encode_image_png(&ImageBuf::filled(2, 2, [0.5; 3])).unwrap();
        assert!(decode_mask_png(&rgb).is_err());
        assert!(decode_image_png(&encode_mask_png(&BitMask::full(2, 2)).unwrap()).is_err());
    }
}
