//! PNG canonicalization, decoding and content hashing.

use std::io::Cursor;

use image::{DynamicImage, ImageFormat, Rgb, RgbImage};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image bytes do not decode: {0}")]
    Decode(String),
    #[error("image has zero extent ({width}x{height})")]
    Empty { width: u32, height: u32 },
    #[error("png encoding failed: {0}")]
    Encode(String),
}

/// Decodes any supported raster format and rejects zero-sized images.
pub fn decode(bytes: &[u8]) -> Result<DynamicImage, ImageError> {
    let img = image::load_from_memory(bytes).map_err(|e| ImageError::Decode(e.to_string()))?;
    if img.width() == 0 || img.height() == 0 {
        return Err(ImageError::Empty {
            width: img.width(),
            height: img.height(),
        });
    }
    Ok(img)
}

pub fn encode_png(img: &DynamicImage) -> Result<Vec<u8>, ImageError> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| ImageError::Encode(e.to_string()))?;
    Ok(out.into_inner())
}

/// Transcodes to PNG. Inputs that are already PNG are returned unchanged so
/// checksums stay stable across ingest.
pub fn canonical_png(bytes: &[u8]) -> Result<Vec<u8>, ImageError> {
    let img = decode(bytes)?;
    if image::guess_format(bytes).ok() == Some(ImageFormat::Png) {
        return Ok(bytes.to_vec());
    }
    encode_png(&img)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Solid-colour PNG, mostly useful for fixtures.
pub fn solid_png(width: u32, height: u32, rgb: [u8; 3]) -> Vec<u8> {
    let img = RgbImage::from_pixel(width, height, Rgb(rgb));
    encode_png(&DynamicImage::ImageRgb8(img)).expect("in-memory png encoding")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_passthrough_is_byte_identical() {
        let png = solid_png(3, 2, [10, 20, 30]);
        assert_eq!(canonical_png(&png).unwrap(), png);
    }

    #[test]
    fn jpeg_is_transcoded() {
        let img = DynamicImage::ImageRgb8(RgbImage::from_pixel(4, 4, Rgb([200, 0, 0])));
        let mut jpg = Cursor::new(Vec::new());
        img.write_to(&mut jpg, ImageFormat::Jpeg).unwrap();
        let png = canonical_png(jpg.get_ref()).unwrap();
        assert_eq!(image::guess_format(&png).unwrap(), ImageFormat::Png);
        assert_eq!(decode(&png).unwrap().width(), 4);
    }

    #[test]
    fn garbage_fails_to_decode() {
        assert!(matches!(
            decode(b"not an image"),
            Err(ImageError::Decode(_))
        ));
    }
}
