//! File boundary: 8-bit PNG and raw float dumps.
//!
//! Samples are decoded as `v / 255` and encoded as
//! `round_half_away_from_zero(v * 255)` clamped to `[0, 255]`, so an image
//! is quantized exactly once on the way out.

use crate::image::{Image, ImageError};
use image::{ColorType, DynamicImage, ImageFormat};
use std::io::Cursor;
use std::path::Path;

pub fn quantize(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

fn codec_err(path: &Path, message: impl ToString) -> ImageError {
    ImageError::Codec {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> ImageError {
    ImageError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn decode_png(bytes: &[u8], origin: &Path) -> Result<Image, ImageError> {
    let decoded = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| codec_err(origin, e))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let (channels, raw) = match decoded {
        DynamicImage::ImageLuma8(buf) => (1, buf.into_raw()),
        DynamicImage::ImageRgb8(buf) => (3, buf.into_raw()),
        other => {
            return Err(codec_err(
                origin,
                format!(
                    "unsupported PNG color type {:?} (need 8-bit gray or RGB, no alpha)",
                    other.color()
                ),
            ))
        }
    };
    Image::new(
        w,
        h,
        channels,
        raw.iter().map(|&b| b as f64 / 255.0).collect(),
    )
}

pub fn load_png(path: impl AsRef<Path>) -> Result<Image, ImageError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    decode_png(&bytes, path)
}

pub fn to_bytes_u8(img: &Image) -> Vec<u8> {
    img.data().iter().map(|&v| quantize(v)).collect()
}

pub fn encode_png(img: &Image) -> Result<Vec<u8>, ImageError> {
    let color = if img.channels() == 1 {
        ColorType::L8
    } else {
        ColorType::Rgb8
    };
    let mut out = Vec::new();
    image::write_buffer_with_format(
        &mut Cursor::new(&mut out),
        &to_bytes_u8(img),
        img.width() as u32,
        img.height() as u32,
        color,
        ImageFormat::Png,
    )
    .map_err(|e| codec_err(Path::new("<memory>"), e))?;
    Ok(out)
}

pub fn save_png(img: &Image, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    let bytes = encode_png(img)?;
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Raw dump layout: `width, height, channels, reserved` as little-endian
/// `u32`, then `channels` planes of `width * height` little-endian `f32`.
pub fn encode_planar_f32(img: &Image) -> Vec<u8> {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let mut out = Vec::with_capacity(16 + 4 * w * h * c);
    for v in [w as u32, h as u32, c as u32, 0] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                out.extend_from_slice(&(img.get(x, y, ch) as f32).to_le_bytes());
            }
        }
    }
    out
}

pub fn decode_planar_f32(bytes: &[u8], origin: &Path) -> Result<Image, ImageError> {
    let word = |i: usize| -> Option<u32> {
        bytes
            .get(i * 4..i * 4 + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    };
    let (Some(w), Some(h), Some(c), Some(_)) = (word(0), word(1), word(2), word(3)) else {
        return Err(codec_err(origin, "truncated header"));
    };
    let (w, h, c) = (w as usize, h as usize, c as usize);
    let plane = w * h;
    let body = &bytes[16..];
    if body.len() != 4 * plane * c {
        return Err(codec_err(
            origin,
            format!(
                "expected {} payload bytes, found {}",
                4 * plane * c,
                body.len()
            ),
        ));
    }
    let sample = |i: usize| f32::from_le_bytes(body[i * 4..i * 4 + 4].try_into().unwrap()) as f64;
    let mut data = Vec::with_capacity(plane * c);
    for p in 0..plane {
        for ch in 0..c {
            data.push(sample(ch * plane + p));
        }
    }
    Image::new(w, h, c, data)
}

pub fn load_planar_f32(path: impl AsRef<Path>) -> Result<Image, ImageError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    decode_planar_f32(&bytes, path)
}
