//! Planar floating-point pixel buffers and the exact geometric operations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Rec. 601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    EmptyDimensions { width: usize, height: usize },
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    UnsupportedChannels(usize),
    #[error("data length {actual} does not match {width}x{height}x{channels} = {expected}")]
    DataLength {
        width: usize,
        height: usize,
        channels: usize,
        expected: usize,
        actual: usize,
    },
    #[error("sample {index} is {value}, outside [0, 1]")]
    SampleOutOfRange { index: usize, value: f64 },
    #[error("crop rectangle ({x},{y},{w},{h}) does not fit inside {width}x{height}")]
    CropOutOfBounds {
        x: usize,
        y: usize,
        w: usize,
        h: usize,
        width: usize,
        height: usize,
    },
    #[error("{width}x{height} is not divisible by scale factor {factor}")]
    NotDivisible {
        width: usize,
        height: usize,
        factor: u32,
    },
    #[error("scale factor must be >= 1")]
    ZeroScaleFactor,
    #[error("replication counts must be >= 1, got {reps_h}x{reps_v}")]
    ZeroRepetition { reps_h: usize, reps_v: usize },
    #[error("target size must be at least 1x1, got {width}x{height}")]
    ZeroTarget { width: usize, height: usize },
    #[error("luma conversion needs a 3-channel image, got {0} channel(s)")]
    NotRgb(usize),
    #[error("{path}: {message}")]
    Codec { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Row-major, channel-interleaved image with samples in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawImage")]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl TryFrom<RawImage> for Image {
    type Error = ImageError;

    fn try_from(raw: RawImage) -> Result<Self, Self::Error> {
        Image::new(raw.width, raw.height, raw.channels, raw.data)
    }
}

fn check_geometry(width: usize, height: usize, channels: usize) -> Result<(), ImageError> {
    if width == 0 || height == 0 {
        return Err(ImageError::EmptyDimensions { width, height });
    }
    if channels != 1 && channels != 3 {
        return Err(ImageError::UnsupportedChannels(channels));
    }
    Ok(())
}

impl Image {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self, ImageError> {
        check_geometry(width, height, channels)?;
        let expected = width * height * channels;
        if data.len() != expected {
            return Err(ImageError::DataLength {
                width,
                height,
                channels,
                expected,
                actual: data.len(),
            });
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(ImageError::SampleOutOfRange { index, value });
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(
        width: usize,
        height: usize,
        channels: usize,
        value: f64,
    ) -> Result<Self, ImageError> {
        Image::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
    }

    /// Builds an image from `f(x, y, channel)`.
    pub fn from_fn<F>(
        width: usize,
        height: usize,
        channels: usize,
        mut f: F,
    ) -> Result<Self, ImageError>
    where
        F: FnMut(usize, usize, usize) -> f64,
    {
        check_geometry(width, height, channels)?;
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Image::new(width, height, channels, data)
    }

    /// Clamps every sample into `[0, 1]`; NaN becomes 0.
    pub(crate) fn from_unclamped(
        width: usize,
        height: usize,
        channels: usize,
        mut data: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Image {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Samples per row (`width * channels`).
    pub fn stride(&self) -> usize {
        self.width * self.channels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        let s = self.stride();
        &self.data[y * s..(y + 1) * s]
    }
}

/// Integer super-resolution factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct ScaleFactor(u32);

impl ScaleFactor {
    pub const X4: ScaleFactor = ScaleFactor(4);

    pub fn new(value: u32) -> Result<Self, ImageError> {
        if value == 0 {
            Err(ImageError::ZeroScaleFactor)
        } else {
            Ok(ScaleFactor(value))
        }
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

impl TryFrom<u32> for ScaleFactor {
    type Error = ImageError;

    fn try_from(value: u32) -> Result<Self, Self::Error> {
        ScaleFactor::new(value)
    }
}

impl From<ScaleFactor> for u32 {
    fn from(f: ScaleFactor) -> u32 {
        f.0
    }
}

impl std::fmt::Display for ScaleFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// Periodic tiling: output pixel `(x, y)` is `src(x mod w, y mod h)`.
pub fn tile_replicate(src: &Image, reps_h: usize, reps_v: usize) -> Result<Image, ImageError> {
    if reps_h == 0 || reps_v == 0 {
        return Err(ImageError::ZeroRepetition { reps_h, reps_v });
    }
    let width = src.width * reps_h;
    let height = src.height * reps_v;
    let mut data = Vec::with_capacity(width * height * src.channels);
    for y in 0..height {
        let row = src.row(y % src.height);
        for _ in 0..reps_h {
            data.extend_from_slice(row);
        }
    }
    Ok(Image {
        width,
        height,
        channels: src.channels,
        data,
    })
}

pub fn crop(src: &Image, x: usize, y: usize, w: usize, h: usize) -> Result<Image, ImageError> {
    let fits = w >= 1
        && h >= 1
        && x.checked_add(w).is_some_and(|r| r <= src.width)
        && y.checked_add(h).is_some_and(|b| b <= src.height);
    if !fits {
        return Err(ImageError::CropOutOfBounds {
            x,
            y,
            w,
            h,
            width: src.width,
            height: src.height,
        });
    }
    let c = src.channels;
    let mut data = Vec::with_capacity(w * h * c);
    for row in y..y + h {
        data.extend_from_slice(&src.row(row)[x * c..(x + w) * c]);
    }
    Ok(Image {
        width: w,
        height: h,
        channels: c,
        data,
    })
}

pub fn to_luma(src: &Image) -> Result<Image, ImageError> {
    if src.channels != 3 {
        return Err(ImageError::NotRgb(src.channels));
    }
    let [wr, wg, wb] = LUMA_WEIGHTS;
    let data = src
        .data
        .chunks_exact(3)
        .map(|p| wr * p[0] + wg * p[1] + wb * p[2])
        .collect();
    Ok(Image::from_unclamped(src.width, src.height, 1, data))
}

/// Luma for RGB input, a plain copy for single-channel input.
pub fn luma_or_gray(src: &Image) -> Image {
    if src.channels == 3 {
        to_luma(src).expect("3-channel input")
    } else {
        src.clone()
    }
}
