//! Separable piecewise-cubic resampling (Keys kernel, `a = -0.5`) and the
//! fixed bicubic degradation model.
//!
//! Destination sample `d` along an axis of scale `s = src_len / dst_len`
//! centers at source coordinate `(d + 0.5) * s - 0.5`. When shrinking with
//! antialiasing enabled, the kernel is stretched by `s` (support `2s` source
//! pixels on each side). Taps are renormalized to unit sum and clamp to the
//! nearest edge pixel. Only the final output is clamped to `[0, 1]`; the
//! intermediate horizontal pass keeps overshoot so the result does not depend
//! on pass order beyond floating-point rounding.

use crate::exec::{self, Execution};
use crate::image::{Image, ImageError, ScaleFactor};
use serde::{Deserialize, Serialize};

/// Keys cubic convolution constant.
pub const CUBIC_A: f64 = -0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResampleSpec {
    pub target_width: usize,
    pub target_height: usize,
    pub antialias: bool,
}

impl ResampleSpec {
    pub fn new(target_width: usize, target_height: usize, antialias: bool) -> Self {
        ResampleSpec {
            target_width,
            target_height,
            antialias,
        }
    }
}

#[inline]
pub fn cubic_kernel(x: f64) -> f64 {
    let a = CUBIC_A;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Normalized taps for one output sample.
#[derive(Clone, Debug)]
struct Taps {
    indices: Vec<usize>,
    weights: Vec<f64>,
}

fn axis_taps(src_len: usize, dst_len: usize, antialias: bool) -> Vec<Taps> {
    let scale = src_len as f64 / dst_len as f64;
    let stretch = if antialias && scale > 1.0 { scale } else { 1.0 };
    let support = 2.0 * stretch;
    let last = (src_len - 1) as i64;

    (0..dst_len)
        .map(|d| {
            let center = (d as f64 + 0.5) * scale - 0.5;
            let lo = (center - support).floor() as i64;
            let hi = (center + support).ceil() as i64;
            let mut indices = Vec::with_capacity((hi - lo + 1) as usize);
            let mut weights = Vec::with_capacity((hi - lo + 1) as usize);
            for t in lo..=hi {
                let w = cubic_kernel((t as f64 - center) / stretch);
                if w != 0.0 {
                    indices.push(t.clamp(0, last) as usize);
                    weights.push(w);
                }
            }
            let sum: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= sum);
            Taps { indices, weights }
        })
        .collect()
}

pub fn bicubic_resize(src: &Image, spec: ResampleSpec) -> Result<Image, ImageError> {
    bicubic_resize_with(src, spec, Execution::default())
}

pub fn bicubic_resize_with(
    src: &Image,
    spec: ResampleSpec,
    exec: Execution,
) -> Result<Image, ImageError> {
    let (dst_w, dst_h) = (spec.target_width, spec.target_height);
    if dst_w == 0 || dst_h == 0 {
        return Err(ImageError::ZeroTarget {
            width: dst_w,
            height: dst_h,
        });
    }
    let (src_w, src_h, c) = (src.width(), src.height(), src.channels());
    let xs = axis_taps(src_w, dst_w, spec.antialias);
    let ys = axis_taps(src_h, dst_h, spec.antialias);

    // horizontal: src_h rows of dst_w pixels
    let mut horiz = vec![0.0; src_h * dst_w * c];
    exec::fill_chunks(exec, &mut horiz, dst_w * c, |y, out_row| {
        let in_row = src.row(y);
        for (dx, taps) in xs.iter().enumerate() {
            for ch in 0..c {
                out_row[dx * c + ch] = taps
                    .indices
                    .iter()
                    .zip(&taps.weights)
                    .map(|(&sx, &w)| w * in_row[sx * c + ch])
                    .sum();
            }
        }
    });

    // vertical: dst_h rows
    let stride = dst_w * c;
    let mut out = vec![0.0; dst_h * stride];
    exec::fill_chunks(exec, &mut out, stride, |dy, out_row| {
        let taps = &ys[dy];
        for (&sy, &w) in taps.indices.iter().zip(&taps.weights) {
            let in_row = &horiz[sy * stride..(sy + 1) * stride];
            for (o, &v) in out_row.iter_mut().zip(in_row) {
                *o += w * v;
            }
        }
    });

    Ok(Image::from_unclamped(dst_w, dst_h, c, out))
}

/// Antialiased bicubic downsampling by an integer factor in each dimension.
pub fn degrade(hr: &Image, factor: ScaleFactor) -> Result<Image, ImageError> {
    degrade_with(hr, factor, Execution::default())
}

pub fn degrade_with(hr: &Image, factor: ScaleFactor, exec: Execution) -> Result<Image, ImageError> {
    let f = factor.get() as usize;
    if hr.width() % f != 0 || hr.height() % f != 0 {
        return Err(ImageError::NotDivisible {
            width: hr.width(),
            height: hr.height(),
            factor: factor.get(),
        });
    }
    bicubic_resize_with(
        hr,
        ResampleSpec::new(hr.width() / f, hr.height() / f, true),
        exec,
    )
}

/// Plain (non-antialiased) bicubic enlargement by an integer factor.
pub fn upscale(lr: &Image, factor: ScaleFactor) -> Result<Image, ImageError> {
    let f = factor.get() as usize;
    bicubic_resize(
        lr,
        ResampleSpec::new(lr.width() * f, lr.height() * f, false),
    )
}
