//! Full-reference fidelity metrics.
//!
//! PSNR uses a data range of 1.0 and is capped at [`PSNR_CAP_DB`] so reports
//! stay finite. SSIM is the single-scale Gaussian-window form (11x11,
//! sigma 1.5, K1 = 0.01, K2 = 0.03) averaged over every position where the
//! window fits entirely inside the image; RGB inputs are reduced to luma.
//! Neural perceptual scores are not computed here, they arrive through
//! [`ExternalScoreTable`].

mod external;
mod report;

pub use external::{ExternalScoreError, ExternalScoreTable};
pub use report::{
    build_report, evaluate_batch, write_report_csv, MetricReport, MetricTriple, ReportOptions,
    MEAN_ROW_ID,
};

use crate::exec::{self, Execution};
use crate::image::{luma_or_gray, Image, ImageError, ScaleFactor};
use crate::resample::degrade_with;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PSNR_CAP_DB: f64 = 100.0;
/// Below this MSE the two images are treated as identical.
pub const PSNR_CAP_MSE: f64 = 1e-10;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error(
        "shape mismatch: {0}x{1}x{2} vs {3}x{4}x{5}",
        .left.0, .left.1, .left.2, .right.0, .right.1, .right.2
    )]
    ShapeMismatch {
        left: (usize, usize, usize),
        right: (usize, usize, usize),
    },
    #[error("{width}x{height} is smaller than the {window}x{window} SSIM window")]
    TooSmall {
        width: usize,
        height: usize,
        window: usize,
    },
    #[error(
        "SR is {sr_width}x{sr_height} but LR {lr_width}x{lr_height} at x{factor} implies {}x{}",
        .lr_width * *.factor as usize, .lr_height * *.factor as usize
    )]
    ScaleMismatch {
        sr_width: usize,
        sr_height: usize,
        lr_width: usize,
        lr_height: usize,
        factor: u32,
    },
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// How PSNR (and the MSE reported beside it) treats colour images.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PsnrMode {
    /// All RGB samples jointly.
    #[default]
    Rgb,
    /// Rec. 601 luma only.
    Luma,
}

fn shape(img: &Image) -> (usize, usize, usize) {
    (img.width(), img.height(), img.channels())
}

fn check_same_shape(a: &Image, b: &Image) -> Result<(), MetricError> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(MetricError::ShapeMismatch {
            left: shape(a),
            right: shape(b),
        })
    }
}

pub fn mse(a: &Image, b: &Image) -> Result<f64, MetricError> {
    mse_with(a, b, Execution::default())
}

pub fn mse_with(a: &Image, b: &Image, exec: Execution) -> Result<f64, MetricError> {
    check_same_shape(a, b)?;
    let row_sums = exec::map_indexed(exec, a.height(), |y| {
        a.row(y)
            .iter()
            .zip(b.row(y))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
    });
    Ok(row_sums.iter().sum::<f64>() / a.data().len() as f64)
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse < PSNR_CAP_MSE {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
    }
}

pub fn psnr(a: &Image, b: &Image) -> Result<f64, MetricError> {
    Ok(psnr_from_mse(mse(a, b)?))
}

/// MSE and PSNR under the given colour convention.
pub fn fidelity(a: &Image, b: &Image, mode: PsnrMode) -> Result<(f64, f64), MetricError> {
    check_same_shape(a, b)?;
    let err = match mode {
        PsnrMode::Luma if a.channels() == 3 => mse(&luma_or_gray(a), &luma_or_gray(b))?,
        _ => mse(a, b)?,
    };
    Ok((err, psnr_from_mse(err)))
}

pub fn psnr_with_mode(a: &Image, b: &Image, mode: PsnrMode) -> Result<f64, MetricError> {
    fidelity(a, b, mode).map(|(_, p)| p)
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as f64;
    let raw: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - r;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

pub fn ssim(a: &Image, b: &Image) -> Result<f64, MetricError> {
    ssim_with(a, b, Execution::default())
}

pub fn ssim_with(a: &Image, b: &Image, exec: Execution) -> Result<f64, MetricError> {
    check_same_shape(a, b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricError::TooSmall {
            width: w,
            height: h,
            window: SSIM_WINDOW,
        });
    }
    let a = luma_or_gray(a);
    let b = luma_or_gray(b);
    let (a, b) = (a.data(), b.data());
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let out_w = w - SSIM_WINDOW + 1;
    let out_h = h - SSIM_WINDOW + 1;

    // Horizontal pass: per source row, five filtered moment rows packed as
    // [mu_a | mu_b | E[a^2] | E[b^2] | E[ab]].
    let row_len = 5 * out_w;
    let mut horiz = vec![0.0; h * row_len];
    exec::fill_chunks(exec, &mut horiz, row_len, |y, out| {
        let ra = &a[y * w..(y + 1) * w];
        let rb = &b[y * w..(y + 1) * w];
        for x in 0..out_w {
            let mut m = [0.0; 5];
            for (k, &t) in taps.iter().enumerate() {
                let (va, vb) = (ra[x + k], rb[x + k]);
                m[0] += t * va;
                m[1] += t * vb;
                m[2] += t * va * va;
                m[3] += t * vb * vb;
                m[4] += t * va * vb;
            }
            for (j, v) in m.into_iter().enumerate() {
                out[j * out_w + x] = v;
            }
        }
    });

    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let row_sums = exec::map_indexed(exec, out_h, |y| {
        let mut total = 0.0;
        for x in 0..out_w {
            let mut m = [0.0; 5];
            for (k, &t) in taps.iter().enumerate() {
                let row = &horiz[(y + k) * row_len..(y + k + 1) * row_len];
                for (j, mj) in m.iter_mut().enumerate() {
                    *mj += t * row[j * out_w + x];
                }
            }
            let [mu_a, mu_b, eaa, ebb, eab] = m;
            let var_a = eaa - mu_a * mu_a;
            let var_b = ebb - mu_b * mu_b;
            let cov = eab - mu_a * mu_b;
            total += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
        }
        total
    });
    let mean = row_sums.iter().sum::<f64>() / (out_w * out_h) as f64;
    Ok(mean.clamp(-1.0, 1.0))
}

fn check_lr_pair(sr: &Image, lr: &Image, factor: ScaleFactor) -> Result<(), MetricError> {
    let f = factor.get() as usize;
    if sr.width() != lr.width() * f || sr.height() != lr.height() * f {
        return Err(MetricError::ScaleMismatch {
            sr_width: sr.width(),
            sr_height: sr.height(),
            lr_width: lr.width(),
            lr_height: lr.height(),
            factor: factor.get(),
        });
    }
    Ok(())
}

/// PSNR between the re-degraded SR output and the LR input.
pub fn lr_consistency(sr: &Image, lr: &Image, factor: ScaleFactor) -> Result<f64, MetricError> {
    lr_consistency_with(sr, lr, factor, PsnrMode::Rgb, Execution::default())
}

pub fn lr_consistency_with(
    sr: &Image,
    lr: &Image,
    factor: ScaleFactor,
    mode: PsnrMode,
    exec: Execution,
) -> Result<f64, MetricError> {
    check_lr_pair(sr, lr, factor)?;
    let redegraded = degrade_with(sr, factor, exec)?;
    psnr_with_mode(&redegraded, lr, mode)
}
