//! Image quality metrics: PSNR, SNR, and SSIM.
//!
//! PSNR is referenced to a peak of 255. SSIM defaults to the standard
//! 11x11 Gaussian-windowed (sigma 1.5) mean over local maps; a
//! whole-image single-window variant is available as [`ssim_global`].
//! Identical inputs yield an infinite PSNR/SNR sentinel rather than an
//! error.

use crate::error::{Error, Result};
use crate::img::ImageGrid;

/// Quality columns of one benchmark row.
#[derive(Debug, Clone, Copy)]
pub struct QualityReport {
    pub psnr: f64,
    pub snr: f64,
    pub ssim: f64,
    pub iterations: usize,
    pub cpu_seconds: f64,
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

fn check_dims(u: &ImageGrid, reference: &ImageGrid) -> Result<()> {
    if u.dims() != reference.dims() {
        return Err(Error::DimensionMismatch { expected: reference.dims(), got: u.dims() });
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB: `10 log10(255^2 / MSE)`.
/// Identical images give `f64::INFINITY`.
pub fn psnr(u: &ImageGrid, reference: &ImageGrid) -> Result<f64> {
    check_dims(u, reference)?;
    let mse = u
        .data()
        .iter()
        .zip(reference.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / u.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}

/// Signal-to-noise ratio in dB: `20 log10(||ref|| / ||ref - u||)`.
/// Identical images give `f64::INFINITY`.
pub fn snr(u: &ImageGrid, reference: &ImageGrid) -> Result<f64> {
    check_dims(u, reference)?;
    let signal = reference.norm_l2();
    if signal == 0.0 {
        return Err(Error::InvalidParameter(
            "SNR undefined for an all-zero reference".into(),
        ));
    }
    let noise = reference.zip_map(u, |a, b| a - b).norm_l2();
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (signal / noise).log10())
}

fn gaussian_window_1d() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (k, v) in w.iter_mut().enumerate() {
        let d = k as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Valid-mode separable windowed average; output is (h-10) x (w-10).
fn filter_valid(src: &[f64], h: usize, w: usize, win: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut horiz = vec![0.0; h * ow];
    for i in 0..h {
        for j in 0..ow {
            let mut acc = 0.0;
            for (k, &wk) in win.iter().enumerate() {
                acc += wk * src[i * w + j + k];
            }
            horiz[i * ow + j] = acc;
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            let mut acc = 0.0;
            for (k, &wk) in win.iter().enumerate() {
                acc += wk * horiz[(i + k) * ow + j];
            }
            out[i * ow + j] = acc;
        }
    }
    out
}

/// Mean structural similarity over Gaussian-weighted 11x11 windows.
/// Requires both sides of the image to be at least 11 pixels.
pub fn ssim(u: &ImageGrid, reference: &ImageGrid) -> Result<f64> {
    check_dims(u, reference)?;
    let (h, w) = u.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidParameter(format!(
            "image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let win = gaussian_window_1d();
    let a = u.data();
    let b = reference.data();
    let aa: Vec<f64> = a.iter().map(|x| x * x).collect();
    let bb: Vec<f64> = b.iter().map(|x| x * x).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();

    let mu_a = filter_valid(a, h, w, &win);
    let mu_b = filter_valid(b, h, w, &win);
    let e_aa = filter_valid(&aa, h, w, &win);
    let e_bb = filter_valid(&bb, h, w, &win);
    let e_ab = filter_valid(&ab, h, w, &win);

    let mut total = 0.0;
    for k in 0..mu_a.len() {
        let (ma, mb) = (mu_a[k], mu_b[k]);
        let va = e_aa[k] - ma * ma;
        let vb = e_bb[k] - mb * mb;
        let cov = e_ab[k] - ma * mb;
        total += (2.0 * ma * mb + C1) * (2.0 * cov + C2)
            / ((ma * ma + mb * mb + C1) * (va + vb + C2));
    }
    Ok(total / mu_a.len() as f64)
}

/// Single-window SSIM over the whole image with uniform weights.
pub fn ssim_global(u: &ImageGrid, reference: &ImageGrid) -> Result<f64> {
    check_dims(u, reference)?;
    let n = u.len() as f64;
    let ma = u.sum() / n;
    let mb = reference.sum() / n;
    let mut va = 0.0;
    let mut vb = 0.0;
    let mut cov = 0.0;
    for (x, y) in u.data().iter().zip(reference.data()) {
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
        cov += (x - ma) * (y - mb);
    }
    va /= n;
    vb /= n;
    cov /= n;
    Ok((2.0 * ma * mb + C1) * (2.0 * cov + C2) / ((ma * ma + mb * mb + C1) * (va + vb + C2)))
}
