//! Image quality metrics: PSNR and SSIM for intensity, RMSE and MAD for
//! depth, with central cropping.
//!
//! SSIM uses the standard 11x11 Gaussian window (sigma 1.5) with
//! K1 = 0.01, K2 = 0.03 and unit peak, averaged over the pixels where the
//! full window fits. The crop fraction and SSIM constants are recorded in
//! every metrics report so numbers stay comparable across runs.

use ndarray::Array2;

use crate::error::{shape_mismatch, Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// PSNR ceiling used in tabular output when the MSE is exactly zero.
pub const PSNR_CAP_DB: f64 = 99.0;
/// Default central-crop fraction for evaluation.
pub const DEFAULT_CROP_FRACTION: f64 = 0.75;
/// GT intensity at or above this level marks a supervised depth pixel.
pub const FOREGROUND_THRESHOLD: f64 = 1e-3;

/// Central crop covering `round(fraction * n)` pixels per axis; odd
/// remainders bias the window toward the low-index side.
pub fn center_crop(img: &Array2<f64>, fraction: f64) -> Result<Array2<f64>> {
    let (nx, ny) = img.dim();
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::DegenerateCrop { fraction });
    }
    let side_x = (fraction * nx as f64).round() as usize;
    let side_y = (fraction * ny as f64).round() as usize;
    if side_x == 0 || side_y == 0 {
        return Err(Error::DegenerateCrop { fraction });
    }
    let x0 = (nx - side_x) / 2;
    let y0 = (ny - side_y) / 2;
    Ok(img
        .slice(ndarray::s![x0..x0 + side_x, y0..y0 + side_y])
        .to_owned())
}

fn check_same_shape(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(shape_mismatch(format!(
            "images are {:?} and {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB; `+inf` when the images are identical.
pub fn psnr(reference: &Array2<f64>, test: &Array2<f64>, peak: f64) -> Result<f64> {
    check_same_shape(reference, test)?;
    let n = reference.len() as f64;
    let mse: f64 = reference
        .iter()
        .zip(test.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// PSNR with the infinite sentinel capped for tabular output.
pub fn psnr_capped(reference: &Array2<f64>, test: &Array2<f64>, peak: f64) -> Result<f64> {
    Ok(psnr(reference, test, peak)?.min(PSNR_CAP_DB))
}

fn gaussian_kernel() -> [[f64; SSIM_WINDOW]; SSIM_WINDOW] {
    let mut k = [[0.0; SSIM_WINDOW]; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as isize;
    let mut sum = 0.0;
    for (i, row) in k.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let dx = i as isize - c;
            let dy = j as isize - c;
            *v = (-((dx * dx + dy * dy) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            sum += *v;
        }
    }
    for row in k.iter_mut() {
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    k
}

/// Mean structural similarity over the valid (fully covered) window
/// positions. Inputs are expected in [0, 1].
pub fn ssim(reference: &Array2<f64>, test: &Array2<f64>) -> Result<f64> {
    check_same_shape(reference, test)?;
    let (nx, ny) = reference.dim();
    if nx < SSIM_WINDOW || ny < SSIM_WINDOW {
        return Err(Error::TooSmall { nx, ny });
    }
    let kernel = gaussian_kernel();
    let c1 = (SSIM_K1 * 1.0) * (SSIM_K1 * 1.0);
    let c2 = (SSIM_K2 * 1.0) * (SSIM_K2 * 1.0);

    let mut total = 0.0;
    let mut count = 0usize;
    for x0 in 0..=(nx - SSIM_WINDOW) {
        for y0 in 0..=(ny - SSIM_WINDOW) {
            let mut mu_a = 0.0;
            let mut mu_b = 0.0;
            for (i, row) in kernel.iter().enumerate() {
                for (j, &w) in row.iter().enumerate() {
                    mu_a += w * reference[[x0 + i, y0 + j]];
                    mu_b += w * test[[x0 + i, y0 + j]];
                }
            }
            let mut var_a = 0.0;
            let mut var_b = 0.0;
            let mut cov = 0.0;
            for (i, row) in kernel.iter().enumerate() {
                for (j, &w) in row.iter().enumerate() {
                    let da = reference[[x0 + i, y0 + j]] - mu_a;
                    let db = test[[x0 + i, y0 + j]] - mu_b;
                    var_a += w * da * da;
                    var_b += w * db * db;
                    cov += w * da * db;
                }
            }
            let l = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1);
            let cs = (2.0 * cov + c2) / (var_a + var_b + c2);
            total += l * cs;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Root-mean-square and mean-absolute depth errors over the masked pixels.
pub fn depth_errors(
    depth_ref: &Array2<f64>,
    depth_test: &Array2<f64>,
    valid_mask: &Array2<bool>,
) -> Result<(f64, f64)> {
    check_same_shape(depth_ref, depth_test)?;
    if valid_mask.dim() != depth_ref.dim() {
        return Err(shape_mismatch(format!(
            "mask is {:?} but depth maps are {:?}",
            valid_mask.dim(),
            depth_ref.dim()
        )));
    }
    let mut sq = 0.0;
    let mut ab = 0.0;
    let mut n = 0usize;
    for ((d, t), &m) in depth_ref
        .iter()
        .zip(depth_test.iter())
        .zip(valid_mask.iter())
    {
        if m {
            let e = d - t;
            sq += e * e;
            ab += e.abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(((sq / n as f64).sqrt(), ab / n as f64))
}

/// Supervised-pixel mask: ground-truth intensity at or above the foreground
/// threshold. Background depth is a rendering convention, not scene content,
/// so it is excluded from depth error means.
pub fn foreground_mask(gt_intensity: &Array2<f64>) -> Array2<bool> {
    gt_intensity.mapv(|v| v >= FOREGROUND_THRESHOLD)
}
