//! Intensity and depth views of a reconstructed volume.
//!
//! Hard mode takes the per-column magnitude maximum (normalized by the
//! global peak) and the depth of the argmax voxel, blanking depth where the
//! normalized intensity falls below 1e-3. Soft mode replaces the argmax with
//! a temperature-controlled softmax along depth, which is differentiable and
//! converges to the hard views as the temperature goes to zero; it exists so
//! training gradients are defined. Hard ties resolve to the smallest depth
//! index.

use ndarray::{Array2, Array3};
use num_complex::Complex64;

use crate::error::{shape_mismatch, Error, Result};
use crate::rsd::ReconVolume;

/// Intensity floor below which hard depth is treated as background.
pub const DEPTH_BLANK_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RenderMode {
    Hard,
    Soft { tau: f64 },
}

/// Rendered views: intensity in [0, 1] and depth in meters, both indexed
/// `(ix, iy)` on the volume's lateral lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct Views {
    pub intensity: Array2<f64>,
    pub depth: Array2<f64>,
}

pub fn render_views(vol: &ReconVolume, mode: RenderMode) -> Result<Views> {
    let (nvx, nvy, nvz) = vol.values.dim();
    let mag = vol.values.mapv(|v| v.norm());
    let peak = mag.iter().cloned().fold(0.0, f64::max);
    if !peak.is_finite() {
        return Err(Error::InvalidParameter(
            "reconstruction volume contains non-finite values".into(),
        ));
    }

    let mut intensity = Array2::zeros((nvx, nvy));
    let mut depth = Array2::zeros((nvx, nvy));
    if peak == 0.0 {
        return Ok(Views { intensity, depth });
    }

    match mode {
        RenderMode::Hard => {
            for ix in 0..nvx {
                for iy in 0..nvy {
                    let mut best_k = 0usize;
                    let mut best = f64::NEG_INFINITY;
                    for k in 0..nvz {
                        let m = mag[[ix, iy, k]];
                        if m > best {
                            best = m;
                            best_k = k;
                        }
                    }
                    let norm = best / peak;
                    intensity[[ix, iy]] = norm;
                    depth[[ix, iy]] = if norm >= DEPTH_BLANK_THRESHOLD {
                        vol.geom.plane_z(best_k)
                    } else {
                        0.0
                    };
                }
            }
        }
        RenderMode::Soft { tau } => {
            if !(tau > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "soft rendering needs a positive temperature, got {tau}"
                )));
            }
            for ix in 0..nvx {
                for iy in 0..nvy {
                    let column: Vec<f64> = (0..nvz).map(|k| mag[[ix, iy, k]] / peak).collect();
                    let w = softmax_over(&column, tau);
                    let mut i_acc = 0.0;
                    let mut d_acc = 0.0;
                    for k in 0..nvz {
                        i_acc += w[k] * column[k];
                        d_acc += w[k] * vol.geom.plane_z(k);
                    }
                    intensity[[ix, iy]] = i_acc;
                    depth[[ix, iy]] = d_acc;
                }
            }
        }
    }
    Ok(Views { intensity, depth })
}

fn softmax_over(values: &[f64], tau: f64) -> Vec<f64> {
    let top = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|&v| ((v - top) / tau).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Gradient of a scalar loss through the soft renderer.
///
/// `g_intensity` and `g_depth` hold the loss gradients over the two views;
/// the return value is the gradient over the complex volume values (packed
/// as `dL/d re + j dL/d im`). The global peak normalization is
/// differentiated through its argmax voxel (ties broken by iteration order,
/// matching the forward pass).
pub fn render_soft_backward(
    vol: &ReconVolume,
    tau: f64,
    g_intensity: &Array2<f64>,
    g_depth: &Array2<f64>,
) -> Result<Array3<Complex64>> {
    let (nvx, nvy, nvz) = vol.values.dim();
    if g_intensity.dim() != (nvx, nvy) || g_depth.dim() != (nvx, nvy) {
        return Err(shape_mismatch(
            "view gradients do not match the volume's lateral shape".to_string(),
        ));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "soft rendering needs a positive temperature, got {tau}"
        )));
    }

    let mag = vol.values.mapv(|v| v.norm());
    let mut peak = 0.0f64;
    let mut peak_idx = (0usize, 0usize, 0usize);
    for ((i, j, k), &m) in mag.indexed_iter() {
        if m > peak {
            peak = m;
            peak_idx = (i, j, k);
        }
    }
    let mut grad = Array3::<Complex64>::default((nvx, nvy, nvz));
    if peak == 0.0 {
        return Ok(grad);
    }

    // Gradient with respect to the normalized magnitudes.
    let mut g_norm = Array3::<f64>::zeros((nvx, nvy, nvz));
    for ix in 0..nvx {
        for iy in 0..nvy {
            let column: Vec<f64> = (0..nvz).map(|k| mag[[ix, iy, k]] / peak).collect();
            let w = softmax_over(&column, tau);
            let i_mean: f64 = w.iter().zip(&column).map(|(a, b)| a * b).sum();
            let d_mean: f64 = w
                .iter()
                .enumerate()
                .map(|(k, a)| a * vol.geom.plane_z(k))
                .sum();
            let gi = g_intensity[[ix, iy]];
            let gd = g_depth[[ix, iy]];
            for k in 0..nvz {
                let di = w[k] * (1.0 + (column[k] - i_mean) / tau);
                let dd = w[k] * (vol.geom.plane_z(k) - d_mean) / tau;
                g_norm[[ix, iy, k]] = gi * di + gd * dd;
            }
        }
    }

    // Through the global normalization: norm = mag / mag[peak_idx].
    let inner: f64 = g_norm
        .indexed_iter()
        .map(|((i, j, k), &g)| g * mag[[i, j, k]] / peak)
        .sum();
    for ((i, j, k), out) in grad.indexed_iter_mut() {
        let mut g_mag = g_norm[[i, j, k]] / peak;
        if (i, j, k) == peak_idx {
            g_mag -= inner / peak;
        }
        let v = vol.values[[i, j, k]];
        let m = mag[[i, j, k]];
        if m > 0.0 {
            *out = Complex64::new(g_mag * v.re / m, g_mag * v.im / m);
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ApertureGrid, ReconGeometry};

    fn volume_with(values: Array3<Complex64>, z_min: f64, z_max: f64) -> ReconVolume {
        let (nvx, nvy, nvz) = values.dim();
        let grid = ApertureGrid::centered(nvx.max(2), nvy.max(2), 1.0).unwrap();
        let geom = ReconGeometry::new(nvx, nvy, nvz, z_min, z_max).unwrap();
        ReconVolume {
            values,
            geom,
            aperture: grid,
        }
    }

    #[test]
    fn zero_volume_renders_zero_views() {
        let vol = volume_with(Array3::default((3, 3, 4)), 0.5, 1.5);
        for mode in [RenderMode::Hard, RenderMode::Soft { tau: 0.05 }] {
            let views = render_views(&vol, mode).unwrap();
            assert!(views.intensity.iter().all(|&v| v == 0.0));
            assert!(views.depth.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn single_voxel_lights_one_pixel() {
        let mut values = Array3::<Complex64>::default((3, 3, 4));
        values[[1, 2, 3]] = Complex64::new(0.0, 2.5);
        let vol = volume_with(values, 0.0 + 0.5, 1.5 + 0.5);
        let views = render_views(&vol, RenderMode::Hard).unwrap();
        assert_eq!(views.intensity[[1, 2]], 1.0);
        assert_eq!(views.depth[[1, 2]], vol.geom.plane_z(3));
        for ((i, j), &v) in views.intensity.indexed_iter() {
            if (i, j) != (1, 2) {
                assert_eq!(v, 0.0);
                assert_eq!(views.depth[[i, j]], 0.0);
            }
        }
    }

    #[test]
    fn hard_argmax_ties_take_smallest_depth() {
        let mut values = Array3::<Complex64>::default((2, 2, 3));
        values[[0, 0, 0]] = Complex64::new(1.0, 0.0);
        values[[0, 0, 2]] = Complex64::new(1.0, 0.0);
        let vol = volume_with(values, 0.5, 1.1);
        let views = render_views(&vol, RenderMode::Hard).unwrap();
        assert_eq!(views.depth[[0, 0]], vol.geom.plane_z(0));
    }

    #[test]
    fn soft_render_converges_to_hard() {
        // Pseudo-random volume with magnitudes bounded away from zero so the
        // hard depth blanking never kicks in.
        let mut state = 42u64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            0.1 + 0.9 * ((state >> 11) as f64 / (1u64 << 53) as f64)
        };
        let mut values = Array3::<Complex64>::default((4, 4, 6));
        for v in values.iter_mut() {
            *v = Complex64::new(next(), next());
        }
        let vol = volume_with(values, 0.5, 1.7);
        let hard = render_views(&vol, RenderMode::Hard).unwrap();

        let mut last_max_diff = f64::INFINITY;
        for tau in [1e-1, 1e-2, 1e-3] {
            let soft = render_views(&vol, RenderMode::Soft { tau }).unwrap();
            let max_diff = soft
                .depth
                .iter()
                .zip(hard.depth.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(max_diff <= last_max_diff + 1e-12);
            last_max_diff = max_diff;
        }
        assert!(
            last_max_diff < vol.geom.depth_step(),
            "depth gap {last_max_diff} exceeds one voxel"
        );
    }

    #[test]
    fn soft_backward_matches_finite_differences() {
        let mut state = 7u64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            0.2 + 0.8 * ((state >> 11) as f64 / (1u64 << 53) as f64)
        };
        let mut values = Array3::<Complex64>::default((2, 3, 4));
        for v in values.iter_mut() {
            *v = Complex64::new(next(), next());
        }
        let vol = volume_with(values.clone(), 0.5, 1.3);
        let tau = 0.08;

        // Loss: weighted sums of intensity and depth.
        let gi = Array2::from_shape_fn((2, 3), |(i, j)| 0.3 + 0.1 * (i + 2 * j) as f64);
        let gd = Array2::from_shape_fn((2, 3), |(i, j)| -0.2 + 0.05 * (2 * i + j) as f64);
        let loss = |vals: &Array3<Complex64>| -> f64 {
            let v = ReconVolume {
                values: vals.clone(),
                geom: vol.geom,
                aperture: vol.aperture.clone(),
            };
            let views = render_views(&v, RenderMode::Soft { tau }).unwrap();
            views
                .intensity
                .iter()
                .zip(gi.iter())
                .map(|(a, b)| a * b)
                .sum::<f64>()
                + views
                    .depth
                    .iter()
                    .zip(gd.iter())
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
        };

        let grad = render_soft_backward(&vol, tau, &gi, &gd).unwrap();
        let eps = 1e-6;
        for &(i, j, k) in &[(0usize, 0usize, 0usize), (1, 2, 3), (0, 1, 2), (1, 0, 1)] {
            for re_part in [true, false] {
                let mut plus = values.clone();
                let mut minus = values.clone();
                if re_part {
                    plus[[i, j, k]] += eps;
                    minus[[i, j, k]] -= eps;
                } else {
                    plus[[i, j, k]] += Complex64::new(0.0, eps);
                    minus[[i, j, k]] -= Complex64::new(0.0, eps);
                }
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * eps);
                let analytic = if re_part {
                    grad[[i, j, k]].re
                } else {
                    grad[[i, j, k]].im
                };
                assert!(
                    (analytic - fd).abs() < 1e-6 * fd.abs().max(1.0),
                    "({i},{j},{k}) re={re_part}: analytic {analytic} vs fd {fd}"
                );
            }
        }
    }
}
