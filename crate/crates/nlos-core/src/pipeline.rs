//! End-to-end differentiable chain:
//! compensation -> adaptive illumination -> propagation -> soft views -> loss.
//!
//! The propagation stage is linear, so its adjoint is the conjugate-transposed
//! propagation; the illumination filter (IFFT . diag(filter) . FFT with a
//! real filter) is self-adjoint under the unitary pairing, so the gradient of
//! the compensated volume is just the filtered upstream gradient's real part.
//! The spectral band mask is held fixed during differentiation.

use ndarray::{Array2, Array3};

use crate::apf::{apf_backward, apf_sigma, ApfParams};
use crate::error::{shape_mismatch, Result};
use crate::geometry::{voxel_axes, ApertureGrid, ReconGeometry};
use crate::lpc::{lpc_backward, lpc_forward, CompensationWeights, LpcParams};
use crate::optim::{total_loss, LossWeights};
use crate::phasor::{apply_illumination, gaussian_window, SpectrumWindow};
use crate::render::{render_soft_backward, render_views, RenderMode, Views};
use crate::rsd::{rsd_adjoint, rsd_propagate, ReconVolume};
use crate::transient::{Scene, TransientVolume, VolumeData, VolumeKind};

/// Fixed configuration of the reconstruction chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    /// Carrier angular frequency of the illumination window.
    pub omega_c: f64,
    /// Spectral mask threshold relative to the window peak.
    pub band_threshold: f64,
    pub geom: ReconGeometry,
    /// Soft-render temperature used for training.
    pub tau: f64,
    pub loss_weights: LossWeights,
}

/// One training sample: a measurement with its supervision images and the
/// compensation curves matching its temporal axis.
#[derive(Debug, Clone)]
pub struct Sample {
    pub measurement: TransientVolume,
    pub gt_intensity: Array2<f64>,
    pub gt_depth: Array2<f64>,
    pub comp: CompensationWeights,
}

/// Forward evaluation of one sample.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: f64,
    pub loss_intensity: f64,
    pub loss_depth: f64,
    pub views: Views,
}

/// Supervision images for a scene: the normalized max-projection of the
/// voxelized albedo, and the depth of the strongest-albedo voxel per column
/// (zero on empty columns). Consistent with the hard renderer's conventions.
pub fn scene_ground_truth(
    scene: &Scene,
    geom: &ReconGeometry,
    grid: &ApertureGrid,
) -> Result<(Array2<f64>, Array2<f64>)> {
    scene.check_within(geom, grid)?;
    let (xs, ys, _) = voxel_axes(geom, grid);
    let hx = grid.spacing_x();
    let hy = grid.spacing_y();
    let mut albedo = Array3::<f64>::zeros((geom.nvx, geom.nvy, geom.nvz));
    for p in &scene.points {
        let [x, y, z] = p.position_m;
        let i = ((x - xs[0]) / hx).round().clamp(0.0, (geom.nvx - 1) as f64) as usize;
        let j = ((y - ys[0]) / hy).round().clamp(0.0, (geom.nvy - 1) as f64) as usize;
        let k = (((z - geom.z_min_m) / geom.depth_step()).floor() as usize).min(geom.nvz - 1);
        albedo[[i, j, k]] += p.albedo;
    }
    let peak = albedo.iter().cloned().fold(0.0, f64::max);
    let mut intensity = Array2::zeros((geom.nvx, geom.nvy));
    let mut depth = Array2::zeros((geom.nvx, geom.nvy));
    if peak == 0.0 {
        return Ok((intensity, depth));
    }
    for i in 0..geom.nvx {
        for j in 0..geom.nvy {
            let mut best_k = 0usize;
            let mut best = f64::NEG_INFINITY;
            for k in 0..geom.nvz {
                if albedo[[i, j, k]] > best {
                    best = albedo[[i, j, k]];
                    best_k = k;
                }
            }
            if best > 0.0 {
                intensity[[i, j]] = best / peak;
                depth[[i, j]] = geom.plane_z(best_k);
            }
        }
    }
    Ok((intensity, depth))
}

/// Non-learned reconstruction: illumination with an explicit window, then
/// propagation and rendering.
pub fn reconstruct_views(
    tv: &TransientVolume,
    window: &SpectrumWindow,
    geom: &ReconGeometry,
    mode: RenderMode,
) -> Result<(ReconVolume, Views)> {
    let phasor = apply_illumination(tv, window)?;
    let vol = rsd_propagate(&phasor, geom, window)?;
    let views = render_views(&vol, mode)?;
    Ok((vol, views))
}

fn forward_parts(
    sample: &Sample,
    lpc: &LpcParams,
    apf: &ApfParams,
    cfg: &PipelineConfig,
) -> Result<(TransientVolume, SpectrumWindow, TransientVolume, ReconVolume)> {
    let compensated = lpc_forward(&sample.measurement, lpc, &sample.comp)?;
    let window = gaussian_window(
        apf_sigma(apf),
        compensated.nt(),
        compensated.bin_width_s,
        cfg.omega_c,
        cfg.band_threshold,
    )?;
    let phasor = apply_illumination(&compensated, &window)?;
    let vol = rsd_propagate(&phasor, &cfg.geom, &window)?;
    Ok((compensated, window, phasor, vol))
}

/// Forward pass with the soft renderer and the training loss.
pub fn evaluate(
    sample: &Sample,
    lpc: &LpcParams,
    apf: &ApfParams,
    cfg: &PipelineConfig,
) -> Result<Evaluation> {
    let (_, _, _, vol) = forward_parts(sample, lpc, apf, cfg)?;
    let views = render_views(&vol, RenderMode::Soft { tau: cfg.tau })?;
    let (loss, loss_intensity, loss_depth) = total_loss(
        &sample.gt_intensity,
        &views.intensity,
        &sample.gt_depth,
        &views.depth,
        &cfg.loss_weights,
    )?;
    Ok(Evaluation {
        loss,
        loss_intensity,
        loss_depth,
        views,
    })
}

/// Forward + backward pass: returns the evaluation together with the exact
/// loss gradients for the compensation logits and the window parameter.
pub fn grad(
    sample: &Sample,
    lpc: &LpcParams,
    apf: &ApfParams,
    cfg: &PipelineConfig,
) -> Result<(Evaluation, Array3<f64>, f64)> {
    let (compensated, window, phasor, vol) = forward_parts(sample, lpc, apf, cfg)?;
    let views = render_views(&vol, RenderMode::Soft { tau: cfg.tau })?;
    let (loss, loss_intensity, loss_depth) = total_loss(
        &sample.gt_intensity,
        &views.intensity,
        &sample.gt_depth,
        &views.depth,
        &cfg.loss_weights,
    )?;

    // MSE gradients over the two views.
    let n = views.intensity.len() as f64;
    let g_intensity = Array2::from_shape_fn(views.intensity.dim(), |idx| {
        2.0 * (views.intensity[idx] - sample.gt_intensity[idx]) / n
    });
    let g_depth = Array2::from_shape_fn(views.depth.dim(), |idx| {
        cfg.loss_weights.lambda * 2.0 * (views.depth[idx] - sample.gt_depth[idx]) / n
    });

    // Renderer and propagation adjoints.
    let g_vol = render_soft_backward(&vol, cfg.tau, &g_intensity, &g_depth)?;
    let g_phasor = rsd_adjoint(&g_vol, &phasor, &cfg.geom, &window)?;

    // Window-width gradient: the illumination stage sees the compensated
    // volume as its input and g_phasor as its upstream gradient.
    let g_s = apf_backward(
        &compensated,
        apf,
        cfg.omega_c,
        cfg.band_threshold,
        &g_phasor,
    )?;

    // Input gradient of the illumination stage: the filter is self-adjoint,
    // so filter the upstream gradient and take the real part.
    let g_phasor_tv = TransientVolume::new(
        VolumeData::Complex(g_phasor),
        sample.measurement.bin_width_s,
        sample.measurement.aperture.clone(),
        VolumeKind::ComplexPhasor,
    )?;
    let filtered = apply_illumination(&g_phasor_tv, &window)?;
    let g_compensated = filtered.as_complex()?.mapv(|v| v.re);

    let g_logits = lpc_backward(&sample.measurement, lpc, &sample.comp, &g_compensated)?;

    Ok((
        Evaluation {
            loss,
            loss_intensity,
            loss_depth,
            views,
        },
        g_logits,
        g_s,
    ))
}

/// Checks that a sample's supervision images match the configured geometry.
pub fn check_sample(sample: &Sample, cfg: &PipelineConfig) -> Result<()> {
    let want = (cfg.geom.nvx, cfg.geom.nvy);
    if sample.gt_intensity.dim() != want || sample.gt_depth.dim() != want {
        return Err(shape_mismatch(format!(
            "supervision images are {:?}/{:?} but the geometry is {:?}",
            sample.gt_intensity.dim(),
            sample.gt_depth.dim(),
            want
        )));
    }
    if sample.comp.len() != sample.measurement.nt() {
        return Err(shape_mismatch(
            "compensation curves do not match the temporal axis".to_string(),
        ));
    }
    Ok(())
}
