//! Learnable path compensation.
//!
//! Radiometric fall-off attenuates the returned intensity by `1/r^z` with a
//! material-dependent exponent z. Compensation multiplies each temporal bin
//! by a power of the bin's one-way distance. Three physics-based exponents
//! {1, 2, 4} are predefined; the learnable variant holds one logit triple
//! per scan point, selects among the three weights through a softmax, and
//! adds the compensated signal back onto the input (residual form). The
//! fixed variant used for single-coefficient studies is the bare product
//! with one chosen weight.

use ndarray::{Array2, Array3};

use crate::error::{shape_mismatch, Error, Result};
use crate::geometry::DistanceGrid;
use crate::transient::{TransientVolume, VolumeData, VolumeKind};

/// The three predefined compensation curves over temporal bins:
/// `w_r[k] = distance[k]^r` for r in {1, 2, 4}.
#[derive(Debug, Clone, PartialEq)]
pub struct CompensationWeights {
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    pub w4: Vec<f64>,
}

impl CompensationWeights {
    pub fn len(&self) -> usize {
        self.w1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w1.is_empty()
    }

    pub fn channel(&self, r: usize) -> &[f64] {
        match r {
            0 => &self.w1,
            1 => &self.w2,
            2 => &self.w4,
            _ => panic!("channel index out of range: {r}"),
        }
    }

    /// Exponent associated with a channel index.
    pub fn exponent_of_channel(r: usize) -> u32 {
        [1, 2, 4][r]
    }
}

pub fn compensation_weights(dg: &DistanceGrid) -> CompensationWeights {
    let w1: Vec<f64> = dg.values().to_vec();
    let w2: Vec<f64> = w1.iter().map(|&v| v * v).collect();
    let w4: Vec<f64> = w2.iter().map(|&v| v * v).collect();
    CompensationWeights { w1, w2, w4 }
}

/// Per-scan-point selection logits, shape (3, nx, ny).
#[derive(Debug, Clone, PartialEq)]
pub struct LpcParams {
    pub logits: Array3<f64>,
}

impl LpcParams {
    /// All-zero logits: a uniform 1/3 prior over the three exponents.
    pub fn zeros(nx: usize, ny: usize) -> Self {
        Self {
            logits: Array3::zeros((3, nx, ny)),
        }
    }

    pub fn scan_shape(&self) -> (usize, usize) {
        let (_, nx, ny) = self.logits.dim();
        (nx, ny)
    }

    /// Softmax over the channel axis, per scan point.
    pub fn probabilities(&self) -> Array3<f64> {
        let (_, nx, ny) = self.logits.dim();
        let mut out = Array3::zeros((3, nx, ny));
        for ix in 0..nx {
            for iy in 0..ny {
                let l = [
                    self.logits[[0, ix, iy]],
                    self.logits[[1, ix, iy]],
                    self.logits[[2, ix, iy]],
                ];
                let top = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e = [
                    (l[0] - top).exp(),
                    (l[1] - top).exp(),
                    (l[2] - top).exp(),
                ];
                let sum = e[0] + e[1] + e[2];
                for r in 0..3 {
                    out[[r, ix, iy]] = e[r] / sum;
                }
                debug_assert!(
                    (out[[0, ix, iy]] + out[[1, ix, iy]] + out[[2, ix, iy]] - 1.0).abs() < 1e-12
                );
            }
        }
        out
    }

    /// Channel with the largest probability per scan point.
    pub fn argmax_channels(&self) -> Array2<usize> {
        let p = self.probabilities();
        let (_, nx, ny) = self.logits.dim();
        Array2::from_shape_fn((nx, ny), |(ix, iy)| {
            let mut best = 0;
            for r in 1..3 {
                if p[[r, ix, iy]] > p[[best, ix, iy]] {
                    best = r;
                }
            }
            best
        })
    }
}

fn check_shapes(
    tv: &TransientVolume,
    params: &LpcParams,
    w: &CompensationWeights,
) -> Result<(usize, usize, usize)> {
    let (nx, ny, nt) = tv.data.dim();
    if params.logits.dim() != (3, nx, ny) {
        return Err(shape_mismatch(format!(
            "logits are {:?} but the volume has {nx}x{ny} scan points",
            params.logits.dim()
        )));
    }
    if w.len() != nt {
        return Err(shape_mismatch(format!(
            "compensation weights cover {} bins but the volume has {nt}",
            w.len()
        )));
    }
    Ok((nx, ny, nt))
}

/// Residual learnable compensation:
/// `out[x,y,t] = tv[x,y,t] * (1 + sum_r p_r(x,y) * w_r[t])`.
pub fn lpc_forward(
    tv: &TransientVolume,
    params: &LpcParams,
    w: &CompensationWeights,
) -> Result<TransientVolume> {
    let (nx, ny, nt) = check_shapes(tv, params, w)?;
    let data = tv.as_real()?;
    let probs = params.probabilities();

    let mut out = Array3::zeros((nx, ny, nt));
    for ix in 0..nx {
        for iy in 0..ny {
            let p = [
                probs[[0, ix, iy]],
                probs[[1, ix, iy]],
                probs[[2, ix, iy]],
            ];
            for it in 0..nt {
                let mix = p[0] * w.w1[it] + p[1] * w.w2[it] + p[2] * w.w4[it];
                out[[ix, iy, it]] = data[[ix, iy, it]] * (1.0 + mix);
            }
        }
    }
    TransientVolume::new(
        VolumeData::Real(out),
        tv.bin_width_s,
        tv.aperture.clone(),
        VolumeKind::CleanReal,
    )
}

/// Exact gradient of `lpc_forward` with respect to the logits.
///
/// With `p = softmax(logits)` and `mix = sum_r p_r w_r`, the Jacobian of the
/// output against logit `a` is `tv * p_a * (w_a - mix)`; contracting with
/// the upstream gradient over time gives the per-scan-point logit gradient.
pub fn lpc_backward(
    tv: &TransientVolume,
    params: &LpcParams,
    w: &CompensationWeights,
    upstream: &Array3<f64>,
) -> Result<Array3<f64>> {
    let (nx, ny, nt) = check_shapes(tv, params, w)?;
    if upstream.dim() != (nx, ny, nt) {
        return Err(shape_mismatch(format!(
            "upstream gradient is {:?} but the volume is {:?}",
            upstream.dim(),
            (nx, ny, nt)
        )));
    }
    let data = tv.as_real()?;
    let probs = params.probabilities();

    let mut grad = Array3::zeros((3, nx, ny));
    for ix in 0..nx {
        for iy in 0..ny {
            let p = [
                probs[[0, ix, iy]],
                probs[[1, ix, iy]],
                probs[[2, ix, iy]],
            ];
            let mut acc = [0.0f64; 3];
            for it in 0..nt {
                let ws = [w.w1[it], w.w2[it], w.w4[it]];
                let mix = p[0] * ws[0] + p[1] * ws[1] + p[2] * ws[2];
                let g = upstream[[ix, iy, it]] * data[[ix, iy, it]];
                for a in 0..3 {
                    acc[a] += g * p[a] * (ws[a] - mix);
                }
            }
            for a in 0..3 {
                grad[[a, ix, iy]] = acc[a];
            }
        }
    }
    Ok(grad)
}

/// Single-coefficient compensation: the bare product with one predefined
/// weight curve. `exponent` must be 1, 2, or 4.
pub fn fixed_compensation(
    tv: &TransientVolume,
    dg: &DistanceGrid,
    exponent: u32,
) -> Result<TransientVolume> {
    if !matches!(exponent, 1 | 2 | 4) {
        return Err(Error::InvalidParameter(format!(
            "compensation exponent must be 1, 2, or 4, got {exponent}"
        )));
    }
    let data = tv.as_real()?;
    let (nx, ny, nt) = data.dim();
    if dg.len() != nt {
        return Err(shape_mismatch(format!(
            "distance grid covers {} bins but the volume has {nt}",
            dg.len()
        )));
    }
    let weights: Vec<f64> = dg
        .values()
        .iter()
        .map(|&r| r.powi(exponent as i32))
        .collect();
    let mut out = Array3::zeros((nx, ny, nt));
    for ((ix, iy, it), &v) in data.indexed_iter() {
        out[[ix, iy, it]] = v * weights[it];
    }
    TransientVolume::new(
        VolumeData::Real(out),
        tv.bin_width_s,
        tv.aperture.clone(),
        VolumeKind::CleanReal,
    )
}
