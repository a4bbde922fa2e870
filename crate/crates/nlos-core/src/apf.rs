//! Adaptive phasor field: a learnable illumination window width.
//!
//! The window width is a scalar per measurement, parameterized as
//! `sigma(s) = sigma_min + softplus(s)` with `sigma_min = bin_width / 4`, so
//! any finite `s` yields a usable window and gradient descent can move
//! freely. The forward pass is exactly the fixed-width illumination filter
//! with the learned sigma; the backward pass differentiates the Gaussian
//! amplitude against sigma while holding the band mask fixed (the mask is a
//! discontinuous function of sigma, so it is treated as a constant, and the
//! finite-difference checks are run under the same convention).

use ndarray::Array3;
use num_complex::Complex64;

use crate::error::{shape_mismatch, Result};
use crate::fft::{fft_inplace, ifft_inplace};
use crate::phasor::{apply_illumination, gaussian_window, SpectrumWindow};
use crate::transient::{TransientVolume, VolumeData};

/// Learnable window-width parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApfParams {
    /// Unconstrained parameter; `sigma = sigma_min + softplus(s)`.
    pub s: f64,
    /// Width floor, a quarter of the temporal bin (a sub-bin window is not
    /// resolvable on the sampling grid).
    pub sigma_min: f64,
}

impl ApfParams {
    pub fn new(s: f64, bin_width_s: f64) -> Self {
        Self {
            s,
            sigma_min: bin_width_s / 4.0,
        }
    }

    /// Parameter whose mapped width equals `sigma`; used to start training
    /// from a chosen fixed-width baseline.
    pub fn from_sigma(sigma_s: f64, bin_width_s: f64) -> Result<Self> {
        let sigma_min = bin_width_s / 4.0;
        if !(sigma_s > sigma_min) {
            return Err(crate::error::Error::InvalidParameter(format!(
                "target width {sigma_s} s is not above the floor {sigma_min} s"
            )));
        }
        Ok(Self {
            s: inverse_softplus(sigma_s - sigma_min),
            sigma_min,
        })
    }
}

/// Numerically stable softplus.
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

fn inverse_softplus(y: f64) -> f64 {
    // x with softplus(x) = y, y > 0.
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Maps the unconstrained parameter to the window width in seconds.
pub fn apf_sigma(params: &ApfParams) -> f64 {
    params.sigma_min + softplus(params.s)
}

/// Illumination with the learned width: builds the Gaussian window for
/// `sigma(s)` and filters the volume with it.
pub fn apf_forward(
    tv: &TransientVolume,
    params: &ApfParams,
    omega_c: f64,
    band_threshold: f64,
) -> Result<TransientVolume> {
    let window = apf_window(tv, params, omega_c, band_threshold)?;
    apply_illumination(tv, &window)
}

/// The spectral window the forward pass uses.
pub fn apf_window(
    tv: &TransientVolume,
    params: &ApfParams,
    omega_c: f64,
    band_threshold: f64,
) -> Result<SpectrumWindow> {
    gaussian_window(
        apf_sigma(params),
        tv.nt(),
        tv.bin_width_s,
        omega_c,
        band_threshold,
    )
}

/// Gradient of a scalar loss through `apf_forward` with respect to `s`.
///
/// `upstream` is the loss gradient over the complex output (packed as
/// `dL/d re + j dL/d im`). With `y = IFFT(filter . FFT(x))` and the filter
/// linear in the Gaussian amplitude, the chain rule contracts the spectral
/// loss gradient with the input spectrum and the amplitude's sigma
/// derivative `sqrt(2 pi) exp(-sigma^2 d^2 / 2) (1 - sigma^2 d^2)`, then
/// multiplies by `d sigma / d s = sigmoid(s)`.
pub fn apf_backward(
    tv: &TransientVolume,
    params: &ApfParams,
    omega_c: f64,
    band_threshold: f64,
    upstream: &Array3<Complex64>,
) -> Result<f64> {
    let window = apf_window(tv, params, omega_c, band_threshold)?;
    let (nx, ny, nt) = tv.data.dim();
    if upstream.dim() != (nx, ny, nt) {
        return Err(shape_mismatch(format!(
            "upstream gradient is {:?} but the volume is {:?}",
            upstream.dim(),
            (nx, ny, nt)
        )));
    }

    let dcoeffs = window.filter_coeffs_dsigma();
    let up = upstream.as_slice().expect("c-order upstream");

    // d L / d filter[m] = sum_s Re( conj(g_spec[s, m]) * spec[s, m] ) with
    // g_spec = (1/nt) FFT(upstream) (adjoint of the inverse FFT).
    let mut d_sigma = 0.0;
    let mut spec_buf = vec![Complex64::default(); nt];
    let mut gspec_buf = vec![Complex64::default(); nt];
    for flat in 0..nx * ny {
        match &tv.data {
            VolumeData::Real(a) => {
                let src = a.as_slice().expect("c-order input");
                for (b, &v) in spec_buf
                    .iter_mut()
                    .zip(&src[flat * nt..(flat + 1) * nt])
                {
                    *b = Complex64::new(v, 0.0);
                }
            }
            VolumeData::Complex(a) => {
                let src = a.as_slice().expect("c-order input");
                spec_buf.copy_from_slice(&src[flat * nt..(flat + 1) * nt]);
            }
        }
        fft_inplace(&mut spec_buf);
        gspec_buf.copy_from_slice(&up[flat * nt..(flat + 1) * nt]);
        fft_inplace(&mut gspec_buf);
        let scale = 1.0 / nt as f64;
        for m in 0..nt {
            if dcoeffs[m] != 0.0 {
                let g = gspec_buf[m] * scale;
                d_sigma += dcoeffs[m] * (g.conj() * spec_buf[m]).re;
            }
        }
    }
    Ok(d_sigma * sigmoid(params.s))
}
