//! Virtual illumination: a Gaussian-windowed carrier applied to the
//! transients in the frequency domain.
//!
//! The window amplitude over angular frequency is
//!
//! `K(omega) = sigma * sqrt(2 pi) * exp(-sigma^2 (omega - omega_c)^2 / 2)`
//!
//! evaluated on the discrete FFT grid `omega_m = 2 pi m / (nt * dt)` with
//! signed m. Filtering keeps the one-sided analytic spectrum (negative
//! frequencies zeroed, DC/Nyquist kept at unit weight, interior positive
//! bins doubled) so the magnitude of the filtered signal is the envelope of
//! the corresponding real passband signal. Frequencies below
//! `band_threshold` times the window peak are masked out entirely; the same
//! mask bounds the per-frequency work of the propagation stage.
//!
//! The reported 3 dB bandwidth follows the `1/(2 pi sigma)` convention. The
//! exact half-power half-width of the Gaussian is `sqrt(ln 2) / sigma`; the
//! convention is kept as the reporting unit, not as a claim about the
//! discrete mask.

use ndarray::Array3;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{shape_mismatch, Error, Result};
use crate::fft::{fft_inplace, ifft_inplace};
use crate::geometry::{ApertureGrid, SPEED_OF_LIGHT};
use crate::transient::{TransientVolume, VolumeData, VolumeKind};

/// Virtual illumination settings.
#[derive(Debug, Clone, PartialEq)]
pub struct IlluminationSpec {
    /// Nominal emission point of the virtual wavepacket (bookkeeping in the
    /// confocal configuration; defaults to the aperture center).
    pub x_vp: [f64; 3],
    /// Carrier wavelength in meters.
    pub central_wavelength_m: f64,
    /// Gaussian window width in seconds.
    pub sigma_s: f64,
}

impl IlluminationSpec {
    /// Defaults tied to an aperture: carrier wavelength of four scan
    /// spacings (at least two samples per half wavelength), window spanning
    /// roughly three carrier cycles.
    pub fn default_for_grid(grid: &ApertureGrid) -> Self {
        let lambda = 4.0 * grid.spacing_x().max(grid.spacing_y());
        Self {
            x_vp: grid.center(),
            central_wavelength_m: lambda,
            sigma_s: Self::default_sigma(lambda),
        }
    }

    /// `sigma = lambda / (c/2) * 3 / (2 pi)`.
    pub fn default_sigma(central_wavelength_m: f64) -> f64 {
        central_wavelength_m / (SPEED_OF_LIGHT / 2.0) * 3.0 / (2.0 * std::f64::consts::PI)
    }

    /// Carrier angular frequency. The time axis encodes round trips, so the
    /// carrier accrues phase at the effective speed c/2 and
    /// `omega_c = 2 pi (c/2) / lambda`.
    pub fn omega_c(&self) -> f64 {
        2.0 * std::f64::consts::PI * (SPEED_OF_LIGHT / 2.0) / self.central_wavelength_m
    }

    /// Reported 3 dB bandwidth, rad/s.
    pub fn bandwidth_3db(&self) -> f64 {
        1.0 / (2.0 * std::f64::consts::PI * self.sigma_s)
    }
}

/// Gaussian window amplitude at offset `domega` from the carrier.
pub fn gaussian_amplitude(sigma_s: f64, domega: f64) -> f64 {
    sigma_s * (2.0 * std::f64::consts::PI).sqrt() * (-0.5 * sigma_s * sigma_s * domega * domega).exp()
}

/// Derivative of `gaussian_amplitude` with respect to sigma.
pub fn gaussian_amplitude_dsigma(sigma_s: f64, domega: f64) -> f64 {
    let d2 = domega * domega;
    (2.0 * std::f64::consts::PI).sqrt()
        * (-0.5 * sigma_s * sigma_s * d2).exp()
        * (1.0 - sigma_s * sigma_s * d2)
}

/// One-sided analytic weighting of FFT bin `i` out of `nt`.
pub fn analytic_factor(i: usize, nt: usize) -> f64 {
    if i == 0 {
        return 1.0;
    }
    if nt % 2 == 0 && i == nt / 2 {
        return 1.0;
    }
    if i < nt.div_ceil(2) {
        2.0
    } else {
        0.0
    }
}

/// Discretized illumination window over the FFT frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumWindow {
    amplitudes: Vec<f64>,
    band_mask: Vec<bool>,
    peak_index: usize,
    omegas: Vec<f64>,
    nt: usize,
    bin_width_s: f64,
    omega_c: f64,
    sigma_s: f64,
    band_threshold: f64,
}

impl SpectrumWindow {
    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn band_mask(&self) -> &[bool] {
        &self.band_mask
    }

    pub fn peak_index(&self) -> usize {
        self.peak_index
    }

    /// Signed angular frequency of each FFT bin.
    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn bin_width_s(&self) -> f64 {
        self.bin_width_s
    }

    pub fn omega_c(&self) -> f64 {
        self.omega_c
    }

    pub fn sigma_s(&self) -> f64 {
        self.sigma_s
    }

    pub fn band_threshold(&self) -> f64 {
        self.band_threshold
    }

    /// FFT bin indices kept by the mask, ascending.
    pub fn retained_indices(&self) -> Vec<usize> {
        self.band_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    pub fn retained_count(&self) -> usize {
        self.band_mask.iter().filter(|&&m| m).count()
    }

    /// Full filter applied to the spectrum: analytic weighting times window
    /// amplitude on masked-in bins, zero elsewhere.
    pub fn filter_coeffs(&self) -> Vec<f64> {
        (0..self.nt)
            .map(|i| {
                if self.band_mask[i] {
                    analytic_factor(i, self.nt) * self.amplitudes[i]
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Derivative of `filter_coeffs` with respect to sigma, holding the mask
    /// fixed (the mask is a discontinuous function of sigma; gradients treat
    /// it as a constant).
    pub fn filter_coeffs_dsigma(&self) -> Vec<f64> {
        (0..self.nt)
            .map(|i| {
                if self.band_mask[i] {
                    analytic_factor(i, self.nt)
                        * gaussian_amplitude_dsigma(self.sigma_s, self.omegas[i] - self.omega_c)
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Confocal wavenumber of bin i: `omega / (c/2)`.
    pub fn wavenumber(&self, i: usize) -> f64 {
        self.omegas[i] / (SPEED_OF_LIGHT / 2.0)
    }
}

/// Builds the Gaussian illumination window on the discrete frequency grid.
pub fn gaussian_window(
    sigma_s: f64,
    nt: usize,
    bin_width_s: f64,
    omega_c: f64,
    band_threshold: f64,
) -> Result<SpectrumWindow> {
    if !(sigma_s > 0.0) || !sigma_s.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "window width must be positive, got {sigma_s}"
        )));
    }
    if nt < 8 {
        return Err(Error::InvalidParameter(format!(
            "window needs at least 8 bins, got {nt}"
        )));
    }
    if !(band_threshold > 0.0 && band_threshold < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "band threshold must lie in (0, 1), got {band_threshold}"
        )));
    }
    let d_omega = 2.0 * std::f64::consts::PI / (nt as f64 * bin_width_s);
    let omegas: Vec<f64> = (0..nt)
        .map(|i| {
            let m = if i < nt.div_ceil(2) {
                i as isize
            } else {
                i as isize - nt as isize
            };
            m as f64 * d_omega
        })
        .collect();
    let amplitudes: Vec<f64> = omegas
        .iter()
        .map(|&w| gaussian_amplitude(sigma_s, w - omega_c))
        .collect();
    let (peak_index, &peak) = amplitudes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("nt >= 8");
    let band_mask: Vec<bool> = amplitudes
        .iter()
        .map(|&a| a >= band_threshold * peak)
        .collect();
    let kept = band_mask.iter().filter(|&&m| m).count();
    if kept < 3 {
        return Err(Error::DegenerateWindow { kept, total: nt });
    }
    Ok(SpectrumWindow {
        amplitudes,
        band_mask,
        peak_index,
        omegas,
        nt,
        bin_width_s,
        omega_c,
        sigma_s,
        band_threshold,
    })
}

/// Filters a transient volume with the illumination window, producing the
/// complex phasor field at the aperture. Linear in the input.
pub fn apply_illumination(tv: &TransientVolume, window: &SpectrumWindow) -> Result<TransientVolume> {
    if tv.nt() != window.nt() {
        return Err(shape_mismatch(format!(
            "volume has {} temporal bins but the window was built for {}",
            tv.nt(),
            window.nt()
        )));
    }
    if tv.bin_width_s != window.bin_width_s() {
        return Err(shape_mismatch(format!(
            "volume bin width {} s does not match the window's {} s",
            tv.bin_width_s,
            window.bin_width_s()
        )));
    }
    let (nx, ny, nt) = tv.data.dim();
    let coeffs = window.filter_coeffs();

    let mut out = Array3::<Complex64>::default((nx, ny, nt));
    let out_slice = out.as_slice_mut().expect("c-order output");
    match &tv.data {
        VolumeData::Real(a) => {
            let src = a.as_slice().expect("c-order input");
            out_slice
                .par_chunks_mut(nt)
                .enumerate()
                .for_each(|(flat, chunk)| {
                    for (o, &v) in chunk.iter_mut().zip(&src[flat * nt..(flat + 1) * nt]) {
                        *o = Complex64::new(v, 0.0);
                    }
                    filter_in_place(chunk, &coeffs);
                });
        }
        VolumeData::Complex(a) => {
            let src = a.as_slice().expect("c-order input");
            out_slice
                .par_chunks_mut(nt)
                .enumerate()
                .for_each(|(flat, chunk)| {
                    chunk.copy_from_slice(&src[flat * nt..(flat + 1) * nt]);
                    filter_in_place(chunk, &coeffs);
                });
        }
    }

    TransientVolume::new(
        VolumeData::Complex(out),
        tv.bin_width_s,
        tv.aperture.clone(),
        VolumeKind::ComplexPhasor,
    )
}

fn filter_in_place(buf: &mut [Complex64], coeffs: &[f64]) {
    fft_inplace(buf);
    for (v, &c) in buf.iter_mut().zip(coeffs.iter()) {
        *v *= c;
    }
    ifft_inplace(buf);
}
