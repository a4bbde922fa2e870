//! Rayleigh-Sommerfeld propagation of the aperture phasor field into the
//! hidden volume.
//!
//! Per retained frequency, the aperture slice `P(x_s, omega)` (one FFT bin
//! along time) is summed into each depth plane with the spherical kernel
//! `exp(j k r) / r`, `k = omega / (c/2)` (the time axis encodes round trips,
//! so phase accrues at the effective speed c/2). Because the voxel lattice
//! shares the aperture spacing, the per-plane sum is a 2-D lattice
//! convolution, evaluated through zero-padded FFTs. `rsd_propagate_direct`
//! computes the same definition with the literal quadruple loop and serves
//! as the independent oracle for the fast path.
//!
//! The frequency loop runs in parallel but the per-frequency partial volumes
//! are reduced in ascending frequency order, so results are bit-identical
//! regardless of thread count.

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{shape_mismatch, Error, Result};
use crate::fft::{fft_inplace, ifft_inplace, PlaneConv};
use crate::geometry::{voxel_axes, ApertureGrid, ReconGeometry};
use crate::phasor::SpectrumWindow;
use crate::transient::{TransientVolume, VolumeKind};

/// Complex reconstruction of the hidden volume, indexed `(ix, iy, iz)` on
/// the lattice of `geometry::voxel_axes`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconVolume {
    pub values: Array3<Complex64>,
    pub geom: ReconGeometry,
    pub aperture: ApertureGrid,
}

impl ReconVolume {
    /// Voxel index holding the largest magnitude.
    pub fn peak_index(&self) -> (usize, usize, usize) {
        let mut best = (0, 0, 0);
        let mut best_mag = f64::NEG_INFINITY;
        for ((i, j, k), v) in self.values.indexed_iter() {
            let m = v.norm();
            if m > best_mag {
                best_mag = m;
                best = (i, j, k);
            }
        }
        best
    }
}

fn validate(
    phasor: &TransientVolume,
    geom: &ReconGeometry,
    window: &SpectrumWindow,
) -> Result<()> {
    if phasor.kind != VolumeKind::ComplexPhasor {
        return Err(Error::InvalidParameter(
            "propagation expects a complex phasor volume; run the illumination filter first"
                .into(),
        ));
    }
    if geom.z_min_m <= 0.0 {
        return Err(Error::NonPositiveDepth {
            z_min_m: geom.z_min_m,
        });
    }
    if phasor.nt() != window.nt() || phasor.bin_width_s != window.bin_width_s() {
        return Err(shape_mismatch(
            "phasor volume and spectral window disagree on the temporal axis".to_string(),
        ));
    }
    Ok(())
}

/// Aperture spectrum slices for the retained frequencies:
/// `slices[f][[ix, iy]] = FFT_t(phasor)[retained[f]]`.
fn aperture_slices(
    phasor: &TransientVolume,
    retained: &[usize],
) -> Vec<Array2<Complex64>> {
    let data = phasor.as_complex().expect("validated phasor kind");
    let (nx, ny, nt) = data.dim();
    let src = data.as_slice().expect("c-order phasor");
    let rows: Vec<Vec<Complex64>> = (0..nx * ny)
        .into_par_iter()
        .map(|flat| {
            let mut buf = src[flat * nt..(flat + 1) * nt].to_vec();
            fft_inplace(&mut buf);
            retained.iter().map(|&m| buf[m]).collect()
        })
        .collect();
    let mut slices = vec![Array2::<Complex64>::zeros((nx, ny)); retained.len()];
    for (flat, row) in rows.iter().enumerate() {
        let ix = flat / ny;
        let iy = flat % ny;
        for (f, &v) in row.iter().enumerate() {
            slices[f][[ix, iy]] = v;
        }
    }
    slices
}

struct LatticeInfo {
    /// Constant offset between the voxel lattice and the aperture lattice.
    off_x: f64,
    off_y: f64,
    hx: f64,
    hy: f64,
}

fn lattice_info(geom: &ReconGeometry, grid: &ApertureGrid) -> LatticeInfo {
    let (vxs, vys, _) = voxel_axes(geom, grid);
    let origin = grid.origin_m();
    LatticeInfo {
        off_x: vxs[0] - origin[0],
        off_y: vys[0] - origin[1],
        hx: grid.spacing_x(),
        hy: grid.spacing_y(),
    }
}

/// Spherical kernel on the offset lattice, pre-shifted for `PlaneConv`:
/// entry `[u, v]` holds the kernel at lattice offset
/// `(u - (nx - 1), v - (ny - 1))` from a scan point.
fn shifted_kernel(
    lat: &LatticeInfo,
    nx: usize,
    ny: usize,
    nvx: usize,
    nvy: usize,
    z: f64,
    k_m: f64,
) -> Vec<Complex64> {
    let kw = nvx + nx - 1;
    let kh = nvy + ny - 1;
    let mut kernel = vec![Complex64::default(); kw * kh];
    for u in 0..kw {
        let dx = lat.off_x + (u as isize - (nx as isize - 1)) as f64 * lat.hx;
        for v in 0..kh {
            let dy = lat.off_y + (v as isize - (ny as isize - 1)) as f64 * lat.hy;
            let r = (dx * dx + dy * dy + z * z).sqrt();
            kernel[u * kh + v] = Complex64::from_polar(1.0 / r, k_m * r);
        }
    }
    kernel
}

/// Fast frequency-domain propagation.
pub fn rsd_propagate(
    phasor: &TransientVolume,
    geom: &ReconGeometry,
    window: &SpectrumWindow,
) -> Result<ReconVolume> {
    validate(phasor, geom, window)?;
    let grid = &phasor.aperture;
    let (nx, ny) = (grid.nx(), grid.ny());
    let retained = window.retained_indices();
    let slices = aperture_slices(phasor, &retained);
    let lat = lattice_info(geom, grid);
    let zs: Vec<f64> = (0..geom.nvz).map(|k| geom.plane_z(k)).collect();

    let partials: Vec<(usize, Array3<Complex64>)> = retained
        .par_iter()
        .enumerate()
        .map(|(f, &m)| {
            let conv = PlaneConv::new(nx, ny, geom.nvx, geom.nvy);
            let k_m = window.wavenumber(m);
            let field_hat = conv.transform_field(&slices[f]);
            let mut vol = Array3::<Complex64>::zeros((geom.nvx, geom.nvy, geom.nvz));
            for (p, &z) in zs.iter().enumerate() {
                let kernel = shifted_kernel(&lat, nx, ny, geom.nvx, geom.nvy, z, k_m);
                let kernel_hat = conv.transform_kernel(&kernel);
                let mut plane = Array2::<Complex64>::zeros((geom.nvx, geom.nvy));
                conv.accumulate_product(&field_hat, &kernel_hat, &mut plane, Complex64::new(1.0, 0.0));
                for ((i, j), v) in plane.indexed_iter() {
                    vol[[i, j, p]] = *v;
                }
            }
            (f, vol)
        })
        .collect();

    let mut values = Array3::<Complex64>::zeros((geom.nvx, geom.nvy, geom.nvz));
    let mut ordered = partials;
    ordered.sort_by_key(|(f, _)| *f);
    for (_, vol) in ordered {
        values += &vol;
    }
    Ok(ReconVolume {
        values,
        geom: *geom,
        aperture: grid.clone(),
    })
}

/// Brute-force propagation: the same definition as `rsd_propagate`, computed
/// by the literal quadruple loop with no FFT in the spatial sum. Quadratic
/// in the number of lattice points; intended as an oracle.
pub fn rsd_propagate_direct(
    phasor: &TransientVolume,
    geom: &ReconGeometry,
    window: &SpectrumWindow,
) -> Result<ReconVolume> {
    validate(phasor, geom, window)?;
    let grid = &phasor.aperture;
    let (nx, ny) = (grid.nx(), grid.ny());
    let retained = window.retained_indices();
    let slices = aperture_slices(phasor, &retained);
    let (vxs, vys, vzs) = voxel_axes(geom, grid);

    let mut values = Array3::<Complex64>::zeros((geom.nvx, geom.nvy, geom.nvz));
    for (f, &m) in retained.iter().enumerate() {
        let k_m = window.wavenumber(m);
        let slice = &slices[f];
        for a in 0..nx {
            for b in 0..ny {
                let p = slice[[a, b]];
                if p == Complex64::default() {
                    continue;
                }
                let xs = grid.position(a, b);
                for (i, &vx) in vxs.iter().enumerate() {
                    let dx = vx - xs[0];
                    for (j, &vy) in vys.iter().enumerate() {
                        let dy = vy - xs[1];
                        let lateral = dx * dx + dy * dy;
                        for (k, &vz) in vzs.iter().enumerate() {
                            let r = (lateral + vz * vz).sqrt();
                            values[[i, j, k]] += p * Complex64::from_polar(1.0 / r, k_m * r);
                        }
                    }
                }
            }
        }
    }
    Ok(ReconVolume {
        values,
        geom: *geom,
        aperture: grid.clone(),
    })
}

/// Adjoint of `rsd_propagate` with respect to its time-domain phasor input.
///
/// Treating the loss gradient over the volume as a complex field
/// (d/d re + j d/d im), the adjoint propagates the conjugated field back to
/// the aperture with the conjugated kernel `exp(-j k r) / r`, then maps the
/// retained frequency bins back through the adjoint of the forward FFT
/// (`nt * IFFT` with zeros in the masked-out bins).
pub fn rsd_adjoint(
    grad_volume: &Array3<Complex64>,
    phasor: &TransientVolume,
    geom: &ReconGeometry,
    window: &SpectrumWindow,
) -> Result<Array3<Complex64>> {
    validate(phasor, geom, window)?;
    if grad_volume.dim() != (geom.nvx, geom.nvy, geom.nvz) {
        return Err(shape_mismatch(
            "volume gradient does not match the reconstruction geometry".to_string(),
        ));
    }
    let grid = &phasor.aperture;
    let (nx, ny) = (grid.nx(), grid.ny());
    let nt = phasor.nt();
    let retained = window.retained_indices();
    let lat = lattice_info(geom, grid);
    let zs: Vec<f64> = (0..geom.nvz).map(|k| geom.plane_z(k)).collect();

    // conj(g) per plane, transformed once and shared across frequencies.
    let conv = PlaneConv::new(geom.nvx, geom.nvy, nx, ny);
    let plane_hats: Vec<Vec<Complex64>> = (0..geom.nvz)
        .into_par_iter()
        .map(|p| {
            let mut plane = Array2::<Complex64>::zeros((geom.nvx, geom.nvy));
            for i in 0..geom.nvx {
                for j in 0..geom.nvy {
                    plane[[i, j]] = grad_volume[[i, j, p]].conj();
                }
            }
            conv.transform_field(&plane)
        })
        .collect();

    // g_bins[s, f] = conj( sum_vox K * conj(g) ): a lattice convolution with
    // the index-reversed kernel, since the offset runs voxel-minus-scan.
    let bin_grads: Vec<(usize, Array2<Complex64>)> = retained
        .par_iter()
        .enumerate()
        .map(|(f, &m)| {
            let k_m = window.wavenumber(m);
            let mut acc = Array2::<Complex64>::zeros((nx, ny));
            for (p, &z) in zs.iter().enumerate() {
                let kernel = shifted_kernel(&lat, nx, ny, geom.nvx, geom.nvy, z, k_m);
                // Reverse both axes: kernel_at(d) becomes kernel_at(-d) on
                // the swapped (volume -> aperture) lattice.
                let kw = geom.nvx + nx - 1;
                let kh = geom.nvy + ny - 1;
                let mut reversed = vec![Complex64::default(); kw * kh];
                for u in 0..kw {
                    for v in 0..kh {
                        reversed[u * kh + v] = kernel[(kw - 1 - u) * kh + (kh - 1 - v)];
                    }
                }
                let kernel_hat = conv.transform_kernel(&reversed);
                conv.accumulate_product(
                    &plane_hats[p],
                    &kernel_hat,
                    &mut acc,
                    Complex64::new(1.0, 0.0),
                );
            }
            (f, acc.mapv(|v| v.conj()))
        })
        .collect();

    let mut ordered = bin_grads;
    ordered.sort_by_key(|(f, _)| *f);

    // Adjoint of "FFT along t, keep retained bins": stuff zeros and apply
    // nt * IFFT.
    let mut out = Array3::<Complex64>::default((nx, ny, nt));
    let out_slice = out.as_slice_mut().expect("c-order output");
    out_slice
        .par_chunks_mut(nt)
        .enumerate()
        .for_each(|(flat, chunk)| {
            let ix = flat / ny;
            let iy = flat % ny;
            for (f, &m) in retained.iter().enumerate() {
                chunk[m] = ordered[f].1[[ix, iy]];
            }
            ifft_inplace(chunk);
            for v in chunk.iter_mut() {
                *v *= nt as f64;
            }
        });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phasor::gaussian_window;
    use crate::transient::VolumeData;

    const DT: f64 = 33e-12;

    fn window_for(nt: usize, center_bin: f64, half_bins: f64) -> SpectrumWindow {
        let d_omega = 2.0 * std::f64::consts::PI / (nt as f64 * DT);
        let omega_c = d_omega * center_bin;
        let sigma = (2.0 * 100.0f64.ln()).sqrt() / (half_bins * d_omega);
        gaussian_window(sigma, nt, DT, omega_c, 0.01).unwrap()
    }

    fn phasor_from(
        data: Array3<Complex64>,
        grid: &ApertureGrid,
    ) -> TransientVolume {
        TransientVolume::new(
            VolumeData::Complex(data),
            DT,
            grid.clone(),
            VolumeKind::ComplexPhasor,
        )
        .unwrap()
    }

    #[test]
    fn zero_phasor_propagates_to_zero() {
        let grid = ApertureGrid::centered(4, 4, 1.0).unwrap();
        let geom = ReconGeometry::new(4, 4, 3, 0.3, 0.9).unwrap();
        let w = window_for(64, 8.0, 2.0);
        let phasor = phasor_from(Array3::default((4, 4, 64)), &grid);
        let vol = rsd_propagate(&phasor, &geom, &w).unwrap();
        assert!(vol.values.iter().all(|v| v.norm() == 0.0));
        let direct = rsd_propagate_direct(&phasor, &geom, &w).unwrap();
        assert_eq!(vol.values, direct.values);
    }

    #[test]
    fn single_point_single_voxel_is_spherical_kernel() {
        // One scan point holding a single-frequency phasor, one voxel: the
        // result must be P * exp(jkr)/r for every retained frequency bin's
        // contribution. Use a time series that is exactly one FFT bin.
        let nt = 64;
        let grid = ApertureGrid::new(1, 1, 1.0, [0.0, 0.0, 0.0]).unwrap();
        let geom = ReconGeometry::new(1, 1, 1, 0.4, 1.2).unwrap();
        let w = window_for(nt, 8.0, 2.0);
        let retained = w.retained_indices();

        // Build the time series whose FFT is 1 at each retained bin.
        let mut data = Array3::<Complex64>::default((1, 1, nt));
        for t in 0..nt {
            let mut acc = Complex64::default();
            for &m in &retained {
                let phase = 2.0 * std::f64::consts::PI * (m * t) as f64 / nt as f64;
                acc += Complex64::from_polar(1.0 / nt as f64, phase);
            }
            data[[0, 0, t]] = acc;
        }
        let phasor = phasor_from(data, &grid);

        let vol = rsd_propagate(&phasor, &geom, &w).unwrap();
        let direct = rsd_propagate_direct(&phasor, &geom, &w).unwrap();

        // Voxel center: lateral = scan point, depth = midpoint of [0.4, 1.2].
        let r = geom.plane_z(0);
        let mut expect = Complex64::default();
        for &m in &retained {
            expect += Complex64::from_polar(1.0 / r, w.wavenumber(m) * r);
        }
        assert!((vol.values[[0, 0, 0]] - expect).norm() < 1e-9 * expect.norm());
        assert!((direct.values[[0, 0, 0]] - expect).norm() < 1e-12 * expect.norm());
    }

    #[test]
    fn fast_path_matches_direct_oracle() {
        // Pseudo-random phasor volume on an 8x8 aperture, 8^3 voxels.
        let nt = 64;
        let n = 8;
        let grid = ApertureGrid::centered(n, n, 0.8).unwrap();
        let geom = ReconGeometry::new(n, n, 8, 0.3, 1.1).unwrap();
        let w = window_for(nt, 10.0, 2.0);
        assert!(w.retained_count() <= 8);

        let mut state = 0x1234_5678u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut data = Array3::<Complex64>::default((n, n, nt));
        for v in data.iter_mut() {
            *v = Complex64::new(next(), next());
        }
        let phasor = phasor_from(data, &grid);

        let fast = rsd_propagate(&phasor, &geom, &w).unwrap();
        let direct = rsd_propagate_direct(&phasor, &geom, &w).unwrap();
        let num: f64 = (&fast.values - &direct.values)
            .iter()
            .map(|v| v.norm_sqr())
            .sum();
        let den: f64 = direct.values.iter().map(|v| v.norm_sqr()).sum();
        assert!((num / den).sqrt() < 1e-10, "rel l2 {}", (num / den).sqrt());
    }

    #[test]
    fn propagation_is_linear() {
        let nt = 64;
        let n = 6;
        let grid = ApertureGrid::centered(n, n, 0.8).unwrap();
        let geom = ReconGeometry::new(n, n, 4, 0.3, 0.9).unwrap();
        let w = window_for(nt, 10.0, 2.0);

        let mut state = 77u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut a = Array3::<Complex64>::default((n, n, nt));
        let mut b = Array3::<Complex64>::default((n, n, nt));
        for v in a.iter_mut() {
            *v = Complex64::new(next(), next());
        }
        for v in b.iter_mut() {
            *v = Complex64::new(next(), next());
        }
        let sum = &a + &b;

        let va = rsd_propagate(&phasor_from(a, &grid), &geom, &w).unwrap();
        let vb = rsd_propagate(&phasor_from(b, &grid), &geom, &w).unwrap();
        let vs = rsd_propagate(&phasor_from(sum, &grid), &geom, &w).unwrap();
        let lin = &va.values + &vb.values;
        let num: f64 = (&vs.values - &lin).iter().map(|v| v.norm_sqr()).sum();
        let den: f64 = lin.iter().map(|v| v.norm_sqr()).sum();
        assert!((num / den).sqrt() < 1e-10);
    }

    #[test]
    fn adjoint_satisfies_dot_product_identity() {
        // Re<A x, y> == Re<x, A^H y> for the real-pair inner product.
        let nt = 32;
        let n = 4;
        let grid = ApertureGrid::centered(n, n, 0.5).unwrap();
        let geom = ReconGeometry::new(n, n, 3, 0.3, 0.8).unwrap();
        let w = window_for(nt, 6.0, 1.5);

        let mut state = 999u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut x = Array3::<Complex64>::default((n, n, nt));
        for v in x.iter_mut() {
            *v = Complex64::new(next(), next());
        }
        let mut y = Array3::<Complex64>::default((n, n, geom.nvz));
        for v in y.iter_mut() {
            *v = Complex64::new(next(), next());
        }

        let phasor = phasor_from(x.clone(), &grid);
        let ax = rsd_propagate(&phasor, &geom, &w).unwrap();
        let aty = rsd_adjoint(&y, &phasor, &geom, &w).unwrap();

        let lhs: f64 = ax
            .values
            .iter()
            .zip(y.iter())
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum();
        let rhs: f64 = x
            .iter()
            .zip(aty.iter())
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum();
        assert!(
            (lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0),
            "lhs {lhs} rhs {rhs}"
        );
    }

    #[test]
    fn non_positive_depth_is_rejected() {
        let grid = ApertureGrid::centered(3, 3, 1.0).unwrap();
        let geom = ReconGeometry::new(3, 3, 2, 0.0, 1.0).unwrap();
        let w = window_for(64, 8.0, 2.0);
        let phasor = phasor_from(Array3::default((3, 3, 64)), &grid);
        assert!(matches!(
            rsd_propagate(&phasor, &geom, &w),
            Err(Error::NonPositiveDepth { .. })
        ));
    }
}
