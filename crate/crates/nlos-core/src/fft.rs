//! Thin FFT helpers on top of rustfft.
//!
//! Conventions: `fft_inplace` is the unnormalized forward transform
//! `X[m] = sum_t x[t] exp(-j 2 pi m t / n)`; `ifft_inplace` divides by n so
//! that the two compose to the identity.

use std::cell::RefCell;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub fn fft_inplace(buf: &mut [Complex64]) {
    PLANNER.with(|p| {
        let fft = p.borrow_mut().plan_fft_forward(buf.len());
        fft.process(buf);
    });
}

pub fn ifft_inplace(buf: &mut [Complex64]) {
    PLANNER.with(|p| {
        let fft = p.borrow_mut().plan_fft_inverse(buf.len());
        fft.process(buf);
    });
    let scale = 1.0 / buf.len() as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

/// Smallest power of two >= n. The padded convolutions only need
/// "big enough"; powers of two keep the transforms on the fast path.
pub fn pad_size(n: usize) -> usize {
    n.next_power_of_two()
}

/// In-place 2-D FFT of a row-major `w x h` buffer (`buf[x * h + y]`).
fn fft2_inplace(buf: &mut [Complex64], w: usize, h: usize, inverse: bool) {
    debug_assert_eq!(buf.len(), w * h);
    // Rows (contiguous along y).
    for row in buf.chunks_exact_mut(h) {
        if inverse {
            ifft_inplace(row);
        } else {
            fft_inplace(row);
        }
    }
    // Columns (strided along x).
    let mut col = vec![Complex64::default(); w];
    for y in 0..h {
        for x in 0..w {
            col[x] = buf[x * h + y];
        }
        if inverse {
            ifft_inplace(&mut col);
        } else {
            fft_inplace(&mut col);
        }
        for x in 0..w {
            buf[x * h + y] = col[x];
        }
    }
}

/// Zero-padded 2-D linear convolution used by the plane-wise propagation.
///
/// `a` is the aperture field (na_x x na_y), `kernel` is the pre-shifted
/// spherical kernel of size (na_x + nout_x - 1) x (na_y + nout_y - 1) where
/// entry `[u, v]` holds the kernel at lattice offset
/// `(u - (na_x - 1), v - (na_y - 1))`. The returned array is the linear
/// convolution evaluated at output offsets `0..nout`, i.e.
///
/// `out[i, j] = sum_{a,b} a[a, b] * kernel_at(i - a, j - b)`.
///
/// The pad size `>= na + nout - 1` per axis guarantees the circular
/// wrap-around lands outside the read window.
pub struct PlaneConv {
    pub pw: usize,
    pub ph: usize,
    na_x: usize,
    na_y: usize,
    nout_x: usize,
    nout_y: usize,
}

impl PlaneConv {
    pub fn new(na_x: usize, na_y: usize, nout_x: usize, nout_y: usize) -> Self {
        let pw = pad_size(na_x + nout_x - 1);
        let ph = pad_size(na_y + nout_y - 1);
        Self {
            pw,
            ph,
            na_x,
            na_y,
            nout_x,
            nout_y,
        }
    }

    pub fn kernel_w(&self) -> usize {
        self.na_x + self.nout_x - 1
    }

    pub fn kernel_h(&self) -> usize {
        self.na_y + self.nout_y - 1
    }

    /// FFT of the zero-padded aperture field, reusable across depth planes.
    pub fn transform_field(&self, field: &Array2<Complex64>) -> Vec<Complex64> {
        debug_assert_eq!(field.dim(), (self.na_x, self.na_y));
        let mut buf = vec![Complex64::default(); self.pw * self.ph];
        for ((x, y), v) in field.indexed_iter() {
            buf[x * self.ph + y] = *v;
        }
        fft2_inplace(&mut buf, self.pw, self.ph, false);
        buf
    }

    /// FFT of the zero-padded shifted kernel.
    pub fn transform_kernel(&self, kernel: &[Complex64]) -> Vec<Complex64> {
        debug_assert_eq!(kernel.len(), self.kernel_w() * self.kernel_h());
        let mut buf = vec![Complex64::default(); self.pw * self.ph];
        let kh = self.kernel_h();
        for u in 0..self.kernel_w() {
            for v in 0..kh {
                buf[u * self.ph + v] = kernel[u * kh + v];
            }
        }
        fft2_inplace(&mut buf, self.pw, self.ph, false);
        buf
    }

    /// Multiply spectra, invert, and read the linear-convolution window at
    /// offset `(na_x - 1, na_y - 1)`, accumulating into `out` scaled by
    /// `scale`.
    pub fn accumulate_product(
        &self,
        field_hat: &[Complex64],
        kernel_hat: &[Complex64],
        out: &mut Array2<Complex64>,
        scale: Complex64,
    ) {
        debug_assert_eq!(out.dim(), (self.nout_x, self.nout_y));
        let mut prod: Vec<Complex64> = field_hat
            .iter()
            .zip(kernel_hat.iter())
            .map(|(a, b)| a * b)
            .collect();
        fft2_inplace(&mut prod, self.pw, self.ph, true);
        let off_x = self.na_x - 1;
        let off_y = self.na_y - 1;
        for ((i, j), o) in out.indexed_iter_mut() {
            *o += scale * prod[(i + off_x) * self.ph + (j + off_y)];
        }
    }
}
