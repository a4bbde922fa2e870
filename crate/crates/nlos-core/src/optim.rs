//! Training loss, the gradient-descent loop over the learnable parameters,
//! and an independent finite-difference gradient checker.
//!
//! The loss is the mean-squared intensity error plus a lambda-weighted
//! mean-squared depth error (lambda defaults to 1). The trainer runs plain
//! gradient descent or an adaptive-moment optimizer (first/second moment
//! estimates with bias correction) with a multiplicative learning-rate decay
//! per epoch. Compensation logits are shared across the dataset; the window
//! width is learned per measurement.

use ndarray::{Array2, Array3};

use crate::apf::ApfParams;
use crate::error::{shape_mismatch, Error, Result};
use crate::geometry::{distance_grid, ApertureGrid};
use crate::lpc::{compensation_weights, LpcParams};
use crate::noise::{add_spad_noise, NoiseConfig};
use crate::pipeline::{check_sample, grad, scene_ground_truth, PipelineConfig, Sample};
use crate::phasor::IlluminationSpec;
use crate::transient::{render_transient, Scene};

/// Loss balance between the intensity and depth terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda: 1.0 }
    }
}

/// `L = L_I + lambda * L_D`, both mean-squared errors. Returns
/// `(L, L_I, L_D)`.
pub fn total_loss(
    intensity_ref: &Array2<f64>,
    intensity_test: &Array2<f64>,
    depth_ref: &Array2<f64>,
    depth_test: &Array2<f64>,
    w: &LossWeights,
) -> Result<(f64, f64, f64)> {
    let dims = [
        intensity_ref.dim(),
        intensity_test.dim(),
        depth_ref.dim(),
        depth_test.dim(),
    ];
    if dims.iter().any(|&d| d != dims[0]) {
        return Err(shape_mismatch(format!("image shapes disagree: {dims:?}")));
    }
    let n = intensity_ref.len() as f64;
    let mse = |a: &Array2<f64>, b: &Array2<f64>| -> f64 {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / n
    };
    let li = mse(intensity_ref, intensity_test);
    let ld = mse(depth_ref, depth_test);
    Ok((li + w.lambda * ld, li, ld))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    PlainGd,
    AdaptiveMoment,
}

/// Trainer settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Multiplicative learning-rate decay applied once per epoch.
    pub lr_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 6e-5,
            epochs: 50,
            optimizer: OptimizerKind::AdaptiveMoment,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            lr_decay: 0.95,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidParameter(
                "training needs at least one epoch".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub loss_intensity: f64,
    pub loss_depth: f64,
}

/// Training outcome: the best-loss checkpoint plus the final parameters and
/// the per-epoch history.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub lpc: LpcParams,
    pub apf: Vec<ApfParams>,
    pub final_lpc: LpcParams,
    pub final_apf: Vec<ApfParams>,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], cfg: &TrainConfig, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
}

/// Renders and corrupts the scenes of a dataset into training samples.
///
/// Each entry pairs a scene with an optional SNR in dB; when present, the
/// clean rendering is corrupted with the counting model seeded by
/// `seed + sample index`. Supervision images are built from the scene.
pub fn prepare_samples(
    dataset: &[(Scene, Option<f64>)],
    grid: &ApertureGrid,
    nt: usize,
    bin_width_s: f64,
    pipe: &PipelineConfig,
    seed: u64,
) -> Result<Vec<Sample>> {
    if dataset.is_empty() {
        return Err(Error::InvalidParameter(
            "training dataset must be non-empty".into(),
        ));
    }
    let dg = distance_grid(nt, bin_width_s)?;
    let comp = compensation_weights(&dg);
    let mut samples = Vec::with_capacity(dataset.len());
    for (i, (scene, snr_db)) in dataset.iter().enumerate() {
        let clean = render_transient(scene, grid, nt, bin_width_s)?;
        let measurement = match snr_db {
            Some(snr) => {
                let cfg = NoiseConfig::from_snr(&clean, *snr, seed.wrapping_add(i as u64))?;
                add_spad_noise(&clean, &cfg)?
            }
            None => clean,
        };
        let (gt_intensity, gt_depth) = scene_ground_truth(scene, &pipe.geom, grid)?;
        samples.push(Sample {
            measurement,
            gt_intensity,
            gt_depth,
            comp: comp.clone(),
        });
    }
    Ok(samples)
}

/// Gradient-descent training over shared compensation logits and per-sample
/// window widths. Pure function of its inputs: identical inputs produce
/// bit-identical reports.
pub fn train(samples: &[Sample], cfg: &TrainConfig, pipe: &PipelineConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidParameter(
            "training dataset must be non-empty".into(),
        ));
    }
    for s in samples {
        check_sample(s, pipe)?;
    }
    let (nx, ny) = (samples[0].measurement.nx(), samples[0].measurement.ny());
    let bin_width = samples[0].measurement.bin_width_s;

    let mut lpc = LpcParams::zeros(nx, ny);
    // Start each window at the fixed-width default so improvements are
    // attributable to adaptation.
    let default_sigma = IlluminationSpec::default_sigma(
        2.0 * std::f64::consts::PI * (crate::geometry::SPEED_OF_LIGHT / 2.0) / pipe.omega_c,
    );
    let apf0 = ApfParams::from_sigma(default_sigma, bin_width)?;
    let mut apf: Vec<ApfParams> = vec![apf0; samples.len()];

    let mut lpc_opt = AdamState::new(lpc.logits.len());
    let mut apf_opt: Vec<AdamState> = (0..samples.len()).map(|_| AdamState::new(1)).collect();

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best_epoch = 0usize;
    let mut best_loss = f64::INFINITY;
    let mut best_lpc = lpc.clone();
    let mut best_apf = apf.clone();

    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate * cfg.lr_decay.powi(epoch as i32);
        let mut sum_loss = 0.0;
        let mut sum_li = 0.0;
        let mut sum_ld = 0.0;
        for (si, sample) in samples.iter().enumerate() {
            let (eval, g_logits, g_s) = grad(sample, &lpc, &apf[si], pipe)?;
            if !eval.loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            sum_loss += eval.loss;
            sum_li += eval.loss_intensity;
            sum_ld += eval.loss_depth;

            match cfg.optimizer {
                OptimizerKind::PlainGd => {
                    for (p, g) in lpc.logits.iter_mut().zip(g_logits.iter()) {
                        *p -= lr * g;
                    }
                    apf[si].s -= lr * g_s;
                }
                OptimizerKind::AdaptiveMoment => {
                    let grads: Vec<f64> = g_logits.iter().cloned().collect();
                    lpc_opt.step(
                        lpc.logits.as_slice_mut().expect("c-order logits"),
                        &grads,
                        cfg,
                        lr,
                    );
                    let mut s = [apf[si].s];
                    apf_opt[si].step(&mut s, &[g_s], cfg, lr);
                    apf[si].s = s[0];
                }
            }
        }
        let n = samples.len() as f64;
        let stats = EpochStats {
            epoch,
            loss: sum_loss / n,
            loss_intensity: sum_li / n,
            loss_depth: sum_ld / n,
        };
        history.push(stats);
        if stats.loss < best_loss {
            best_loss = stats.loss;
            best_epoch = epoch;
            best_lpc = lpc.clone();
            best_apf = apf.clone();
        }
    }

    Ok(TrainReport {
        lpc: best_lpc,
        apf: best_apf,
        final_lpc: lpc,
        final_apf: apf,
        history,
        best_epoch,
    })
}

/// Central finite differences against an analytic gradient; returns the
/// maximum relative discrepancy `|analytic - fd| / (|fd| + 1e-12)` over all
/// coordinates.
pub fn finite_diff_check(
    mut f: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    analytic: &[f64],
    eps: f64,
) -> f64 {
    assert!(eps > 0.0);
    assert_eq!(params.len(), analytic.len());
    let mut work = params.to_vec();
    let mut max_rel = 0.0f64;
    for i in 0..params.len() {
        let orig = work[i];
        work[i] = orig + eps;
        let plus = f(&work);
        work[i] = orig - eps;
        let minus = f(&work);
        work[i] = orig;
        let fd = (plus - minus) / (2.0 * eps);
        let rel = (analytic[i] - fd).abs() / (fd.abs() + 1e-12);
        max_rel = max_rel.max(rel);
    }
    max_rel
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn loss_identities() {
        let i = Array2::from_elem((4, 4), 0.3);
        let d = Array2::from_elem((4, 4), 1.2);
        let w = LossWeights::default();
        assert_eq!(w.lambda, 1.0);
        let (l, li, ld) = total_loss(&i, &i, &d, &d, &w).unwrap();
        assert_eq!((l, li, ld), (0.0, 0.0, 0.0));

        let zeros = Array2::zeros((4, 4));
        let ones = Array2::from_elem((4, 4), 1.0);
        let (l, ..) = total_loss(&zeros, &ones, &zeros, &zeros, &LossWeights { lambda: 0.0 })
            .unwrap();
        assert_eq!(l, 1.0);

        let twos = Array2::from_elem((4, 4), 2.0);
        let (l, li, ld) = total_loss(&zeros, &ones, &zeros, &twos, &w).unwrap();
        assert_eq!((l, li, ld), (5.0, 1.0, 4.0));
    }

    #[test]
    fn loss_is_symmetric_and_nonnegative() {
        let mut state = 5u64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let a = Array2::from_shape_fn((5, 5), |_| next());
        let b = Array2::from_shape_fn((5, 5), |_| next());
        let d = Array2::zeros((5, 5));
        let w = LossWeights::default();
        let (lab, ..) = total_loss(&a, &b, &d, &d, &w).unwrap();
        let (lba, ..) = total_loss(&b, &a, &d, &d, &w).unwrap();
        assert_eq!(lab, lba);
        assert!(lab > 0.0);
    }

    #[test]
    fn loss_shape_mismatch() {
        let a = Array2::zeros((4, 4));
        let b = Array2::zeros((4, 5));
        assert!(total_loss(&a, &b, &a, &a, &LossWeights::default()).is_err());
    }

    #[test]
    fn finite_diff_check_on_polynomials() {
        // f(x) = x^2 at x = 1: central differences are exact up to roundoff.
        let err = finite_diff_check(|p| p[0] * p[0], &[1.0], &[2.0], 1e-5);
        assert!(err < 1e-8, "relative error {err}");

        // Constant function: both sides are zero.
        let err = finite_diff_check(|_| 3.5, &[0.7, -0.1], &[0.0, 0.0], 1e-5);
        assert_eq!(err, 0.0);
    }

    #[test]
    fn finite_diff_check_flags_wrong_gradient() {
        let err = finite_diff_check(|p| p[0] * p[0], &[1.0], &[1.0], 1e-5);
        assert!(err > 0.4);
    }
}
