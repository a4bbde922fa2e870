//! Confocal non-line-of-sight (NLOS) imaging toolkit.
//!
//! The crate simulates time-resolved single-photon measurements of a hidden
//! scene observed through a diffuse relay wall, and reconstructs the scene by
//! treating the filtered transients as a virtual wave field propagated with
//! the Rayleigh-Sommerfeld diffraction integral.
//!
//! Pipeline:
//!
//! ```text
//! Scene -> render_transient -> add_spad_noise        (forward simulation)
//!       -> path compensation (fixed or learned)      (lpc)
//!       -> Gaussian-windowed virtual illumination    (phasor / apf)
//!       -> RSD propagation into the hidden volume    (rsd)
//!       -> intensity / depth views                   (render)
//! ```
//!
//! Both the per-scan-point compensation mixture and the spectral window
//! width are differentiable parameters; `pipeline` and `optim` provide the
//! hand-derived gradients and a small training loop over them.

pub mod apf;
pub mod error;
pub mod fft;
pub mod geometry;
pub mod io;
pub mod lpc;
pub mod metrics;
pub mod noise;
pub mod optim;
pub mod phasor;
pub mod pipeline;
pub mod render;
pub mod rsd;
pub mod transient;

pub use error::{Error, Result};
pub use geometry::{distance_grid, ApertureGrid, DistanceGrid, ReconGeometry, SPEED_OF_LIGHT};
pub use transient::{Scene, ScenePoint, TransientVolume, VolumeData, VolumeKind};
