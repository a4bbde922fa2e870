//! Scene description and the clean confocal forward model.
//!
//! A scene is a set of isotropically scattering points. Each point deposits
//! `albedo / r^z` photons into the temporal bin matching its round trip,
//! where `z` is the per-surface radiometric fall-off exponent (about 2 for
//! retro-reflective material, about 4 for diffuse material). No
//! inter-reflections, occlusions, or angular factors are modeled.

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{shape_mismatch, Error, Result};
use crate::geometry::{euclidean, ApertureGrid, ReconGeometry, SPEED_OF_LIGHT};

/// One scattering point of the hidden scene.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePoint {
    /// Position in meters; must be behind the wall plane (z > 0).
    pub position_m: [f64; 3],
    /// Reflectance scale, >= 0.
    pub albedo: f64,
    /// Radiometric fall-off exponent, in (0, 8].
    pub falloff_exponent: f64,
}

impl ScenePoint {
    pub fn new(position_m: [f64; 3], albedo: f64, falloff_exponent: f64) -> Result<Self> {
        if !(position_m[2] > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "scene point must lie in the hidden half-space z > 0, got z = {}",
                position_m[2]
            )));
        }
        if !(albedo >= 0.0) || !albedo.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "albedo must be finite and >= 0, got {albedo}"
            )));
        }
        if !(falloff_exponent > 0.0 && falloff_exponent <= 8.0) {
            return Err(Error::InvalidParameter(format!(
                "fall-off exponent must be in (0, 8], got {falloff_exponent}"
            )));
        }
        Ok(Self {
            position_m,
            albedo,
            falloff_exponent,
        })
    }
}

/// Hidden scene: a named collection of scattering points.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub name: String,
    pub points: Vec<ScenePoint>,
}

impl Scene {
    pub fn new(name: impl Into<String>, points: Vec<ScenePoint>) -> Self {
        Self {
            name: name.into(),
            points,
        }
    }

    /// Checks that every point falls inside the voxelized bounds used for
    /// supervision.
    pub fn check_within(&self, geom: &ReconGeometry, grid: &ApertureGrid) -> Result<()> {
        let (xs, ys, _) = crate::geometry::voxel_axes(geom, grid);
        let hx = grid.spacing_x() / 2.0;
        let hy = grid.spacing_y() / 2.0;
        for (i, p) in self.points.iter().enumerate() {
            let [x, y, z] = p.position_m;
            let x_ok = x >= xs[0] - hx && x <= xs[xs.len() - 1] + hx;
            let y_ok = y >= ys[0] - hy && y <= ys[ys.len() - 1] + hy;
            let z_ok = z >= geom.z_min_m && z <= geom.z_max_m;
            if !(x_ok && y_ok && z_ok) {
                return Err(Error::InvalidParameter(format!(
                    "scene point {i} at ({x}, {y}, {z}) lies outside the reconstruction bounds"
                )));
            }
        }
        Ok(())
    }
}

/// What a transient volume holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolumeKind {
    /// Noise-free expected photon intensity, >= 0.
    CleanReal,
    /// Poisson photon counts, non-negative integers.
    NoisyCounts,
    /// Complex phasor field after virtual illumination.
    ComplexPhasor,
}

#[derive(Debug, Clone, PartialEq)]
pub enum VolumeData {
    Real(Array3<f64>),
    Complex(Array3<Complex64>),
}

impl VolumeData {
    pub fn dim(&self) -> (usize, usize, usize) {
        match self {
            VolumeData::Real(a) => a.dim(),
            VolumeData::Complex(a) => a.dim(),
        }
    }
}

/// Time-resolved photon histogram (or phasor field) over the scan aperture,
/// indexed `(ix, iy, it)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransientVolume {
    pub data: VolumeData,
    pub bin_width_s: f64,
    pub aperture: ApertureGrid,
    pub kind: VolumeKind,
}

impl TransientVolume {
    pub fn new(
        data: VolumeData,
        bin_width_s: f64,
        aperture: ApertureGrid,
        kind: VolumeKind,
    ) -> Result<Self> {
        let (nx, ny, nt) = data.dim();
        if nx != aperture.nx() || ny != aperture.ny() {
            return Err(shape_mismatch(format!(
                "data is {nx}x{ny} scan points but the aperture grid is {}x{}",
                aperture.nx(),
                aperture.ny()
            )));
        }
        if nt < 8 {
            return Err(Error::InvalidParameter(format!(
                "transient volume needs at least 8 temporal bins, got {nt}"
            )));
        }
        if !(bin_width_s > 0.0) || !bin_width_s.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "bin width must be positive and finite, got {bin_width_s}"
            )));
        }
        match (&data, kind) {
            (VolumeData::Real(a), VolumeKind::CleanReal) => {
                if a.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                    return Err(Error::InvalidParameter(
                        "clean volume entries must be finite and >= 0".into(),
                    ));
                }
            }
            (VolumeData::Real(a), VolumeKind::NoisyCounts) => {
                if a.iter().any(|&v| v < 0.0 || v.fract() != 0.0 || !v.is_finite()) {
                    return Err(Error::InvalidParameter(
                        "count volume entries must be non-negative integers".into(),
                    ));
                }
            }
            (VolumeData::Complex(_), VolumeKind::ComplexPhasor) => {}
            _ => {
                return Err(Error::InvalidParameter(
                    "volume kind does not match its payload type".into(),
                ));
            }
        }
        Ok(Self {
            data,
            bin_width_s,
            aperture,
            kind,
        })
    }

    pub fn nx(&self) -> usize {
        self.data.dim().0
    }

    pub fn ny(&self) -> usize {
        self.data.dim().1
    }

    pub fn nt(&self) -> usize {
        self.data.dim().2
    }

    pub fn as_real(&self) -> Result<&Array3<f64>> {
        match &self.data {
            VolumeData::Real(a) => Ok(a),
            VolumeData::Complex(_) => Err(shape_mismatch(
                "expected a real-valued transient volume, got a complex phasor volume",
            )),
        }
    }

    pub fn as_complex(&self) -> Result<&Array3<Complex64>> {
        match &self.data {
            VolumeData::Complex(a) => Ok(a),
            VolumeData::Real(_) => Err(shape_mismatch(
                "expected a complex phasor volume, got a real-valued volume",
            )),
        }
    }

    /// Max-projection image over time, used for quick looks and masks.
    pub fn max_over_time(&self) -> Array2<f64> {
        let (nx, ny, _) = self.data.dim();
        let mut out = Array2::zeros((nx, ny));
        match &self.data {
            VolumeData::Real(a) => {
                for ((ix, iy, _), &v) in a.indexed_iter() {
                    if v > out[[ix, iy]] {
                        out[[ix, iy]] = v;
                    }
                }
            }
            VolumeData::Complex(a) => {
                for ((ix, iy, _), v) in a.indexed_iter() {
                    let m = v.norm();
                    if m > out[[ix, iy]] {
                        out[[ix, iy]] = m;
                    }
                }
            }
        }
        out
    }
}

/// Renders the noise-free confocal transients of a scene.
///
/// For every scan point the distance to each scene point is clamped below by
/// half the lateral scan spacing (degenerate coincident geometry would
/// otherwise blow up the `1/r^z` term), the round trip is quantized to the
/// nearest-lower bin, and `albedo / r^z` is accumulated there. The result is
/// linear in albedo and additive over scene points.
pub fn render_transient(
    scene: &Scene,
    grid: &ApertureGrid,
    nt: usize,
    bin_width_s: f64,
) -> Result<TransientVolume> {
    if scene.points.is_empty() {
        return Err(Error::InvalidParameter(
            "cannot render an empty scene".into(),
        ));
    }
    if nt < 8 {
        return Err(Error::InvalidParameter(format!(
            "transient volume needs at least 8 temporal bins, got {nt}"
        )));
    }
    if !(bin_width_s > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "bin width must be positive, got {bin_width_s}"
        )));
    }

    let nx = grid.nx();
    let ny = grid.ny();
    let r_floor = 0.5 * grid.spacing_x().min(grid.spacing_y());
    let max_one_way = SPEED_OF_LIGHT * nt as f64 * bin_width_s / 2.0;

    let slices: Vec<Result<Vec<f64>>> = (0..nx * ny)
        .into_par_iter()
        .map(|flat| {
            let ix = flat / ny;
            let iy = flat % ny;
            let xs = grid.position(ix, iy);
            let mut bins = vec![0.0f64; nt];
            for (pi, p) in scene.points.iter().enumerate() {
                let r = euclidean(p.position_m, xs).max(r_floor);
                let k = ((2.0 * r) / (SPEED_OF_LIGHT * bin_width_s)).floor() as usize;
                if k >= nt {
                    return Err(Error::OutOfRange {
                        index: pi,
                        required_m: r,
                        available_m: max_one_way,
                    });
                }
                bins[k] += p.albedo / r.powf(p.falloff_exponent);
            }
            Ok(bins)
        })
        .collect();

    let mut data = Array3::zeros((nx, ny, nt));
    {
        let flat = data.as_slice_mut().expect("freshly allocated c-order array");
        for (i, s) in slices.into_iter().enumerate() {
            let s = s?;
            flat[i * nt..(i + 1) * nt].copy_from_slice(&s);
        }
    }
    TransientVolume::new(
        VolumeData::Real(data),
        bin_width_s,
        grid.clone(),
        VolumeKind::CleanReal,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const DT: f64 = 33e-12;

    #[test]
    fn zero_albedo_scene_renders_all_zero() {
        let grid = ApertureGrid::centered(4, 4, 1.0).unwrap();
        let scene = Scene::new(
            "dark",
            vec![ScenePoint::new([0.0, 0.0, 0.5], 0.0, 2.0).unwrap()],
        );
        let tv = render_transient(&scene, &grid, 512, DT).unwrap();
        assert!(tv.as_real().unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_distance_point_deposits_unit_intensity() {
        // Single scan point at the origin, target 1 m straight ahead.
        let grid = ApertureGrid::new(1, 1, 1.0, [0.0, 0.0, 0.0]).unwrap();
        let scene = Scene::new(
            "unit",
            vec![ScenePoint::new([0.0, 0.0, 1.0], 1.0, 2.0).unwrap()],
        );
        let tv = render_transient(&scene, &grid, 512, DT).unwrap();
        let data = tv.as_real().unwrap();
        let k = ((2.0) / (SPEED_OF_LIGHT * DT)).floor() as usize;
        assert_eq!(data[[0, 0, k]], 1.0);
        let total: f64 = data.iter().sum();
        assert_eq!(total, 1.0);
    }

    #[test]
    fn quartic_falloff_at_two_meters() {
        let grid = ApertureGrid::new(1, 1, 1.0, [0.0, 0.0, 0.0]).unwrap();
        let scene = Scene::new(
            "far",
            vec![ScenePoint::new([0.0, 0.0, 2.0], 1.0, 4.0).unwrap()],
        );
        let tv = render_transient(&scene, &grid, 512, DT).unwrap();
        let data = tv.as_real().unwrap();
        let k = ((4.0) / (SPEED_OF_LIGHT * DT)).floor() as usize;
        assert_eq!(k, 404);
        assert!((data[[0, 0, 404]] - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn rendering_is_linear_over_scenes() {
        let grid = ApertureGrid::centered(5, 5, 1.0).unwrap();
        let a = Scene::new(
            "a",
            vec![ScenePoint::new([0.1, -0.2, 0.8], 0.7, 2.0).unwrap()],
        );
        let b = Scene::new(
            "b",
            vec![
                ScenePoint::new([-0.3, 0.0, 1.1], 1.3, 4.0).unwrap(),
                ScenePoint::new([0.2, 0.2, 0.6], 0.4, 1.0).unwrap(),
            ],
        );
        let mut both = a.points.clone();
        both.extend(b.points.clone());
        let union = Scene::new("ab", both);

        let ra = render_transient(&a, &grid, 512, DT).unwrap();
        let rb = render_transient(&b, &grid, 512, DT).unwrap();
        let ru = render_transient(&union, &grid, 512, DT).unwrap();
        let sum = ra.as_real().unwrap() + rb.as_real().unwrap();
        assert_eq!(&sum, ru.as_real().unwrap());
    }

    #[test]
    fn falloff_law_between_two_scan_points() {
        // One target seen from two scan points at different distances; the
        // deposited intensities must follow (r2/r1)^z exactly.
        let grid = ApertureGrid::new(2, 1, 1.0, [0.0, 0.0, 0.0]).unwrap();
        let z = 4.0;
        let p = [0.0, 0.0, 0.9];
        let scene = Scene::new("ratio", vec![ScenePoint::new(p, 1.0, z).unwrap()]);
        let tv = render_transient(&scene, &grid, 512, DT).unwrap();
        let data = tv.as_real().unwrap();
        let r1 = euclidean(p, grid.position(0, 0));
        let r2 = euclidean(p, grid.position(1, 0));
        let i1: f64 = data.index_axis(ndarray::Axis(0), 0).iter().sum();
        let i2: f64 = data.index_axis(ndarray::Axis(0), 1).iter().sum();
        let measured = i1 / i2;
        let expected = (r2 / r1).powf(z);
        assert!(
            ((measured - expected) / expected).abs() < 1e-12,
            "ratio {measured} vs {expected}"
        );
    }

    #[test]
    fn out_of_range_point_is_reported() {
        let grid = ApertureGrid::centered(2, 2, 1.0).unwrap();
        let scene = Scene::new(
            "far",
            vec![
                ScenePoint::new([0.0, 0.0, 0.5], 1.0, 2.0).unwrap(),
                ScenePoint::new([0.0, 0.0, 50.0], 1.0, 2.0).unwrap(),
            ],
        );
        match render_transient(&scene, &grid, 64, DT) {
            Err(Error::OutOfRange { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected OutOfRange, got {other:?}"),
        }
    }

    #[test]
    fn scene_point_validation() {
        assert!(ScenePoint::new([0.0, 0.0, -1.0], 1.0, 2.0).is_err());
        assert!(ScenePoint::new([0.0, 0.0, 1.0], -0.1, 2.0).is_err());
        assert!(ScenePoint::new([0.0, 0.0, 1.0], 1.0, 0.0).is_err());
        assert!(ScenePoint::new([0.0, 0.0, 1.0], 1.0, 9.0).is_err());
    }

    #[test]
    fn volume_kind_payload_consistency() {
        let grid = ApertureGrid::centered(2, 2, 1.0).unwrap();
        let counts = Array3::from_elem((2, 2, 8), 1.5);
        assert!(TransientVolume::new(
            VolumeData::Real(counts),
            DT,
            grid.clone(),
            VolumeKind::NoisyCounts
        )
        .is_err());
        let clean = Array3::from_elem((2, 2, 8), -1.0);
        assert!(TransientVolume::new(
            VolumeData::Real(clean),
            DT,
            grid,
            VolumeKind::CleanReal
        )
        .is_err());
    }
}
