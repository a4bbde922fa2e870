//! Scan grids, reconstruction volumes, and the time-of-flight distance axis.
//!
//! Conventions used everywhere in the crate:
//! - the relay wall is the plane z = 0, the hidden volume lives at z > 0;
//! - illumination and detection are collocated (confocal scanning), so a
//!   photon arriving in temporal bin k has travelled a round trip of
//!   (k + 0.5) * bin_width seconds, i.e. a one-way distance of
//!   c * (k + 0.5) * bin_width / 2;
//! - the half-bin offset keeps bin 0 at a strictly positive distance and
//!   makes the quantization error symmetric.

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

/// Regular lattice of confocal scan points on the relay wall (z = 0).
///
/// `spacing = extent / (n - 1)` along each axis, so the first and last scan
/// points sit exactly on the edges of the scanned area. Degenerate single-row
/// grids (`n = 1`) are permitted for point-detector style tests; their
/// nominal spacing is the full extent.
#[derive(Debug, Clone, PartialEq)]
pub struct ApertureGrid {
    nx: usize,
    ny: usize,
    extent_m: f64,
    origin_m: [f64; 3],
}

impl ApertureGrid {
    pub fn new(nx: usize, ny: usize, extent_m: f64, origin_m: [f64; 3]) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidParameter(format!(
                "aperture grid needs at least one scan point per axis, got {nx}x{ny}"
            )));
        }
        if !(extent_m > 0.0) || !extent_m.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "aperture extent must be positive and finite, got {extent_m}"
            )));
        }
        if origin_m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "aperture origin must be finite".into(),
            ));
        }
        Ok(Self {
            nx,
            ny,
            extent_m,
            origin_m,
        })
    }

    /// Grid of `nx` x `ny` points centered on the z-axis.
    pub fn centered(nx: usize, ny: usize, extent_m: f64) -> Result<Self> {
        Self::new(nx, ny, extent_m, [-extent_m / 2.0, -extent_m / 2.0, 0.0])
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn extent_m(&self) -> f64 {
        self.extent_m
    }

    pub fn origin_m(&self) -> [f64; 3] {
        self.origin_m
    }

    fn axis_spacing(&self, n: usize) -> f64 {
        if n > 1 {
            self.extent_m / (n - 1) as f64
        } else {
            self.extent_m
        }
    }

    pub fn spacing_x(&self) -> f64 {
        self.axis_spacing(self.nx)
    }

    pub fn spacing_y(&self) -> f64 {
        self.axis_spacing(self.ny)
    }

    /// Scan point for lattice index (ix, iy); all points lie on z = 0.
    pub fn position(&self, ix: usize, iy: usize) -> [f64; 3] {
        debug_assert!(ix < self.nx && iy < self.ny);
        [
            self.origin_m[0] + ix as f64 * self.spacing_x(),
            self.origin_m[1] + iy as f64 * self.spacing_y(),
            self.origin_m[2],
        ]
    }

    /// All scan positions in row-major order: iy outer, ix inner.
    pub fn scan_positions(&self) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(self.nx * self.ny);
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                out.push(self.position(ix, iy));
            }
        }
        out
    }

    /// Geometric center of the scanned area (on the wall plane).
    pub fn center(&self) -> [f64; 3] {
        let cx = if self.nx > 1 {
            self.origin_m[0] + self.extent_m / 2.0
        } else {
            self.origin_m[0]
        };
        let cy = if self.ny > 1 {
            self.origin_m[1] + self.extent_m / 2.0
        } else {
            self.origin_m[1]
        };
        [cx, cy, self.origin_m[2]]
    }
}

/// Voxelization of the hidden volume.
///
/// The lateral lattice reuses the aperture spacing and is centered on the
/// scanned area, so with matching counts the voxel columns sit exactly above
/// the scan points; this is what lets the frequency-domain propagation path
/// evaluate the aperture sum as a lattice convolution. The depth axis is
/// cell-centered over `[z_min, z_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconGeometry {
    pub nvx: usize,
    pub nvy: usize,
    pub nvz: usize,
    pub z_min_m: f64,
    pub z_max_m: f64,
}

impl ReconGeometry {
    pub fn new(nvx: usize, nvy: usize, nvz: usize, z_min_m: f64, z_max_m: f64) -> Result<Self> {
        if nvx == 0 || nvy == 0 || nvz == 0 {
            return Err(Error::InvalidParameter(format!(
                "reconstruction volume needs at least one voxel per axis, got {nvx}x{nvy}x{nvz}"
            )));
        }
        if !(z_min_m >= 0.0) || !(z_max_m > z_min_m) || !z_max_m.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "depth range [{z_min_m}, {z_max_m}] is not a valid interval with z_min >= 0"
            )));
        }
        Ok(Self {
            nvx,
            nvy,
            nvz,
            z_min_m,
            z_max_m,
        })
    }

    pub fn depth_step(&self) -> f64 {
        (self.z_max_m - self.z_min_m) / self.nvz as f64
    }

    /// Center depth of voxel plane k.
    pub fn plane_z(&self, k: usize) -> f64 {
        self.z_min_m + (k as f64 + 0.5) * self.depth_step()
    }

    pub fn voxel_count(&self) -> usize {
        self.nvx * self.nvy * self.nvz
    }
}

/// Per-axis voxel center coordinates for a reconstruction volume tied to an
/// aperture grid. Lateral axes share the aperture spacing and center.
pub fn voxel_axes(geom: &ReconGeometry, grid: &ApertureGrid) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let center = grid.center();
    let hx = grid.spacing_x();
    let hy = grid.spacing_y();
    let xs = (0..geom.nvx)
        .map(|i| center[0] + (i as f64 - (geom.nvx as f64 - 1.0) / 2.0) * hx)
        .collect();
    let ys = (0..geom.nvy)
        .map(|j| center[1] + (j as f64 - (geom.nvy as f64 - 1.0) / 2.0) * hy)
        .collect();
    let zs = (0..geom.nvz).map(|k| geom.plane_z(k)).collect();
    (xs, ys, zs)
}

/// Voxel centers in the flat order used by `ReconVolume` indexing:
/// ix outer, then iy, then iz.
pub fn voxel_centers(geom: &ReconGeometry, grid: &ApertureGrid) -> Vec<[f64; 3]> {
    let (xs, ys, zs) = voxel_axes(geom, grid);
    let mut out = Vec::with_capacity(geom.voxel_count());
    for &x in &xs {
        for &y in &ys {
            for &z in &zs {
                out.push([x, y, z]);
            }
        }
    }
    out
}

/// One-way distances corresponding to the centers of the temporal bins.
///
/// `values[k] = c * (k + 0.5) * bin_width / 2`; strictly increasing, with a
/// constant step of `c * bin_width / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceGrid {
    values: Vec<f64>,
    bin_width_s: f64,
}

pub fn distance_grid(nt: usize, bin_width_s: f64) -> Result<DistanceGrid> {
    if nt == 0 {
        return Err(Error::InvalidParameter(
            "distance grid needs at least one bin".into(),
        ));
    }
    if !(bin_width_s > 0.0) || !bin_width_s.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "bin width must be positive and finite, got {bin_width_s}"
        )));
    }
    let values = (0..nt)
        .map(|k| SPEED_OF_LIGHT * (k as f64 + 0.5) * bin_width_s / 2.0)
        .collect();
    Ok(DistanceGrid {
        values,
        bin_width_s,
    })
}

impl DistanceGrid {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn bin_width_s(&self) -> f64 {
        self.bin_width_s
    }

    /// Inverse map: temporal bin holding a one-way distance r.
    ///
    /// `bin(values[k]) == k` for every k of this grid.
    pub fn bin_of(&self, r_m: f64) -> usize {
        ((2.0 * r_m) / (SPEED_OF_LIGHT * self.bin_width_s)).floor() as usize
    }
}

pub(crate) fn euclidean(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corner_lattice_of_two_by_two_grid() {
        let grid = ApertureGrid::new(2, 2, 2.0, [-1.0, -1.0, 0.0]).unwrap();
        let pos = grid.scan_positions();
        assert_eq!(
            pos,
            vec![
                [-1.0, -1.0, 0.0],
                [1.0, -1.0, 0.0],
                [-1.0, 1.0, 0.0],
                [1.0, 1.0, 0.0]
            ]
        );
    }

    #[test]
    fn middle_column_of_odd_grid_is_centered() {
        let grid = ApertureGrid::new(3, 2, 2.0, [-1.0, -1.0, 0.0]).unwrap();
        assert_eq!(grid.position(1, 0)[0], 0.0);
    }

    #[test]
    fn spacing_matches_large_scan() {
        let grid = ApertureGrid::centered(256, 256, 2.0).unwrap();
        let expect = 2.0 / 255.0;
        assert!((grid.spacing_x() - expect).abs() < 1e-15);
        assert!((expect - 0.007843).abs() < 1e-6);
    }

    #[test]
    fn scan_positions_are_deterministic() {
        let grid = ApertureGrid::centered(5, 7, 1.5).unwrap();
        assert_eq!(grid.scan_positions(), grid.scan_positions());
    }

    #[test]
    fn distance_grid_single_bin() {
        let dg = distance_grid(1, 2.0 / SPEED_OF_LIGHT).unwrap();
        assert!((dg.values()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn distance_grid_step_is_half_c_dt() {
        let dt = 33e-12;
        let dg = distance_grid(64, dt).unwrap();
        let step = SPEED_OF_LIGHT * dt / 2.0;
        assert!((step - 4.947e-3).abs() < 1e-6);
        for k in 0..dg.len() - 1 {
            assert_eq!(dg.values()[k + 1] - dg.values()[k], step);
        }
    }

    #[test]
    fn distance_grid_max_range_512_bins() {
        let dg = distance_grid(512, 33e-12).unwrap();
        // c * 511.5 * 33 ps / 2, evaluated independently.
        let expect = SPEED_OF_LIGHT * 511.5 * 33e-12 / 2.0;
        assert_eq!(dg.values()[511], expect);
        assert!((expect - 2.530).abs() < 1e-3);
    }

    #[test]
    fn bin_round_trip_identity() {
        let dg = distance_grid(200, 33e-12).unwrap();
        for (k, &r) in dg.values().iter().enumerate() {
            assert_eq!(dg.bin_of(r), k);
        }
    }

    #[test]
    fn voxel_axes_midpoints() {
        let grid = ApertureGrid::centered(4, 4, 2.0).unwrap();
        let geom = ReconGeometry::new(4, 4, 1, 0.0, 1.0).unwrap();
        let (_, _, zs) = voxel_axes(&geom, &grid);
        assert_eq!(zs, vec![0.5]);

        let geom2 = ReconGeometry::new(4, 4, 2, 0.0, 1.0).unwrap();
        let (_, _, zs2) = voxel_axes(&geom2, &grid);
        assert_eq!(zs2, vec![0.25, 0.75]);
    }

    #[test]
    fn lateral_lattice_matches_aperture_when_counts_agree() {
        let grid = ApertureGrid::centered(8, 8, 2.0).unwrap();
        let geom = ReconGeometry::new(8, 8, 4, 0.25, 1.25).unwrap();
        let (xs, ys, _) = voxel_axes(&geom, &grid);
        for (i, &x) in xs.iter().enumerate() {
            assert!((x - grid.position(i, 0)[0]).abs() < 1e-12);
        }
        for (j, &y) in ys.iter().enumerate() {
            assert!((y - grid.position(0, j)[1]).abs() < 1e-12);
        }
        // axial cell size: (1.25 - 0.25) / 4
        assert!((geom.depth_step() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn voxel_centers_order_matches_volume_indexing() {
        let grid = ApertureGrid::centered(3, 2, 1.0).unwrap();
        let geom = ReconGeometry::new(3, 2, 2, 0.5, 1.5).unwrap();
        let centers = voxel_centers(&geom, &grid);
        let (xs, ys, zs) = voxel_axes(&geom, &grid);
        let mut n = 0;
        for (i, &x) in xs.iter().enumerate() {
            for (j, &y) in ys.iter().enumerate() {
                for (k, &z) in zs.iter().enumerate() {
                    let flat = (i * geom.nvy + j) * geom.nvz + k;
                    assert_eq!(centers[flat], [x, y, z]);
                    n += 1;
                }
            }
        }
        assert_eq!(n, geom.voxel_count());
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(ApertureGrid::new(0, 2, 1.0, [0.0; 3]).is_err());
        assert!(ApertureGrid::new(2, 2, 0.0, [0.0; 3]).is_err());
        assert!(ReconGeometry::new(2, 2, 2, 1.0, 1.0).is_err());
        assert!(ReconGeometry::new(2, 2, 2, -0.5, 1.0).is_err());
        assert!(distance_grid(0, 1e-12).is_err());
        assert!(distance_grid(8, 0.0).is_err());
    }
}
