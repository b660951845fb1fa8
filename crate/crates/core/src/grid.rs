//! Uniform 2D grid, medium, sensor array and time discretization.
//!
//! Conventions used throughout the crate: `i` indexes the cross-range
//! direction (along the array, `nx` nodes), `k` indexes range (depth away
//! from the array, `nz` nodes). The array sits on the top edge `k = 0`.
//! Flat node index is `k * nx + i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform rectangular grid with square cells of size `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    pub nx: usize,
    pub nz: usize,
    pub h: f64,
    pub origin: [f64; 2],
}

impl Grid2D {
    pub fn new(nx: usize, nz: usize, h: f64, origin: [f64; 2]) -> Result<Self> {
        if nx < 2 || nz < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 2x2 nodes, got {nx}x{nz}"
            )));
        }
        if !(h > 0.0) {
            return Err(Error::InvalidArgument(format!("grid spacing h = {h} must be > 0")));
        }
        Ok(Self { nx, nz, h, origin })
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.nx * self.nz
    }

    #[inline]
    pub fn idx(&self, i: usize, k: usize) -> usize {
        debug_assert!(i < self.nx && k < self.nz);
        k * self.nx + i
    }

    /// Position of node `(i, k)`.
    #[inline]
    pub fn node_pos(&self, i: usize, k: usize) -> [f64; 2] {
        [
            self.origin[0] + i as f64 * self.h,
            self.origin[1] + k as f64 * self.h,
        ]
    }

    /// Nearest node to a position; errors if it falls outside the grid
    /// by more than half a cell.
    pub fn snap(&self, pos: [f64; 2]) -> Result<(usize, usize)> {
        let fi = (pos[0] - self.origin[0]) / self.h;
        let fk = (pos[1] - self.origin[1]) / self.h;
        let i = fi.round();
        let k = fk.round();
        if i < 0.0 || k < 0.0 || i >= self.nx as f64 || k >= self.nz as f64 {
            return Err(Error::InvalidArgument(format!(
                "position ({}, {}) outside grid extent",
                pos[0], pos[1]
            )));
        }
        Ok((i as usize, k as usize))
    }

    pub fn extent(&self) -> ([f64; 2], [f64; 2]) {
        (
            self.origin,
            [
                self.origin[0] + (self.nx - 1) as f64 * self.h,
                self.origin[1] + (self.nz - 1) as f64 * self.h,
            ],
        )
    }
}

/// Axis-aligned rectangle, used for the inversion subdomain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub z0: f64,
    pub x1: f64,
    pub z1: f64,
}

impl Rect {
    pub fn contains(&self, x: f64, z: f64) -> bool {
        x >= self.x0 && x <= self.x1 && z >= self.z0 && z <= self.z1
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x0 >= self.x0 && other.x1 <= self.x1 && other.z0 >= self.z0 && other.z1 <= self.z1
    }
}

/// Wave-speed field on a grid. The speed equals the background `c_bar`
/// everywhere outside the inversion subdomain `omega_in`.
#[derive(Debug, Clone)]
pub struct Medium {
    pub grid: Grid2D,
    pub c: Vec<f64>,
    pub c_bar: f64,
    pub omega_in: Rect,
}

impl Medium {
    pub fn new(grid: Grid2D, c: Vec<f64>, c_bar: f64, omega_in: Rect) -> Result<Self> {
        if c.len() != grid.node_count() {
            return Err(Error::DimensionMismatch(format!(
                "speed field has {} values for {} nodes",
                c.len(),
                grid.node_count()
            )));
        }
        if !(c_bar > 0.0) {
            return Err(Error::InvalidArgument("background speed must be > 0".into()));
        }
        for (q, &v) in c.iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "speed must be positive and finite, node {q} has {v}"
                )));
            }
        }
        // Outside omega_in the medium must be the known background.
        for k in 0..grid.nz {
            for i in 0..grid.nx {
                let [x, z] = grid.node_pos(i, k);
                if !omega_in.contains(x, z) && c[grid.idx(i, k)] != c_bar {
                    return Err(Error::Validation(format!(
                        "speed differs from background outside omega_in at node ({i}, {k})"
                    )));
                }
            }
        }
        Ok(Self { grid, c, c_bar, omega_in })
    }

    /// Homogeneous medium at the background speed.
    pub fn homogeneous(grid: Grid2D, c_bar: f64, omega_in: Rect) -> Result<Self> {
        let n = grid.node_count();
        Medium::new(grid, vec![c_bar; n], c_bar, omega_in)
    }

    pub fn c_max(&self) -> f64 {
        self.c.iter().cloned().fold(f64::MIN, f64::max)
    }

    pub fn same_geometry(&self, other: &Medium) -> bool {
        self.grid == other.grid && self.c_bar == other.c_bar && self.omega_in == other.omega_in
    }
}

/// Co-located source/receiver array on the top edge of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorArray {
    /// Cross-range node indices, ascending; all sensors sit at `k = 0`.
    pub nodes: Vec<usize>,
}

impl SensorArray {
    pub fn new(grid: &Grid2D, nodes: Vec<usize>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidArgument("sensor array needs at least one sensor".into()));
        }
        let mut seen = nodes.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != nodes.len() {
            return Err(Error::Validation("sensor positions must be distinct".into()));
        }
        for &i in &nodes {
            if i == 0 || i >= grid.nx - 1 {
                return Err(Error::Validation(format!(
                    "sensor node {i} is not strictly inside the top edge"
                )));
            }
        }
        Ok(Self { nodes })
    }

    /// `m` sensors centered on the top edge, spaced `spacing` apart
    /// (snapped to grid nodes).
    pub fn centered(grid: &Grid2D, m: usize, spacing: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("sensor count must be >= 1".into()));
        }
        let step = (spacing / grid.h).round() as i64;
        if step < 1 {
            return Err(Error::Validation(format!(
                "sensor spacing {spacing} is below the grid spacing {}",
                grid.h
            )));
        }
        let span = step * (m as i64 - 1);
        let first = (grid.nx as i64 - 1 - span) / 2;
        let nodes: Vec<usize> = (0..m as i64).map(|s| (first + s * step) as usize).collect();
        SensorArray::new(grid, nodes)
    }

    pub fn m(&self) -> usize {
        self.nodes.len()
    }

    pub fn positions(&self, grid: &Grid2D) -> Vec<[f64; 2]> {
        self.nodes.iter().map(|&i| grid.node_pos(i, 0)).collect()
    }
}

/// Snapshot interval `tau`, snapshot count `n` and the fine simulation step.
///
/// `tau` is always an exact integer multiple of `dt`, so every snapshot
/// time `j * tau` (and its negative mirror) lands on a simulation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub tau: f64,
    pub n: usize,
    pub dt: f64,
    pub steps_per_tau: usize,
}

impl TimeGrid {
    pub fn new(tau: f64, n: usize, dt: f64, steps_per_tau: usize) -> Result<Self> {
        if !(tau > 0.0) || n == 0 {
            return Err(Error::InvalidArgument("tau must be > 0 and n >= 1".into()));
        }
        if steps_per_tau == 0 || (tau / dt - steps_per_tau as f64).abs() > 1e-9 * steps_per_tau as f64 {
            return Err(Error::InvalidArgument(format!(
                "tau/dt must be the integer steps_per_tau (tau = {tau}, dt = {dt})"
            )));
        }
        Ok(Self { tau, n, dt, steps_per_tau })
    }

    /// Builds the time grid from the CFL bound, shrinking `dt` so that
    /// `tau` is an exact multiple.
    pub fn from_cfl(tau: f64, n: usize, h: f64, c_max: f64, safety: f64) -> Result<Self> {
        let (dt, steps_per_tau) = cfl_dt(h, c_max, safety, tau)?;
        TimeGrid::new(tau, n, dt, steps_per_tau)
    }

    /// Final estimation time `T = (n - 1) tau`.
    pub fn horizon(&self) -> f64 {
        (self.n - 1) as f64 * self.tau
    }
}

/// Mesh size for the finite-difference solver: `h = pi c_bar / (4 (omega_c + B))`.
pub fn grid_spacing(omega_c: f64, bandwidth: f64, c_bar: f64) -> Result<f64> {
    if !(omega_c > 0.0) || !(bandwidth > 0.0) || !(c_bar > 0.0) {
        return Err(Error::InvalidArgument(
            "grid_spacing needs positive omega_c, bandwidth and c_bar".into(),
        ));
    }
    Ok(std::f64::consts::PI * c_bar / (4.0 * (omega_c + bandwidth)))
}

/// CFL-stable time step `safety * h / (c_max sqrt(2))`, reduced so that
/// `tau / dt` is an integer. Returns `(dt, steps_per_tau)`.
pub fn cfl_dt(h: f64, c_max: f64, safety: f64, tau: f64) -> Result<(f64, usize)> {
    if !(c_max > 0.0) {
        return Err(Error::InvalidArgument("c_max must be > 0".into()));
    }
    if !(safety > 0.0 && safety < 1.0) {
        return Err(Error::InvalidArgument(format!("CFL safety {safety} must be in (0, 1)")));
    }
    if !(h > 0.0) || !(tau > 0.0) {
        return Err(Error::InvalidArgument("h and tau must be > 0".into()));
    }
    let raw = safety * h / (c_max * std::f64::consts::SQRT_2);
    let steps = (tau / raw).ceil() as usize;
    Ok((tau / steps as f64, steps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn spacing_matches_quarter_bandwidth_rule() {
        // B = omega_c / 4 gives a tenth of the central wavelength.
        let omega_c = 3.7;
        let c_bar = 1.3;
        let h = grid_spacing(omega_c, omega_c / 4.0, c_bar).unwrap();
        let lambda_c = 2.0 * std::f64::consts::PI * c_bar / omega_c;
        assert!((h - lambda_c / 10.0).abs() < 1e-14);
    }

    #[test]
    fn spacing_direct_value() {
        let h = grid_spacing(4.0 * std::f64::consts::PI, std::f64::consts::PI, 1.0).unwrap();
        assert!((h - 0.05).abs() < 1e-15);
    }

    #[test]
    fn spacing_rejects_nonpositive() {
        assert!(grid_spacing(0.0, 1.0, 1.0).is_err());
        assert!(grid_spacing(1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn cfl_bound_and_rounding() {
        let (dt, steps) = cfl_dt(0.1, 1.0, 0.5, 0.1).unwrap();
        assert!(dt <= 0.1 / (2.0 * std::f64::consts::SQRT_2) + 1e-15);
        assert_eq!(steps as f64 * dt, 0.1);

        // tau = 0.1 with a raw dt of 0.03 rounds down to 0.025.
        let raw = 0.03;
        let safety = raw * std::f64::consts::SQRT_2 / 0.1;
        let (dt, steps) = cfl_dt(0.1, 1.0, safety, 0.1).unwrap();
        assert_eq!(steps, 4);
        assert!((dt - 0.025).abs() < 1e-15);
    }

    #[test]
    fn cfl_rejects_bad_safety_and_speed() {
        assert!(cfl_dt(0.1, 1.0, 1.2, 0.1).is_err());
        assert!(cfl_dt(0.1, 0.0, 0.5, 0.1).is_err());
    }

    #[test]
    fn sensors_must_be_inside_and_distinct() {
        let grid = Grid2D::new(11, 5, 0.1, [0.0, 0.0]).unwrap();
        assert!(SensorArray::new(&grid, vec![0]).is_err());
        assert!(SensorArray::new(&grid, vec![10]).is_err());
        assert!(SensorArray::new(&grid, vec![3, 3]).is_err());
        let a = SensorArray::centered(&grid, 3, 0.2).unwrap();
        assert_eq!(a.nodes, vec![3, 5, 7]);
    }

    #[test]
    fn medium_rejects_background_violation() {
        let grid = Grid2D::new(5, 5, 1.0, [0.0, 0.0]).unwrap();
        let omega_in = Rect { x0: 1.0, z0: 1.0, x1: 3.0, z1: 3.0 };
        let mut c = vec![1.0; 25];
        c[0] = 2.0; // outside omega_in
        assert!(Medium::new(grid.clone(), c, 1.0, omega_in).is_err());
        let mut c = vec![1.0; 25];
        c[grid.idx(2, 2)] = 2.0; // inside omega_in: fine
        assert!(Medium::new(grid, c, 1.0, omega_in).is_ok());
    }

    #[test]
    fn timegrid_snapshot_times_land_on_steps() {
        let tg = TimeGrid::from_cfl(0.25, 8, 0.1, 1.0, 0.5).unwrap();
        for j in 0..=2 * (tg.n - 1) {
            let t = j as f64 * tg.tau;
            let steps = t / tg.dt;
            assert!((steps - steps.round()).abs() < 1e-9, "j*tau off-lattice at j = {j}");
        }
    }

    proptest! {
        #[test]
        fn node_position_round_trip(nx in 2usize..40, nz in 2usize..40,
                                    h in 1e-3f64..10.0,
                                    ox in -5.0f64..5.0, oz in -5.0f64..5.0) {
            let grid = Grid2D::new(nx, nz, h, [ox, oz]).unwrap();
            for k in 0..nz {
                for i in 0..nx {
                    let p = grid.node_pos(i, k);
                    let (i2, k2) = grid.snap(p).unwrap();
                    prop_assert_eq!((i, k), (i2, k2));
                }
            }
        }
    }
}
