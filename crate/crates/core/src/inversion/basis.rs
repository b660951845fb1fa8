//! Search-space parametrization of the contrast over the inversion
//! subdomain: hat, Gaussian or pixel basis functions on a uniform mesh,
//! evaluated once on the finite-difference grid.

use crate::error::{Error, Result};
use crate::grid::{Grid2D, Rect};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    /// Piecewise-bilinear, one at its mesh node, zero at the others.
    Hat,
    /// Anisotropic Gaussian bumps on the same mesh as the hats.
    Gaussian,
    /// Indicator of square cells.
    Pixel,
}

impl BasisKind {
    pub fn name(self) -> &'static str {
        match self {
            BasisKind::Hat => "hat",
            BasisKind::Gaussian => "gaussian",
            BasisKind::Pixel => "pixel",
        }
    }
}

/// Mesh spacings (hat/gaussian), standard deviations (gaussian) and cell
/// size (pixel), in physical length units.
#[derive(Debug, Clone, Copy)]
pub struct BasisParams {
    pub hat_range_spacing: f64,
    pub hat_cross_spacing: f64,
    pub gaussian_sigma_range: f64,
    pub gaussian_sigma_cross: f64,
    pub pixel_size: f64,
}

impl BasisParams {
    /// Mesh sizes from the central wavelength: hats on a
    /// `3 lambda/16 x lambda/4` mesh, Gaussians with the same full width
    /// at half maximum, pixels of `lambda/8`.
    pub fn from_wavelength(lambda_c: f64) -> Self {
        Self {
            hat_range_spacing: 3.0 * lambda_c / 16.0,
            hat_cross_spacing: lambda_c / 4.0,
            gaussian_sigma_range: 0.0796 * lambda_c,
            gaussian_sigma_cross: 0.11 * lambda_c,
            pixel_size: lambda_c / 8.0,
        }
    }
}

/// One basis function: its sparse footprint on the FD grid.
#[derive(Debug, Clone)]
pub struct BasisFunction {
    /// (flat node index, value) over the support inside `omega_in`.
    pub support: Vec<(usize, f64)>,
    /// Mesh location (for reporting).
    pub center: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct SearchBasis {
    pub kind: BasisKind,
    pub functions: Vec<BasisFunction>,
    pub omega_in: Rect,
    /// FD-grid index window covered by `omega_in`: `i` in
    /// `i_range.0..=i_range.1`, `k` in `k_range.0..=k_range.1`.
    pub i_range: (usize, usize),
    pub k_range: (usize, usize),
    pub grid: Grid2D,
}

fn index_window(grid: &Grid2D, omega_in: &Rect) -> Result<((usize, usize), (usize, usize))> {
    let lo_i = ((omega_in.x0 - grid.origin[0]) / grid.h).ceil().max(0.0) as usize;
    let hi_i = (((omega_in.x1 - grid.origin[0]) / grid.h).floor() as usize).min(grid.nx - 1);
    let lo_k = ((omega_in.z0 - grid.origin[1]) / grid.h).ceil().max(0.0) as usize;
    let hi_k = (((omega_in.z1 - grid.origin[1]) / grid.h).floor() as usize).min(grid.nz - 1);
    if lo_i > hi_i || lo_k > hi_k {
        return Err(Error::Validation("inversion subdomain contains no grid nodes".into()));
    }
    Ok(((lo_i, hi_i), (lo_k, hi_k)))
}

impl SearchBasis {
    pub fn build(kind: BasisKind, grid: &Grid2D, omega_in: Rect, params: &BasisParams) -> Result<Self> {
        let (i_range, k_range) = index_window(grid, &omega_in)?;
        let mut functions = Vec::new();
        match kind {
            BasisKind::Hat | BasisKind::Gaussian => {
                let (dx, dz, cut_x, cut_z) = match kind {
                    BasisKind::Hat => (
                        params.hat_cross_spacing,
                        params.hat_range_spacing,
                        params.hat_cross_spacing,
                        params.hat_range_spacing,
                    ),
                    BasisKind::Gaussian => (
                        params.hat_cross_spacing,
                        params.hat_range_spacing,
                        4.0 * params.gaussian_sigma_cross,
                        4.0 * params.gaussian_sigma_range,
                    ),
                    BasisKind::Pixel => unreachable!(),
                };
                if !(dx > 0.0) || !(dz > 0.0) {
                    return Err(Error::InvalidArgument("basis mesh spacings must be > 0".into()));
                }
                let na = ((omega_in.x1 - omega_in.x0) / dx).floor() as usize + 1;
                let nb = ((omega_in.z1 - omega_in.z0) / dz).floor() as usize + 1;
                for b in 0..nb {
                    let zq = omega_in.z0 + b as f64 * dz;
                    for a in 0..na {
                        let xq = omega_in.x0 + a as f64 * dx;
                        let mut support = Vec::new();
                        for k in k_range.0..=k_range.1 {
                            let z = grid.origin[1] + k as f64 * grid.h;
                            if (z - zq).abs() >= cut_z {
                                continue;
                            }
                            for i in i_range.0..=i_range.1 {
                                let x = grid.origin[0] + i as f64 * grid.h;
                                if (x - xq).abs() >= cut_x {
                                    continue;
                                }
                                let v = match kind {
                                    BasisKind::Hat => {
                                        (1.0 - (x - xq).abs() / dx).max(0.0)
                                            * (1.0 - (z - zq).abs() / dz).max(0.0)
                                    }
                                    BasisKind::Gaussian => {
                                        let ax = (x - xq) / params.gaussian_sigma_cross;
                                        let az = (z - zq) / params.gaussian_sigma_range;
                                        (-0.5 * (ax * ax + az * az)).exp()
                                    }
                                    BasisKind::Pixel => unreachable!(),
                                };
                                if v > 0.0 {
                                    support.push((grid.idx(i, k), v));
                                }
                            }
                        }
                        if !support.is_empty() {
                            functions.push(BasisFunction { support, center: [xq, zq] });
                        }
                    }
                }
            }
            BasisKind::Pixel => {
                let a = params.pixel_size;
                if !(a > 0.0) {
                    return Err(Error::InvalidArgument("pixel size must be > 0".into()));
                }
                let na = (((omega_in.x1 - omega_in.x0) / a).floor() as usize).max(1);
                let nb = (((omega_in.z1 - omega_in.z0) / a).floor() as usize).max(1);
                for b in 0..nb {
                    let z0 = omega_in.z0 + b as f64 * a;
                    for q in 0..na {
                        let x0 = omega_in.x0 + q as f64 * a;
                        let mut support = Vec::new();
                        for k in k_range.0..=k_range.1 {
                            let z = grid.origin[1] + k as f64 * grid.h;
                            if z < z0 || z >= z0 + a {
                                continue;
                            }
                            for i in i_range.0..=i_range.1 {
                                let x = grid.origin[0] + i as f64 * grid.h;
                                if x >= x0 && x < x0 + a {
                                    support.push((grid.idx(i, k), 1.0));
                                }
                            }
                        }
                        if !support.is_empty() {
                            functions.push(BasisFunction {
                                support,
                                center: [x0 + 0.5 * a, z0 + 0.5 * a],
                            });
                        }
                    }
                }
            }
        }
        if functions.is_empty() {
            return Err(Error::Validation(
                "search basis has no functions with support on the grid".into(),
            ));
        }
        Ok(Self { kind, functions, omega_in, i_range, k_range, grid: grid.clone() })
    }

    pub fn n_rho(&self) -> usize {
        self.functions.len()
    }

    /// Expands coefficients into a full-grid contrast field (zero outside
    /// the subdomain).
    pub fn expand(&self, eta: &nalgebra::DVector<f64>) -> Result<Vec<f64>> {
        if eta.len() != self.functions.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for {} basis functions",
                eta.len(),
                self.functions.len()
            )));
        }
        let mut field = vec![0.0; self.grid.node_count()];
        for (q, f) in self.functions.iter().enumerate() {
            let w = eta[q];
            if w != 0.0 {
                for &(node, v) in &f.support {
                    field[node] += w * v;
                }
            }
        }
        Ok(field)
    }

    /// Flat indices of the grid nodes inside the subdomain window,
    /// row-major over the window.
    pub fn window_nodes(&self) -> Vec<usize> {
        let mut nodes = Vec::new();
        for k in self.k_range.0..=self.k_range.1 {
            for i in self.i_range.0..=self.i_range.1 {
                nodes.push(self.grid.idx(i, k));
            }
        }
        nodes
    }

    pub fn window_shape(&self) -> (usize, usize) {
        (
            self.i_range.1 - self.i_range.0 + 1,
            self.k_range.1 - self.k_range.0 + 1,
        )
    }
}
