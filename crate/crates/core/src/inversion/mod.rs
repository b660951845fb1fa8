//! Velocity estimation by regularized linearized least squares.
//!
//! Each iteration linearizes the forward map around the current reference
//! speed with an internal-wave estimate, solves for the contrast
//! coefficients and maps them back to a speed through the closed-form
//! quadratic relation.

mod basis;
mod driver;
mod lambda;
mod reg;

pub use basis::{BasisKind, BasisParams, SearchBasis};
pub use driver::{invert, InversionOutput, InversionSetup, ReferencePack};
pub use lambda::{assemble_lsq, forward_check, lambda_matrices};
pub use reg::{gsvd_normalized_pairs, max_generalized_singular_value, tikhonov_step, tv_step};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::grid::Medium;
use crate::survey::DataCube;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Approach {
    /// Re-estimate the internal wave each iteration; keep the reference
    /// derivative, reference data and speed map anchored at the initial
    /// guess.
    Rom1,
    /// Gauss-Newton: rebuild everything at the current iterate.
    Rom2,
    /// Like `Rom2` but with the plain reference wave in place of the
    /// data-driven estimate.
    Fwi,
    /// Like `Rom2` but with the true internal wave (needs the true
    /// medium; benchmark floor).
    Ideal,
}

impl Approach {
    pub fn name(self) -> &'static str {
        match self {
            Approach::Rom1 => "rom1",
            Approach::Rom2 => "rom2",
            Approach::Fwi => "fwi",
            Approach::Ideal => "ideal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularizer {
    Tikhonov,
    Tv,
}

impl Regularizer {
    pub fn name(self) -> &'static str {
        match self {
            Regularizer::Tikhonov => "tikhonov",
            Regularizer::Tv => "tv",
        }
    }
}

#[derive(Debug, Clone)]
pub struct InversionConfig {
    pub approach: Approach,
    pub reg: Regularizer,
    pub gamma: f64,
    pub max_iters: usize,
    pub tv_smoothing_eps: f64,
    /// Relative misfit change below which the iteration stops.
    pub stop_tol: f64,
    /// Initial mass-matrix regularization; escalated on factorization
    /// failure.
    pub mass_eps: f64,
}

impl InversionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidArgument(format!("gamma {} must be > 0", self.gamma)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
        }
        if self.mass_eps < 0.0 || self.tv_smoothing_eps < 0.0 || self.stop_tol < 0.0 {
            return Err(Error::InvalidArgument(
                "mass_eps, tv_smoothing_eps and stop_tol must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Current iterate of an inversion run.
#[derive(Debug, Clone)]
pub struct InversionState {
    pub eta: DVector<f64>,
    pub c_k: Medium,
    pub misfit_history: Vec<f64>,
    pub iteration: usize,
}

/// Normalized contrast `rho = (c^2 - c_ref^2) / (c c_ref)`, pointwise.
pub fn rho_of_speeds(c: &[f64], c_ref: &[f64]) -> Result<Vec<f64>> {
    if c.len() != c_ref.len() {
        return Err(Error::DimensionMismatch(format!(
            "speed fields of lengths {} and {}",
            c.len(),
            c_ref.len()
        )));
    }
    c.iter()
        .zip(c_ref)
        .map(|(&a, &b)| {
            if !(a > 0.0) || !(b > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "speeds must be positive, got ({a}, {b})"
                )));
            }
            Ok((a * a - b * b) / (a * b))
        })
        .collect()
}

/// Inverse of `rho_of_speeds` at fixed reference:
/// `c = c_ref (rho + sqrt(4 + rho^2)) / 2`, always positive.
pub fn speed_of_rho(rho: &[f64], c_ref: &[f64]) -> Result<Vec<f64>> {
    if rho.len() != c_ref.len() {
        return Err(Error::DimensionMismatch(format!(
            "fields of lengths {} and {}",
            rho.len(),
            c_ref.len()
        )));
    }
    c_ref
        .iter()
        .zip(rho)
        .map(|(&cr, &r)| {
            if !(cr > 0.0) {
                return Err(Error::InvalidArgument(format!("reference speed {cr} must be > 0")));
            }
            let root = (4.0 + r * r).sqrt();
            // Conjugate form for negative contrast avoids cancellation.
            Ok(if r >= 0.0 {
                0.5 * cr * (r + root)
            } else {
                2.0 * cr / (root - r)
            })
        })
        .collect()
}

/// Relative data misfit over the whole cube:
/// `sqrt(sum_j |D_j - D_j(c_k)|_F^2 / sum_j |D_j|_F^2)`.
pub fn relative_misfit(cube: &DataCube, cube_k: &DataCube) -> Result<f64> {
    if cube.len() != cube_k.len() || cube.m() != cube_k.m() {
        return Err(Error::DimensionMismatch(format!(
            "cubes of shapes ({}, m = {}) and ({}, m = {})",
            cube.len(),
            cube.m(),
            cube_k.len(),
            cube_k.m()
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in cube.matrices.iter().zip(&cube_k.matrices) {
        num += (a - b).norm_squared();
        den += a.norm_squared();
    }
    if den == 0.0 {
        return Err(Error::InvalidArgument("misfit reference cube is identically zero".into()));
    }
    Ok((num / den).sqrt())
}
