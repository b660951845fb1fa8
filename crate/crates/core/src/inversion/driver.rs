//! The iteration loop shared by the two reduced-model schemes, the plain
//! reference-wave baseline and the true-internal-wave benchmark.
//!
//! Every iteration simulates the reference medium once (traces for the
//! reference data, snapshot fields with derivatives for the basis and the
//! sensitivity kernel), estimates the internal wave according to the
//! chosen scheme, solves the regularized linear step and maps the
//! contrast update back to a speed.

use nalgebra::DVector;

use crate::block::BlockMatrix;
use crate::error::{Error, Result};
use crate::fdtd::BoundarySpec;
use crate::grid::{Medium, SensorArray, TimeGrid};
use crate::internal_wave::{build_reference_basis, estimate_internal, reference_internal, ReferenceBasis};
use crate::rom::{assemble_mass, regularize_and_factor};
use crate::signal::{pulse_frak, PulseSpec};
use crate::survey::{make_data_cube, make_snapshots, source_half_width, DataCube, SnapshotKind, SnapshotSet};

use super::basis::SearchBasis;
use super::lambda::{assemble_lsq, lambda_matrices};
use super::reg::{tikhonov_step, tv_step};
use super::{relative_misfit, speed_of_rho, Approach, InversionConfig, InversionState, Regularizer};

/// Everything the driver needs besides the cube and the knobs.
#[derive(Debug, Clone)]
pub struct InversionSetup {
    pub array: SensorArray,
    pub pulse: PulseSpec,
    pub time_grid: TimeGrid,
    pub boundaries: BoundarySpec,
    /// Initial guess; the homogeneous background unless stated otherwise.
    pub c0: Medium,
    pub basis: SearchBasis,
    /// Ground truth, needed only for the `Ideal` benchmark mode.
    pub true_medium: Option<Medium>,
}

/// Reference-medium products of one iteration.
#[derive(Debug)]
pub struct ReferencePack {
    pub cube: DataCube,
    pub snapshots: SnapshotSet,
}

impl ReferencePack {
    pub fn compute(
        medium: &Medium,
        array: &SensorArray,
        pulse: &PulseSpec,
        time_grid: &TimeGrid,
        boundaries: &BoundarySpec,
    ) -> Result<Self> {
        let cube = make_data_cube(medium, array, pulse, time_grid, boundaries)?;
        let frak = pulse_frak(pulse, time_grid.dt, source_half_width(pulse, time_grid.dt))?;
        let snapshots = make_snapshots(
            medium,
            array,
            &frak,
            time_grid,
            boundaries,
            SnapshotKind::ReferenceU,
            true,
        )?;
        Ok(Self { cube, snapshots })
    }
}

/// Result of a run: final state plus the per-iteration trail the batch
/// front end writes out.
#[derive(Debug)]
pub struct InversionOutput {
    pub state: InversionState,
    /// Coefficients solved at iterations 1..=K.
    pub eta_history: Vec<DVector<f64>>,
    /// Speed fields after iterations 1..=K.
    pub c_history: Vec<Vec<f64>>,
    /// Mass regularization actually used after escalation.
    pub effective_mass_eps: f64,
    pub converged: bool,
}

fn basis_with_escalation(u_ref: &SnapshotSet, eps: f64) -> Result<(ReferenceBasis, f64)> {
    let mut eps_k = eps;
    for attempt in 0..=4 {
        match build_reference_basis(u_ref, eps_k) {
            Ok(b) => return Ok((b, eps_k)),
            Err(Error::NotPositiveDefinite { .. }) if attempt < 4 => {
                eps_k = if eps_k == 0.0 { 1e-2 } else { 10.0 * eps_k };
            }
            Err(e) => return Err(e),
        }
    }
    unreachable!("loop returns on the last attempt")
}

pub fn invert(config: &InversionConfig, cube: &DataCube, setup: &InversionSetup) -> Result<InversionOutput> {
    config.validate()?;
    let tg = &setup.time_grid;
    if cube.n() < tg.n || cube.m() != setup.array.m() {
        return Err(Error::DimensionMismatch(format!(
            "cube ({} matrices, m = {}) does not cover the configured horizon (n = {}, m = {})",
            cube.len(),
            cube.m(),
            tg.n,
            setup.array.m()
        )));
    }

    // The factor of the measured mass matrix, shared by every iteration
    // of the reduced-model schemes.
    let mut effective_eps = config.mass_eps;
    let r_data: Option<BlockMatrix> = match config.approach {
        Approach::Rom1 | Approach::Rom2 => {
            let raw = assemble_mass(cube)?;
            let (r, eps) = regularize_and_factor(&raw, config.mass_eps)?;
            effective_eps = eps;
            Some(r)
        }
        Approach::Fwi | Approach::Ideal => None,
    };

    // The true internal wave for the benchmark floor.
    let u_true: Option<SnapshotSet> = match config.approach {
        Approach::Ideal => {
            let medium = setup.true_medium.as_ref().ok_or_else(|| {
                Error::InvalidArgument("ideal mode needs the true medium in the setup".into())
            })?;
            let frak = pulse_frak(&setup.pulse, tg.dt, source_half_width(&setup.pulse, tg.dt))?;
            Some(make_snapshots(
                medium,
                &setup.array,
                &frak,
                tg,
                &setup.boundaries,
                SnapshotKind::TrueU,
                false,
            )?)
        }
        _ => None,
    };

    let n_rho = setup.basis.n_rho();
    let mut misfit_history: Vec<f64> = Vec::new();
    let mut eta_history: Vec<DVector<f64>> = Vec::new();
    let mut c_history: Vec<Vec<f64>> = Vec::new();
    let mut eta_prev = DVector::<f64>::zeros(n_rho);
    let mut c_prev = setup.c0.clone();
    let mut rom1_anchor: Option<(DataCube, SnapshotSet)> = None;
    let mut converged = false;
    let mut iterations = 0usize;

    for k in 1..=config.max_iters {
        let pack = ReferencePack::compute(&c_prev, &setup.array, &setup.pulse, tg, &setup.boundaries)?;
        misfit_history.push(relative_misfit(cube, &pack.cube)?);
        if k >= 2 {
            let prev = misfit_history[k - 2];
            let change = (misfit_history[k - 1] - prev).abs() / prev.max(1e-300);
            if change < config.stop_tol {
                converged = true;
                break;
            }
        }

        // Internal wave according to the scheme.
        let u_lambda: SnapshotSet = match config.approach {
            Approach::Rom1 | Approach::Rom2 => {
                let (basis_ref, eps_used) = basis_with_escalation(&pack.snapshots, effective_eps)?;
                effective_eps = eps_used;
                estimate_internal(&basis_ref, r_data.as_ref().expect("factor exists"))?
            }
            Approach::Fwi => {
                let (basis_ref, eps_used) = basis_with_escalation(&pack.snapshots, effective_eps)?;
                effective_eps = eps_used;
                reference_internal(&basis_ref)
            }
            Approach::Ideal => u_true.clone().expect("true wave exists"),
        };

        // Reference derivative and reference data: anchored at the
        // initial guess for the first scheme, current otherwise.
        let (du_ref, cube_ref): (SnapshotSet, &DataCube) = match config.approach {
            Approach::Rom1 => {
                if rom1_anchor.is_none() {
                    rom1_anchor = Some((pack.cube.clone(), pack.snapshots.derivative_set()?));
                }
                let (anchor_cube, anchor_du) = rom1_anchor.as_ref().expect("anchor cached");
                (anchor_du.clone(), anchor_cube)
            }
            _ => (pack.snapshots.derivative_set()?, &pack.cube),
        };

        let lambdas = lambda_matrices(&setup.basis, &u_lambda, &du_ref)?;
        let (gamma_mat, b) = assemble_lsq(&lambdas, cube, cube_ref)?;

        // Anchor speed of the contrast map.
        let anchor: &Medium = match config.approach {
            Approach::Rom1 => &setup.c0,
            _ => &c_prev,
        };

        let eta_new = match (config.reg, config.approach) {
            (Regularizer::Tikhonov, _) => tikhonov_step(&gamma_mat, &b, config.gamma)?,
            (Regularizer::Tv, Approach::Rom1) => {
                // Linearize around the previous coefficients; the data
                // residual moves to the right-hand side.
                let b_adj = &b - &gamma_mat * &eta_prev;
                let delta = tv_step(
                    &gamma_mat,
                    &b_adj,
                    &eta_prev,
                    &setup.basis,
                    &anchor.c,
                    config.gamma,
                    config.tv_smoothing_eps,
                )?;
                &eta_prev + delta
            }
            (Regularizer::Tv, _) => {
                let zero = DVector::<f64>::zeros(n_rho);
                tv_step(
                    &gamma_mat,
                    &b,
                    &zero,
                    &setup.basis,
                    &anchor.c,
                    config.gamma,
                    config.tv_smoothing_eps,
                )?
            }
        };

        let rho_field = setup.basis.expand(&eta_new)?;
        let c_new = speed_of_rho(&rho_field, &anchor.c)?;
        c_prev = Medium::new(anchor.grid.clone(), c_new, anchor.c_bar, anchor.omega_in)?;
        eta_history.push(eta_new.clone());
        c_history.push(c_prev.c.clone());
        eta_prev = eta_new;
        iterations = k;
    }

    if !converged {
        // One more reference simulation prices the final iterate.
        let final_cube = make_data_cube(&c_prev, &setup.array, &setup.pulse, tg, &setup.boundaries)?;
        misfit_history.push(relative_misfit(cube, &final_cube)?);
    }

    Ok(InversionOutput {
        state: InversionState {
            eta: eta_prev,
            c_k: c_prev,
            misfit_history,
            iteration: iterations,
        },
        eta_history,
        c_history,
        effective_mass_eps: effective_eps,
        converged,
    })
}
