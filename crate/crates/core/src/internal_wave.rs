//! Data-driven estimate of the wave field inside the inaccessible medium.
//!
//! The orthonormal spatial basis is built from snapshots simulated in the
//! reference medium; combining it with the block Cholesky factor of the
//! measured mass matrix gives internal-wave snapshots that fit the data
//! exactly, unlike the plain reference wave.
//!
//! One discipline matters here: the reference mass matrix and every
//! verification quadrature use the same midpoint rule with weight `h^2`
//! per node, so the data-fit relations hold to rounding rather than to
//! discretization error.

use nalgebra::DMatrix;

use crate::block::BlockMatrix;
use crate::error::{Error, Result};
use crate::rom::{block_cholesky, symmetrize_regularize};
use crate::survey::{DataCube, SnapshotKind, SnapshotSet};

/// Orthonormal basis of the reference snapshot space, with the block
/// Cholesky factor of the reference mass matrix that produced it.
#[derive(Debug, Clone)]
pub struct ReferenceBasis {
    /// `ngrid x (n m)`; orthonormal under the weighted midpoint inner
    /// product of the snapshot set that built it.
    pub v: DMatrix<f64>,
    pub r_ref: BlockMatrix,
    pub grid: crate::grid::Grid2D,
    pub tau: f64,
    pub n: usize,
    pub m: usize,
    pub weights: Vec<f64>,
}

/// Gram matrix of the snapshot columns under the midpoint quadrature
/// `h^2 sum_x w(x) u(x) v(x)`.
fn snapshot_gram(set: &SnapshotSet) -> DMatrix<f64> {
    let h2 = set.grid.h * set.grid.h;
    let scaled = scale_rows_sqrt(&set.fields, &set.weights);
    let mut gram = scaled.transpose() * &scaled;
    gram *= h2;
    gram
}

/// Rows scaled by `sqrt(w)`, so plain products realize the weighted ones.
fn scale_rows_sqrt(fields: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let mut out = fields.clone();
    for (row, &w) in weights.iter().enumerate() {
        if w != 1.0 {
            let sw = w.sqrt();
            for c in 0..out.ncols() {
                out[(row, c)] *= sw;
            }
        }
    }
    out
}

/// Builds the orthonormal reference basis: `M_ref` from the snapshot Gram
/// matrix, `R_ref` by block Cholesky (after the same diagonal-shift
/// regularization used on the data side), and `V = U R_ref^{-1}` by
/// triangular solve.
pub fn build_reference_basis(u_ref: &SnapshotSet, eps: f64) -> Result<ReferenceBasis> {
    let gram = snapshot_gram(u_ref);
    let m_raw = BlockMatrix::new(u_ref.n, u_ref.m, gram, crate::block::StructureTag::General)?;
    let m_reg = symmetrize_regularize(&m_raw, eps)?;
    let r_ref = block_cholesky(&m_reg)?;
    // V R = U  <=>  R^T V^T = U^T.
    let vt = r_ref
        .dense()
        .tr_solve_upper_triangular(&u_ref.fields.transpose())
        .ok_or(Error::Singular("reference factor has a zero diagonal".into()))?;
    Ok(ReferenceBasis {
        v: vt.transpose(),
        r_ref,
        grid: u_ref.grid.clone(),
        tau: u_ref.tau,
        n: u_ref.n,
        m: u_ref.m,
        weights: u_ref.weights.clone(),
    })
}

fn snapshots_from_product(basis: &ReferenceBasis, r: &BlockMatrix, kind: SnapshotKind) -> SnapshotSet {
    let fields = &basis.v * r.dense();
    SnapshotSet {
        kind,
        grid: basis.grid.clone(),
        tau: basis.tau,
        n: basis.n,
        m: basis.m,
        fields,
        derivatives: None,
        weights: basis.weights.clone(),
    }
}

/// The data-driven internal-wave estimate: snapshot `j` is `V R e_j`,
/// with `R` the factor of the measured mass matrix. The block-triangular
/// structure of `R` makes the estimate causal in the data.
pub fn estimate_internal(basis: &ReferenceBasis, r_data: &BlockMatrix) -> Result<SnapshotSet> {
    if r_data.dim() != basis.n * basis.m || r_data.block_size() != basis.m {
        return Err(Error::DimensionMismatch(format!(
            "data factor is {} with {}-blocks, basis expects {} with {}-blocks",
            r_data.dim(),
            r_data.block_size(),
            basis.n * basis.m,
            basis.m
        )));
    }
    Ok(snapshots_from_product(basis, r_data, SnapshotKind::EstimatedU))
}

/// The wave in the reference medium, reconstructed through the same
/// factorization: `V R_ref e_j`. Round-trips to the simulated reference
/// snapshots.
pub fn reference_internal(basis: &ReferenceBasis) -> SnapshotSet {
    let r_ref = basis.r_ref.clone();
    snapshots_from_product(basis, &r_ref, SnapshotKind::ReferenceU)
}

/// Residuals of the data-fit relations: for `j = 0 .. n-1`
///
/// ```text
/// r1_j: D_j           vs   integral of u_0^T u_j
/// r2_j: D_{j+n-1} + D_{n-1-j}   vs   2 integral of u_{n-1}^T u_j
/// ```
#[derive(Debug, Clone)]
pub struct DataFitReport {
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
}

impl DataFitReport {
    pub fn max(&self) -> f64 {
        self.r1
            .iter()
            .chain(self.r2.iter())
            .cloned()
            .fold(0.0, f64::max)
    }
}

pub fn check_datafit(est: &SnapshotSet, cube: &DataCube) -> Result<DataFitReport> {
    let n = est.n;
    let m = est.m;
    if cube.m() != m || cube.n() < n {
        return Err(Error::DimensionMismatch(format!(
            "cube ({} sensors, n = {}) does not match the snapshot set ({m}, {n})",
            cube.m(),
            cube.n()
        )));
    }
    let h2 = est.grid.h * est.grid.h;
    let mut u0 = est.fields.columns(0, m).into_owned();
    let mut ulast = est.fields.columns((n - 1) * m, m).into_owned();
    // Fold the quadrature weights into the left factors.
    for (row, &w) in est.weights.iter().enumerate() {
        if w != 1.0 {
            for c in 0..m {
                u0[(row, c)] *= w;
                ulast[(row, c)] *= w;
            }
        }
    }

    let rel = |num: f64, den: f64| if den > 0.0 { num / den } else { num };

    let mut r1 = Vec::with_capacity(n);
    let mut r2 = Vec::with_capacity(n);
    for j in 0..n {
        let uj = est.fields.columns(j * m, m);
        let q1 = (u0.transpose() * uj) * h2;
        let d = cube.d(j)?;
        r1.push(rel((d - &q1).norm(), d.norm()));

        let q2 = (ulast.transpose() * uj) * (2.0 * h2);
        let lhs = cube.d(j + n - 1)? + cube.d(n - 1 - j)?;
        r2.push(rel((&lhs - &q2).norm(), lhs.norm()));
    }
    Ok(DataFitReport { r1, r2 })
}

/// Linear interpolation between bracketing snapshots; returns the
/// `ngrid x m` all-source field at time `t` in `[0, (n-1) tau]`.
pub fn interpolate_in_time(set: &SnapshotSet, t: f64) -> Result<DMatrix<f64>> {
    let t_max = (set.n - 1) as f64 * set.tau;
    if t < -1e-12 || t > t_max * (1.0 + 1e-12) + 1e-12 {
        return Err(Error::IndexOutOfRange(format!(
            "interpolation time {t} outside [0, {t_max}]"
        )));
    }
    let pos = (t / set.tau).min((set.n - 1) as f64).max(0.0);
    let j = (pos.floor() as usize).min(set.n.saturating_sub(2));
    let theta = pos - j as f64;
    let a = set.fields.columns(j * set.m, set.m);
    if theta == 0.0 {
        return Ok(a.into_owned());
    }
    let b = set.fields.columns((j + 1) * set.m, set.m);
    Ok(a * (1.0 - theta) + b * theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdtd::BoundarySpec;
    use crate::grid::{Grid2D, Medium, Rect, SensorArray, TimeGrid};
    use crate::rom::{assemble_mass, regularize_and_factor};
    use crate::signal::{pulse_frak, PulseSpec};
    use crate::survey::{make_data_cube, make_snapshots, source_half_width};

    struct Setup {
        medium: Medium,
        array: SensorArray,
        pulse: PulseSpec,
        tg: TimeGrid,
        bc: BoundarySpec,
    }

    fn small_setup(contrast: f64) -> Setup {
        let pulse = PulseSpec::quarter_bandwidth(2.0 * std::f64::consts::PI).unwrap();
        let h = 0.125;
        let grid = Grid2D::new(41, 33, h, [0.0, 0.0]).unwrap();
        let omega_in = Rect { x0: 1.0, z0: 2.25, x1: 4.0, z1: 3.5 };
        let mut c = vec![1.0; grid.node_count()];
        if contrast != 1.0 {
            for k in 0..grid.nz {
                for i in 0..grid.nx {
                    let [x, z] = grid.node_pos(i, k);
                    let (dx, dz) = (x - 2.5, z - 2.9);
                    if dx * dx + dz * dz <= 0.4 * 0.4 {
                        c[grid.idx(i, k)] = contrast;
                    }
                }
            }
        }
        let medium = Medium::new(grid.clone(), c, 1.0, omega_in).unwrap();
        let array = SensorArray::centered(&grid, 4, 0.75).unwrap();
        let tau = 0.4;
        let tg = TimeGrid::from_cfl(tau, 6, h, medium.c_max(), 0.5).unwrap();
        Setup { medium, array, pulse, tg, bc: BoundarySpec::default() }
    }

    fn snapshots(setup: &Setup, medium: &Medium, kind: SnapshotKind) -> SnapshotSet {
        let frak = pulse_frak(&setup.pulse, setup.tg.dt, source_half_width(&setup.pulse, setup.tg.dt)).unwrap();
        make_snapshots(medium, &setup.array, &frak, &setup.tg, &setup.bc, kind, false).unwrap()
    }

    #[test]
    fn basis_is_orthonormal_and_causal() {
        let setup = small_setup(1.0);
        let u_ref = snapshots(&setup, &setup.medium, SnapshotKind::ReferenceU);
        let basis = build_reference_basis(&u_ref, 0.0).unwrap();
        let h2 = setup.medium.grid.h * setup.medium.grid.h;
        let scaled = scale_rows_sqrt(&basis.v, &basis.weights);
        let gram = (scaled.transpose() * &scaled) * h2;
        let dim = basis.n * basis.m;
        let err = (&gram - DMatrix::<f64>::identity(dim, dim)).norm();
        assert!(err <= 1e-8, "Gram deviation {err:.3e}");

        // Causality of the orthogonalization: rebuilding from the first
        // j+1 snapshot blocks reproduces the leading basis columns.
        let j_cut = 4usize;
        let truncated = SnapshotSet {
            kind: u_ref.kind,
            grid: u_ref.grid.clone(),
            tau: u_ref.tau,
            n: j_cut,
            m: u_ref.m,
            fields: u_ref.fields.columns(0, j_cut * u_ref.m).into_owned(),
            derivatives: None,
            weights: u_ref.weights.clone(),
        };
        let lead = build_reference_basis(&truncated, 0.0).unwrap();
        let diff = (basis.v.columns(0, j_cut * u_ref.m) - &lead.v).norm()
            / lead.v.norm();
        assert!(diff <= 1e-10, "leading basis columns changed by {diff:.3e}");
    }

    #[test]
    fn single_snapshot_single_source_is_normalization() {
        let setup = small_setup(1.0);
        let pulse = setup.pulse;
        let grid = setup.medium.grid.clone();
        let array = SensorArray::centered(&grid, 1, 0.5).unwrap();
        let tg = TimeGrid::new(setup.tg.tau, 1, setup.tg.dt, setup.tg.steps_per_tau).unwrap();
        let frak = pulse_frak(&pulse, tg.dt, source_half_width(&pulse, tg.dt)).unwrap();
        let set = make_snapshots(&setup.medium, &array, &frak, &tg, &setup.bc, SnapshotKind::ReferenceU, false).unwrap();
        let basis = build_reference_basis(&set, 0.0).unwrap();
        let h = grid.h;
        let u0 = set.fields.column(0);
        let wdot: f64 = u0
            .iter()
            .zip(&set.weights)
            .map(|(&v, &w)| w * v * v)
            .sum();
        let norm = (wdot * h * h).sqrt();
        let expected = u0 / norm;
        let err = (basis.v.column(0) - expected).norm();
        assert!(err < 1e-10);
    }

    #[test]
    fn reference_round_trip_and_estimate_identity_when_reference_is_true() {
        let setup = small_setup(1.0);
        let u_ref = snapshots(&setup, &setup.medium, SnapshotKind::ReferenceU);
        let basis = build_reference_basis(&u_ref, 0.0).unwrap();

        // V R_ref must reproduce the simulated snapshots.
        let rebuilt = reference_internal(&basis);
        let err = (&rebuilt.fields - &u_ref.fields).norm() / u_ref.fields.norm();
        assert!(err <= 1e-8, "round-trip error {err:.3e}");
        assert_eq!(rebuilt.kind, SnapshotKind::ReferenceU);

        // With R built from the same snapshots, the estimate is the
        // reference wave itself.
        let est = estimate_internal(&basis, &basis.r_ref.clone()).unwrap();
        assert_eq!(est.kind, SnapshotKind::EstimatedU);
        let err = (&est.fields - &u_ref.fields).norm() / u_ref.fields.norm();
        assert!(err <= 1e-8);
    }

    #[test]
    fn datafit_holds_for_estimate_and_fails_for_reference() {
        let setup = small_setup(1.1);
        let background = Medium::homogeneous(
            setup.medium.grid.clone(),
            setup.medium.c_bar,
            setup.medium.omega_in,
        )
        .unwrap();

        let cube = make_data_cube(&setup.medium, &setup.array, &setup.pulse, &setup.tg, &setup.bc).unwrap();
        let (r_data, eps) = regularize_and_factor(&assemble_mass(&cube).unwrap(), 0.0).unwrap();
        assert_eq!(eps, 0.0, "desk-scale mass matrix must be SPD without shift");

        let u_ref = snapshots(&setup, &background, SnapshotKind::ReferenceU);
        let basis = build_reference_basis(&u_ref, 0.0).unwrap();

        let est = estimate_internal(&basis, &r_data).unwrap();
        let fit_est = check_datafit(&est, &cube).unwrap();
        assert!(fit_est.max() <= 1e-8, "estimate residual {:.3e}", fit_est.max());

        let refw = reference_internal(&basis);
        let fit_ref = check_datafit(&refw, &cube).unwrap();
        assert!(
            fit_ref.max() > 100.0 * fit_est.max().max(1e-14),
            "reference wave must not fit foreign data: {:.3e} vs {:.3e}",
            fit_ref.max(),
            fit_est.max()
        );
    }

    #[test]
    fn estimate_is_causal_in_the_data() {
        let setup = small_setup(1.1);
        let cube = make_data_cube(&setup.medium, &setup.array, &setup.pulse, &setup.tg, &setup.bc).unwrap();
        let background = Medium::homogeneous(
            setup.medium.grid.clone(),
            setup.medium.c_bar,
            setup.medium.omega_in,
        )
        .unwrap();
        let u_ref = snapshots(&setup, &background, SnapshotKind::ReferenceU);
        let basis = build_reference_basis(&u_ref, 0.0).unwrap();

        let j_probe = 2usize;
        let (r1, _) = regularize_and_factor(&assemble_mass(&cube).unwrap(), 0.0).unwrap();
        let est1 = estimate_internal(&basis, &r1).unwrap();

        // Perturb D_{2j+2} slightly (the mass matrix must stay positive
        // definite so both factorizations run at eps = 0): snapshots up to
        // j must not change at all.
        let mut tampered = cube.clone();
        let bump = 1e-8 * tampered.matrices[2 * j_probe + 2].norm();
        tampered.matrices[2 * j_probe + 2][(0, 0)] += bump;
        let (r2, _) = regularize_and_factor(&assemble_mass(&tampered).unwrap(), 0.0).unwrap();
        let est2 = estimate_internal(&basis, &r2).unwrap();

        for j in 0..=j_probe {
            let a = est1.fields.columns(j * est1.m, est1.m);
            let b = est2.fields.columns(j * est2.m, est2.m);
            assert_eq!(a, b, "estimate at j = {j} depends on future data");
        }
        let last = est1.fields.columns((est1.n - 1) * est1.m, est1.m);
        let last2 = est2.fields.columns((est2.n - 1) * est2.m, est2.m);
        assert_ne!(last, last2, "perturbation must reach later snapshots");
    }

    #[test]
    fn interpolation_endpoints_and_midpoint() {
        let setup = small_setup(1.0);
        let set = snapshots(&setup, &setup.medium, SnapshotKind::ReferenceU);
        let exact = interpolate_in_time(&set, 2.0 * set.tau).unwrap();
        assert_eq!(exact, set.slab(2).unwrap());
        let mid = interpolate_in_time(&set, 2.5 * set.tau).unwrap();
        let avg = (set.slab(2).unwrap() + set.slab(3).unwrap()) * 0.5;
        assert!((mid - avg).norm() < 1e-12);
        let tail = interpolate_in_time(&set, (set.n - 1) as f64 * set.tau).unwrap();
        assert_eq!(tail, set.slab(set.n - 1).unwrap());
        assert!(interpolate_in_time(&set, -0.1).is_err());
        assert!(interpolate_in_time(&set, (set.n as f64) * set.tau).is_err());
    }

    /// As the reference speed approaches the true one, the estimate
    /// converges to the true internal wave. The snapshot horizon must
    /// cover the round trip to the inclusion for the path to matter.
    #[test]
    fn estimate_improves_along_a_continuation_path() {
        let pulse = PulseSpec::quarter_bandwidth(2.0 * std::f64::consts::PI).unwrap();
        let h = 0.125;
        let grid = Grid2D::new(41, 33, h, [0.0, 0.0]).unwrap();
        let omega_in = Rect { x0: 1.0, z0: 2.25, x1: 4.0, z1: 3.5 };
        let mut c = vec![1.0; grid.node_count()];
        for k in 0..grid.nz {
            for i in 0..grid.nx {
                let [x, z] = grid.node_pos(i, k);
                let (dx, dz) = (x - 2.5, z - 2.7);
                if dx * dx + dz * dz <= 0.4 * 0.4 {
                    c[grid.idx(i, k)] = 1.15;
                }
            }
        }
        let medium = Medium::new(grid.clone(), c, 1.0, omega_in).unwrap();
        let array = SensorArray::centered(&grid, 4, 0.75).unwrap();
        let tg = TimeGrid::from_cfl(0.45, 16, h, medium.c_max(), 0.5).unwrap();
        let bc = BoundarySpec::default();
        let setup = Setup { medium, array, pulse, tg, bc };

        let cube = make_data_cube(&setup.medium, &setup.array, &setup.pulse, &setup.tg, &setup.bc).unwrap();
        let (r_data, eps) = regularize_and_factor(&assemble_mass(&cube).unwrap(), 0.0).unwrap();
        let u_true = snapshots(&setup, &setup.medium, SnapshotKind::TrueU);

        let mut errs = Vec::new();
        for &s in &[0.0, 0.5, 1.0] {
            let c: Vec<f64> = setup
                .medium
                .c
                .iter()
                .map(|&cv| setup.medium.c_bar + s * (cv - setup.medium.c_bar))
                .collect();
            let med = Medium::new(setup.medium.grid.clone(), c, setup.medium.c_bar, setup.medium.omega_in).unwrap();
            let u_ref = snapshots(&setup, &med, SnapshotKind::ReferenceU);
            let basis = build_reference_basis(&u_ref, eps).unwrap();
            let est = estimate_internal(&basis, &r_data).unwrap();
            errs.push((&est.fields - &u_true.fields).norm() / u_true.fields.norm());
        }
        assert!(
            errs[0] >= errs[1] - 1e-9 && errs[1] >= errs[2] - 1e-9,
            "estimate error not monotone along the path: {errs:?}"
        );
        assert!(errs[2] < 0.9 * errs[0], "no improvement near the truth: {errs:?}");
    }
}
