//! Invariant checks shared by the command-line verifier and the test
//! suites: exact-stepping oracle, assembly hand cases, factorization
//! reconstruction, the contrast round trip, the regularizer normalization,
//! and the scenario-level data-fit and forward-map identities.

use nalgebra::{DMatrix, DVector};

use crate::block::{BlockMatrix, StructureTag};
use crate::error::Result;
use crate::internal_wave::{build_reference_basis, check_datafit, estimate_internal, reference_internal};
use crate::inversion::{
    forward_check, gsvd_normalized_pairs, max_generalized_singular_value, rho_of_speeds,
    speed_of_rho, tikhonov_step,
};
use crate::rom::{assemble_mass, assemble_stiffness, block_cholesky, regularize_and_factor, rom_step, symmetrize_regularize};
use crate::scenario::Resolved;
use crate::signal::pulse_frak;
use crate::survey::{make_data_cube, make_snapshots, source_half_width, DataCube, SnapshotKind};

/// Builds `cos(j tau sqrt(A))` for the 1D discrete Laplacian (dimension
/// `dim`) by eigendecomposition and runs the three-term recursion against
/// it. Returns the maximum relative deviation over `j <= horizon`.
pub fn cosine_recursion_error(dim: usize, tau: f64, horizon: usize) -> f64 {
    let a = DMatrix::<f64>::from_fn(dim, dim, |i, j| {
        if i == j {
            2.0
        } else if i.abs_diff(j) == 1 {
            -1.0
        } else {
            0.0
        }
    });
    let eig = nalgebra::SymmetricEigen::new(a);
    let cos_of = |t: f64| -> DMatrix<f64> {
        let mut d = DMatrix::<f64>::zeros(dim, dim);
        for q in 0..dim {
            d[(q, q)] = (t * eig.eigenvalues[q].max(0.0).sqrt()).cos();
        }
        &eig.eigenvectors * d * eig.eigenvectors.transpose()
    };
    let p = BlockMatrix::new(1, dim, cos_of(tau), StructureTag::Symmetric)
        .expect("cosine of a symmetric operator is symmetric");
    let r = BlockMatrix::identity(1, dim);
    let steps = rom_step(&p, &r, horizon).expect("recursion on a dense propagator");
    let mut max_err = 0.0f64;
    for (j, u) in steps.iter().enumerate() {
        let exact = cos_of(j as f64 * tau);
        let err = (u - &exact).norm() / exact.norm();
        max_err = max_err.max(err);
    }
    max_err
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

pub const CHECK_NAMES: &[&str] = &[
    "cosine-recursion",
    "mass-stiffness-assembly",
    "block-cholesky",
    "rho-speed-roundtrip",
    "gsvd-normalization",
    "tikhonov-monotonicity",
    "rom-snapshot-exactness",
    "prop2-datafit",
    "prop2-sensitivity",
    "prop3-forward-map",
];

fn lcg_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut state = seed.max(1);
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    DMatrix::from_fn(rows, cols, |_, _| next())
}

fn check_cosine_recursion() -> CheckResult {
    let err = cosine_recursion_error(8, 0.3, 50);
    CheckResult::new(
        "cosine-recursion",
        err <= 1e-12,
        format!("max deviation {err:.3e} (tolerance 1e-12)"),
    )
}

fn check_assembly() -> CheckResult {
    let cube = DataCube::new(
        0.5,
        [3.0, 5.0, 9.0, 2.0]
            .iter()
            .map(|&d| DMatrix::from_element(1, 1, d))
            .collect(),
    )
    .expect("cube");
    let mass = assemble_mass(&cube).expect("mass");
    let stiff = assemble_stiffness(&cube).expect("stiffness");
    let hand_ok = mass.dense()[(0, 0)] == 3.0
        && mass.dense()[(0, 1)] == 5.0
        && mass.dense()[(1, 1)] == 6.0
        && stiff.dense()[(0, 0)] == 5.0
        && stiff.dense()[(0, 1)] == 6.0;

    // Hankel-plus-Toeplitz structure on a random cube.
    let n = 4;
    let m = 2;
    let mats = (0..2 * n).map(|j| lcg_matrix(m, m, ly(j))).collect();
    fn ly(j: usize) -> u64 {
        (j as u64).wrapping_mul(1315423911).wrapping_add(17)
    }
    let cube = DataCube::new(0.5, mats).expect("cube");
    let mass = assemble_mass(&cube).expect("mass");
    let mut structure_ok = true;
    for i in 0..n {
        for j in 0..n {
            for ip in 0..n {
                for jp in 0..n {
                    if i + j == ip + jp
                        && i.abs_diff(j) == ip.abs_diff(jp)
                        && mass.block(i, j).expect("block") != mass.block(ip, jp).expect("block")
                    {
                        structure_ok = false;
                    }
                }
            }
        }
    }
    CheckResult::new(
        "mass-stiffness-assembly",
        hand_ok && structure_ok,
        format!("hand case {hand_ok}, Hankel+Toeplitz structure {structure_ok}"),
    )
}

fn check_block_cholesky() -> CheckResult {
    let n = 5;
    let m = 4;
    let dim = n * m;
    let a = lcg_matrix(dim, dim, 41);
    let spd = &a * a.transpose() + DMatrix::<f64>::identity(dim, dim) * (dim as f64);
    let mass = BlockMatrix::new(n, m, 0.5 * (&spd + spd.transpose()), StructureTag::Symmetric)
        .expect("spd block matrix");
    let ok_err = match block_cholesky(&mass) {
        Ok(r) => (r.dense().transpose() * r.dense() - mass.dense()).norm() / mass.dense().norm(),
        Err(_) => f64::INFINITY,
    };
    // Indefinite input must raise the typed error.
    let mut bad = mass.clone();
    let mut blk = bad.block(2, 2).expect("block");
    blk -= DMatrix::identity(m, m) * (4.0 * dim as f64);
    bad.set_block(2, 2, &blk).expect("set");
    let raised = matches!(
        block_cholesky(&bad),
        Err(crate::error::Error::NotPositiveDefinite { .. })
    );
    CheckResult::new(
        "block-cholesky",
        ok_err <= 1e-10 && raised,
        format!("reconstruction {ok_err:.3e} (tolerance 1e-10), typed error {raised}"),
    )
}

fn check_rho_roundtrip() -> CheckResult {
    let mut worst = 0.0f64;
    for q in 0..100 {
        let c = 0.1 + 0.19 * q as f64;
        let cr = 0.13 + 0.11 * ((q * 7) % 100) as f64;
        let rho = rho_of_speeds(&[c], &[cr]).expect("rho");
        let back = speed_of_rho(&rho, &[cr]).expect("speed")[0];
        worst = worst.max((back - c).abs() / c.max(1.0));
    }
    CheckResult::new(
        "rho-speed-roundtrip",
        worst <= 1e-14,
        format!("worst relative error {worst:.3e} (tolerance 1e-14)"),
    )
}

fn check_gsvd() -> CheckResult {
    let a = lcg_matrix(6, 4, 7);
    let l = lcg_matrix(8, 4, 13);
    let pairs = match gsvd_normalized_pairs(&a, &l) {
        Ok(p) => p,
        Err(e) => return CheckResult::new("gsvd-normalization", false, e.to_string()),
    };
    let norm_err = pairs
        .iter()
        .map(|&(sa, sl)| (sa * sa + sl * sl - 1.0).abs())
        .fold(0.0f64, f64::max);
    let direct = pairs.last().map(|&(sa, sl)| sa / sl).unwrap_or(0.0);
    let eig = max_generalized_singular_value(&a, &l).unwrap_or(f64::NAN);
    let agree = (direct - eig).abs() <= 1e-10 * eig.max(1.0);
    CheckResult::new(
        "gsvd-normalization",
        norm_err <= 1e-10 && agree,
        format!("normalization error {norm_err:.3e}, route agreement {agree}"),
    )
}

fn check_tikhonov_monotonicity() -> CheckResult {
    let mut ok = true;
    for seed in 0..20u64 {
        let g = lcg_matrix(15, 6, seed * 31 + 5);
        let b = DVector::from_fn(15, |i, _| ((i as f64) * 0.37 + seed as f64).sin());
        let mut prev = f64::INFINITY;
        for &gamma in &[1e-3, 1e-2, 1e-1, 1.0, 10.0] {
            let d = tikhonov_step(&g, &b, gamma).map(|v| v.norm()).unwrap_or(f64::NAN);
            if !(d <= prev * (1.0 + 1e-12)) {
                ok = false;
            }
            prev = d;
        }
    }
    CheckResult::new(
        "tikhonov-monotonicity",
        ok,
        "step norm non-increasing in gamma on 20 random instances".into(),
    )
}

/// Scenario-dependent products shared by the heavier checks.
pub struct ScenarioChecks {
    resolved: Resolved,
    cube: DataCube,
}

impl ScenarioChecks {
    pub fn new(resolved: Resolved) -> Result<Self> {
        let cube = make_data_cube(
            &resolved.medium,
            &resolved.array,
            &resolved.pulse,
            &resolved.time_grid,
            &resolved.boundaries,
        )?;
        Ok(Self { resolved, cube })
    }

    pub fn cube(&self) -> &DataCube {
        &self.cube
    }

    fn rom_exactness(&self) -> CheckResult {
        let run = || -> Result<f64> {
            let mass_raw = assemble_mass(&self.cube)?;
            let (r, eps) = regularize_and_factor(&mass_raw, self.resolved.scenario.inversion.mass_eps)?;
            let mass = symmetrize_regularize(&mass_raw, eps)?;
            let stiff = assemble_stiffness(&self.cube)?;
            let p = crate::rom::rom_propagator(&r, &stiff)?;
            let steps = rom_step(&p, &r, self.cube.n() - 1)?;
            let _ = mass;
            let mut worst = 0.0f64;
            for (j, u) in steps.iter().enumerate() {
                let e = r.block_column(j)?;
                worst = worst.max((u - &e).norm() / e.norm().max(1e-300));
            }
            Ok(worst)
        };
        match run() {
            Ok(err) => CheckResult::new(
                "rom-snapshot-exactness",
                err <= 1e-8,
                format!("worst snapshot deviation {err:.3e} (tolerance 1e-8)"),
            ),
            Err(e) => CheckResult::new("rom-snapshot-exactness", false, e.to_string()),
        }
    }

    fn datafit(&self) -> (CheckResult, CheckResult) {
        let r = &self.resolved;
        let run = || -> Result<(f64, f64, f64)> {
            let mass_raw = assemble_mass(&self.cube)?;
            let (r_data, eps) = regularize_and_factor(&mass_raw, r.scenario.inversion.mass_eps)?;
            let frak = pulse_frak(&r.pulse, r.time_grid.dt, source_half_width(&r.pulse, r.time_grid.dt))?;
            let u_ref = make_snapshots(
                &r.background,
                &r.array,
                &frak,
                &r.time_grid,
                &r.boundaries,
                SnapshotKind::ReferenceU,
                false,
            )?;
            let basis = build_reference_basis(&u_ref, eps)?;
            let est = estimate_internal(&basis, &r_data)?;
            let fit = check_datafit(&est, &self.cube)?;

            // Sensitivity: a relative perturbation of the factor must
            // trip the residual far above the identity level.
            let mut tampered = r_data.clone();
            let mut blk = tampered.block(1, 1)?;
            blk *= 1.01;
            tampered.set_block(1, 1, &blk)?;
            let est_bad = estimate_internal(&basis, &tampered)?;
            let fit_bad = check_datafit(&est_bad, &self.cube)?;
            Ok((fit.max(), fit_bad.max(), eps))
        };
        match run() {
            Ok((good, bad, eps)) => {
                let tol = if eps == 0.0 { 1e-8 } else { 10.0 * eps };
                (
                    CheckResult::new(
                        "prop2-datafit",
                        good <= tol,
                        format!("max residual {good:.3e} (tolerance {tol:.1e}, mass eps {eps})"),
                    ),
                    CheckResult::new(
                        "prop2-sensitivity",
                        bad > 100.0 * good.max(1e-13) && bad > 1e-4,
                        format!("tampered-factor residual {bad:.3e} vs {good:.3e}"),
                    ),
                )
            }
            Err(e) => (
                CheckResult::new("prop2-datafit", false, e.to_string()),
                CheckResult::new("prop2-sensitivity", false, "skipped".into()),
            ),
        }
    }

    fn forward_map(&self) -> CheckResult {
        let r = &self.resolved;
        let run = || -> Result<f64> {
            let frak = pulse_frak(&r.pulse, r.time_grid.dt, source_half_width(&r.pulse, r.time_grid.dt))?;
            let u_true = make_snapshots(
                &r.medium,
                &r.array,
                &frak,
                &r.time_grid,
                &r.boundaries,
                SnapshotKind::TrueU,
                false,
            )?;
            let du_ref = make_snapshots(
                &r.background,
                &r.array,
                &frak,
                &r.time_grid,
                &r.boundaries,
                SnapshotKind::ReferenceU,
                true,
            )?
            .derivative_set()?;
            let cube_ref = make_data_cube(&r.background, &r.array, &r.pulse, &r.time_grid, &r.boundaries)?;
            let rho = rho_of_speeds(&r.medium.c, &r.background.c)?;
            forward_check(&rho, &u_true, &du_ref, &self.cube, &cube_ref)
        };
        match run() {
            Ok(err) => CheckResult::new(
                "prop3-forward-map",
                err <= 0.1,
                format!("max relative mismatch {err:.3e} (tolerance 0.1)"),
            ),
            Err(e) => CheckResult::new("prop3-forward-map", false, e.to_string()),
        }
    }
}

/// Runs every check; the scenario-level ones synthesize one cube and the
/// reference products.
pub fn run_all(resolved: Resolved) -> Result<Vec<CheckResult>> {
    let mut results = vec![
        check_cosine_recursion(),
        check_assembly(),
        check_block_cholesky(),
        check_rho_roundtrip(),
        check_gsvd(),
        check_tikhonov_monotonicity(),
    ];
    let ctx = ScenarioChecks::new(resolved)?;
    results.push(ctx.rom_exactness());
    let (fit, sensitivity) = ctx.datafit();
    results.push(fit);
    results.push(sensitivity);
    results.push(ctx.forward_map());
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_checks_pass() {
        assert!(check_cosine_recursion().passed);
        assert!(check_assembly().passed);
        assert!(check_block_cholesky().passed);
        assert!(check_rho_roundtrip().passed);
        assert!(check_gsvd().passed);
        assert!(check_tikhonov_monotonicity().passed);
    }
}
