//! Sensitivity matrices of the linearized forward map and the assembly of
//! the least-squares system.
//!
//! For each basis function the time-cumulative spatial coupling between
//! the estimated internal wave and the reference derivative field is an
//! `m x m` matrix per snapshot time; midpoint in time on the snapshot
//! lattice (linear interpolation to the half steps), midpoint with the
//! shared node weights in space.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};

use crate::survey::{DataCube, SnapshotSet};

use super::basis::SearchBasis;

/// Per-weight, per-time coupling kernel shared by the sensitivity
/// assembly and the forward-map verifier. The scattered-field relation is
/// a time convolution between the internal wave and the reference
/// derivative:
///
/// ```text
/// K_w(j tau)^{(r,s)} = integral_0^{j tau} dt1 h^2 sum_x w(x)
///                       u^{(s)}(t1, x) du^{(r)}(j tau - t1, x)
/// ```
///
/// evaluated per snapshot time by the trapezoid rule on the tau lattice.
fn time_integrated_coupling(
    weights: &[Vec<(usize, f64)>],
    u: &SnapshotSet,
    du: &SnapshotSet,
) -> Result<Vec<Vec<DMatrix<f64>>>> {
    if !u.same_lattice(du) {
        return Err(Error::DimensionMismatch(
            "wave and derivative sets live on different lattices".into(),
        ));
    }
    let m = u.m;
    let n = u.n;
    let tau = u.tau;
    let h2 = u.grid.h * u.grid.h;

    Ok(weights
        .par_iter()
        .map(|w| {
            // Support-restricted field slabs per lattice time; the
            // quadrature weights fold into the derivative factor.
            let ns = w.len();
            let mut u_slabs = Vec::with_capacity(n);
            let mut duw_slabs = Vec::with_capacity(n);
            for k in 0..n {
                let uk = u.fields.columns(k * m, m);
                let duk = du.fields.columns(k * m, m);
                let mut us = DMatrix::<f64>::zeros(ns, m);
                let mut ds = DMatrix::<f64>::zeros(ns, m);
                for (row, &(node, beta)) in w.iter().enumerate() {
                    let scale = h2 * beta * u.weights[node];
                    for c in 0..m {
                        us[(row, c)] = uk[(node, c)];
                        ds[(row, c)] = scale * duk[(node, c)];
                    }
                }
                u_slabs.push(us);
                duw_slabs.push(ds);
            }
            let mut out = Vec::with_capacity(n);
            out.push(DMatrix::<f64>::zeros(m, m));
            for j in 1..n {
                let mut acc = DMatrix::<f64>::zeros(m, m);
                for k in 0..=j {
                    let g = duw_slabs[j - k].transpose() * &u_slabs[k];
                    let trap = if k == 0 || k == j { 0.5 } else { 1.0 };
                    acc += g * (trap * tau);
                }
                out.push(acc);
            }
            out
        })
        .collect())
}

/// Sensitivity matrices `Lambda_q(j tau)` for every basis function,
/// cumulative in `j`: `result[q][j]` is `m x m`.
pub fn lambda_matrices(
    basis: &SearchBasis,
    u_est: &SnapshotSet,
    du_ref: &SnapshotSet,
) -> Result<Vec<Vec<DMatrix<f64>>>> {
    if basis.grid != u_est.grid {
        return Err(Error::DimensionMismatch(
            "search basis and snapshots live on different grids".into(),
        ));
    }
    let weights: Vec<Vec<(usize, f64)>> =
        basis.functions.iter().map(|f| f.support.clone()).collect();
    time_integrated_coupling(&weights, u_est, du_ref)
}

/// Verifies the exact forward relation with the true internal wave: the
/// data difference must match the time-space quadrature of the
/// `rho u du_ref` convolution. Returns the maximum mismatch over entries
/// above 1% of the peak data difference, relative to that peak. (An
/// entry-relative measure would only report the denominators of
/// threshold-level entries, not the accuracy of the identity.)
pub fn forward_check(
    rho: &[f64],
    u_true: &SnapshotSet,
    du_ref: &SnapshotSet,
    cube: &DataCube,
    cube_ref: &DataCube,
) -> Result<f64> {
    if rho.len() != u_true.grid.node_count() {
        return Err(Error::DimensionMismatch("contrast field does not match the grid".into()));
    }
    let support: Vec<(usize, f64)> = rho
        .iter()
        .enumerate()
        .filter(|&(_, &v)| v != 0.0)
        .map(|(q, &v)| (q, v))
        .collect();
    let rhs = time_integrated_coupling(&[support], u_true, du_ref)?.remove(0);

    let n = u_true.n;
    let m = u_true.m;
    let mut peak = 0.0f64;
    let mut lhs = Vec::with_capacity(n);
    for j in 0..n {
        let d = cube.d(j)? - cube_ref.d(j)?;
        peak = peak.max(d.amax());
        lhs.push(d);
    }
    if peak == 0.0 {
        return Ok(0.0);
    }
    let mut worst = 0.0f64;
    for j in 0..n {
        for r in 0..m {
            for s in 0..m {
                let l = lhs[j][(r, s)];
                if l.abs() >= 0.01 * peak {
                    worst = worst.max((rhs[j][(r, s)] - l).abs() / peak);
                }
            }
        }
    }
    Ok(worst)
}

/// Stacks the sensitivity matrices and the data difference into the dense
/// least-squares pair `(Gamma, b)`: rows lexicographic over `(j, r, s)`
/// with `j` outermost, each row scaled by `sqrt(tau)`.
pub fn assemble_lsq(
    lambdas: &[Vec<DMatrix<f64>>],
    cube: &DataCube,
    cube_ref: &DataCube,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n_rho = lambdas.len();
    if n_rho == 0 {
        return Err(Error::InvalidArgument("no sensitivity matrices".into()));
    }
    let n = lambdas[0].len();
    let m = lambdas[0][0].nrows();
    if cube.m() != m || cube_ref.m() != m || cube.n() < n || cube_ref.n() < n {
        return Err(Error::DimensionMismatch(format!(
            "cubes ({}x{}, {}x{}) do not cover the {n} sensitivity snapshots of size {m}",
            cube.n(),
            cube.m(),
            cube_ref.n(),
            cube_ref.m()
        )));
    }
    let sqrt_tau = cube.tau.sqrt();
    let rows = n * m * m;
    let mut gamma = DMatrix::<f64>::zeros(rows, n_rho);
    let mut b = DVector::<f64>::zeros(rows);
    for j in 0..n {
        let diff = cube.d(j)? - cube_ref.d(j)?;
        for r in 0..m {
            for s in 0..m {
                let row = j * m * m + r * m + s;
                b[row] = sqrt_tau * diff[(r, s)];
                for (q, lam) in lambdas.iter().enumerate() {
                    gamma[(row, q)] = sqrt_tau * lam[j][(r, s)];
                }
            }
        }
    }
    Ok((gamma, b))
}
