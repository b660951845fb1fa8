//! Regularized solution of the linearized data-fit problem: Tikhonov with
//! a spectral-norm-scaled coefficient, and smoothed total variation with
//! the coefficient scaled by the largest generalized singular value of the
//! operator pencil.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, QR, SVD};

use crate::error::{Error, Result};

use super::basis::SearchBasis;
use super::speed_of_rho;

/// Solves `(G^T G + alpha I) x = G^T b` with `alpha = (gamma |G|_2)^2`.
pub fn tikhonov_step(gamma_mat: &DMatrix<f64>, b: &DVector<f64>, gamma: f64) -> Result<DVector<f64>> {
    if gamma_mat.nrows() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "operator has {} rows, data vector {}",
            gamma_mat.nrows(),
            b.len()
        )));
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma {gamma} must be > 0")));
    }
    let gtg = gamma_mat.transpose() * gamma_mat;
    let sigma2 = largest_eigenvalue(&gtg)?;
    if sigma2 <= 0.0 {
        return Err(Error::InvalidArgument("operator is identically zero".into()));
    }
    let alpha = gamma * gamma * sigma2;
    let n = gtg.nrows();
    let lhs = &gtg + DMatrix::<f64>::identity(n, n) * alpha;
    let rhs = gamma_mat.transpose() * b;
    let chol = Cholesky::new(lhs)
        .ok_or(Error::Singular("regularized normal equations not positive definite".into()))?;
    Ok(chol.solve(&rhs))
}

fn largest_eigenvalue(sym: &DMatrix<f64>) -> Result<f64> {
    let eig = SymmetricEigen::new(0.5 * (sym + sym.transpose()));
    eig.eigenvalues
        .iter()
        .cloned()
        .reduce(f64::max)
        .ok_or(Error::InvalidArgument("empty matrix".into()))
}

/// Largest generalized singular value of the pencil `(A, L)`: the square
/// root of the largest eigenvalue of `(L^T L)^{-1} A^T A`, computed
/// through the Cholesky reduction to a symmetric eigenproblem.
pub fn max_generalized_singular_value(a: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<f64> {
    if a.ncols() != l.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "pencil blocks have {} and {} columns",
            a.ncols(),
            l.ncols()
        )));
    }
    let ltl = l.transpose() * l;
    let chol = Cholesky::new(ltl).ok_or(Error::RegularizationSetup(
        "regularization operator is rank deficient".into(),
    ))?;
    let ata = a.transpose() * a;
    // C = L^{-1} (A^T A) L^{-T} with L the Cholesky factor.
    let half = chol.l().solve_lower_triangular(&ata).ok_or(Error::Singular(
        "Cholesky factor has a zero diagonal".into(),
    ))?;
    let c = chol
        .l()
        .solve_lower_triangular(&half.transpose())
        .ok_or(Error::Singular("Cholesky factor has a zero diagonal".into()))?;
    Ok(largest_eigenvalue(&c)?.max(0.0).sqrt())
}

/// Normalized generalized singular value pairs `(sigma_A_j, sigma_L_j)`
/// with `sigma_A^2 + sigma_L^2 = 1`, ascending in `sigma_A / sigma_L`.
///
/// Computed by the direct route: thin QR of the stacked pencil, then
/// singular values of the two Q blocks (a CS-decomposition pair). Serves
/// as the independent cross-check of the eigenvalue route above.
pub fn gsvd_normalized_pairs(a: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<Vec<(f64, f64)>> {
    if a.ncols() != l.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "pencil blocks have {} and {} columns",
            a.ncols(),
            l.ncols()
        )));
    }
    let p = a.ncols();
    let mut stacked = DMatrix::<f64>::zeros(a.nrows() + l.nrows(), p);
    stacked.rows_mut(0, a.nrows()).copy_from(a);
    stacked.rows_mut(a.nrows(), l.nrows()).copy_from(l);
    let qr = QR::new(stacked);
    let q = qr.q();
    if (0..p).any(|j| qr.r()[(j, j)].abs() < 1e-12) {
        return Err(Error::RegularizationSetup("stacked pencil is rank deficient".into()));
    }
    let q1 = q.rows(0, a.nrows()).into_owned();
    let q2 = q.rows(a.nrows(), l.nrows()).into_owned();
    let mut sa: Vec<f64> = SVD::new(q1, false, false).singular_values.iter().cloned().collect();
    let mut sl: Vec<f64> = SVD::new(q2, false, false).singular_values.iter().cloned().collect();
    // Cosines ascending pair with sines descending.
    sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    sl.sort_by(|x, y| y.partial_cmp(x).unwrap());
    Ok(sa.into_iter().zip(sl).collect())
}

/// One smoothed-TV step: minimizes
/// `|G d - b|^2 + alpha |Psi d + xi|^2` where `Psi` and `xi` come from
/// the reweighted discrete gradient of the linearized speed map and
/// `alpha = (gamma sigma)^2` with `sigma` the largest generalized
/// singular value of `(G, Psi)`.
#[allow(clippy::too_many_arguments)]
pub fn tv_step(
    gamma_mat: &DMatrix<f64>,
    b: &DVector<f64>,
    eta_k: &DVector<f64>,
    basis: &SearchBasis,
    c_ref_field: &[f64],
    gamma: f64,
    smoothing_eps: f64,
) -> Result<DVector<f64>> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma {gamma} must be > 0")));
    }
    let n_rho = basis.n_rho();
    if gamma_mat.ncols() != n_rho || eta_k.len() != n_rho {
        return Err(Error::DimensionMismatch(format!(
            "operator has {} columns, basis {} functions, eta {} entries",
            gamma_mat.ncols(),
            n_rho,
            eta_k.len()
        )));
    }
    if c_ref_field.len() != basis.grid.node_count() {
        return Err(Error::DimensionMismatch(
            "reference speed field does not match the grid".into(),
        ));
    }

    // Current speed estimate and the linearization factor
    // d c / d eta_q = c~(x) * (1 + rho~ / sqrt(4 + rho~^2)) / 2 * beta_q(x).
    let rho_k = basis.expand(eta_k)?;
    let c_k = speed_of_rho(&rho_k, c_ref_field)?;
    let nodes = basis.window_nodes();
    let (wx, wz) = basis.window_shape();
    let n_in = nodes.len();
    let local_of: std::collections::HashMap<usize, usize> =
        nodes.iter().cloned().enumerate().map(|(l, g)| (g, l)).collect();

    // Dense Jacobian of the speed map on the window nodes.
    let mut jac = DMatrix::<f64>::zeros(n_in, n_rho);
    for (q, f) in basis.functions.iter().enumerate() {
        for &(node, v) in &f.support {
            if let Some(&l) = local_of.get(&node) {
                let r = rho_k[node];
                let factor = 0.5 * c_k[node] * (1.0 + r / (4.0 + r * r).sqrt());
                jac[(l, q)] = factor * v;
            }
        }
    }

    // Forward-difference gradient rows on the window, IRLS-weighted by
    // w = (|grad c~|^2 + eps^2)^(-1/4) per node; the row scale 1/h and
    // the quadrature weight h^2 combine to h, split as sqrt over the
    // squared form.
    let c_win: Vec<f64> = nodes.iter().map(|&g| c_k[g]).collect();
    let h = basis.grid.h;
    let local = |i: usize, k: usize| k * wx + i;
    let mut rows: Vec<(usize, usize, f64)> = Vec::new(); // (from, to, weight)
    let mut xi_entries: Vec<f64> = Vec::new();
    for k in 0..wz {
        for i in 0..wx {
            let l = local(i, k);
            let gx = if i + 1 < wx { (c_win[local(i + 1, k)] - c_win[l]) / h } else { 0.0 };
            let gz = if k + 1 < wz { (c_win[local(i, k + 1)] - c_win[l]) / h } else { 0.0 };
            // IRLS weight per node, applied to both of its difference
            // rows. The absolute row scale is absorbed by the
            // GSVD-scaled alpha.
            let row_w = (gx * gx + gz * gz + smoothing_eps * smoothing_eps).powf(-0.25);
            if i + 1 < wx {
                rows.push((l, local(i + 1, k), row_w));
                xi_entries.push(row_w * (c_win[local(i + 1, k)] - c_win[l]) / h);
            }
            if k + 1 < wz {
                rows.push((l, local(i, k + 1), row_w));
                xi_entries.push(row_w * (c_win[local(i, k + 1)] - c_win[l]) / h);
            }
        }
    }
    let n_rows = rows.len();
    let mut psi = DMatrix::<f64>::zeros(n_rows, n_rho);
    for (r, &(from, to, w)) in rows.iter().enumerate() {
        for q in 0..n_rho {
            let d = jac[(to, q)] - jac[(from, q)];
            if d != 0.0 {
                psi[(r, q)] = w * d / h;
            }
        }
    }
    let xi = DVector::from_vec(xi_entries);

    let sigma = max_generalized_singular_value(gamma_mat, &psi)?;
    let alpha = gamma * gamma * sigma * sigma;

    let lhs = gamma_mat.transpose() * gamma_mat + (psi.transpose() * &psi) * alpha;
    let rhs = gamma_mat.transpose() * b - (psi.transpose() * &xi) * alpha;
    let chol = Cholesky::new(lhs)
        .ok_or(Error::RegularizationSetup("TV normal equations not positive definite".into()))?;
    Ok(chol.solve(&rhs))
}
