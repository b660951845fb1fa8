//! Data-driven Galerkin reduced-order model of the wave propagator.
//!
//! The mass and stiffness matrices are assembled from the sampled data
//! matrices alone:
//!
//! ```text
//! M_{i,j} = (D_{i+j} + D_{|i-j|}) / 2
//! S_{i,j} = (D_{i+j+1} + D_{|i-j-1|} + D_{|i+j-1|} + D_{|i-j+1|}) / 4
//! ```
//!
//! The block Cholesky square root `M = R^T R` carries the causal structure
//! of the data; the reduced propagator is `R^{-T} S R^{-1}` and drives the
//! exact three-term time stepping of the snapshot evolution.

use nalgebra::{Cholesky, DMatrix};

use crate::block::{BlockMatrix, StructureTag};
use crate::error::{Error, Result};
use crate::survey::DataCube;

#[derive(Debug, Clone)]
pub struct MassStiffness {
    pub mass: BlockMatrix,
    pub stiffness: BlockMatrix,
}

impl MassStiffness {
    /// Assembles both Galerkin matrices and symmetrizes the mass matrix
    /// with the given diagonal-shift regularization.
    pub fn from_cube(cube: &DataCube, eps: f64) -> Result<Self> {
        let mass = symmetrize_regularize(&assemble_mass(cube)?, eps)?;
        let stiffness = assemble_stiffness(cube)?;
        Ok(Self { mass, stiffness })
    }
}

/// Factorized model: `mass = R^T R` and the reduced propagator.
#[derive(Debug, Clone)]
pub struct RomModel {
    pub r: BlockMatrix,
    pub p_rom: BlockMatrix,
    pub regularization_eps: f64,
}

impl RomModel {
    pub fn from_cube(cube: &DataCube, eps: f64) -> Result<Self> {
        let ms = MassStiffness::from_cube(cube, eps)?;
        let r = block_cholesky(&ms.mass)?;
        let p_rom = rom_propagator(&r, &ms.stiffness)?;
        Ok(Self { r, p_rom, regularization_eps: eps })
    }
}

/// Mass matrix from `D_0 .. D_{2n-2}`.
pub fn assemble_mass(cube: &DataCube) -> Result<BlockMatrix> {
    let n = cube.n();
    let m = cube.m();
    if cube.len() < 2 * n - 1 {
        return Err(Error::InvalidArgument(format!(
            "mass assembly needs D_0..D_{}, cube has {}",
            2 * n - 2,
            cube.len()
        )));
    }
    let mut out = BlockMatrix::zeros(n, m, StructureTag::General);
    let mut block = DMatrix::<f64>::zeros(m, m);
    for i in 0..n {
        for j in 0..n {
            let a = cube.d(i + j)?;
            let b = cube.d(i.abs_diff(j))?;
            for c in 0..m {
                for r in 0..m {
                    block[(r, c)] = 0.5 * (a[(r, c)] + b[(r, c)]);
                }
            }
            out.set_block(i, j, &block)?;
        }
    }
    Ok(out)
}

/// Stiffness matrix from `D_0 .. D_{2n-1}`.
pub fn assemble_stiffness(cube: &DataCube) -> Result<BlockMatrix> {
    let n = cube.n();
    let m = cube.m();
    if cube.len() < 2 * n {
        return Err(Error::InvalidArgument(format!(
            "stiffness assembly needs D_{}, cube holds only {} matrices",
            2 * n - 1,
            cube.len()
        )));
    }
    let mut out = BlockMatrix::zeros(n, m, StructureTag::General);
    let mut block = DMatrix::<f64>::zeros(m, m);
    for i in 0..n {
        for j in 0..n {
            let t1 = cube.d(i + j + 1)?;
            let t2 = cube.d((i as i64 - j as i64 - 1).unsigned_abs() as usize)?;
            let t3 = cube.d((i as i64 + j as i64 - 1).unsigned_abs() as usize)?;
            let t4 = cube.d((i as i64 - j as i64 + 1).unsigned_abs() as usize)?;
            for c in 0..m {
                for r in 0..m {
                    block[(r, c)] = 0.25 * (t1[(r, c)] + t2[(r, c)] + t3[(r, c)] + t4[(r, c)]);
                }
            }
            out.set_block(i, j, &block)?;
        }
    }
    Ok(out)
}

/// `M <- (M + M^T)/2`, then `M_{i,i} += eps * M_{0,0}`. The diagonal shift
/// by the noise-free block keeps the block Hankel-plus-Toeplitz structure;
/// spectral truncation would destroy it.
pub fn symmetrize_regularize(mass: &BlockMatrix, eps: f64) -> Result<BlockMatrix> {
    if eps < 0.0 {
        return Err(Error::InvalidArgument(format!("regularization eps {eps} must be >= 0")));
    }
    let n = mass.nblocks();
    let m = mass.block_size();
    let dense = mass.dense();
    let mut sym = DMatrix::<f64>::zeros(dense.nrows(), dense.ncols());
    for j in 0..dense.ncols() {
        for i in 0..dense.nrows() {
            sym[(i, j)] = 0.5 * (dense[(i, j)] + dense[(j, i)]);
        }
    }
    let mut out = BlockMatrix::new(n, m, sym, StructureTag::Symmetric)?;
    if eps > 0.0 {
        let shift = out.block(0, 0)?;
        // The symmetrized (0,0) block, scaled; added to every diagonal block.
        for i in 0..n {
            let mut d = out.block(i, i)?;
            d += eps * &shift;
            out.set_block(i, i, &d)?;
        }
    }
    Ok(out)
}

/// Block Cholesky square root: block-upper-triangular `R` with
/// `R^T R = M`, diagonal blocks with positive diagonal (unique).
///
/// Column-block algorithm: for each column `j`, the off-diagonal blocks
/// solve `R_{i,i}^T R_{i,j} = M_{i,j} - sum_{q<i} R_{q,i}^T R_{q,j}` and
/// the diagonal block is the dense upper Cholesky factor of the Schur
/// complement. A failed dense factorization reports the block index so
/// callers can raise the regularization.
pub fn block_cholesky(mass: &BlockMatrix) -> Result<BlockMatrix> {
    let n = mass.nblocks();
    let m = mass.block_size();
    let mut r = BlockMatrix::zeros(n, m, StructureTag::General);
    for j in 0..n {
        for i in 0..=j {
            let mut acc = mass.block(i, j)?;
            for q in 0..i {
                let rqi = r.block_view(q, i);
                let rqj = r.block_view(q, j);
                acc -= rqi.transpose() * rqj;
            }
            if i < j {
                let rii = r.block(i, i)?;
                let x = rii.tr_solve_upper_triangular(&acc).ok_or(Error::Singular(format!(
                    "zero pivot in diagonal block {i}"
                )))?;
                r.set_block(i, j, &x)?;
            } else {
                // acc is the Schur complement of the diagonal block.
                let sym = 0.5 * (&acc + acc.transpose());
                let chol = Cholesky::new(sym).ok_or(Error::NotPositiveDefinite { block: j })?;
                r.set_block(j, j, &chol.l().transpose())?;
            }
        }
    }
    BlockMatrix::new(r.nblocks(), r.block_size(), r.into_dense(), StructureTag::BlockUpperTriangular)
}

/// Applies the escalation policy: factor `M` regularized with `eps`,
/// multiplying `eps` by 10 on failure (starting from 1e-2 when it was
/// zero), up to four retries. Returns the factor and the eps that worked.
pub fn regularize_and_factor(mass_raw: &BlockMatrix, eps: f64) -> Result<(BlockMatrix, f64)> {
    let mut eps_k = eps;
    for attempt in 0..=4 {
        let mass = symmetrize_regularize(mass_raw, eps_k)?;
        match block_cholesky(&mass) {
            Ok(r) => return Ok((r, eps_k)),
            Err(Error::NotPositiveDefinite { .. }) if attempt < 4 => {
                eps_k = if eps_k == 0.0 { 1e-2 } else { 10.0 * eps_k };
            }
            Err(e) => return Err(e),
        }
    }
    unreachable!("loop returns on the last attempt");
}

/// Reduced propagator `R^{-T} S R^{-1}`, via triangular solves.
pub fn rom_propagator(r: &BlockMatrix, s: &BlockMatrix) -> Result<BlockMatrix> {
    if r.dim() != s.dim() || r.block_size() != s.block_size() {
        return Err(Error::DimensionMismatch("propagator factors disagree in size".into()));
    }
    let rd = r.dense();
    // y = R^{-T} S
    let y = rd
        .tr_solve_upper_triangular(s.dense())
        .ok_or(Error::Singular("Cholesky factor has a zero diagonal".into()))?;
    // p = y R^{-1}  <=>  R^T p^T = y^T
    let pt = rd
        .tr_solve_upper_triangular(&y.transpose())
        .ok_or(Error::Singular("Cholesky factor has a zero diagonal".into()))?;
    let p = pt.transpose();
    // Congruence of a symmetric S is symmetric; fold rounding asymmetry.
    let sym = 0.5 * (&p + p.transpose());
    BlockMatrix::new(r.nblocks(), r.block_size(), sym, StructureTag::Symmetric)
}

/// Exact three-term time stepping in the reduced space:
/// `u_0 = R e_0`, `u_{j+1} = 2 P u_j - u_{|j-1|}`.
pub fn rom_step(p_rom: &BlockMatrix, r: &BlockMatrix, horizon: usize) -> Result<Vec<DMatrix<f64>>> {
    if p_rom.dim() != r.dim() {
        return Err(Error::DimensionMismatch("propagator and factor disagree in size".into()));
    }
    let p = p_rom.dense();
    let mut out = Vec::with_capacity(horizon + 1);
    out.push(r.block_column(0)?);
    if horizon == 0 {
        return Ok(out);
    }
    // j = 0 uses u_{|-1|} = u_1: u_1 = P u_0.
    out.push(p * &out[0]);
    for j in 1..horizon {
        let next = 2.0 * (p * &out[j]) - &out[j - 1];
        out.push(next);
    }
    Ok(out)
}

/// Extends the Galerkin coefficients beyond the data horizon:
/// `M (g_{j+1} + g_{j-1}) = 2 S g_j`, seeded with the trivial coefficients
/// `g_{n-2} = e_{n-2}`, `g_{n-1} = e_{n-1}`. Returns `g_n .. g_horizon`.
pub fn galerkin_extend(
    mass: &BlockMatrix,
    stiffness: &BlockMatrix,
    g_nm2: &DMatrix<f64>,
    g_nm1: &DMatrix<f64>,
    horizon: usize,
) -> Result<Vec<DMatrix<f64>>> {
    let n = mass.nblocks();
    if horizon < n {
        return Ok(Vec::new());
    }
    let r = block_cholesky(mass)?;
    let rd = r.dense();
    let s = stiffness.dense();
    let solve = |rhs: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let y = rd
            .tr_solve_upper_triangular(rhs)
            .ok_or(Error::Singular("mass factor has a zero diagonal".into()))?;
        rd.solve_upper_triangular(&y)
            .ok_or(Error::Singular("mass factor has a zero diagonal".into()))
    };
    let mut prev = g_nm2.clone();
    let mut curr = g_nm1.clone();
    let mut out = Vec::with_capacity(horizon - n + 1);
    for _ in n..=horizon {
        let next = solve(&(2.0 * (s * &curr)))? - &prev;
        prev = curr;
        curr = next.clone();
        out.push(next);
    }
    Ok(out)
}

/// Block column `j` of the identity: `e_j`, sized for an `n x n` grid of
/// `m x m` blocks.
pub fn identity_block_column(n: usize, m: usize, j: usize) -> DMatrix<f64> {
    let mut e = DMatrix::<f64>::zeros(n * m, m);
    for q in 0..m {
        e[(j * m + q, q)] = 1.0;
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cube_from_scalars(tau: f64, ds: &[f64]) -> DataCube {
        DataCube::new(tau, ds.iter().map(|&d| DMatrix::from_element(1, 1, d)).collect()).unwrap()
    }

    fn random_matrix(dim: usize, seed: u64) -> DMatrix<f64> {
        let mut state = seed.max(1);
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        DMatrix::from_fn(dim, dim, |_, _| next())
    }

    fn random_spd_block(n: usize, m: usize, seed: u64) -> BlockMatrix {
        let dim = n * m;
        let a = random_matrix(dim, seed);
        let spd = &a * a.transpose() + DMatrix::<f64>::identity(dim, dim) * (0.5 * dim as f64);
        let sym = 0.5 * (&spd + spd.transpose());
        BlockMatrix::new(n, m, sym, StructureTag::Symmetric).unwrap()
    }

    #[test]
    fn mass_hand_case() {
        // n = 2, m = 1, D = (d0, d1, d2): M = [[d0, d1], [d1, (d2+d0)/2]].
        let cube = cube_from_scalars(0.5, &[3.0, 5.0, 9.0, 2.0]);
        let m = assemble_mass(&cube).unwrap();
        assert_eq!(m.dense()[(0, 0)], 3.0);
        assert_eq!(m.dense()[(0, 1)], 5.0);
        assert_eq!(m.dense()[(1, 0)], 5.0);
        assert_eq!(m.dense()[(1, 1)], 0.5 * (9.0 + 3.0));
    }

    #[test]
    fn stiffness_hand_case() {
        // Block (0,0) = D_1; block (0,1) = (D_2 + D_0)/2.
        let cube = cube_from_scalars(0.5, &[3.0, 5.0, 9.0, 2.0]);
        let s = assemble_stiffness(&cube).unwrap();
        assert_eq!(s.dense()[(0, 0)], 5.0);
        assert_eq!(s.dense()[(0, 1)], 0.5 * (9.0 + 3.0));
        assert_eq!(s.dense()[(1, 0)], 0.5 * (9.0 + 3.0));
        // (1,1): (D_3 + D_1 + D_1 + D_1)/4
        assert_eq!(s.dense()[(1, 1)], 0.25 * (2.0 + 3.0 * 5.0));
    }

    #[test]
    fn stiffness_requires_the_extra_matrix() {
        let cube = cube_from_scalars(0.5, &[3.0, 5.0, 9.0]);
        assert!(assemble_mass(&cube).is_ok());
        assert!(assemble_stiffness(&cube).is_err());
    }

    #[test]
    fn regularization_values_and_identity() {
        let m = random_spd_block(3, 2, 11);
        let same = symmetrize_regularize(&m, 0.0).unwrap();
        assert_eq!(same.dense(), m.dense());
        let shifted = symmetrize_regularize(&m, 0.01).unwrap();
        let d00 = m.block(0, 0).unwrap();
        for i in 0..3 {
            let diff = shifted.block(i, i).unwrap() - m.block(i, i).unwrap();
            assert!((diff - 0.01 * &d00).norm() < 1e-14);
        }
    }

    #[test]
    fn cholesky_identity_and_reconstruction() {
        let id = BlockMatrix::identity(3, 2);
        let r = block_cholesky(&id).unwrap();
        assert_eq!(r.dense(), id.dense());

        let m = random_spd_block(4, 3, 42);
        let r = block_cholesky(&m).unwrap();
        assert_eq!(r.tag(), StructureTag::BlockUpperTriangular);
        let err = (r.dense().transpose() * r.dense() - m.dense()).norm() / m.dense().norm();
        assert!(err <= 1e-12, "reconstruction error {err:.3e}");
        // Positive diagonal convention.
        for q in 0..r.dim() {
            assert!(r.dense()[(q, q)] > 0.0);
        }
    }

    #[test]
    fn cholesky_single_block_is_dense_cholesky() {
        let m = random_spd_block(1, 5, 3);
        let r = block_cholesky(&m).unwrap();
        let dense = Cholesky::new(m.block(0, 0).unwrap()).unwrap().l().transpose();
        assert!((r.dense() - dense).norm() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite_with_block_index() {
        let mut m = random_spd_block(3, 2, 9);
        let mut bad = m.block(2, 2).unwrap();
        bad[(0, 0)] = -100.0;
        bad[(1, 1)] = -100.0;
        m.set_block(2, 2, &bad).unwrap();
        let m = BlockMatrix::new(3, 2, 0.5 * (m.dense() + m.dense().transpose()), StructureTag::Symmetric).unwrap();
        match block_cholesky(&m) {
            Err(Error::NotPositiveDefinite { block }) => assert_eq!(block, 2),
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
    }

    #[test]
    fn escalation_reaches_a_working_eps() {
        // Indefinite mass with an SPD (0,0) block: the diagonal shift
        // eventually dominates within the four-retry budget.
        let n = 3;
        let m = 2;
        let mut bm = random_spd_block(n, m, 5);
        let mut middle = bm.block(1, 1).unwrap();
        middle -= DMatrix::identity(m, m) * 20.0;
        bm.set_block(1, 1, &middle).unwrap();
        let bm = BlockMatrix::new(n, m, 0.5 * (bm.dense() + bm.dense().transpose()), StructureTag::Symmetric).unwrap();
        assert!(block_cholesky(&bm).is_err());
        let (r, eps) = regularize_and_factor(&bm, 0.0).unwrap();
        assert!(eps > 0.0);
        let reg = symmetrize_regularize(&bm, eps).unwrap();
        let err = (r.dense().transpose() * r.dense() - reg.dense()).norm() / reg.dense().norm();
        assert!(err < 1e-12);
    }

    #[test]
    fn propagator_of_mass_is_identity() {
        let m = random_spd_block(3, 2, 17);
        let r = block_cholesky(&m).unwrap();
        let p = rom_propagator(&r, &m).unwrap();
        let err = (p.dense() - DMatrix::<f64>::identity(6, 6)).norm();
        assert!(err < 1e-12, "S = M must give the identity, error {err:.3e}");
    }

    #[test]
    fn rom_step_identity_propagator_is_stationary() {
        let n = 3;
        let m = 2;
        let r = block_cholesky(&random_spd_block(n, m, 23)).unwrap();
        let p = BlockMatrix::identity(n, m);
        let steps = rom_step(&p, &r, 5).unwrap();
        for u in &steps {
            assert_eq!(u, &steps[0]);
        }
        let only = rom_step(&p, &r, 0).unwrap();
        assert_eq!(only.len(), 1);
        assert_eq!(only[0], r.block_column(0).unwrap());
    }

    /// The exact time stepping oracle: for a small SPD matrix, the cosine
    /// family computed by eigendecomposition satisfies the same three-term
    /// recursion the reduced model uses.
    #[test]
    fn cosine_recursion_matches_eigendecomposition() {
        let max_err = crate::verify::cosine_recursion_error(8, 0.3, 50);
        assert!(max_err <= 1e-12, "recursion deviates by {max_err:.3e}");
    }

    /// Synthetic but structurally faithful data: a small SPD operator, a
    /// random source footprint, and D_j the exact cosine moments. The
    /// assembled mass matrix is then a true snapshot Gram matrix.
    pub(crate) fn synthetic_cosine_cube(n: usize, m: usize, dim: usize, tau: f64, seed: u64) -> DataCube {
        let a = random_matrix(dim, seed);
        let spd = &a * a.transpose() + DMatrix::<f64>::identity(dim, dim) * 0.1;
        let eig = nalgebra::SymmetricEigen::new(0.5 * (&spd + spd.transpose()));
        let phi = random_matrix(dim, seed.wrapping_add(71)).columns(0, m).into_owned();
        let mats = (0..2 * n)
            .map(|j| {
                let mut d = DMatrix::<f64>::zeros(dim, dim);
                for q in 0..dim {
                    d[(q, q)] = (j as f64 * tau * eig.eigenvalues[q].max(0.0).sqrt()).cos();
                }
                let cos_j = &eig.eigenvectors * d * eig.eigenvectors.transpose();
                phi.transpose() * cos_j * &phi
            })
            .collect();
        DataCube::new(tau, mats).unwrap()
    }

    #[test]
    fn rom_step_reproduces_snapshots_and_extension_agrees() {
        let (n, m) = (5usize, 2usize);
        let cube = synthetic_cosine_cube(n, m, 24, 0.7, 31);
        let mass = symmetrize_regularize(&assemble_mass(&cube).unwrap(), 0.0).unwrap();
        let stiffness = assemble_stiffness(&cube).unwrap();
        let r = block_cholesky(&mass).unwrap();
        let p = rom_propagator(&r, &stiffness).unwrap();

        let horizon = 9;
        let steps = rom_step(&p, &r, horizon).unwrap();
        // Exactness on the data horizon: the stepped snapshots are the
        // block columns of R.
        for j in 0..n {
            let e = r.block_column(j).unwrap();
            let err = (&steps[j] - &e).norm() / e.norm();
            assert!(err <= 1e-8, "reduced snapshot differs at j = {j}: {err:.3e}");
        }
        // Beyond the horizon the Galerkin extension describes the same
        // dynamics through the coefficients.
        let g_ext = galerkin_extend(
            &mass,
            &stiffness,
            &identity_block_column(n, m, n - 2),
            &identity_block_column(n, m, n - 1),
            horizon,
        )
        .unwrap();
        for (q, g) in g_ext.iter().enumerate() {
            let j = n + q;
            let via_g = r.dense() * g;
            let err = (&via_g - &steps[j]).norm() / steps[j].norm().max(1e-300);
            assert!(err <= 1e-8, "extension disagrees at j = {j}: {err:.3e}");
        }
        // Propagator spectrum: cosine of a self-adjoint operator.
        let eig = nalgebra::SymmetricEigen::new(p.dense().clone());
        for ev in eig.eigenvalues.iter() {
            assert!(ev.abs() <= 1.0 + 1e-6, "propagator eigenvalue {ev} escapes [-1, 1]");
        }
    }

    #[test]
    fn galerkin_extension_linear_growth_when_s_equals_m() {
        let n = 3;
        let m = 1;
        let mass = random_spd_block(n, m, 13);
        let g = galerkin_extend(
            &mass,
            &mass,
            &identity_block_column(n, m, n - 2),
            &identity_block_column(n, m, n - 1),
            5,
        )
        .unwrap();
        // g_{j+1} = 2 g_j - g_{j-1}: linear in j.
        let e1 = identity_block_column(n, m, n - 2);
        let e2 = identity_block_column(n, m, n - 1);
        let expect3 = 2.0 * &e2 - &e1;
        assert!((&g[0] - &expect3).norm() < 1e-10);
        let expect4 = 2.0 * &g[0] - &e2;
        assert!((&g[1] - &expect4).norm() < 1e-10);
    }

    proptest! {
        /// Hankel-plus-Toeplitz structure: M_{i,j} depends only on i+j and |i-j|.
        #[test]
        fn mass_structure_on_random_cubes(seed in 0u64..500) {
            let n = 4usize;
            let m = 2usize;
            let mats = (0..2 * n)
                .map(|j| random_matrix(m, seed.wrapping_add(j as u64 * 1315423911).max(1)))
                .collect::<Vec<_>>();
            let cube = DataCube::new(0.3, mats).unwrap();
            let mass = assemble_mass(&cube).unwrap();
            for i in 0..n {
                for j in 0..n {
                    for ip in 0..n {
                        for jp in 0..n {
                            if i + j == ip + jp && i.abs_diff(j) == ip.abs_diff(jp) {
                                prop_assert_eq!(
                                    mass.block(i, j).unwrap(),
                                    mass.block(ip, jp).unwrap()
                                );
                            }
                        }
                    }
                }
            }
        }
    }
}
