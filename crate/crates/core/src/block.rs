//! Dense matrix organized as an `n x n` grid of `m x m` blocks.
//!
//! The mass and stiffness matrices, the block Cholesky factor and the
//! reduced propagator all share this container.

use nalgebra::{DMatrix, DMatrixView};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructureTag {
    General,
    BlockUpperTriangular,
    Symmetric,
}

#[derive(Debug, Clone)]
pub struct BlockMatrix {
    nblocks: usize,
    block_size: usize,
    data: DMatrix<f64>,
    tag: StructureTag,
}

impl BlockMatrix {
    /// Wraps a dense `(n m) x (n m)` matrix, validating the claimed structure.
    pub fn new(nblocks: usize, block_size: usize, data: DMatrix<f64>, tag: StructureTag) -> Result<Self> {
        let dim = nblocks * block_size;
        if data.nrows() != dim || data.ncols() != dim {
            return Err(Error::DimensionMismatch(format!(
                "dense payload is {}x{}, expected {dim}x{dim}",
                data.nrows(),
                data.ncols()
            )));
        }
        let bm = Self { nblocks, block_size, data, tag };
        bm.validate_tag()?;
        Ok(bm)
    }

    pub fn zeros(nblocks: usize, block_size: usize, tag: StructureTag) -> Self {
        let dim = nblocks * block_size;
        Self { nblocks, block_size, data: DMatrix::zeros(dim, dim), tag }
    }

    pub fn identity(nblocks: usize, block_size: usize) -> Self {
        let dim = nblocks * block_size;
        Self {
            nblocks,
            block_size,
            data: DMatrix::identity(dim, dim),
            tag: StructureTag::Symmetric,
        }
    }

    fn validate_tag(&self) -> Result<()> {
        match self.tag {
            StructureTag::General => Ok(()),
            StructureTag::BlockUpperTriangular => {
                for j in 0..self.nblocks {
                    for i in (j + 1)..self.nblocks {
                        if self.block_view(i, j).iter().any(|&v| v != 0.0) {
                            return Err(Error::Validation(format!(
                                "block ({i}, {j}) below the diagonal is nonzero"
                            )));
                        }
                    }
                }
                Ok(())
            }
            StructureTag::Symmetric => {
                let scale = self.data.norm().max(1.0);
                let mut worst = 0.0f64;
                for j in 0..self.data.ncols() {
                    for i in 0..j {
                        worst = worst.max((self.data[(i, j)] - self.data[(j, i)]).abs());
                    }
                }
                if worst > 1e-12 * scale {
                    return Err(Error::Validation(format!(
                        "matrix tagged symmetric deviates from its transpose by {worst:.3e}"
                    )));
                }
                Ok(())
            }
        }
    }

    #[inline]
    pub fn nblocks(&self) -> usize {
        self.nblocks
    }

    #[inline]
    pub fn block_size(&self) -> usize {
        self.block_size
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.nblocks * self.block_size
    }

    pub fn tag(&self) -> StructureTag {
        self.tag
    }

    pub fn dense(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_dense(self) -> DMatrix<f64> {
        self.data
    }

    fn check_block(&self, i: usize, j: usize) -> Result<()> {
        if i >= self.nblocks || j >= self.nblocks {
            return Err(Error::IndexOutOfRange(format!(
                "block ({i}, {j}) of a {0}x{0} block matrix",
                self.nblocks
            )));
        }
        Ok(())
    }

    /// Copy of block `(i, j)`.
    pub fn block(&self, i: usize, j: usize) -> Result<DMatrix<f64>> {
        self.check_block(i, j)?;
        Ok(self.block_view(i, j).into_owned())
    }

    pub(crate) fn block_view(&self, i: usize, j: usize) -> DMatrixView<'_, f64> {
        let m = self.block_size;
        self.data.view((i * m, j * m), (m, m))
    }

    pub fn set_block(&mut self, i: usize, j: usize, block: &DMatrix<f64>) -> Result<()> {
        self.check_block(i, j)?;
        if block.nrows() != self.block_size || block.ncols() != self.block_size {
            return Err(Error::DimensionMismatch(format!(
                "block payload is {}x{}, expected {1}x{1}",
                block.nrows(),
                self.block_size
            )));
        }
        let m = self.block_size;
        self.data.view_mut((i * m, j * m), (m, m)).copy_from(block);
        Ok(())
    }

    /// Block column `j`, i.e. `A e_j` with `e_j` the j-th block column of
    /// the identity: an `(n m) x m` slab.
    pub fn block_column(&self, j: usize) -> Result<DMatrix<f64>> {
        self.check_block(j, j)?;
        let m = self.block_size;
        Ok(self.data.view((0, j * m), (self.dim(), m)).into_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_blocks() {
        let bm = BlockMatrix::identity(3, 2);
        assert_eq!(bm.block(0, 0).unwrap(), DMatrix::identity(2, 2));
        assert_eq!(bm.block(0, 1).unwrap(), DMatrix::zeros(2, 2));
        assert!(bm.block(3, 3).is_err());
    }

    #[test]
    fn tag_validation() {
        let mut d = DMatrix::zeros(4, 4);
        d[(2, 0)] = 1.0;
        assert!(BlockMatrix::new(2, 2, d.clone(), StructureTag::BlockUpperTriangular).is_err());
        assert!(BlockMatrix::new(2, 2, d.clone(), StructureTag::General).is_ok());
        d[(0, 2)] = 1.0;
        assert!(BlockMatrix::new(2, 2, d.clone(), StructureTag::Symmetric).is_ok());
        d[(0, 2)] = 2.0;
        assert!(BlockMatrix::new(2, 2, d, StructureTag::Symmetric).is_err());
    }

    proptest! {
        #[test]
        fn blocks_tile_the_dense_matrix(n in 1usize..5, m in 1usize..4, seed in 0u64..1000) {
            let dim = n * m;
            let mut state = seed;
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64
            };
            let data = DMatrix::from_fn(dim, dim, |_, _| next());
            let bm = BlockMatrix::new(n, m, data.clone(), StructureTag::General).unwrap();
            let mut rebuilt = DMatrix::zeros(dim, dim);
            for i in 0..n {
                for j in 0..n {
                    let b = bm.block(i, j).unwrap();
                    rebuilt.view_mut((i * m, j * m), (m, m)).copy_from(&b);
                }
            }
            prop_assert_eq!(rebuilt, data);
        }
    }
}
