//! Self-describing binary files: raw grid fields, data cubes and block
//! matrices.
//!
//! Every file starts with the same 32-byte little-endian header:
//!
//! ```text
//! offset  size  field
//!      0     4  magic ("RWIV" grid fields, "RWIC" data cube, "RWIB" block matrix)
//!      4     4  a: u32   (nx | m | nblocks)
//!      8     4  b: u32   (nz | n | block_size)
//!     12     8  s: f64   (h  | tau | 0)
//!     20     4  count: u32  (number of payload items)
//!     24     8  reserved, zero
//! ```
//!
//! The payload is `count` items of 64-bit little-endian floats, row-major
//! (grids: `nz` rows of `nx`; matrices: rows of columns). Writes go to a
//! temporary file in the target directory followed by a rename.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::block::{BlockMatrix, StructureTag};
use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::survey::DataCube;

pub const MAGIC_GRID: &[u8; 4] = b"RWIV";
pub const MAGIC_CUBE: &[u8; 4] = b"RWIC";
pub const MAGIC_BLOCK: &[u8; 4] = b"RWIB";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Header {
    pub magic: [u8; 4],
    pub a: u32,
    pub b: u32,
    pub s: f64,
    pub count: u32,
}

impl Header {
    fn to_bytes(self) -> [u8; 32] {
        let mut out = [0u8; 32];
        out[0..4].copy_from_slice(&self.magic);
        out[4..8].copy_from_slice(&self.a.to_le_bytes());
        out[8..12].copy_from_slice(&self.b.to_le_bytes());
        out[12..20].copy_from_slice(&self.s.to_le_bytes());
        out[20..24].copy_from_slice(&self.count.to_le_bytes());
        out
    }

    fn from_bytes(raw: &[u8; 32]) -> Self {
        Self {
            magic: [raw[0], raw[1], raw[2], raw[3]],
            a: u32::from_le_bytes(raw[4..8].try_into().expect("4 bytes")),
            b: u32::from_le_bytes(raw[8..12].try_into().expect("4 bytes")),
            s: f64::from_le_bytes(raw[12..20].try_into().expect("8 bytes")),
            count: u32::from_le_bytes(raw[20..24].try_into().expect("4 bytes")),
        }
    }
}

/// Writes bytes atomically: temporary file in the same directory, then
/// rename over the target.
pub fn write_atomic(path: &Path, write_payload: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default(),
        std::process::id()
    ));
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        write_payload(&mut w)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_values(w: &mut BufWriter<File>, values: impl Iterator<Item = f64>) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact_header(r: &mut BufReader<File>, magic: &[u8; 4]) -> Result<Header> {
    let mut raw = [0u8; 32];
    r.read_exact(&mut raw)?;
    let header = Header::from_bytes(&raw);
    if &header.magic != magic {
        return Err(Error::FileFormat(format!(
            "magic {:?}, expected {:?}",
            String::from_utf8_lossy(&header.magic),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(header)
}

fn read_values(r: &mut BufReader<File>, count: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

/// Writes one or more grid fields (concatenated volume).
pub fn write_grid_fields(path: &Path, grid: &Grid2D, fields: &[&[f64]]) -> Result<()> {
    for f in fields {
        if f.len() != grid.node_count() {
            return Err(Error::DimensionMismatch(format!(
                "field has {} values for a {}x{} grid",
                f.len(),
                grid.nx,
                grid.nz
            )));
        }
    }
    let header = Header {
        magic: *MAGIC_GRID,
        a: grid.nx as u32,
        b: grid.nz as u32,
        s: grid.h,
        count: fields.len() as u32,
    };
    write_atomic(path, |w| {
        w.write_all(&header.to_bytes())?;
        for f in fields {
            write_values(w, f.iter().cloned())?;
        }
        Ok(())
    })
}

/// Reads a grid-field volume; returns `(nx, nz, h, fields)`.
pub fn read_grid_fields(path: &Path) -> Result<(usize, usize, f64, Vec<Vec<f64>>)> {
    let mut r = BufReader::new(File::open(path)?);
    let header = read_exact_header(&mut r, MAGIC_GRID)?;
    let n = (header.a * header.b) as usize;
    let mut fields = Vec::with_capacity(header.count as usize);
    for _ in 0..header.count {
        fields.push(read_values(&mut r, n)?);
    }
    Ok((header.a as usize, header.b as usize, header.s, fields))
}

/// Writes the sampled data matrices, `j` ascending, row-major.
pub fn write_cube(path: &Path, cube: &DataCube) -> Result<()> {
    let m = cube.m() as u32;
    let header = Header {
        magic: *MAGIC_CUBE,
        a: m,
        b: cube.n() as u32,
        s: cube.tau,
        count: cube.len() as u32,
    };
    write_atomic(path, |w| {
        w.write_all(&header.to_bytes())?;
        for d in &cube.matrices {
            for r in 0..d.nrows() {
                for c in 0..d.ncols() {
                    w.write_all(&d[(r, c)].to_le_bytes())?;
                }
            }
        }
        Ok(())
    })
}

pub fn read_cube(path: &Path) -> Result<DataCube> {
    let mut r = BufReader::new(File::open(path)?);
    let header = read_exact_header(&mut r, MAGIC_CUBE)?;
    let m = header.a as usize;
    let mut matrices = Vec::with_capacity(header.count as usize);
    for _ in 0..header.count {
        let vals = read_values(&mut r, m * m)?;
        matrices.push(DMatrix::from_fn(m, m, |i, j| vals[i * m + j]));
    }
    let cube = DataCube::new(header.s, matrices)?;
    if cube.n() != header.b as usize {
        return Err(Error::FileFormat(format!(
            "header claims n = {}, payload implies n = {}",
            header.b,
            cube.n()
        )));
    }
    Ok(cube)
}

/// Writes a block matrix (dense row-major payload).
pub fn write_block_matrix(path: &Path, bm: &BlockMatrix) -> Result<()> {
    let header = Header {
        magic: *MAGIC_BLOCK,
        a: bm.nblocks() as u32,
        b: bm.block_size() as u32,
        s: 0.0,
        count: 1,
    };
    let d = bm.dense();
    write_atomic(path, |w| {
        w.write_all(&header.to_bytes())?;
        for r in 0..d.nrows() {
            for c in 0..d.ncols() {
                w.write_all(&d[(r, c)].to_le_bytes())?;
            }
        }
        Ok(())
    })
}

pub fn read_block_matrix(path: &Path) -> Result<BlockMatrix> {
    let mut r = BufReader::new(File::open(path)?);
    let header = read_exact_header(&mut r, MAGIC_BLOCK)?;
    let dim = (header.a * header.b) as usize;
    let vals = read_values(&mut r, dim * dim)?;
    let dense = DMatrix::from_fn(dim, dim, |i, j| vals[i * dim + j]);
    BlockMatrix::new(header.a as usize, header.b as usize, dense, StructureTag::General)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn grid_volume_round_trip() {
        let dir = tempdir().unwrap();
        let grid = Grid2D::new(5, 3, 0.25, [0.0, 0.0]).unwrap();
        let a: Vec<f64> = (0..15).map(|q| q as f64 * 0.5).collect();
        let b: Vec<f64> = (0..15).map(|q| -(q as f64)).collect();
        let path = dir.path().join("fields.rwiv");
        write_grid_fields(&path, &grid, &[&a, &b]).unwrap();
        let (nx, nz, h, fields) = read_grid_fields(&path).unwrap();
        assert_eq!((nx, nz), (5, 3));
        assert_eq!(h, 0.25);
        assert_eq!(fields, vec![a, b]);
    }

    #[test]
    fn cube_round_trip_bitwise() {
        let dir = tempdir().unwrap();
        let mats = (0..6)
            .map(|j| DMatrix::from_fn(3, 3, |r, c| (j * 9 + r * 3 + c) as f64 * 0.1))
            .collect();
        let cube = DataCube::new(0.7, mats).unwrap();
        let path = dir.path().join("data.rwic");
        write_cube(&path, &cube).unwrap();
        let back = read_cube(&path).unwrap();
        assert_eq!(back, cube);
    }

    #[test]
    fn block_matrix_round_trip_and_magic_check() {
        let dir = tempdir().unwrap();
        let bm = BlockMatrix::identity(2, 3);
        let path = dir.path().join("factor.rwib");
        write_block_matrix(&path, &bm).unwrap();
        let back = read_block_matrix(&path).unwrap();
        assert_eq!(back.dense(), bm.dense());
        // Wrong reader for the format is refused.
        assert!(matches!(read_cube(&path), Err(Error::FileFormat(_))));
    }
}
