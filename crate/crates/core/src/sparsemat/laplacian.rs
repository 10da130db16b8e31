//! 7-point finite-difference Laplacian generators on 3D Cartesian grids.
//!
//! Natural ordering: grid point `(i, j, k)` gets row `i + nx*(j + ny*k)`.
//! The diagonal is fixed at 6.0 on every row (boundary rows included),
//! which keeps the matrix strictly diagonally dominant at boundaries so
//! the zero-fill factorization always exists; each existing neighbor
//! contributes -1.0. The BSR variant triplicates the scalar stencil as
//! `e * I3` blocks, so its convergence behavior matches the scalar case.

use super::{BsrMatrix, CsrMatrix, GridSpec, SparseError, BLOCK_DIM, BLOCK_LEN};

/// Storage layout selector for generated matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// Scalar CSR.
    Scalar,
    /// 3x3-block BSR.
    Bsr3,
}

const DIAG: f64 = 6.0;
const OFF: f64 = -1.0;

/// Number of stencil entries: `7*nx*ny*nz - 2*(ny*nz + nx*nz + nx*ny)`.
///
/// This is the block count for the BSR layout and the scalar nonzero
/// count for the CSR layout. Computed without building the matrix.
pub fn laplacian_nnz_blocks(grid: GridSpec) -> Result<u64, SparseError> {
    let (nx, ny, nz) = (grid.nx as u64, grid.ny as u64, grid.nz as u64);
    let cells = nx
        .checked_mul(ny)
        .and_then(|v| v.checked_mul(nz))
        .ok_or(SparseError::DimensionOverflow(grid.nx, grid.ny, grid.nz))?;
    let faces = ny * nz + nx * nz + nx * ny;
    cells
        .checked_mul(7)
        .and_then(|v| v.checked_sub(2 * faces))
        .ok_or(SparseError::DimensionOverflow(grid.nx, grid.ny, grid.nz))
}

/// Scalar nonzero count of the generated matrix in the given layout.
pub fn laplacian_nnz_scalar(grid: GridSpec, layout: Layout) -> Result<u64, SparseError> {
    let blocks = laplacian_nnz_blocks(grid)?;
    Ok(match layout {
        Layout::Scalar => blocks,
        Layout::Bsr3 => blocks * (BLOCK_LEN as u64),
    })
}

/// Neighbor offsets of a grid point in ascending natural-index order.
fn neighbors(grid: GridSpec, i: usize, j: usize, k: usize) -> impl Iterator<Item = usize> {
    let g = grid;
    [
        (k > 0).then(|| g.index(i, j, k - 1)),
        (j > 0).then(|| g.index(i, j - 1, k)),
        (i > 0).then(|| g.index(i - 1, j, k)),
        Some(g.index(i, j, k)),
        (i + 1 < g.nx).then(|| g.index(i + 1, j, k)),
        (j + 1 < g.ny).then(|| g.index(i, j + 1, k)),
        (k + 1 < g.nz).then(|| g.index(i, j, k + 1)),
    ]
    .into_iter()
    .flatten()
}

/// Generates the scalar-CSR 7-point Laplacian.
pub fn laplacian_csr(grid: GridSpec) -> Result<CsrMatrix, SparseError> {
    let n = grid.cells()?;
    let nnz = laplacian_nnz_blocks(grid)? as usize;
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(nnz);
    let mut values = Vec::with_capacity(nnz);
    row_ptr.push(0);
    for k in 0..grid.nz {
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let row = grid.index(i, j, k);
                for col in neighbors(grid, i, j, k) {
                    col_idx.push(col);
                    values.push(if col == row { DIAG } else { OFF });
                }
                row_ptr.push(col_idx.len());
            }
        }
    }
    debug_assert_eq!(col_idx.len(), nnz);
    CsrMatrix::from_parts(n, n, row_ptr, col_idx, values)
}

/// Generates the 3x3-block BSR 7-point Laplacian; each scalar stencil
/// entry `e` becomes the block `e * I3`.
pub fn laplacian_bsr(grid: GridSpec) -> Result<BsrMatrix, SparseError> {
    let n = grid.cells()?;
    let nnzb = laplacian_nnz_blocks(grid)? as usize;
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(nnzb);
    let mut blocks = Vec::with_capacity(nnzb * BLOCK_LEN);
    row_ptr.push(0);
    for k in 0..grid.nz {
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let row = grid.index(i, j, k);
                for col in neighbors(grid, i, j, k) {
                    col_idx.push(col);
                    let e = if col == row { DIAG } else { OFF };
                    let mut b = [0.0; BLOCK_LEN];
                    for d in 0..BLOCK_DIM {
                        b[d * BLOCK_DIM + d] = e;
                    }
                    blocks.extend_from_slice(&b);
                }
                row_ptr.push(col_idx.len());
            }
        }
    }
    debug_assert_eq!(col_idx.len(), nnzb);
    BsrMatrix::from_parts(n, n, row_ptr, col_idx, blocks)
}
