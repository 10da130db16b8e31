//! Sparse matrix containers (CSR and 3x3 BSR), SpMV, format conversion,
//! Matrix Market I/O and synthetic 7-point Laplacian generation.

mod laplacian;
mod market;

pub use laplacian::{
    laplacian_bsr, laplacian_csr, laplacian_nnz_blocks, laplacian_nnz_scalar, Layout,
};
pub use market::{read_matrix_market, write_matrix_market, MarketError};

use thiserror::Error;

/// Scalar edge of a BSR block (blocks are `BLOCK_DIM x BLOCK_DIM`, row-major).
pub const BLOCK_DIM: usize = 3;
/// Scalars per block.
pub const BLOCK_LEN: usize = BLOCK_DIM * BLOCK_DIM;

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("row_ptr must have length nrows+1 = {expected}, got {got}")]
    RowPtrLength { expected: usize, got: usize },
    #[error("col_idx/values length mismatch: row_ptr ends at {nnz}, col_idx has {cols}, values has {vals}")]
    ArrayLength { nnz: usize, cols: usize, vals: usize },
    #[error("row_ptr is not non-decreasing at row {0}")]
    RowPtrOrder(usize),
    #[error("row {row}: column indices not strictly increasing at position {pos}")]
    ColumnOrder { row: usize, pos: usize },
    #[error("row {row}: column index {col} out of bounds (ncols = {ncols})")]
    ColumnBound { row: usize, col: usize, ncols: usize },
    #[error("dimension mismatch: operand has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("index arithmetic overflow for grid {0}x{1}x{2}")]
    DimensionOverflow(usize, usize, usize),
    #[error("grid dimensions must all be >= 1")]
    EmptyGrid,
}

/// Dimensions of a 3D Cartesian grid (cells per axis).
///
/// Grid point `(i, j, k)` maps to the natural-order index
/// `i + nx*(j + ny*k)`; all generated matrices and geometric partitions
/// use this numbering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self, SparseError> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(SparseError::EmptyGrid);
        }
        Ok(GridSpec { nx, ny, nz })
    }

    /// Total number of grid points, erroring on overflow.
    pub fn cells(&self) -> Result<usize, SparseError> {
        self.nx
            .checked_mul(self.ny)
            .and_then(|v| v.checked_mul(self.nz))
            .ok_or(SparseError::DimensionOverflow(self.nx, self.ny, self.nz))
    }

    /// Natural-order index of grid point `(i, j, k)`.
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }
}

/// Anything that can be applied as `y = A x` on flat dense vectors.
pub trait LinearOperator: Send + Sync {
    /// Scalar dimension of the (square) operator.
    fn dim(&self) -> usize;
    fn apply_into(&self, x: &[f64], y: &mut [f64]);

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply_into(x, &mut y);
        y
    }
}

/// Sparse matrix in compressed-sparse-row layout.
///
/// Invariants (checked on construction): `row_ptr[0] == 0`, `row_ptr`
/// non-decreasing with `row_ptr[nrows] == nnz`, and within each row the
/// column indices are strictly increasing and within `[0, ncols)`.
/// Values may be explicit zeros; the pattern is preserved as stored.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from raw CSR arrays, validating all invariants.
    pub fn from_parts(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, SparseError> {
        let m = CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        };
        m.validate()?;
        Ok(m)
    }

    /// Builds sorted, deduplicated CSR from (row, col, value) triplets.
    /// Duplicate coordinates are summed; explicit zeros are kept.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, SparseError> {
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(i, j, v) in triplets {
            if i >= nrows || j >= ncols {
                return Err(SparseError::ColumnBound {
                    row: i,
                    col: j,
                    ncols,
                });
            }
            entries.push((i, j, v));
        }
        entries.sort_unstable_by_key(|&(i, j, _)| (i, j));

        let mut row_counts = vec![0usize; nrows];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last = None;
        for (i, j, v) in entries {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_counts[i] += 1;
                last = Some((i, j));
            }
        }
        let mut row_ptr = vec![0usize; nrows + 1];
        for i in 0..nrows {
            row_ptr[i + 1] = row_ptr[i] + row_counts[i];
        }
        CsrMatrix::from_parts(nrows, ncols, row_ptr, col_idx, values)
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[range.clone()], &self.values[range])
    }

    /// Checks all CSR structure invariants.
    pub fn validate(&self) -> Result<(), SparseError> {
        if self.row_ptr.len() != self.nrows + 1 {
            return Err(SparseError::RowPtrLength {
                expected: self.nrows + 1,
                got: self.row_ptr.len(),
            });
        }
        if self.row_ptr[0] != 0 {
            return Err(SparseError::RowPtrOrder(0));
        }
        for i in 0..self.nrows {
            if self.row_ptr[i + 1] < self.row_ptr[i] {
                return Err(SparseError::RowPtrOrder(i));
            }
        }
        let nnz = self.row_ptr[self.nrows];
        if self.col_idx.len() != nnz || self.values.len() != nnz {
            return Err(SparseError::ArrayLength {
                nnz,
                cols: self.col_idx.len(),
                vals: self.values.len(),
            });
        }
        for i in 0..self.nrows {
            let (cols, _) = self.row(i);
            for (pos, w) in cols.windows(2).enumerate() {
                if w[1] <= w[0] {
                    return Err(SparseError::ColumnOrder { row: i, pos });
                }
            }
            if let Some(&last) = cols.last() {
                if last >= self.ncols {
                    return Err(SparseError::ColumnBound {
                        row: i,
                        col: last,
                        ncols: self.ncols,
                    });
                }
            }
        }
        Ok(())
    }

    /// Dense row-major copy; intended for small matrices and test oracles.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.nrows * self.ncols];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                d[i * self.ncols + j] = v;
            }
        }
        d
    }

    /// `y = A x` with per-row left-to-right accumulation.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>, SparseError> {
        if x.len() != self.ncols {
            return Err(SparseError::DimensionMismatch {
                expected: self.ncols,
                got: x.len(),
            });
        }
        let mut y = vec![0.0; self.nrows];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        use rayon::prelude::*;
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let (cols, vals) = self.row(i);
            let mut sum = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                sum += v * x[j];
            }
            *yi = sum;
        });
    }
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols, "spmv operand length");
        self.spmv_into(x, y);
    }
}

/// Sparse matrix in block-sparse-row layout with fixed 3x3 blocks,
/// each block stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BsrMatrix {
    n_block_rows: usize,
    n_block_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    blocks: Vec<f64>,
}

impl BsrMatrix {
    pub fn from_parts(
        n_block_rows: usize,
        n_block_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        blocks: Vec<f64>,
    ) -> Result<Self, SparseError> {
        let nnzb = *row_ptr.last().unwrap_or(&0);
        if blocks.len() != nnzb * BLOCK_LEN {
            return Err(SparseError::ArrayLength {
                nnz: nnzb * BLOCK_LEN,
                cols: col_idx.len(),
                vals: blocks.len(),
            });
        }
        // reuse the CSR structure checks on the block pattern
        CsrMatrix::from_parts(
            n_block_rows,
            n_block_cols,
            row_ptr.clone(),
            col_idx.clone(),
            vec![0.0; nnzb],
        )?;
        Ok(BsrMatrix {
            n_block_rows,
            n_block_cols,
            row_ptr,
            col_idx,
            blocks,
        })
    }

    pub fn n_block_rows(&self) -> usize {
        self.n_block_rows
    }

    pub fn n_block_cols(&self) -> usize {
        self.n_block_cols
    }

    /// Number of stored blocks.
    pub fn nnzb(&self) -> usize {
        self.col_idx.len()
    }

    /// Scalar nonzero count (9 per stored block).
    pub fn nnz_scalar(&self) -> usize {
        self.blocks.len()
    }

    /// Scalar row count.
    pub fn nrows_scalar(&self) -> usize {
        self.n_block_rows * BLOCK_DIM
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    /// The 9 scalars of stored block `k`, row-major.
    #[inline]
    pub fn block(&self, k: usize) -> &[f64; BLOCK_LEN] {
        self.blocks[k * BLOCK_LEN..(k + 1) * BLOCK_LEN]
            .try_into()
            .unwrap()
    }

    /// All blocks as an array-of-blocks view.
    pub fn blocks(&self) -> &[[f64; BLOCK_LEN]] {
        let (chunks, rest) = self.blocks.as_chunks::<BLOCK_LEN>();
        debug_assert!(rest.is_empty());
        chunks
    }

    /// Block column indices and blocks of block row `i`.
    #[inline]
    pub fn block_row(&self, i: usize) -> (&[usize], &[[f64; BLOCK_LEN]]) {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[range.clone()], &self.blocks()[range])
    }

    /// `y = A x` on flat scalar vectors, accumulating blocks in
    /// block-column order and scalar columns in order within each block.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>, SparseError> {
        let want = self.n_block_cols * BLOCK_DIM;
        if x.len() != want {
            return Err(SparseError::DimensionMismatch {
                expected: want,
                got: x.len(),
            });
        }
        let mut y = vec![0.0; self.nrows_scalar()];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        use rayon::prelude::*;
        y.par_chunks_mut(BLOCK_DIM)
            .enumerate()
            .for_each(|(bi, yb)| {
                let (cols, blocks) = self.block_row(bi);
                let mut sum = [0.0f64; BLOCK_DIM];
                for (&bj, b) in cols.iter().zip(blocks) {
                    for (r, s) in sum.iter_mut().enumerate() {
                        for c in 0..BLOCK_DIM {
                            *s += b[r * BLOCK_DIM + c] * x[bj * BLOCK_DIM + c];
                        }
                    }
                }
                yb.copy_from_slice(&sum);
            });
    }

    /// Scalar-equivalent CSR expansion. Explicit zeros inside stored
    /// blocks are kept, so SpMV on the result performs the same
    /// operations in the same order and matches the BSR SpMV exactly.
    pub fn to_csr(&self) -> CsrMatrix {
        let nnz = self.nnz_scalar();
        let nrows = self.nrows_scalar();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for bi in 0..self.n_block_rows {
            let (cols, blocks) = self.block_row(bi);
            for r in 0..BLOCK_DIM {
                for (&bj, b) in cols.iter().zip(blocks) {
                    for c in 0..BLOCK_DIM {
                        col_idx.push(bj * BLOCK_DIM + c);
                        values.push(b[r * BLOCK_DIM + c]);
                    }
                }
                row_ptr.push(col_idx.len());
            }
        }
        CsrMatrix {
            nrows,
            ncols: self.n_block_cols * BLOCK_DIM,
            row_ptr,
            col_idx,
            values,
        }
    }
}

impl LinearOperator for BsrMatrix {
    fn dim(&self) -> usize {
        self.nrows_scalar()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_block_cols * BLOCK_DIM, "spmv operand length");
        self.spmv_into(x, y);
    }
}

/// Scalar-equivalent CSR expansion of a BSR matrix.
pub fn bsr_to_csr(a: &BsrMatrix) -> CsrMatrix {
    a.to_csr()
}
