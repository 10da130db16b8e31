//! Row/column reordering of CSR and BSR matrices by a symmetric
//! permutation, removal of inter-subdomain couplings, and the
//! decomposition statistics the removal produces.
//!
//! Reordering gathers rows through `new_to_old` and relabels column
//! indices through `old_to_new`, then sorts each row; values travel
//! with their columns. The decoupled matrix is used only to build the
//! preconditioner; SpMV operands keep their inter-subdomain couplings.

use crate::partition::{PartitionLabels, Permutation};
use crate::sparsemat::{BsrMatrix, CsrMatrix, GridSpec, Layout, SparseError, BLOCK_LEN};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReorderError {
    #[error("permutation has length {perm}, matrix has {rows} rows")]
    PermutationMismatch { perm: usize, rows: usize },
    #[error("matrix must be square for symmetric reordering ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("labels cover {labels} rows, matrix has {rows}")]
    LabelMismatch { labels: usize, rows: usize },
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Partition(#[from] crate::partition::PartitionError),
}

/// Nonzero bookkeeping for an inter-subdomain coupling removal.
///
/// Counts are scalar nonzeros (blocks count 9 each for BSR inputs);
/// `nnz_before = nnz_after + dropped` and
/// `dropped_fraction = dropped / nnz_before`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecompositionStats {
    pub nnz_before: u64,
    pub nnz_after: u64,
    pub dropped: u64,
    pub dropped_fraction: f64,
}

impl DecompositionStats {
    fn new(nnz_before: u64, nnz_after: u64) -> Self {
        let dropped = nnz_before - nnz_after;
        DecompositionStats {
            nnz_before,
            nnz_after,
            dropped,
            dropped_fraction: if nnz_before == 0 {
                0.0
            } else {
                dropped as f64 / nnz_before as f64
            },
        }
    }
}

/// Applies a symmetric row/column permutation to a square CSR matrix:
/// row `j` of the result is row `new_to_old[j]` of `a` with every
/// column `c` relabeled to `old_to_new[c]`, then sorted ascending.
pub fn reorder_csr(a: &CsrMatrix, perm: &Permutation) -> Result<CsrMatrix, ReorderError> {
    if a.nrows() != a.ncols() {
        return Err(ReorderError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if perm.len() != a.nrows() {
        return Err(ReorderError::PermutationMismatch {
            perm: perm.len(),
            rows: a.nrows(),
        });
    }
    let n = a.nrows();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(a.nnz());
    let mut values = Vec::with_capacity(a.nnz());
    row_ptr.push(0);
    let mut scratch: Vec<(usize, f64)> = Vec::new();
    for &old in perm.new_to_old() {
        let (cols, vals) = a.row(old);
        scratch.clear();
        scratch.extend(
            cols.iter()
                .zip(vals)
                .map(|(&c, &v)| (perm.old_to_new()[c], v)),
        );
        scratch.sort_unstable_by_key(|&(c, _)| c);
        for &(c, v) in &scratch {
            col_idx.push(c);
            values.push(v);
        }
        row_ptr.push(col_idx.len());
    }
    Ok(CsrMatrix::from_parts(n, n, row_ptr, col_idx, values)?)
}

/// Block-row analogue of [`reorder_csr`]; 9-value blocks move intact.
pub fn reorder_bsr(a: &BsrMatrix, perm: &Permutation) -> Result<BsrMatrix, ReorderError> {
    if a.n_block_rows() != a.n_block_cols() {
        return Err(ReorderError::NotSquare {
            rows: a.n_block_rows(),
            cols: a.n_block_cols(),
        });
    }
    if perm.len() != a.n_block_rows() {
        return Err(ReorderError::PermutationMismatch {
            perm: perm.len(),
            rows: a.n_block_rows(),
        });
    }
    let n = a.n_block_rows();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(a.nnzb());
    let mut blocks = Vec::with_capacity(a.nnzb() * BLOCK_LEN);
    row_ptr.push(0);
    let mut scratch: Vec<(usize, [f64; BLOCK_LEN])> = Vec::new();
    for &old in perm.new_to_old() {
        let (cols, row_blocks) = a.block_row(old);
        scratch.clear();
        scratch.extend(
            cols.iter()
                .zip(row_blocks)
                .map(|(&c, b)| (perm.old_to_new()[c], *b)),
        );
        scratch.sort_unstable_by_key(|&(c, _)| c);
        for (c, b) in &scratch {
            col_idx.push(*c);
            blocks.extend_from_slice(b);
        }
        row_ptr.push(col_idx.len());
    }
    Ok(BsrMatrix::from_parts(n, n, row_ptr, col_idx, blocks)?)
}

/// Removes every entry whose row and column fall in different
/// subdomains. The input must already be reordered so each subdomain's
/// rows are contiguous; `labels` describes that grouping. Returns the
/// decoupled matrix and scalar-nonzero statistics.
pub fn drop_inter_partition_csr(
    a: &CsrMatrix,
    labels: &PartitionLabels,
) -> Result<(CsrMatrix, DecompositionStats), ReorderError> {
    if labels.n_rows() != a.nrows() {
        return Err(ReorderError::LabelMismatch {
            labels: labels.n_rows(),
            rows: a.nrows(),
        });
    }
    let layout = labels.layout();
    let n = a.nrows();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(a.nnz());
    let mut values = Vec::with_capacity(a.nnz());
    row_ptr.push(0);
    for s in 0..layout.n_subdomains() {
        let window = layout.range(s);
        for i in window.clone() {
            let (cols, vals) = a.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                if window.contains(&c) {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
    }
    let stats = DecompositionStats::new(a.nnz() as u64, col_idx.len() as u64);
    let kept = CsrMatrix::from_parts(n, a.ncols(), row_ptr, col_idx, values)?;
    Ok((kept, stats))
}

/// Block-row analogue of [`drop_inter_partition_csr`]; labels apply to
/// block rows, statistics count scalars (9 per block).
pub fn drop_inter_partition_bsr(
    a: &BsrMatrix,
    labels: &PartitionLabels,
) -> Result<(BsrMatrix, DecompositionStats), ReorderError> {
    if labels.n_rows() != a.n_block_rows() {
        return Err(ReorderError::LabelMismatch {
            labels: labels.n_rows(),
            rows: a.n_block_rows(),
        });
    }
    let layout = labels.layout();
    let n = a.n_block_rows();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(a.nnzb());
    let mut blocks = Vec::with_capacity(a.nnzb() * BLOCK_LEN);
    row_ptr.push(0);
    for s in 0..layout.n_subdomains() {
        let window = layout.range(s);
        for i in window.clone() {
            let (cols, row_blocks) = a.block_row(i);
            for (&c, b) in cols.iter().zip(row_blocks) {
                if window.contains(&c) {
                    col_idx.push(c);
                    blocks.extend_from_slice(b);
                }
            }
            row_ptr.push(col_idx.len());
        }
    }
    let stats = DecompositionStats::new(
        (a.nnzb() * BLOCK_LEN) as u64,
        (col_idx.len() * BLOCK_LEN) as u64,
    );
    let kept = BsrMatrix::from_parts(n, a.n_block_cols(), row_ptr, col_idx, blocks)?;
    Ok((kept, stats))
}

/// Decomposition statistics for a 7-point Laplacian under geometric
/// tiling, computed arithmetically without building the matrix. A
/// stencil entry is dropped exactly when its two grid points sit in
/// different tiles, so the dropped count is twice the number of
/// neighbor pairs straddling a tile boundary plane.
pub fn laplacian_decomposition_stats(
    grid: GridSpec,
    tile: GridSpec,
    layout: Layout,
) -> Result<DecompositionStats, ReorderError> {
    use crate::partition::PartitionError;
    use crate::sparsemat::laplacian_nnz_scalar;
    for (axis, dim, sub) in [
        ('x', grid.nx, tile.nx),
        ('y', grid.ny, tile.ny),
        ('z', grid.nz, tile.nz),
    ] {
        if dim % sub != 0 {
            return Err(PartitionError::NotDivisible { axis, dim, sub }.into());
        }
    }
    let (nx, ny, nz) = (grid.nx as u64, grid.ny as u64, grid.nz as u64);
    let planes_x = (nx / tile.nx as u64 - 1) * ny * nz;
    let planes_y = (ny / tile.ny as u64 - 1) * nx * nz;
    let planes_z = (nz / tile.nz as u64 - 1) * nx * ny;
    let mut dropped = 2 * (planes_x + planes_y + planes_z);
    if layout == Layout::Bsr3 {
        dropped *= BLOCK_LEN as u64;
    }
    let nnz = laplacian_nnz_scalar(grid, layout)?;
    Ok(DecompositionStats::new(nnz, nnz - dropped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::{geometric_cuts, labels_to_permutation};
    use crate::sparsemat::laplacian_csr;

    fn dense_as_csr(n: usize, d: &[f64]) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                t.push((i, j, d[i * n + j]));
            }
        }
        CsrMatrix::from_triplets(n, n, &t).unwrap()
    }

    /// Dense P*A*P^T oracle: out[i][j] = a[new_to_old[i]][new_to_old[j]].
    fn dense_permute(n: usize, d: &[f64], new_to_old: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = d[new_to_old[i] * n + new_to_old[j]];
            }
        }
        out
    }

    #[test]
    fn identity_permutation_is_noop() {
        let a = laplacian_csr(GridSpec::new(3, 2, 1).unwrap()).unwrap();
        let b = reorder_csr(&a, &Permutation::identity(6)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn swap_permutation_on_dense_2x2() {
        let a = dense_as_csr(2, &[1.0, 2.0, 3.0, 4.0]);
        let perm = Permutation::from_new_to_old(vec![1, 0]).unwrap();
        let b = reorder_csr(&a, &perm).unwrap();
        assert_eq!(b.to_dense(), vec![4.0, 3.0, 2.0, 1.0]);
    }

    #[test]
    fn tridiagonal_matches_dense_oracle() {
        let d = vec![
            2.0, -1.0, 0.0, 0.0, //
            -1.0, 2.0, -1.0, 0.0, //
            0.0, -1.0, 2.0, -1.0, //
            0.0, 0.0, -1.0, 2.0,
        ];
        let a = CsrMatrix::from_triplets(
            4,
            4,
            &d.iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(k, &v)| (k / 4, k % 4, v))
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let perm = Permutation::from_new_to_old(vec![0, 2, 1, 3]).unwrap();
        let b = reorder_csr(&a, &perm).unwrap();
        assert_eq!(b.to_dense(), dense_permute(4, &d, perm.new_to_old()));
    }

    #[test]
    fn drop_block_diagonal_keeps_everything() {
        let a = CsrMatrix::from_triplets(
            4,
            4,
            &[
                (0, 0, 1.0),
                (0, 1, 2.0),
                (1, 0, 3.0),
                (1, 1, 4.0),
                (2, 3, 5.0),
                (3, 2, 6.0),
            ],
        )
        .unwrap();
        let labels = PartitionLabels::new(vec![0, 0, 1, 1], 2, 2).unwrap();
        let (kept, stats) = drop_inter_partition_csr(&a, &labels).unwrap();
        assert_eq!(stats.dropped, 0);
        assert_eq!(kept, a);
    }

    #[test]
    fn drop_tridiagonal_pairs() {
        // tridiagonal n=8, parts of 2: 6 of 22 nonzeros straddle a boundary
        let mut t = Vec::new();
        for i in 0..8usize {
            t.push((i, i, 2.0));
            if i + 1 < 8 {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(8, 8, &t).unwrap();
        let labels = PartitionLabels::new(vec![0, 0, 1, 1, 2, 2, 3, 3], 4, 2).unwrap();
        let (kept, stats) = drop_inter_partition_csr(&a, &labels).unwrap();
        assert_eq!(stats.nnz_before, 22);
        assert_eq!(stats.dropped, 6);
        assert!((stats.dropped_fraction - 6.0 / 22.0).abs() < 1e-15);
        assert_eq!(kept.nnz(), 16);
        // idempotent
        let (again, stats2) = drop_inter_partition_csr(&kept, &labels).unwrap();
        assert_eq!(again, kept);
        assert_eq!(stats2.dropped, 0);
    }

    #[test]
    fn dropped_entries_match_brute_force() {
        let grid = GridSpec::new(4, 4, 2).unwrap();
        let tile = GridSpec::new(2, 2, 2).unwrap();
        let a = laplacian_csr(grid).unwrap();
        let labels = geometric_cuts(grid, tile).unwrap();
        let perm = labels_to_permutation(&labels);
        let r = reorder_csr(&a, &perm).unwrap();
        let (kept, stats) = drop_inter_partition_csr(&r, &labels).unwrap();

        // brute force: subdomain of reordered row i is label of original row
        let sub = |row: usize| labels.labels()[perm.new_to_old()[row]];
        let mut expect_dropped = 0;
        for i in 0..r.nrows() {
            let (cols, _) = r.row(i);
            for &c in cols {
                if sub(i) != sub(c) {
                    expect_dropped += 1;
                }
            }
        }
        assert_eq!(stats.dropped as usize, expect_dropped);
        // structural symmetry preserved by symmetric permutation + drop
        let dense = kept.to_dense();
        let n = kept.nrows();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(dense[i * n + j] != 0.0, dense[j * n + i] != 0.0);
            }
        }
        // analytic counter agrees with the materialized drop
        let analytic = laplacian_decomposition_stats(grid, tile, Layout::Scalar).unwrap();
        assert_eq!(analytic.dropped, stats.dropped);
        assert_eq!(analytic.nnz_before, stats.nnz_before);
    }

    #[test]
    fn analytic_stats_match_evaluation_table() {
        let s = laplacian_decomposition_stats(
            GridSpec::new(128, 128, 128).unwrap(),
            GridSpec::new(16, 16, 8).unwrap(),
            Layout::Bsr3,
        )
        .unwrap();
        assert_eq!(s.nnz_before, 131_235_840);
        assert_eq!(s.dropped, 8_552_448);
        assert_eq!(s.nnz_after, 122_683_392);
        assert!((s.dropped_fraction * 100.0 - 6.52).abs() < 0.005);
    }

    #[test]
    fn bsr_reorder_swaps_blocks_intact() {
        use crate::sparsemat::BsrMatrix;
        let b0: Vec<f64> = (0..9).map(|v| v as f64).collect();
        let b1: Vec<f64> = (9..18).map(|v| v as f64).collect();
        let mut blocks = b0.clone();
        blocks.extend_from_slice(&b1);
        let a = BsrMatrix::from_parts(2, 2, vec![0, 1, 2], vec![0, 1], blocks).unwrap();
        let perm = Permutation::from_new_to_old(vec![1, 0]).unwrap();
        let r = reorder_bsr(&a, &perm).unwrap();
        // row 0 now holds the old row-1 block, relabeled to column 0
        assert_eq!(r.block_row(0).0, &[0]);
        assert_eq!(r.block(0)[..], b1[..]);
        assert_eq!(r.block(1)[..], b0[..]);
    }
}
