//! Zero-fill incomplete factorizations.
//!
//! `ilu0` performs IKJ elimination restricted to the input pattern:
//! the update `U[i,k] -= L[i,j] * U[j,k]` is applied only where `(i,k)`
//! exists in the pattern, so the factor pattern equals the matrix
//! pattern and a full (dense) pattern reproduces exact unpivoted LU.
//! The lower factor carries an implicit unit diagonal; the upper factor
//! stores the diagonal.
//!
//! `ildu0` post-processes those factors: it extracts the inverse
//! diagonal into a separate array and left-scales each row's
//! strictly-upper entries by it, leaving both triangular factors
//! unit-diagonal (the lower one already is) while preserving
//! `L * D * U_unit = L * U`.
//!
//! Block (BSR) variants use the same elimination with 3x3 block
//! algebra: the scalar division becomes a right-multiplication by the
//! pivot-block inverse, `L_ij = U_ij * (U_jj)^-1`, and the ILDU scaling
//! a left-multiplication `U_unit_ij = (U_ii)^-1 * U_ij`.

use crate::block3::{self, Block};
use crate::partition::SubdomainLayout;
use crate::sparsemat::{BsrMatrix, CsrMatrix, SparseError};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FactorError {
    #[error("matrix must be square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("row {0} has no diagonal entry in its pattern")]
    MissingDiagonal(usize),
    #[error("zero pivot at row {0}")]
    ZeroPivot(usize),
    #[error("singular pivot block at block row {0}")]
    SingularPivotBlock(usize),
    #[error("row {row} couples to column {col} outside its subdomain")]
    CrossSubdomain { row: usize, col: usize },
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// Knobs for the factorizations.
#[derive(Debug, Clone, Copy)]
pub struct FactorOptions {
    /// Pivots with magnitude (scalar) or determinant magnitude (block)
    /// below this fail loudly instead of producing NaNs. The default
    /// only rejects true zeros; the intended inputs are diagonally
    /// dominant and never need shifts.
    pub pivot_floor: f64,
}

impl Default for FactorOptions {
    fn default() -> Self {
        FactorOptions { pivot_floor: 1e-300 }
    }
}

/// Unit-lower / upper factor pair from [`ilu0`].
///
/// `l` holds the strictly-lower entries (unit diagonal implicit);
/// `u` holds the diagonal plus strictly-upper entries. Their combined
/// pattern equals the input pattern exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct IluFactors {
    pub l: CsrMatrix,
    pub u: CsrMatrix,
}

/// Unit-lower / inverse-diagonal / unit-upper factors from [`ildu0`].
#[derive(Debug, Clone, PartialEq)]
pub struct IlduFactors {
    pub l_unit: CsrMatrix,
    pub u_unit: CsrMatrix,
    pub inv_d: Vec<f64>,
}

/// Block variant of [`IluFactors`].
#[derive(Debug, Clone, PartialEq)]
pub struct IluFactorsBsr {
    pub l: BsrMatrix,
    pub u: BsrMatrix,
}

/// Block variant of [`IlduFactors`]; `inv_d` stores one explicit 3x3
/// inverse per block row.
#[derive(Debug, Clone, PartialEq)]
pub struct IlduFactorsBsr {
    pub l_unit: BsrMatrix,
    pub u_unit: BsrMatrix,
    pub inv_d: Vec<Block>,
}

/// Pattern-restricted incomplete LU with zero fill-in.
pub fn ilu0(a: &CsrMatrix) -> Result<IluFactors, FactorError> {
    ilu0_with(a, &FactorOptions::default())
}

pub fn ilu0_with(a: &CsrMatrix, opts: &FactorOptions) -> Result<IluFactors, FactorError> {
    let n = check_square(a.nrows(), a.ncols())?;
    let mut vals = a.values().to_vec();
    eliminate_scalar(0..n, a.row_ptr(), a.col_idx(), &mut vals, 0, opts.pivot_floor)?;
    Ok(split_scalar(a, vals))
}

/// [`ilu0`] with the independent per-subdomain eliminations run in
/// parallel. Requires the decoupled matrix (no entry may cross a
/// subdomain boundary); the result is identical to the sequential
/// factorization bit for bit.
pub fn ilu0_decomposed(
    a: &CsrMatrix,
    layout: &SubdomainLayout,
) -> Result<IluFactors, FactorError> {
    ilu0_decomposed_with(a, layout, &FactorOptions::default())
}

pub fn ilu0_decomposed_with(
    a: &CsrMatrix,
    layout: &SubdomainLayout,
    opts: &FactorOptions,
) -> Result<IluFactors, FactorError> {
    check_square(a.nrows(), a.ncols())?;
    let chunks = split_values_by_subdomain(a.row_ptr(), layout, a.values().to_vec());
    let mut vals_chunks = chunks;
    (0..layout.n_subdomains())
        .into_par_iter()
        .zip(vals_chunks.par_iter_mut())
        .try_for_each(|(s, chunk)| {
            let range = layout.range(s);
            let offset = a.row_ptr()[range.start];
            eliminate_scalar(range, a.row_ptr(), a.col_idx(), chunk, offset, opts.pivot_floor)
        })?;
    let vals = vals_chunks.concat();
    Ok(split_scalar(a, vals))
}

/// Pattern-restricted block ILU with zero fill-in on 3x3 BSR input.
pub fn ilu0_bsr(a: &BsrMatrix) -> Result<IluFactorsBsr, FactorError> {
    ilu0_bsr_with(a, &FactorOptions::default())
}

pub fn ilu0_bsr_with(a: &BsrMatrix, opts: &FactorOptions) -> Result<IluFactorsBsr, FactorError> {
    let n = check_square(a.n_block_rows(), a.n_block_cols())?;
    let mut blocks = a.blocks().to_vec();
    eliminate_block(0..n, a.row_ptr(), a.col_idx(), &mut blocks, 0, opts.pivot_floor)?;
    Ok(split_block(a, blocks))
}

/// Extracts inverse diagonals and unit-diagonalizes the upper factor.
pub fn ildu0(f: &IluFactors) -> Result<IlduFactors, FactorError> {
    ildu0_with(f, &FactorOptions::default())
}

pub fn ildu0_with(f: &IluFactors, opts: &FactorOptions) -> Result<IlduFactors, FactorError> {
    let n = f.u.nrows();
    let mut inv_d = Vec::with_capacity(n);
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(f.u.nnz() - n);
    let mut values = Vec::with_capacity(f.u.nnz() - n);
    row_ptr.push(0);
    for i in 0..n {
        let (cols, vals) = f.u.row(i);
        if cols.first() != Some(&i) {
            return Err(FactorError::MissingDiagonal(i));
        }
        if vals[0].abs() < opts.pivot_floor {
            return Err(FactorError::ZeroPivot(i));
        }
        let inv = 1.0 / vals[0];
        inv_d.push(inv);
        for (&c, &v) in cols[1..].iter().zip(&vals[1..]) {
            col_idx.push(c);
            values.push(v * inv);
        }
        row_ptr.push(col_idx.len());
    }
    Ok(IlduFactors {
        l_unit: f.l.clone(),
        u_unit: CsrMatrix::from_parts(n, n, row_ptr, col_idx, values)?,
        inv_d,
    })
}

/// Block variant of [`ildu0`]: `inv_d[i] = (U_ii)^-1` via the adjugate,
/// strictly-upper blocks replaced by `inv_d[i] * U_ij`.
pub fn ildu0_bsr(f: &IluFactorsBsr) -> Result<IlduFactorsBsr, FactorError> {
    ildu0_bsr_with(f, &FactorOptions::default())
}

pub fn ildu0_bsr_with(f: &IluFactorsBsr, opts: &FactorOptions) -> Result<IlduFactorsBsr, FactorError> {
    let n = f.u.n_block_rows();
    let mut inv_d = Vec::with_capacity(n);
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    let mut blocks = Vec::new();
    row_ptr.push(0);
    for i in 0..n {
        let (cols, row_blocks) = f.u.block_row(i);
        if cols.first() != Some(&i) {
            return Err(FactorError::MissingDiagonal(i));
        }
        let inv = block3::inv(&row_blocks[0], opts.pivot_floor)
            .ok_or(FactorError::SingularPivotBlock(i))?;
        for (&c, b) in cols[1..].iter().zip(&row_blocks[1..]) {
            col_idx.push(c);
            blocks.extend_from_slice(&block3::mul(&inv, b));
        }
        inv_d.push(inv);
        row_ptr.push(col_idx.len());
    }
    Ok(IlduFactorsBsr {
        l_unit: f.l.clone(),
        u_unit: BsrMatrix::from_parts(n, n, row_ptr, col_idx, blocks)?,
        inv_d,
    })
}

fn check_square(rows: usize, cols: usize) -> Result<usize, FactorError> {
    if rows != cols {
        return Err(FactorError::NotSquare { rows, cols });
    }
    Ok(rows)
}

/// IKJ elimination over `rows`, writing L and U entries in place.
/// `vals` holds only this row range's entries; `offset` is the global
/// position of `vals[0]`. Column lookups use a dense position map local
/// to the range, so entries outside it are rejected.
fn eliminate_scalar(
    rows: std::ops::Range<usize>,
    row_ptr: &[usize],
    col_idx: &[usize],
    vals: &mut [f64],
    offset: usize,
    floor: f64,
) -> Result<(), FactorError> {
    let start = rows.start;
    let width = rows.len();
    let mut pos_of_col = vec![usize::MAX; width];
    let mut diag_pos = vec![usize::MAX; width];

    for i in rows.clone() {
        for p in row_ptr[i]..row_ptr[i + 1] {
            let c = col_idx[p];
            if c < start || c >= start + width {
                return Err(FactorError::CrossSubdomain { row: i, col: c });
            }
            if c == i {
                diag_pos[i - start] = p - offset;
            }
        }
        if diag_pos[i - start] == usize::MAX {
            return Err(FactorError::MissingDiagonal(i));
        }
    }

    for i in rows.clone() {
        let row = (row_ptr[i] - offset)..(row_ptr[i + 1] - offset);
        for p in row.clone() {
            pos_of_col[col_idx[p + offset] - start] = p;
        }

        for kp in row.start..diag_pos[i - start] {
            let j = col_idx[kp + offset];
            let dj = diag_pos[j - start];
            let ujj = vals[dj];
            if ujj.abs() < floor {
                return Err(FactorError::ZeroPivot(j));
            }
            vals[kp] /= ujj;
            let lij = vals[kp];
            // row j's strictly-upper entries
            for jp in (dj + 1)..(row_ptr[j + 1] - offset) {
                let k = col_idx[jp + offset];
                let target = pos_of_col[k - start];
                if target != usize::MAX && target > kp {
                    vals[target] -= lij * vals[jp];
                }
            }
        }
        if vals[diag_pos[i - start]].abs() < floor {
            return Err(FactorError::ZeroPivot(i));
        }

        for p in row {
            pos_of_col[col_idx[p + offset] - start] = usize::MAX;
        }
    }
    Ok(())
}

/// Block analogue of [`eliminate_scalar`].
fn eliminate_block(
    rows: std::ops::Range<usize>,
    row_ptr: &[usize],
    col_idx: &[usize],
    blocks: &mut [Block],
    offset: usize,
    floor: f64,
) -> Result<(), FactorError> {
    let start = rows.start;
    let width = rows.len();
    let mut pos_of_col = vec![usize::MAX; width];
    let mut diag_pos = vec![usize::MAX; width];

    for i in rows.clone() {
        for p in row_ptr[i]..row_ptr[i + 1] {
            let c = col_idx[p];
            if c < start || c >= start + width {
                return Err(FactorError::CrossSubdomain { row: i, col: c });
            }
            if c == i {
                diag_pos[i - start] = p - offset;
            }
        }
        if diag_pos[i - start] == usize::MAX {
            return Err(FactorError::MissingDiagonal(i));
        }
    }

    for i in rows.clone() {
        let row = (row_ptr[i] - offset)..(row_ptr[i + 1] - offset);
        for p in row.clone() {
            pos_of_col[col_idx[p + offset] - start] = p;
        }

        for kp in row.start..diag_pos[i - start] {
            let j = col_idx[kp + offset];
            let dj = diag_pos[j - start];
            let inv_ujj =
                block3::inv(&blocks[dj], floor).ok_or(FactorError::SingularPivotBlock(j))?;
            blocks[kp] = block3::mul(&blocks[kp], &inv_ujj);
            let lij = blocks[kp];
            for jp in (dj + 1)..(row_ptr[j + 1] - offset) {
                let k = col_idx[jp + offset];
                let target = pos_of_col[k - start];
                if target != usize::MAX && target > kp {
                    let update = block3::mul(&lij, &blocks[jp]);
                    block3::sub_assign(&mut blocks[target], &update);
                }
            }
        }
        if block3::inv(&blocks[diag_pos[i - start]], floor).is_none() {
            return Err(FactorError::SingularPivotBlock(i));
        }

        for p in row {
            pos_of_col[col_idx[p + offset] - start] = usize::MAX;
        }
    }
    Ok(())
}

/// Splits combined in-place LU values into the L and U matrices.
fn split_scalar(a: &CsrMatrix, vals: Vec<f64>) -> IluFactors {
    let n = a.nrows();
    let mut l_ptr = Vec::with_capacity(n + 1);
    let mut l_col = Vec::new();
    let mut l_val = Vec::new();
    let mut u_ptr = Vec::with_capacity(n + 1);
    let mut u_col = Vec::new();
    let mut u_val = Vec::new();
    l_ptr.push(0);
    u_ptr.push(0);
    for i in 0..n {
        for p in a.row_ptr()[i]..a.row_ptr()[i + 1] {
            let c = a.col_idx()[p];
            if c < i {
                l_col.push(c);
                l_val.push(vals[p]);
            } else {
                u_col.push(c);
                u_val.push(vals[p]);
            }
        }
        l_ptr.push(l_col.len());
        u_ptr.push(u_col.len());
    }
    IluFactors {
        l: CsrMatrix::from_parts(n, n, l_ptr, l_col, l_val).expect("L inherits a valid pattern"),
        u: CsrMatrix::from_parts(n, n, u_ptr, u_col, u_val).expect("U inherits a valid pattern"),
    }
}

fn split_block(a: &BsrMatrix, blocks: Vec<Block>) -> IluFactorsBsr {
    let n = a.n_block_rows();
    let mut l_ptr = Vec::with_capacity(n + 1);
    let mut l_col = Vec::new();
    let mut l_blocks = Vec::new();
    let mut u_ptr = Vec::with_capacity(n + 1);
    let mut u_col = Vec::new();
    let mut u_blocks = Vec::new();
    l_ptr.push(0);
    u_ptr.push(0);
    for i in 0..n {
        for p in a.row_ptr()[i]..a.row_ptr()[i + 1] {
            let c = a.col_idx()[p];
            if c < i {
                l_col.push(c);
                l_blocks.extend_from_slice(&blocks[p]);
            } else {
                u_col.push(c);
                u_blocks.extend_from_slice(&blocks[p]);
            }
        }
        l_ptr.push(l_col.len());
        u_ptr.push(u_col.len());
    }
    IluFactorsBsr {
        l: BsrMatrix::from_parts(n, n, l_ptr, l_col, l_blocks)
            .expect("L inherits a valid pattern"),
        u: BsrMatrix::from_parts(n, n, u_ptr, u_col, u_blocks)
            .expect("U inherits a valid pattern"),
    }
}

fn split_values_by_subdomain(
    row_ptr: &[usize],
    layout: &SubdomainLayout,
    vals: Vec<f64>,
) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(layout.n_subdomains());
    for s in 0..layout.n_subdomains() {
        let range = layout.range(s);
        out.push(vals[row_ptr[range.start]..row_ptr[range.end]].to_vec());
    }
    out
}
