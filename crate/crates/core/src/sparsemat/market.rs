//! Matrix Market coordinate-format reader and writer.
//!
//! Supported headers: `%%MatrixMarket matrix coordinate real (general|symmetric)`,
//! 1-based indices. Symmetric files are expanded to general storage on
//! read; duplicate coordinates are summed per the format convention.
//! The writer always emits general storage, 1-based, row-major sorted.

use super::{CsrMatrix, SparseError};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported field {0:?}: only \"real\" coordinate matrices are supported")]
    NonRealField(String),
    #[error("unsupported symmetry {0:?}: only \"general\" and \"symmetric\" are supported")]
    UnsupportedSymmetry(String),
    #[error("line {line}: index ({i}, {j}) out of bounds for {nrows}x{ncols} matrix")]
    IndexOutOfBounds {
        line: usize,
        i: usize,
        j: usize,
        nrows: usize,
        ncols: usize,
    },
    #[error("line {line}: cannot parse entry: {text}")]
    ParseEntry { line: usize, text: String },
    #[error("expected {expected} entries, file contains {got}")]
    EntryCount { expected: usize, got: usize },
    #[error("missing size line")]
    MissingSizeLine,
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// Reads a coordinate-format Matrix Market file into sorted,
/// deduplicated CSR. Symmetric storage is mirrored across the diagonal.
pub fn read_matrix_market<P: AsRef<Path>>(path: P) -> Result<CsrMatrix, MarketError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines.next().ok_or_else(|| {
        MarketError::MalformedHeader("empty file".into())
    })?;
    let header = header?;
    let symmetric = parse_header(&header)?;

    // size line: first non-comment, non-blank line
    let mut size = None;
    for (idx, line) in &mut lines {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('%') {
            continue;
        }
        size = Some((idx + 1, text.to_string()));
        break;
    }
    let (size_line_no, size_text) = size.ok_or(MarketError::MissingSizeLine)?;
    let mut it = size_text.split_whitespace();
    let parse_dim = |tok: Option<&str>| -> Result<usize, MarketError> {
        tok.and_then(|t| t.parse().ok()).ok_or(MarketError::ParseEntry {
            line: size_line_no,
            text: size_text.clone(),
        })
    };
    let nrows = parse_dim(it.next())?;
    let ncols = parse_dim(it.next())?;
    let nnz = parse_dim(it.next())?;

    let mut triplets = Vec::with_capacity(if symmetric { 2 * nnz } else { nnz });
    let mut seen = 0usize;
    for (idx, line) in &mut lines {
        let line = line?;
        let text = line.trim();
        let line_no = idx + 1;
        if text.is_empty() || text.starts_with('%') {
            continue;
        }
        let mut it = text.split_whitespace();
        let entry = (|| {
            let i: usize = it.next()?.parse().ok()?;
            let j: usize = it.next()?.parse().ok()?;
            let v: f64 = it.next()?.parse().ok()?;
            Some((i, j, v))
        })()
        .ok_or_else(|| MarketError::ParseEntry {
            line: line_no,
            text: text.to_string(),
        })?;
        let (i, j, v) = entry;
        if i == 0 || j == 0 || i > nrows || j > ncols {
            return Err(MarketError::IndexOutOfBounds {
                line: line_no,
                i,
                j,
                nrows,
                ncols,
            });
        }
        triplets.push((i - 1, j - 1, v));
        if symmetric && i != j {
            triplets.push((j - 1, i - 1, v));
        }
        seen += 1;
    }
    if seen != nnz {
        return Err(MarketError::EntryCount {
            expected: nnz,
            got: seen,
        });
    }
    Ok(CsrMatrix::from_triplets(nrows, ncols, &triplets)?)
}

fn parse_header(line: &str) -> Result<bool, MarketError> {
    let mut tok = line.split_whitespace();
    let banner = tok.next().unwrap_or("");
    if banner != "%%MatrixMarket" {
        return Err(MarketError::MalformedHeader(format!(
            "first line must start with %%MatrixMarket, got {banner:?}"
        )));
    }
    let object = tok.next().unwrap_or("").to_ascii_lowercase();
    let format = tok.next().unwrap_or("").to_ascii_lowercase();
    let field = tok.next().unwrap_or("").to_ascii_lowercase();
    let symmetry = tok.next().unwrap_or("").to_ascii_lowercase();
    if object != "matrix" || format != "coordinate" {
        return Err(MarketError::MalformedHeader(format!(
            "expected \"matrix coordinate\", got \"{object} {format}\""
        )));
    }
    if field != "real" {
        return Err(MarketError::NonRealField(field));
    }
    match symmetry.as_str() {
        "general" => Ok(false),
        "symmetric" => Ok(true),
        other => Err(MarketError::UnsupportedSymmetry(other.to_string())),
    }
}

/// Writes general, 1-based coordinate format. Values use the shortest
/// representation that round-trips to the same f64.
pub fn write_matrix_market<P: AsRef<Path>>(a: &CsrMatrix, path: P) -> Result<(), MarketError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", a.nrows(), a.ncols(), a.nnz())?;
    for i in 0..a.nrows() {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
        }
    }
    w.flush()?;
    Ok(())
}
