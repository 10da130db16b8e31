//! Per-subdomain level assignment for triangular factors and explicit
//! per-level row lists.
//!
//! A row's level is the length of its longest dependency chain: 0 when
//! the row has no off-diagonal entries in its triangular part, else
//! one more than the maximum level among its dependencies. Rows within
//! a level are mutually independent and can be processed in parallel;
//! a barrier between levels is enough for correctness. Levels are
//! computed independently per subdomain because the decomposed factors
//! carry no dependencies across subdomain boundaries.
//!
//! The assignment runs as a single sweep per subdomain in the factor's
//! topological row order (ascending for lower factors, descending for
//! upper), which reaches the same fixpoint as an iterative mark-and-
//! promote scheme in linear time.

use crate::partition::SubdomainLayout;
use crate::sparsemat::{BsrMatrix, CsrMatrix};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("row {row} depends on row {dep} in another subdomain (decomposition violated)")]
    CrossSubdomain { row: usize, dep: usize },
    #[error("row {row} has entry at column {col} on the wrong side of the diagonal")]
    WrongTriangle { row: usize, col: usize },
    #[error("layout covers {layout} rows, factor has {rows}")]
    LayoutMismatch { layout: usize, rows: usize },
}

/// Which triangular part a factor stores (and therefore which side of
/// the diagonal its dependencies live on).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriSide {
    Lower,
    Upper,
}

/// Per-row level array. During construction rows start at the sentinel
/// `nrows + 1` ("unassigned"); a finished map contains no sentinels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelMap {
    levels: Vec<usize>,
}

impl LevelMap {
    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn n_rows(&self) -> usize {
        self.levels.len()
    }
}

/// One subdomain's rows bucketed by level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubdomainSchedule {
    row_start: usize,
    row_end: usize,
    /// Offsets into `rows`, one per level plus the end.
    level_ptr: Vec<usize>,
    /// Row indices grouped by level, ascending within each level.
    rows: Vec<usize>,
}

impl SubdomainSchedule {
    pub fn row_start(&self) -> usize {
        self.row_start
    }

    pub fn row_end(&self) -> usize {
        self.row_end
    }

    /// Rows in this subdomain.
    pub fn width(&self) -> usize {
        self.row_end - self.row_start
    }

    pub fn level_count(&self) -> usize {
        self.level_ptr.len() - 1
    }

    pub fn level_rows(&self, level: usize) -> &[usize] {
        &self.rows[self.level_ptr[level]..self.level_ptr[level + 1]]
    }

    pub fn levels(&self) -> impl Iterator<Item = &[usize]> {
        (0..self.level_count()).map(|l| self.level_rows(l))
    }
}

/// Explicit per-subdomain level lists for one triangular factor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelSchedule {
    subdomains: Vec<SubdomainSchedule>,
}

/// Aggregate shape of a schedule, for run reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduleSummary {
    /// Largest level count over all subdomains.
    pub max_levels: usize,
    /// Rows per level averaged over every (subdomain, level) pair.
    pub mean_level_width: f64,
}

impl LevelSchedule {
    pub fn subdomains(&self) -> &[SubdomainSchedule] {
        &self.subdomains
    }

    pub fn n_subdomains(&self) -> usize {
        self.subdomains.len()
    }

    pub fn n_rows(&self) -> usize {
        self.subdomains.last().map_or(0, |s| s.row_end)
    }

    /// Largest subdomain width (rows), the scratch sizing quantity.
    pub fn max_width(&self) -> usize {
        self.subdomains.iter().map(|s| s.width()).max().unwrap_or(0)
    }

    pub fn summary(&self) -> ScheduleSummary {
        let max_levels = self
            .subdomains
            .iter()
            .map(|s| s.level_count())
            .max()
            .unwrap_or(0);
        let total_levels: usize = self.subdomains.iter().map(|s| s.level_count()).sum();
        let total_rows: usize = self.subdomains.iter().map(|s| s.width()).sum();
        ScheduleSummary {
            max_levels,
            mean_level_width: if total_levels == 0 {
                0.0
            } else {
                total_rows as f64 / total_levels as f64
            },
        }
    }
}

/// Longest-path level assignment for a lower-triangular factor, run
/// independently per subdomain. Dependencies of row `i` are its
/// entries with column `< i`; a stored diagonal entry is ignored.
pub fn level_assign_lower(
    l: &CsrMatrix,
    layout: &SubdomainLayout,
) -> Result<LevelMap, ScheduleError> {
    assign(l.nrows(), l.row_ptr(), l.col_idx(), layout, TriSide::Lower)
}

/// Mirror of [`level_assign_lower`] for upper factors: dependencies
/// are entries with column `> i`, swept in descending row order.
pub fn level_assign_upper(
    u: &CsrMatrix,
    layout: &SubdomainLayout,
) -> Result<LevelMap, ScheduleError> {
    assign(u.nrows(), u.row_ptr(), u.col_idx(), layout, TriSide::Upper)
}

/// Block-row variants.
pub fn level_assign_lower_bsr(
    l: &BsrMatrix,
    layout: &SubdomainLayout,
) -> Result<LevelMap, ScheduleError> {
    assign(l.n_block_rows(), l.row_ptr(), l.col_idx(), layout, TriSide::Lower)
}

pub fn level_assign_upper_bsr(
    u: &BsrMatrix,
    layout: &SubdomainLayout,
) -> Result<LevelMap, ScheduleError> {
    assign(u.n_block_rows(), u.row_ptr(), u.col_idx(), layout, TriSide::Upper)
}

fn assign(
    nrows: usize,
    row_ptr: &[usize],
    col_idx: &[usize],
    layout: &SubdomainLayout,
    side: TriSide,
) -> Result<LevelMap, ScheduleError> {
    if layout.n_rows() != nrows {
        return Err(ScheduleError::LayoutMismatch {
            layout: layout.n_rows(),
            rows: nrows,
        });
    }
    let sentinel = nrows + 1;
    let mut levels = vec![sentinel; nrows];

    let chunks = split_by_layout(&mut levels, layout);
    (0..layout.n_subdomains())
        .into_par_iter()
        .zip(chunks)
        .try_for_each(|(s, chunk)| {
            let range = layout.range(s);
            let rows: Box<dyn Iterator<Item = usize>> = match side {
                TriSide::Lower => Box::new(range.clone()),
                TriSide::Upper => Box::new(range.clone().rev()),
            };
            for i in rows {
                let mut level = 0usize;
                for p in row_ptr[i]..row_ptr[i + 1] {
                    let dep = col_idx[p];
                    if dep == i {
                        continue; // stored diagonal
                    }
                    let is_dep = match side {
                        TriSide::Lower => dep < i,
                        TriSide::Upper => dep > i,
                    };
                    if !is_dep {
                        return Err(ScheduleError::WrongTriangle { row: i, col: dep });
                    }
                    if !range.contains(&dep) {
                        return Err(ScheduleError::CrossSubdomain { row: i, dep });
                    }
                    let dl = chunk[dep - range.start];
                    debug_assert_ne!(dl, sentinel, "dependency level computed first");
                    level = level.max(dl + 1);
                }
                chunk[i - range.start] = level;
            }
            Ok(())
        })?;

    debug_assert!(levels.iter().all(|&l| l != sentinel));
    Ok(LevelMap { levels })
}

/// Splits a mutable slice into per-subdomain chunks.
fn split_by_layout<'a>(data: &'a mut [usize], layout: &SubdomainLayout) -> Vec<&'a mut [usize]> {
    let mut chunks = Vec::with_capacity(layout.n_subdomains());
    let mut rest = data;
    let mut prev = 0;
    for s in 0..layout.n_subdomains() {
        let end = layout.range(s).end;
        let (head, tail) = rest.split_at_mut(end - prev);
        chunks.push(head);
        rest = tail;
        prev = end;
    }
    chunks
}

/// Buckets rows by (subdomain, level); rows ascend within each level,
/// so the schedule is deterministic.
pub fn build_level_schedule(hmap: &LevelMap, layout: &SubdomainLayout) -> LevelSchedule {
    assert_eq!(hmap.n_rows(), layout.n_rows(), "level map / layout size");
    let mut subdomains = Vec::with_capacity(layout.n_subdomains());
    for s in 0..layout.n_subdomains() {
        let range = layout.range(s);
        let n_levels = range
            .clone()
            .map(|i| hmap.levels()[i])
            .max()
            .map_or(0, |m| m + 1);
        let mut counts = vec![0usize; n_levels];
        for i in range.clone() {
            counts[hmap.levels()[i]] += 1;
        }
        let mut level_ptr = vec![0usize; n_levels + 1];
        for (l, &c) in counts.iter().enumerate() {
            level_ptr[l + 1] = level_ptr[l] + c;
        }
        let mut rows = vec![0usize; range.len()];
        let mut cursor = level_ptr.clone();
        for i in range.clone() {
            let l = hmap.levels()[i];
            rows[cursor[l]] = i;
            cursor[l] += 1;
        }
        subdomains.push(SubdomainSchedule {
            row_start: range.start,
            row_end: range.end,
            level_ptr,
            rows,
        });
    }
    LevelSchedule { subdomains }
}
