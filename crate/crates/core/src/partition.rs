//! Uniform partitioning of matrix rows: geometric cuts for Cartesian
//! grids, greedy graph growing for general matrices, and conversion of
//! partition labels into row permutations.

use crate::sparsemat::{CsrMatrix, GridSpec};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("grid dim {dim} not divisible by subdomain dim {sub} on axis {axis}")]
    NotDivisible { axis: char, dim: usize, sub: usize },
    #[error("rows per subdomain must be >= 1")]
    EmptyPart,
    #[error("label {label} at row {row} out of range (n_subdomains = {n})")]
    LabelRange { row: usize, label: usize, n: usize },
    #[error("subdomain {0} is empty")]
    EmptySubdomain(usize),
    #[error("subdomain {id} has {got} rows, expected {expected}")]
    NonUniform { id: usize, got: usize, expected: usize },
    #[error("permutation length {got} does not match row count {expected}")]
    PermutationLength { expected: usize, got: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {0}: cannot parse label")]
    ParseLabel(usize),
    #[error(transparent)]
    Sparse(#[from] crate::sparsemat::SparseError),
}

/// Per-row subdomain ids plus the uniform part size.
///
/// Every label lies in `[0, n_subdomains)` and each label occurs
/// exactly `rows_per_subdomain` times, except the last label, which
/// may cover the remainder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionLabels {
    labels: Vec<usize>,
    n_subdomains: usize,
    rows_per_subdomain: usize,
}

impl PartitionLabels {
    /// Wraps a raw label array, validating the uniform-size invariant.
    pub fn new(
        labels: Vec<usize>,
        n_subdomains: usize,
        rows_per_subdomain: usize,
    ) -> Result<Self, PartitionError> {
        if rows_per_subdomain == 0 {
            return Err(PartitionError::EmptyPart);
        }
        let mut counts = vec![0usize; n_subdomains];
        for (row, &label) in labels.iter().enumerate() {
            if label >= n_subdomains {
                return Err(PartitionError::LabelRange {
                    row,
                    label,
                    n: n_subdomains,
                });
            }
            counts[label] += 1;
        }
        for (id, &c) in counts.iter().enumerate() {
            if c == 0 {
                return Err(PartitionError::EmptySubdomain(id));
            }
            let expected = if id + 1 == n_subdomains {
                labels.len() - rows_per_subdomain * (n_subdomains - 1)
            } else {
                rows_per_subdomain
            };
            if c != expected {
                return Err(PartitionError::NonUniform {
                    id,
                    got: c,
                    expected,
                });
            }
        }
        Ok(PartitionLabels {
            labels,
            n_subdomains,
            rows_per_subdomain,
        })
    }

    /// A single subdomain covering all rows.
    pub fn single(nrows: usize) -> Self {
        PartitionLabels {
            labels: vec![0; nrows],
            n_subdomains: 1,
            rows_per_subdomain: nrows,
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_subdomains(&self) -> usize {
        self.n_subdomains
    }

    pub fn rows_per_subdomain(&self) -> usize {
        self.rows_per_subdomain
    }

    /// Row count of each subdomain, in label order.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_subdomains];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Contiguous row ranges the subdomains occupy once rows are
    /// grouped by label (the reordered-space view of this labeling).
    pub fn layout(&self) -> SubdomainLayout {
        let mut offsets = Vec::with_capacity(self.n_subdomains + 1);
        offsets.push(0);
        let mut acc = 0;
        for c in self.counts() {
            acc += c;
            offsets.push(acc);
        }
        SubdomainLayout { offsets }
    }

    /// Writes one label per line (the CLI interchange format).
    pub fn to_file<P: AsRef<Path>>(&self, path: P) -> Result<(), PartitionError> {
        let mut w = BufWriter::new(File::create(path)?);
        for &l in &self.labels {
            writeln!(w, "{l}")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a newline-delimited label file written by [`to_file`],
    /// inferring `n_subdomains` and the dominant part size.
    ///
    /// [`to_file`]: PartitionLabels::to_file
    pub fn from_file<P: AsRef<Path>>(path: P) -> Result<Self, PartitionError> {
        let reader = BufReader::new(File::open(path)?);
        let mut labels = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let text = line.trim();
            if text.is_empty() {
                continue;
            }
            labels.push(text.parse().map_err(|_| PartitionError::ParseLabel(idx + 1))?);
        }
        let n_subdomains = labels.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![0usize; n_subdomains];
        for &l in &labels {
            counts[l] += 1;
        }
        let p = counts.iter().copied().max().unwrap_or(0);
        PartitionLabels::new(labels, n_subdomains, p)
    }
}

/// Contiguous subdomain row ranges in reordered space: subdomain `s`
/// owns rows `offsets[s]..offsets[s+1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubdomainLayout {
    offsets: Vec<usize>,
}

impl SubdomainLayout {
    /// Uniform ranges of `p` rows each (last may be smaller).
    pub fn uniform(nrows: usize, p: usize) -> Result<Self, PartitionError> {
        if p == 0 {
            return Err(PartitionError::EmptyPart);
        }
        let mut offsets: Vec<usize> = (0..nrows).step_by(p).collect();
        offsets.push(nrows);
        Ok(SubdomainLayout { offsets })
    }

    /// One subdomain covering all rows.
    pub fn single(nrows: usize) -> Self {
        SubdomainLayout {
            offsets: vec![0, nrows],
        }
    }

    /// Builds from explicit boundaries: `offsets[0] == 0`, strictly
    /// increasing, last entry = row count.
    pub fn from_offsets(offsets: Vec<usize>) -> Self {
        assert!(offsets.first() == Some(&0), "offsets start at 0");
        assert!(
            offsets.windows(2).all(|w| w[0] < w[1]),
            "offsets strictly increasing"
        );
        SubdomainLayout { offsets }
    }

    pub fn n_subdomains(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_rows(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    #[inline]
    pub fn range(&self, s: usize) -> std::ops::Range<usize> {
        self.offsets[s]..self.offsets[s + 1]
    }

    /// Subdomain owning row `row`.
    #[inline]
    pub fn subdomain_of(&self, row: usize) -> usize {
        match self.offsets.binary_search(&row) {
            Ok(s) if s == self.offsets.len() - 1 => s - 1,
            Ok(s) => s,
            Err(s) => s - 1,
        }
    }

    /// Largest subdomain row count.
    pub fn max_rows(&self) -> usize {
        (0..self.n_subdomains())
            .map(|s| self.range(s).len())
            .max()
            .unwrap_or(0)
    }
}

/// Paired row maps produced by partitioning.
///
/// `new_to_old[j]` is the original index of the row placed at position
/// `j` in the new order (the map used to gather rows when reordering);
/// `old_to_new` is its inverse and relabels column indices. Each is a
/// bijection on `[0, nrows)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    new_to_old: Vec<usize>,
    old_to_new: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation {
            new_to_old: (0..n).collect(),
            old_to_new: (0..n).collect(),
        }
    }

    /// Builds from the new-to-old map, deriving the inverse.
    pub fn from_new_to_old(new_to_old: Vec<usize>) -> Result<Self, PartitionError> {
        let n = new_to_old.len();
        let mut old_to_new = vec![usize::MAX; n];
        for (new, &old) in new_to_old.iter().enumerate() {
            if old >= n || old_to_new[old] != usize::MAX {
                return Err(PartitionError::PermutationLength {
                    expected: n,
                    got: old,
                });
            }
            old_to_new[old] = new;
        }
        Ok(Permutation {
            new_to_old,
            old_to_new,
        })
    }

    pub fn len(&self) -> usize {
        self.new_to_old.len()
    }

    pub fn is_empty(&self) -> bool {
        self.new_to_old.is_empty()
    }

    pub fn new_to_old(&self) -> &[usize] {
        &self.new_to_old
    }

    pub fn old_to_new(&self) -> &[usize] {
        &self.old_to_new
    }

    /// Gathers `v` (old order) into new order: `out[j] = v[new_to_old[j]]`.
    pub fn permute(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.len(), "permutation length");
        self.new_to_old.iter().map(|&old| v[old]).collect()
    }

    /// Scatters `v` (new order) back to old order; inverse of [`permute`].
    ///
    /// [`permute`]: Permutation::permute
    pub fn unpermute(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.len(), "permutation length");
        self.old_to_new.iter().map(|&new| v[new]).collect()
    }

    /// Expands a block-row permutation to scalar rows (`dim` per block).
    pub fn expand_blocks(&self, dim: usize) -> Permutation {
        let new_to_old = self
            .new_to_old
            .iter()
            .flat_map(|&old| (0..dim).map(move |d| old * dim + d))
            .collect();
        Permutation::from_new_to_old(new_to_old).expect("expanded map stays a bijection")
    }
}

/// Labels grid vertices by uniform geometric tiles.
///
/// Vertex `(i, j, k)` gets tile id `ibx + bx*(jby + by*kbz)` where
/// `ibx = i / tile.nx` etc.; each grid axis must be divisible by the
/// corresponding tile axis. Produces `(nx/tx)*(ny/ty)*(nz/tz)` parts
/// of exactly `tx*ty*tz` rows each.
pub fn geometric_cuts(grid: GridSpec, tile: GridSpec) -> Result<PartitionLabels, PartitionError> {
    for (axis, dim, sub) in [
        ('x', grid.nx, tile.nx),
        ('y', grid.ny, tile.ny),
        ('z', grid.nz, tile.nz),
    ] {
        if dim % sub != 0 {
            return Err(PartitionError::NotDivisible { axis, dim, sub });
        }
    }
    let bx = grid.nx / tile.nx;
    let by = grid.ny / tile.ny;
    let bz = grid.nz / tile.nz;
    let mut labels = vec![0usize; grid.cells()?];
    for i in 0..grid.nx {
        let ibx = i / tile.nx;
        for j in 0..grid.ny {
            let jby = j / tile.ny;
            for k in 0..grid.nz {
                let kbz = k / tile.nz;
                let gidx = grid.index(i, j, k);
                labels[gidx] = ibx + bx * (jby + by * kbz);
            }
        }
    }
    PartitionLabels::new(labels, bx * by * bz, tile.nx * tile.ny * tile.nz)
}

/// Uniform partitioning of a general matrix by greedy graph growing.
///
/// The adjacency is the symmetrized pattern of `a`. Parts are grown
/// breadth-first to exactly `p` rows each (`ceil(nrows/p)` parts, the
/// last possibly smaller): when a part's frontier exhausts, growth
/// continues from the lowest-index unassigned row. `seed` selects the
/// first part's seed among the minimum-degree rows; later parts seed
/// from the lowest-index unassigned row. Always succeeds; the quality
/// (cut size) depends on the matrix.
pub fn graph_partition_uniform(a: &CsrMatrix, p: usize, seed: u64) -> Result<PartitionLabels, PartitionError> {
    if p == 0 {
        return Err(PartitionError::EmptyPart);
    }
    let n = a.nrows();
    let adj = symmetrized_adjacency(a);
    if n == 0 {
        return PartitionLabels::new(Vec::new(), 0, p);
    }

    let n_parts = n.div_ceil(p);
    let mut labels = vec![usize::MAX; n];
    let mut assigned = 0usize;

    // first seed: minimum degree, offset by `seed` among the tied rows
    let min_deg = (0..n).map(|v| adj[v].len()).min().unwrap();
    let candidates: Vec<usize> = (0..n).filter(|&v| adj[v].len() == min_deg).collect();
    let mut first_seed = Some(candidates[(seed as usize) % candidates.len()]);

    let mut queue = std::collections::VecDeque::new();
    let mut next_unassigned = 0usize;
    for part in 0..n_parts {
        let target = p.min(n - assigned);
        let mut size = 0;
        queue.clear();
        while size < target {
            if queue.is_empty() {
                let s = match first_seed.take() {
                    Some(s) if labels[s] == usize::MAX => s,
                    _ => {
                        while labels[next_unassigned] != usize::MAX {
                            next_unassigned += 1;
                        }
                        next_unassigned
                    }
                };
                labels[s] = part;
                size += 1;
                assigned += 1;
                queue.push_back(s);
                continue;
            }
            let v = queue.pop_front().unwrap();
            for &u in &adj[v] {
                if size == target {
                    break;
                }
                if labels[u] == usize::MAX {
                    labels[u] = part;
                    size += 1;
                    assigned += 1;
                    queue.push_back(u);
                }
            }
        }
    }

    let out = PartitionLabels::new(labels, n_parts, p)?;
    debug_assert_eq!(
        rebalance_to_uniform(out.labels(), n_parts, p, &adj).unwrap(),
        out
    );
    Ok(out)
}

/// Moves boundary rows between parts until every part has exactly the
/// uniform size `p` (last part takes the remainder). Intended for
/// ragged label sets from external tools or files;
/// [`graph_partition_uniform`] is already exact, so this is a no-op on
/// its output. Rows adjacent to the receiving part are preferred as
/// donors to limit cut growth.
pub fn rebalance_to_uniform(
    labels: &[usize],
    n_subdomains: usize,
    p: usize,
    adjacency: &[Vec<usize>],
) -> Result<PartitionLabels, PartitionError> {
    if p == 0 {
        return Err(PartitionError::EmptyPart);
    }
    let n = labels.len();
    if p * (n_subdomains.saturating_sub(1)) >= n || p * n_subdomains < n {
        return Err(PartitionError::NonUniform {
            id: n_subdomains.saturating_sub(1),
            got: n.saturating_sub(p * n_subdomains.saturating_sub(1)),
            expected: p,
        });
    }
    let mut l = labels.to_vec();
    for (row, &label) in l.iter().enumerate() {
        if label >= n_subdomains {
            return Err(PartitionError::LabelRange {
                row,
                label,
                n: n_subdomains,
            });
        }
    }
    let target =
        |id: usize| -> usize { if id + 1 == n_subdomains { n - p * (n_subdomains - 1) } else { p } };

    loop {
        let mut counts = vec![0usize; n_subdomains];
        for &x in &l {
            counts[x] += 1;
        }
        let over = (0..n_subdomains).find(|&s| counts[s] > target(s));
        let under = (0..n_subdomains).find(|&s| counts[s] < target(s));
        let (Some(over), Some(under)) = (over, under) else {
            break;
        };
        // prefer a donor row that touches the under-full part
        let donor = (0..n)
            .filter(|&v| l[v] == over)
            .find(|&v| adjacency[v].iter().any(|&u| l[u] == under))
            .or_else(|| (0..n).find(|&v| l[v] == over))
            .expect("over-full part has rows");
        l[donor] = under;
    }
    PartitionLabels::new(l, n_subdomains, p)
}

/// Symmetrized neighbor lists (union of row and column patterns,
/// self-loops removed), sorted ascending.
pub fn symmetrized_adjacency(a: &CsrMatrix) -> Vec<Vec<usize>> {
    let n = a.nrows();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let (cols, _) = a.row(i);
        for &j in cols {
            if i != j && j < n {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

/// Groups rows by label: rows of label 0 first, then label 1, and so
/// on; within a label the original order is preserved (stable), which
/// makes the reordering deterministic.
pub fn labels_to_permutation(labels: &PartitionLabels) -> Permutation {
    let counts = labels.counts();
    let mut starts = vec![0usize; labels.n_subdomains() + 1];
    for (s, &c) in counts.iter().enumerate() {
        starts[s + 1] = starts[s] + c;
    }
    let mut new_to_old = vec![0usize; labels.n_rows()];
    let mut cursor = starts;
    for (old, &label) in labels.labels().iter().enumerate() {
        new_to_old[cursor[label]] = old;
        cursor[label] += 1;
    }
    Permutation::from_new_to_old(new_to_old).expect("grouping yields a bijection")
}
