//! Triangular-solve execution strategies on decomposed factors.
//!
//! Each subdomain is an independent task on a worker pool; a task owns
//! a [`SubdomainScratch`] buffer (the stand-in for fast local memory,
//! bounded by `max_subdomain_rows` scalar slots) holding its slice of
//! the right-hand side while rows resolve. Strategies:
//!
//! - `reference`: sequential substitution over all rows; the
//!   correctness oracle for everything else. Needs no scratch.
//! - `syncfree`: dataflow execution inside each subdomain task. A row
//!   carries an outstanding-dependency counter; completed rows scatter
//!   their value into dependents' partial sums and enqueue rows whose
//!   counter reaches zero. This keeps the data-flow semantics of
//!   busy-wait designs without burning cores on spin loops.
//! - `level_vc`: vertex-centric level sweep. Levels run in order with
//!   a barrier between them; a row's nonzeros are traversed
//!   sequentially in ascending column order, so results are bitwise
//!   reproducible across runs and worker counts.
//! - `level_ec`: edge-centric level sweep. All nonzeros of a level are
//!   processed in parallel and accumulate into scratch with atomic
//!   adds; the nondeterministic accumulation order bounds
//!   reproducibility at about 1e-10 relative instead of bitwise.
//!
//! The fused apply runs unit-lower solve, inverse-diagonal scaling and
//! unit-upper solve for a subdomain inside one task and one scratch
//! residency, writing back to the output vector once.

use crate::block3::{self, Block};
use crate::factor::{IlduFactors, IlduFactorsBsr};
use crate::partition::SubdomainLayout;
use crate::schedule::{LevelSchedule, SubdomainSchedule};
use crate::sparsemat::{BsrMatrix, CsrMatrix};
use rayon::prelude::*;
use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use thiserror::Error;

/// Default scratch budget: scalar slots per subdomain.
pub const DEFAULT_SCRATCH_ROWS: usize = 8192;

#[derive(Debug, Error)]
pub enum TrisolveError {
    #[error("operand has length {got}, factor expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("zero stored diagonal at row {0}")]
    ZeroDiagonal(usize),
    #[error("singular stored diagonal block at block row {0}")]
    SingularDiagonalBlock(usize),
    #[error("row {0} has no stored diagonal")]
    MissingDiagonal(usize),
    #[error("row {row} entry at column {col} is outside the {shape} triangle")]
    WrongTriangle {
        row: usize,
        col: usize,
        shape: &'static str,
    },
    #[error(
        "subdomain {subdomain} needs {rows} scratch slots, budget is {budget} \
         (max_subdomain_rows)"
    )]
    ScratchCapacity {
        subdomain: usize,
        rows: usize,
        budget: usize,
    },
    #[error("row {row} depends on row {dep} in another subdomain")]
    CrossSubdomain { row: usize, dep: usize },
    #[error("worker count must be >= 1")]
    WorkerCount,
    #[error("the fused apply needs a level strategy (level_vc or level_ec), got {0}")]
    FusedNeedsLevels(StrategyKind),
    #[error("failed to build worker pool: {0}")]
    Pool(String),
}

/// Execution strategy selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyKind {
    Reference,
    SyncFree,
    LevelVc,
    LevelEc,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::Reference,
        StrategyKind::SyncFree,
        StrategyKind::LevelVc,
        StrategyKind::LevelEc,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Reference => "reference",
            StrategyKind::SyncFree => "syncfree",
            StrategyKind::LevelVc => "level_vc",
            StrategyKind::LevelEc => "level_ec",
        }
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.replace('-', "_").as_str() {
            "reference" => Ok(StrategyKind::Reference),
            "syncfree" | "sync_free" => Ok(StrategyKind::SyncFree),
            "level_vc" | "vc" => Ok(StrategyKind::LevelVc),
            "level_ec" | "ec" => Ok(StrategyKind::LevelEc),
            other => Err(format!(
                "unknown strategy {other:?} (expected reference, syncfree, level_vc or level_ec)"
            )),
        }
    }
}

/// Strategy plus parallelism degree and scratch budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolveStrategy {
    pub kind: StrategyKind,
    /// Worker-pool size; >= 1.
    pub workers: usize,
    /// Scratch budget in scalar slots per subdomain.
    pub max_subdomain_rows: usize,
}

impl SolveStrategy {
    pub fn new(kind: StrategyKind) -> Self {
        SolveStrategy {
            kind,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            max_subdomain_rows: DEFAULT_SCRATCH_ROWS,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_scratch_budget(mut self, rows: usize) -> Self {
        self.max_subdomain_rows = rows;
        self
    }
}

/// A strategy bound to a live worker pool. Built once and reused
/// across applies so pool startup never sits on the solve path.
pub struct SolveContext {
    kind: StrategyKind,
    workers: usize,
    max_subdomain_rows: usize,
    pool: rayon::ThreadPool,
}

impl SolveContext {
    pub fn new(strategy: SolveStrategy) -> Result<Self, TrisolveError> {
        if strategy.workers == 0 {
            return Err(TrisolveError::WorkerCount);
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(strategy.workers)
            .build()
            .map_err(|e| TrisolveError::Pool(e.to_string()))?;
        Ok(SolveContext {
            kind: strategy.kind,
            workers: strategy.workers,
            max_subdomain_rows: strategy.max_subdomain_rows,
            pool,
        })
    }

    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn max_subdomain_rows(&self) -> usize {
        self.max_subdomain_rows
    }
}

impl std::fmt::Debug for SolveContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SolveContext")
            .field("kind", &self.kind)
            .field("workers", &self.workers)
            .field("max_subdomain_rows", &self.max_subdomain_rows)
            .finish()
    }
}

/// Which triangle a factor stores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriShape {
    Lower,
    Upper,
}

/// Diagonal handling of a factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagKind {
    /// Implicit unit diagonal; rows finalize without division.
    Unit,
    /// Diagonal stored in the factor; rows finalize by dividing
    /// (scalar) or applying the inverse block.
    Stored,
}

/// Borrowed view of a triangular factor the kernels operate on.
/// `C` is `f64` for CSR factors and a 3x3 block for BSR factors.
pub struct TriFactor<'a, C> {
    n: usize,
    row_ptr: &'a [usize],
    col_idx: &'a [usize],
    coefs: &'a [C],
    shape: TriShape,
    diag: DiagKind,
}

impl<'a, C: Coeff> TriFactor<'a, C> {
    /// Rows of the factor (block rows for BSR).
    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn shape(&self) -> TriShape {
        self.shape
    }

    pub fn diag(&self) -> DiagKind {
        self.diag
    }

    /// Scalar vector length operands must have.
    pub fn scalar_len(&self) -> usize {
        self.n * C::LANES
    }

    #[inline]
    fn entries(&self, i: usize) -> impl Iterator<Item = (usize, &C)> {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()].iter().copied().zip(&self.coefs[range])
    }

    /// Checks triangularity and diagonal storage against the flags.
    pub fn validate(&self) -> Result<(), TrisolveError> {
        for i in 0..self.n {
            let mut saw_diag = false;
            for (c, _) in self.entries(i) {
                if c == i {
                    saw_diag = true;
                    continue;
                }
                let ok = match self.shape {
                    TriShape::Lower => c < i,
                    TriShape::Upper => c > i,
                };
                if !ok {
                    return Err(TrisolveError::WrongTriangle {
                        row: i,
                        col: c,
                        shape: match self.shape {
                            TriShape::Lower => "lower",
                            TriShape::Upper => "upper",
                        },
                    });
                }
            }
            match self.diag {
                DiagKind::Stored if !saw_diag => {
                    return Err(TrisolveError::MissingDiagonal(i));
                }
                DiagKind::Unit if saw_diag => {
                    return Err(TrisolveError::WrongTriangle {
                        row: i,
                        col: i,
                        shape: "strictly triangular",
                    });
                }
                _ => {}
            }
        }
        Ok(())
    }
}

macro_rules! view_ctors {
    ($mat:ty, $coef:ty, $rows:ident, $coef_view:ident) => {
        impl<'a> TriFactor<'a, $coef> {
            fn view(m: &'a $mat, shape: TriShape, diag: DiagKind) -> Self {
                let f = TriFactor {
                    n: m.$rows(),
                    row_ptr: m.row_ptr(),
                    col_idx: m.col_idx(),
                    coefs: m.$coef_view(),
                    shape,
                    diag,
                };
                debug_assert!(f.validate().is_ok());
                f
            }
        }
    };
}

view_ctors!(CsrMatrix, f64, nrows, values);
view_ctors!(BsrMatrix, Block, n_block_rows, blocks);

impl<'a> TriFactor<'a, f64> {
    /// Strictly-lower factor with implicit unit diagonal.
    pub fn unit_lower(m: &'a CsrMatrix) -> Self {
        Self::view(m, TriShape::Lower, DiagKind::Unit)
    }

    /// Strictly-upper factor with implicit unit diagonal.
    pub fn unit_upper(m: &'a CsrMatrix) -> Self {
        Self::view(m, TriShape::Upper, DiagKind::Unit)
    }

    /// Lower factor whose diagonal is stored in the matrix.
    pub fn lower_with_diag(m: &'a CsrMatrix) -> Self {
        Self::view(m, TriShape::Lower, DiagKind::Stored)
    }

    /// Upper factor whose diagonal is stored in the matrix.
    pub fn upper_with_diag(m: &'a CsrMatrix) -> Self {
        Self::view(m, TriShape::Upper, DiagKind::Stored)
    }
}

impl<'a> TriFactor<'a, Block> {
    pub fn unit_lower_bsr(m: &'a BsrMatrix) -> Self {
        Self::view(m, TriShape::Lower, DiagKind::Unit)
    }

    pub fn unit_upper_bsr(m: &'a BsrMatrix) -> Self {
        Self::view(m, TriShape::Upper, DiagKind::Unit)
    }

    pub fn lower_with_diag_bsr(m: &'a BsrMatrix) -> Self {
        Self::view(m, TriShape::Lower, DiagKind::Stored)
    }

    pub fn upper_with_diag_bsr(m: &'a BsrMatrix) -> Self {
        Self::view(m, TriShape::Upper, DiagKind::Stored)
    }
}

/// Coefficient algebra the kernels are generic over: plain scalars for
/// CSR factors, 3x3 blocks acting on length-3 sub-vectors for BSR.
pub trait Coeff: Copy + Send + Sync + 'static {
    /// Value a single (block) row contributes or consumes.
    type Rhs: Copy + Send + Sync + std::fmt::Debug;
    /// Scalar slots per row in flat vectors.
    const LANES: usize;

    fn gather(v: &[f64], row: usize) -> Self::Rhs;
    fn scatter(v: &mut [f64], row: usize, x: Self::Rhs);
    /// `c * x`
    fn mul(c: &Self, x: &Self::Rhs) -> Self::Rhs;
    fn sub_assign(a: &mut Self::Rhs, b: Self::Rhs);
    /// `d^-1 * rhs`, failing on a zero/singular stored diagonal.
    fn solve_diag(d: &Self, rhs: Self::Rhs, row: usize) -> Result<Self::Rhs, TrisolveError>;

    fn load(cells: &[AtomicU64], local_row: usize) -> Self::Rhs;
    fn store(cells: &[AtomicU64], local_row: usize, x: Self::Rhs);
    /// `cells[local_row] -= x`, atomically per scalar lane.
    fn atomic_sub(cells: &[AtomicU64], local_row: usize, x: Self::Rhs);
}

#[inline]
fn atomic_sub_f64(cell: &AtomicU64, delta: f64) {
    let mut cur = cell.load(Ordering::Relaxed);
    loop {
        let next = (f64::from_bits(cur) - delta).to_bits();
        match cell.compare_exchange_weak(cur, next, Ordering::Relaxed, Ordering::Relaxed) {
            Ok(_) => return,
            Err(now) => cur = now,
        }
    }
}

impl Coeff for f64 {
    type Rhs = f64;
    const LANES: usize = 1;

    #[inline]
    fn gather(v: &[f64], row: usize) -> f64 {
        v[row]
    }

    #[inline]
    fn scatter(v: &mut [f64], row: usize, x: f64) {
        v[row] = x;
    }

    #[inline]
    fn mul(c: &f64, x: &f64) -> f64 {
        c * x
    }

    #[inline]
    fn sub_assign(a: &mut f64, b: f64) {
        *a -= b;
    }

    #[inline]
    fn solve_diag(d: &f64, rhs: f64, row: usize) -> Result<f64, TrisolveError> {
        if *d == 0.0 {
            return Err(TrisolveError::ZeroDiagonal(row));
        }
        Ok(rhs / d)
    }

    #[inline]
    fn load(cells: &[AtomicU64], local_row: usize) -> f64 {
        f64::from_bits(cells[local_row].load(Ordering::Relaxed))
    }

    #[inline]
    fn store(cells: &[AtomicU64], local_row: usize, x: f64) {
        cells[local_row].store(x.to_bits(), Ordering::Relaxed);
    }

    #[inline]
    fn atomic_sub(cells: &[AtomicU64], local_row: usize, x: f64) {
        atomic_sub_f64(&cells[local_row], x);
    }
}

impl Coeff for Block {
    type Rhs = [f64; 3];
    const LANES: usize = 3;

    #[inline]
    fn gather(v: &[f64], row: usize) -> [f64; 3] {
        [v[3 * row], v[3 * row + 1], v[3 * row + 2]]
    }

    #[inline]
    fn scatter(v: &mut [f64], row: usize, x: [f64; 3]) {
        v[3 * row..3 * row + 3].copy_from_slice(&x);
    }

    #[inline]
    fn mul(c: &Block, x: &[f64; 3]) -> [f64; 3] {
        block3::matvec(c, x)
    }

    #[inline]
    fn sub_assign(a: &mut [f64; 3], b: [f64; 3]) {
        for (x, y) in a.iter_mut().zip(&b) {
            *x -= y;
        }
    }

    #[inline]
    fn solve_diag(d: &Block, rhs: [f64; 3], row: usize) -> Result<[f64; 3], TrisolveError> {
        let inv = block3::inv(d, f64::MIN_POSITIVE)
            .ok_or(TrisolveError::SingularDiagonalBlock(row))?;
        Ok(block3::matvec(&inv, &rhs))
    }

    #[inline]
    fn load(cells: &[AtomicU64], local_row: usize) -> [f64; 3] {
        let base = 3 * local_row;
        [
            f64::from_bits(cells[base].load(Ordering::Relaxed)),
            f64::from_bits(cells[base + 1].load(Ordering::Relaxed)),
            f64::from_bits(cells[base + 2].load(Ordering::Relaxed)),
        ]
    }

    #[inline]
    fn store(cells: &[AtomicU64], local_row: usize, x: [f64; 3]) {
        let base = 3 * local_row;
        for (lane, v) in x.iter().enumerate() {
            cells[base + lane].store(v.to_bits(), Ordering::Relaxed);
        }
    }

    #[inline]
    fn atomic_sub(cells: &[AtomicU64], local_row: usize, x: [f64; 3]) {
        let base = 3 * local_row;
        for (lane, v) in x.iter().enumerate() {
            atomic_sub_f64(&cells[base + lane], *v);
        }
    }
}

/// Per-subdomain partial-sum buffer; the worker task that owns a
/// subdomain is the only writer. Lives in scalar (f64-bit) cells so
/// edge-centric accumulation can add atomically while the
/// deterministic paths use plain relaxed loads and stores.
pub struct SubdomainScratch {
    cells: Vec<AtomicU64>,
}

impl SubdomainScratch {
    /// Allocates `scalar_len` slots, enforcing the shared-memory budget.
    pub fn new(
        scalar_len: usize,
        budget: usize,
        subdomain: usize,
    ) -> Result<Self, TrisolveError> {
        if scalar_len > budget {
            return Err(TrisolveError::ScratchCapacity {
                subdomain,
                rows: scalar_len,
                budget,
            });
        }
        Ok(SubdomainScratch {
            cells: (0..scalar_len).map(|_| AtomicU64::new(0)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[AtomicU64] {
        &self.cells
    }

    /// Loads the subdomain's slice of the right-hand side.
    pub fn fill_from(&self, src: &[f64]) {
        debug_assert_eq!(src.len(), self.cells.len());
        for (cell, &v) in self.cells.iter().zip(src) {
            cell.store(v.to_bits(), Ordering::Relaxed);
        }
    }

    /// Single write-back of the subdomain's results.
    pub fn write_back(&self, dst: &mut [f64]) {
        debug_assert_eq!(dst.len(), self.cells.len());
        for (out, cell) in dst.iter_mut().zip(&self.cells) {
            *out = f64::from_bits(cell.load(Ordering::Relaxed));
        }
    }
}

fn check_dims<C: Coeff>(f: &TriFactor<C>, b: &[f64]) -> Result<(), TrisolveError> {
    if b.len() != f.scalar_len() {
        return Err(TrisolveError::DimensionMismatch {
            expected: f.scalar_len(),
            got: b.len(),
        });
    }
    Ok(())
}

/// Sequential forward/backward substitution over all rows in
/// deterministic order; the oracle for every other strategy.
pub fn solve_reference<C: Coeff>(f: &TriFactor<C>, b: &[f64]) -> Result<Vec<f64>, TrisolveError> {
    check_dims(f, b)?;
    let mut x = vec![0.0; b.len()];
    let rows: Box<dyn Iterator<Item = usize>> = match f.shape {
        TriShape::Lower => Box::new(0..f.n),
        TriShape::Upper => Box::new((0..f.n).rev()),
    };
    for i in rows {
        let mut sum = C::gather(b, i);
        let mut diag: Option<&C> = None;
        for (c, coef) in f.entries(i) {
            if c == i {
                diag = Some(coef);
            } else {
                C::sub_assign(&mut sum, C::mul(coef, &C::gather(&x, c)));
            }
        }
        let value = match f.diag {
            DiagKind::Unit => sum,
            DiagKind::Stored => {
                C::solve_diag(diag.ok_or(TrisolveError::MissingDiagonal(i))?, sum, i)?
            }
        };
        C::scatter(&mut x, i, value);
    }
    Ok(x)
}

/// Splits `x` into per-subdomain scalar slices following the schedule.
fn split_by_subdomains<'a, C: Coeff>(
    x: &'a mut [f64],
    subs: &[SubdomainSchedule],
) -> Vec<&'a mut [f64]> {
    let mut out = Vec::with_capacity(subs.len());
    let mut rest = x;
    let mut prev = 0;
    for sub in subs {
        let end = sub.row_end() * C::LANES;
        let (head, tail) = rest.split_at_mut(end - prev);
        out.push(head);
        rest = tail;
        prev = end;
    }
    out
}

/// Dataflow ("sync-free") solve: per subdomain, rows execute as soon
/// as their dependency counters reach zero; completed rows scatter
/// into their dependents' partial sums. Accumulation order within a
/// row follows completion order, so results match the reference within
/// rounding (1e-12 relative scale), not bitwise.
pub fn solve_syncfree<C: Coeff>(
    ctx: &SolveContext,
    f: &TriFactor<C>,
    b: &[f64],
    layout: &SubdomainLayout,
) -> Result<Vec<f64>, TrisolveError> {
    check_dims(f, b)?;
    if layout.n_rows() != f.n {
        return Err(TrisolveError::DimensionMismatch {
            expected: f.n,
            got: layout.n_rows(),
        });
    }
    let mut x = vec![0.0; b.len()];
    let ranges: Vec<std::ops::Range<usize>> =
        (0..layout.n_subdomains()).map(|s| layout.range(s)).collect();
    let mut slices = Vec::with_capacity(ranges.len());
    let mut rest = &mut x[..];
    for r in &ranges {
        let (head, tail) = rest.split_at_mut(r.len() * C::LANES);
        slices.push(head);
        rest = tail;
    }
    let budget = ctx.max_subdomain_rows;
    ctx.pool.install(|| {
        ranges
            .par_iter()
            .enumerate()
            .zip(slices.par_iter_mut())
            .try_for_each(|((s, range), xs)| {
                let width = range.len();
                let scratch = SubdomainScratch::new(width * C::LANES, budget, s)?;
                scratch.fill_from(&b[range.start * C::LANES..range.end * C::LANES]);
                let cells = scratch.cells();

                // dependency counters + transposed dependent lists
                let mut pending = vec![0usize; width];
                let mut dependents: Vec<Vec<(usize, usize)>> = vec![Vec::new(); width];
                let mut diag_pos = vec![usize::MAX; width];
                for i in range.clone() {
                    for p in f.row_ptr[i]..f.row_ptr[i + 1] {
                        let c = f.col_idx[p];
                        if c == i {
                            diag_pos[i - range.start] = p;
                            continue;
                        }
                        if !range.contains(&c) {
                            return Err(TrisolveError::CrossSubdomain { row: i, dep: c });
                        }
                        pending[i - range.start] += 1;
                        dependents[c - range.start].push((i - range.start, p));
                    }
                }

                let mut queue: VecDeque<usize> =
                    (0..width).filter(|&li| pending[li] == 0).collect();
                let mut done = 0usize;
                while let Some(li) = queue.pop_front() {
                    let sum = C::load(cells, li);
                    let value = match f.diag {
                        DiagKind::Unit => sum,
                        DiagKind::Stored => {
                            let p = diag_pos[li];
                            if p == usize::MAX {
                                return Err(TrisolveError::MissingDiagonal(range.start + li));
                            }
                            C::solve_diag(&f.coefs[p], sum, range.start + li)?
                        }
                    };
                    C::store(cells, li, value);
                    done += 1;
                    for &(dep, p) in &dependents[li] {
                        let contrib = C::mul(&f.coefs[p], &value);
                        let mut acc = C::load(cells, dep);
                        C::sub_assign(&mut acc, contrib);
                        C::store(cells, dep, acc);
                        pending[dep] -= 1;
                        if pending[dep] == 0 {
                            queue.push_back(dep);
                        }
                    }
                }
                debug_assert_eq!(done, width, "triangular factor has no cycles");

                scratch.write_back(xs);
                Ok(())
            })
    })?;
    Ok(x)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum LevelMode {
    Vertex,
    Edge,
}

/// Vertex-centric level-scheduled solve; bitwise deterministic across
/// runs and worker counts.
pub fn solve_level_vc<C: Coeff>(
    ctx: &SolveContext,
    f: &TriFactor<C>,
    b: &[f64],
    sched: &LevelSchedule,
) -> Result<Vec<f64>, TrisolveError> {
    solve_level(ctx, f, b, sched, LevelMode::Vertex)
}

/// Edge-centric level-scheduled solve; nonzeros of a level accumulate
/// in parallel with atomic adds, reproducible to ~1e-10 relative.
pub fn solve_level_ec<C: Coeff>(
    ctx: &SolveContext,
    f: &TriFactor<C>,
    b: &[f64],
    sched: &LevelSchedule,
) -> Result<Vec<f64>, TrisolveError> {
    solve_level(ctx, f, b, sched, LevelMode::Edge)
}

fn solve_level<C: Coeff>(
    ctx: &SolveContext,
    f: &TriFactor<C>,
    b: &[f64],
    sched: &LevelSchedule,
    mode: LevelMode,
) -> Result<Vec<f64>, TrisolveError> {
    check_dims(f, b)?;
    if sched.n_rows() != f.n {
        return Err(TrisolveError::DimensionMismatch {
            expected: f.n,
            got: sched.n_rows(),
        });
    }
    let mut x = vec![0.0; b.len()];
    let slices = split_by_subdomains::<C>(&mut x, sched.subdomains());
    let budget = ctx.max_subdomain_rows;
    ctx.pool.install(|| {
        sched
            .subdomains()
            .par_iter()
            .enumerate()
            .zip(slices)
            .try_for_each(|((s, sub), xs)| {
                let scratch = SubdomainScratch::new(sub.width() * C::LANES, budget, s)?;
                scratch.fill_from(&b[sub.row_start() * C::LANES..sub.row_end() * C::LANES]);
                match mode {
                    LevelMode::Vertex => vc_sweep(f, sub, scratch.cells())?,
                    LevelMode::Edge => ec_sweep(f, sub, scratch.cells())?,
                }
                scratch.write_back(xs);
                Ok(())
            })
    })?;
    Ok(x)
}

/// One subdomain's level sweep, vertex-centric: rows of a level in
/// order, each row's nonzeros accumulated sequentially in ascending
/// column order, then finalized in place.
fn vc_sweep<C: Coeff>(
    f: &TriFactor<C>,
    sub: &SubdomainSchedule,
    cells: &[AtomicU64],
) -> Result<(), TrisolveError> {
    let start = sub.row_start();
    for level in sub.levels() {
        for &i in level {
            let li = i - start;
            let mut sum = C::load(cells, li);
            let mut diag: Option<&C> = None;
            for (c, coef) in f.entries(i) {
                if c == i {
                    diag = Some(coef);
                } else {
                    C::sub_assign(&mut sum, C::mul(coef, &C::load(cells, c - start)));
                }
            }
            let value = match f.diag {
                DiagKind::Unit => sum,
                DiagKind::Stored => {
                    C::solve_diag(diag.ok_or(TrisolveError::MissingDiagonal(i))?, sum, i)?
                }
            };
            C::store(cells, li, value);
        }
    }
    Ok(())
}

/// One subdomain's level sweep, edge-centric: every nonzero of the
/// level subtracts its contribution atomically, then rows finalize.
fn ec_sweep<C: Coeff>(
    f: &TriFactor<C>,
    sub: &SubdomainSchedule,
    cells: &[AtomicU64],
) -> Result<(), TrisolveError> {
    let start = sub.row_start();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for level in sub.levels() {
        edges.clear();
        for &i in level {
            for p in f.row_ptr[i]..f.row_ptr[i + 1] {
                if f.col_idx[p] != i {
                    edges.push((i - start, p));
                }
            }
        }
        edges.par_iter().for_each(|&(li, p)| {
            let dep = f.col_idx[p] - start;
            let xc = C::load(cells, dep);
            C::atomic_sub(cells, li, C::mul(&f.coefs[p], &xc));
        });
        for &i in level {
            let li = i - start;
            if f.diag == DiagKind::Stored {
                let dp = (f.row_ptr[i]..f.row_ptr[i + 1])
                    .find(|&p| f.col_idx[p] == i)
                    .ok_or(TrisolveError::MissingDiagonal(i))?;
                let value = C::solve_diag(&f.coefs[dp], C::load(cells, li), i)?;
                C::store(cells, li, value);
            }
        }
    }
    Ok(())
}

/// Runs the strategy selected by the context.
pub fn solve_with<C: Coeff>(
    ctx: &SolveContext,
    f: &TriFactor<C>,
    b: &[f64],
    sched: &LevelSchedule,
) -> Result<Vec<f64>, TrisolveError> {
    match ctx.kind {
        StrategyKind::Reference => solve_reference(f, b),
        StrategyKind::SyncFree => {
            let layout = layout_of(sched);
            solve_syncfree(ctx, f, b, &layout)
        }
        StrategyKind::LevelVc => solve_level_vc(ctx, f, b, sched),
        StrategyKind::LevelEc => solve_level_ec(ctx, f, b, sched),
    }
}

fn layout_of(sched: &LevelSchedule) -> SubdomainLayout {
    let mut offsets = Vec::with_capacity(sched.n_subdomains() + 1);
    offsets.push(0);
    offsets.extend(sched.subdomains().iter().map(|s| s.row_end()));
    SubdomainLayout::from_offsets(offsets)
}

/// Elementwise inverse-diagonal scaling: `out[i] = inv_d[i] * v[i]`.
pub fn scale_by_inv_diag(inv_d: &[f64], v: &[f64]) -> Vec<f64> {
    assert_eq!(inv_d.len(), v.len(), "inverse diagonal length");
    inv_d.iter().zip(v).map(|(d, x)| d * x).collect()
}

/// Block variant: applies each row's inverse diagonal block.
pub fn scale_by_inv_diag_bsr(inv_d: &[Block], v: &[f64]) -> Vec<f64> {
    assert_eq!(inv_d.len() * 3, v.len(), "inverse diagonal length");
    let mut out = vec![0.0; v.len()];
    for (i, d) in inv_d.iter().enumerate() {
        let x = <Block as Coeff>::gather(v, i);
        <Block as Coeff>::scatter(&mut out, i, block3::matvec(d, &x));
    }
    out
}

/// Fused preconditioner apply: per subdomain, inside one task and one
/// scratch residency, unit-lower solve, then inverse-diagonal scaling,
/// then unit-upper solve, then a single write-back. Equals the unfused
/// three-step composition (same schedules, same strategy) bitwise for
/// the vertex-centric strategy.
pub fn apply_ildu0_fused(
    ctx: &SolveContext,
    f: &IlduFactors,
    sched_l: &LevelSchedule,
    sched_u: &LevelSchedule,
    b: &[f64],
) -> Result<Vec<f64>, TrisolveError> {
    let l = TriFactor::unit_lower(&f.l_unit);
    let u = TriFactor::unit_upper(&f.u_unit);
    apply_fused(ctx, &l, &u, &f.inv_d, sched_l, sched_u, b)
}

/// Block variant of [`apply_ildu0_fused`].
pub fn apply_ildu0_fused_bsr(
    ctx: &SolveContext,
    f: &IlduFactorsBsr,
    sched_l: &LevelSchedule,
    sched_u: &LevelSchedule,
    b: &[f64],
) -> Result<Vec<f64>, TrisolveError> {
    let l = TriFactor::unit_lower_bsr(&f.l_unit);
    let u = TriFactor::unit_upper_bsr(&f.u_unit);
    apply_fused(ctx, &l, &u, &f.inv_d, sched_l, sched_u, b)
}

fn apply_fused<C: Coeff>(
    ctx: &SolveContext,
    l: &TriFactor<C>,
    u: &TriFactor<C>,
    inv_d: &[C],
    sched_l: &LevelSchedule,
    sched_u: &LevelSchedule,
    b: &[f64],
) -> Result<Vec<f64>, TrisolveError> {
    check_dims(l, b)?;
    if sched_l.n_rows() != l.n || sched_u.n_rows() != u.n || l.n != u.n {
        return Err(TrisolveError::DimensionMismatch {
            expected: l.n,
            got: sched_l.n_rows().min(sched_u.n_rows()).min(u.n),
        });
    }
    let mode = match ctx.kind {
        StrategyKind::LevelVc => LevelMode::Vertex,
        StrategyKind::LevelEc => LevelMode::Edge,
        other => return Err(TrisolveError::FusedNeedsLevels(other)),
    };
    debug_assert_eq!(sched_l.n_subdomains(), sched_u.n_subdomains());
    let mut x = vec![0.0; b.len()];
    let slices = split_by_subdomains::<C>(&mut x, sched_l.subdomains());
    let budget = ctx.max_subdomain_rows;
    ctx.pool.install(|| {
        sched_l
            .subdomains()
            .par_iter()
            .zip(sched_u.subdomains())
            .enumerate()
            .zip(slices)
            .try_for_each(|((s, (sub_l, sub_u)), xs)| {
                debug_assert_eq!(sub_l.row_start(), sub_u.row_start());
                let scratch = SubdomainScratch::new(sub_l.width() * C::LANES, budget, s)?;
                scratch
                    .fill_from(&b[sub_l.row_start() * C::LANES..sub_l.row_end() * C::LANES]);
                let cells = scratch.cells();

                match mode {
                    LevelMode::Vertex => vc_sweep(l, sub_l, cells)?,
                    LevelMode::Edge => ec_sweep(l, sub_l, cells)?,
                }
                // inverse-diagonal scaling in place (the level barrier
                // before and after is implicit: one task, one thread
                // per phase boundary)
                for i in sub_l.row_start()..sub_l.row_end() {
                    let li = i - sub_l.row_start();
                    let scaled = C::mul(&inv_d[i], &C::load(cells, li));
                    C::store(cells, li, scaled);
                }
                match mode {
                    LevelMode::Vertex => vc_sweep(u, sub_u, cells)?,
                    LevelMode::Edge => ec_sweep(u, sub_u, cells)?,
                }

                scratch.write_back(xs);
                Ok(())
            })
    })?;
    Ok(x)
}

/// Unfused composition of the same three steps as three separate
/// passes (three scratch residencies and intermediate vectors).
pub fn apply_ildu0_unfused(
    ctx: &SolveContext,
    f: &IlduFactors,
    sched_l: &LevelSchedule,
    sched_u: &LevelSchedule,
    b: &[f64],
) -> Result<Vec<f64>, TrisolveError> {
    let l = TriFactor::unit_lower(&f.l_unit);
    let u = TriFactor::unit_upper(&f.u_unit);
    let y = solve_with(ctx, &l, b, sched_l)?;
    let z = scale_by_inv_diag(&f.inv_d, &y);
    solve_with(ctx, &u, &z, sched_u)
}

/// Block variant of [`apply_ildu0_unfused`].
pub fn apply_ildu0_unfused_bsr(
    ctx: &SolveContext,
    f: &IlduFactorsBsr,
    sched_l: &LevelSchedule,
    sched_u: &LevelSchedule,
    b: &[f64],
) -> Result<Vec<f64>, TrisolveError> {
    let l = TriFactor::unit_lower_bsr(&f.l_unit);
    let u = TriFactor::unit_upper_bsr(&f.u_unit);
    let y = solve_with(ctx, &l, b, sched_l)?;
    let z = scale_by_inv_diag_bsr(&f.inv_d, &y);
    solve_with(ctx, &u, &z, sched_u)
}
