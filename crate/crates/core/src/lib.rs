//! Fine-grained domain decomposition for sparse triangular solves.
//!
//! This crate partitions a sparse matrix into many small uniform
//! subdomains, drops inter-subdomain couplings in the preconditioner
//! matrix, builds zero-fill ILU/ILDU factorizations on the decoupled
//! matrix, and runs per-subdomain level-scheduled triangular solves
//! under a worker-pool model (one task per subdomain, a bounded scratch
//! buffer standing in for fast local memory). An ILU0-preconditioned
//! BiCGSTAB solver drives the pieces end to end.
//!
//! Module map:
//! - [`sparsemat`]: CSR / 3x3-BSR containers, SpMV, Matrix Market I/O,
//!   7-point Laplacian generation.
//! - [`partition`]: geometric cuts on Cartesian grids, uniform graph
//!   growing for general matrices, label-to-permutation conversion.
//! - [`reorder`]: symmetric row/column permutation, inter-subdomain
//!   coupling removal, decomposition statistics.
//! - [`factor`]: ILU0 and ILDU0 factorizations (scalar and 3x3-block).
//! - [`schedule`]: per-subdomain level assignment and explicit level
//!   schedules for triangular factors.
//! - [`trisolve`]: triangular-solve execution strategies (sequential
//!   reference, dependency-counter sync-free, vertex- and edge-centric
//!   level-scheduled) plus the fused lower-scale-upper apply.
//! - [`krylov`]: preconditioned BiCGSTAB with pluggable preconditioners
//!   and residual-history reporting.

// offset-based CSR loops read better than the iterator rewrites
// clippy suggests for them
#![allow(clippy::needless_range_loop)]

mod block3;

pub mod factor;
pub mod krylov;
pub mod partition;
pub mod reorder;
pub mod schedule;
pub mod sparsemat;
pub mod trisolve;

pub use factor::{ildu0, ildu0_bsr, ilu0, ilu0_bsr, FactorError, IlduFactors, IluFactors};
pub use krylov::{bicgstab, BicgstabConfig, Preconditioner, SolveReport};
pub use partition::{PartitionLabels, Permutation, SubdomainLayout};
pub use reorder::{drop_inter_partition_csr, reorder_csr, DecompositionStats};
pub use schedule::{build_level_schedule, LevelMap, LevelSchedule};
pub use sparsemat::{BsrMatrix, CsrMatrix, GridSpec, Layout, LinearOperator};
pub use trisolve::{SolveContext, SolveStrategy, StrategyKind};
