//! The shared matrix pipeline: load or generate, partition, reorder,
//! decouple, factor, schedule, solve, report.
//!
//! The decoupled matrix feeds only the preconditioner; the SpMV
//! operand is the reordered matrix with its inter-subdomain couplings
//! intact.

use crate::report::{
    BenchEntry, DecompositionInfo, MatrixInfo, Report, ScheduleInfo, SolverInfo, Timings,
    SCHEMA_VERSION,
};
use anyhow::{bail, Context, Result};
use ddsolve::factor::{ildu0, ildu0_bsr, ilu0_bsr, ilu0_decomposed, IluFactors, IluFactorsBsr};
use ddsolve::krylov::{
    bicgstab, BicgstabConfig, Breakdown, IdentityPreconditioner, Ildu0Preconditioner,
    Ilu0Preconditioner, Preconditioner, SolveReport,
};
use ddsolve::partition::{
    geometric_cuts, graph_partition_uniform, labels_to_permutation, PartitionLabels, Permutation,
    SubdomainLayout,
};
use ddsolve::reorder::{
    drop_inter_partition_bsr, drop_inter_partition_csr, laplacian_decomposition_stats,
    reorder_bsr, reorder_csr, DecompositionStats,
};
use ddsolve::schedule::{
    build_level_schedule, level_assign_lower, level_assign_lower_bsr, level_assign_upper,
    level_assign_upper_bsr, LevelSchedule,
};
use ddsolve::sparsemat::{
    laplacian_bsr, laplacian_csr, laplacian_nnz_scalar, read_matrix_market, BsrMatrix, CsrMatrix,
    GridSpec, Layout, LinearOperator, BLOCK_DIM,
};
use ddsolve::trisolve::{
    solve_level_ec, solve_level_vc, solve_reference, solve_syncfree, SolveContext, SolveStrategy,
    StrategyKind, TriFactor,
};
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Clone)]
pub enum MatrixSource {
    File(PathBuf),
    Laplacian(GridSpec, Layout),
}

impl MatrixSource {
    fn name(&self) -> String {
        match self {
            MatrixSource::File(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string()),
            MatrixSource::Laplacian(g, Layout::Scalar) => {
                format!("laplacian_{}x{}x{}", g.nx, g.ny, g.nz)
            }
            MatrixSource::Laplacian(g, Layout::Bsr3) => {
                format!("laplacian_{}x{}x{}_bsr3", g.nx, g.ny, g.nz)
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Partitioner {
    None,
    Geometric(GridSpec),
    Graph { p: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecondKind {
    None,
    Ilu0,
    Ildu0Fused,
}

impl PrecondKind {
    fn name(&self) -> &'static str {
        match self {
            PrecondKind::None => "none",
            PrecondKind::Ilu0 => "ilu0",
            PrecondKind::Ildu0Fused => "ildu0_fused",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhsMode {
    Ones,
    Manufactured,
    File,
}

/// Full configuration of a solve run.
pub struct RunConfig {
    pub source: MatrixSource,
    pub partitioner: Partitioner,
    pub precond: PrecondKind,
    pub strategy: StrategyKind,
    pub workers: Option<usize>,
    pub tol: f64,
    pub abs_tol: bool,
    pub max_iter: usize,
    pub max_sub_rows: Option<usize>,
    pub rhs: RhsMode,
    pub rhs_file: Option<PathBuf>,
}

/// TOML config file; command-line flags take precedence.
#[derive(Debug, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    strategy: Option<String>,
    pub workers: Option<usize>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub max_subdomain_rows: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: FileConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn strategy(&self) -> Result<Option<StrategyKind>> {
        self.strategy
            .as_deref()
            .map(|s| s.parse::<StrategyKind>().map_err(anyhow::Error::msg))
            .transpose()
    }
}

enum Mat {
    Csr(CsrMatrix),
    Bsr(BsrMatrix),
}

impl Mat {
    fn load(source: &MatrixSource) -> Result<Mat> {
        Ok(match source {
            MatrixSource::File(path) => Mat::Csr(
                read_matrix_market(path)
                    .with_context(|| format!("reading {}", path.display()))?,
            ),
            MatrixSource::Laplacian(g, Layout::Scalar) => Mat::Csr(laplacian_csr(*g)?),
            MatrixSource::Laplacian(g, Layout::Bsr3) => Mat::Bsr(laplacian_bsr(*g)?),
        })
    }

    /// Partition granularity: scalar rows for CSR, block rows for BSR.
    fn partition_rows(&self) -> usize {
        match self {
            Mat::Csr(a) => a.nrows(),
            Mat::Bsr(a) => a.n_block_rows(),
        }
    }

    fn nrows_scalar(&self) -> usize {
        match self {
            Mat::Csr(a) => a.nrows(),
            Mat::Bsr(a) => a.nrows_scalar(),
        }
    }

    fn nnz_scalar(&self) -> u64 {
        match self {
            Mat::Csr(a) => a.nnz() as u64,
            Mat::Bsr(a) => a.nnz_scalar() as u64,
        }
    }

    /// Structure-only CSR at partition granularity, for graph growing.
    fn pattern(&self) -> Result<CsrMatrix> {
        Ok(match self {
            Mat::Csr(a) => a.clone(),
            Mat::Bsr(a) => CsrMatrix::from_parts(
                a.n_block_rows(),
                a.n_block_cols(),
                a.row_ptr().to_vec(),
                a.col_idx().to_vec(),
                vec![1.0; a.nnzb()],
            )?,
        })
    }

    fn reorder(&self, perm: &Permutation) -> Result<Mat> {
        Ok(match self {
            Mat::Csr(a) => Mat::Csr(reorder_csr(a, perm)?),
            Mat::Bsr(a) => Mat::Bsr(reorder_bsr(a, perm)?),
        })
    }

    fn drop_inter(&self, labels: &PartitionLabels) -> Result<(Mat, DecompositionStats)> {
        Ok(match self {
            Mat::Csr(a) => {
                let (kept, stats) = drop_inter_partition_csr(a, labels)?;
                (Mat::Csr(kept), stats)
            }
            Mat::Bsr(a) => {
                let (kept, stats) = drop_inter_partition_bsr(a, labels)?;
                (Mat::Bsr(kept), stats)
            }
        })
    }

    fn operator(&self) -> &dyn LinearOperator {
        match self {
            Mat::Csr(a) => a,
            Mat::Bsr(a) => a,
        }
    }
}

/// Pipeline state after partitioning, reordering and decoupling.
struct Prepared {
    name: String,
    reordered: Mat,
    decoupled: Mat,
    layout: SubdomainLayout,
    /// Scalar-row permutation (block perms expanded).
    perm_scalar: Permutation,
    stats: DecompositionStats,
    timings: Timings,
}

fn prepare(
    source: &MatrixSource,
    partitioner: &Partitioner,
    labels_out: Option<&Path>,
) -> Result<Prepared> {
    let a = Mat::load(source)?;
    let n_part = a.partition_rows();

    let t0 = Instant::now();
    let labels = match partitioner {
        Partitioner::None => PartitionLabels::single(n_part),
        Partitioner::Geometric(tile) => {
            let MatrixSource::Laplacian(grid, _) = source else {
                bail!("--tile needs a generated Laplacian (--gen); use --part-size for files");
            };
            geometric_cuts(*grid, *tile)?
        }
        Partitioner::Graph { p, seed } => graph_partition_uniform(&a.pattern()?, *p, *seed)?,
    };
    let partition_ms = t0.elapsed().as_secs_f64() * 1e3;
    if let Some(path) = labels_out {
        labels
            .to_file(path)
            .with_context(|| format!("writing labels to {}", path.display()))?;
    }

    let t0 = Instant::now();
    let perm = labels_to_permutation(&labels);
    let reordered = a.reorder(&perm)?;
    let reorder_ms = t0.elapsed().as_secs_f64() * 1e3;

    let (decoupled, stats) = reordered.drop_inter(&labels)?;

    let perm_scalar = match &reordered {
        Mat::Csr(_) => perm,
        Mat::Bsr(_) => perm.expand_blocks(BLOCK_DIM),
    };

    Ok(Prepared {
        name: source.name(),
        reordered,
        decoupled,
        layout: labels.layout(),
        perm_scalar,
        stats,
        timings: Timings {
            partition: partition_ms,
            reorder: reorder_ms,
            ..Default::default()
        },
    })
}

fn decomposition_info(stats: &DecompositionStats, layout: &SubdomainLayout) -> DecompositionInfo {
    DecompositionInfo {
        p: layout.max_rows(),
        n_subdomains: layout.n_subdomains(),
        nnz_before: stats.nnz_before,
        nnz_after: stats.nnz_after,
        nnz_dropped: stats.dropped,
        dropped_fraction: stats.dropped_fraction,
    }
}

pub struct PipelineOutput {
    pub report: Report,
    pub residual_history: Vec<f64>,
}

/// `decompose` command: statistics and factor-schedule shape, or the
/// arithmetic count-only path for tiled Laplacians.
pub fn decompose(
    source: &MatrixSource,
    partitioner: &Partitioner,
    count_only: bool,
    labels_out: Option<PathBuf>,
) -> Result<PipelineOutput> {
    if count_only {
        let (MatrixSource::Laplacian(grid, layout), Partitioner::Geometric(tile)) =
            (source, partitioner)
        else {
            bail!("--count-only needs --gen with --tile (arithmetic path)");
        };
        let t0 = Instant::now();
        // everything here is grid arithmetic; no per-row array exists
        // unless a label file was explicitly requested
        let stats = laplacian_decomposition_stats(*grid, *tile, *layout)?;
        if let Some(path) = &labels_out {
            geometric_cuts(*grid, *tile)?.to_file(path)?;
        }
        let scalar_rows = grid.cells()?
            * match layout {
                Layout::Scalar => 1,
                Layout::Bsr3 => BLOCK_DIM,
            };
        let report = Report {
            schema_version: SCHEMA_VERSION,
            matrix: MatrixInfo {
                name: source.name(),
                nrows: scalar_rows,
                nnz: laplacian_nnz_scalar(*grid, *layout)?,
            },
            decomposition: Some(DecompositionInfo {
                p: tile.nx * tile.ny * tile.nz,
                n_subdomains: (grid.nx / tile.nx) * (grid.ny / tile.ny) * (grid.nz / tile.nz),
                nnz_before: stats.nnz_before,
                nnz_after: stats.nnz_after,
                nnz_dropped: stats.dropped,
                dropped_fraction: stats.dropped_fraction,
            }),
            schedule: None,
            solver: None,
            timings_ms: Timings {
                partition: t0.elapsed().as_secs_f64() * 1e3,
                ..Default::default()
            },
            bench: None,
        };
        return Ok(PipelineOutput {
            report,
            residual_history: Vec::new(),
        });
    }

    let prepared = prepare(source, partitioner, labels_out.as_deref())?;
    let mut timings = prepared.timings;

    let t0 = Instant::now();
    let factors = factor(&prepared.decoupled, &prepared.layout)?;
    timings.factor = t0.elapsed().as_secs_f64() * 1e3;

    let t0 = Instant::now();
    let (sched_l, sched_u) = factor_schedules(&factors, &prepared.layout)?;
    timings.schedule = t0.elapsed().as_secs_f64() * 1e3;

    let report = Report {
        schema_version: SCHEMA_VERSION,
        matrix: MatrixInfo {
            name: prepared.name,
            nrows: prepared.reordered.nrows_scalar(),
            nnz: prepared.reordered.nnz_scalar(),
        },
        decomposition: Some(decomposition_info(&prepared.stats, &prepared.layout)),
        schedule: Some(ScheduleInfo::new(sched_l.summary(), sched_u.summary())),
        solver: None,
        timings_ms: timings,
        bench: None,
    };
    Ok(PipelineOutput {
        report,
        residual_history: Vec::new(),
    })
}

enum Factors {
    Scalar(IluFactors),
    Block(IluFactorsBsr),
}

fn factor(decoupled: &Mat, layout: &SubdomainLayout) -> Result<Factors> {
    Ok(match decoupled {
        Mat::Csr(a) => Factors::Scalar(ilu0_decomposed(a, layout)?),
        Mat::Bsr(a) => Factors::Block(ilu0_bsr(a)?),
    })
}

fn factor_schedules(
    factors: &Factors,
    layout: &SubdomainLayout,
) -> Result<(LevelSchedule, LevelSchedule)> {
    Ok(match factors {
        Factors::Scalar(f) => (
            build_level_schedule(&level_assign_lower(&f.l, layout)?, layout),
            build_level_schedule(&level_assign_upper(&f.u, layout)?, layout),
        ),
        Factors::Block(f) => (
            build_level_schedule(&level_assign_lower_bsr(&f.l, layout)?, layout),
            build_level_schedule(&level_assign_upper_bsr(&f.u, layout)?, layout),
        ),
    })
}

fn build_rhs(cfg: &RunConfig, prepared: &Prepared) -> Result<Vec<f64>> {
    let n = prepared.reordered.nrows_scalar();
    Ok(match cfg.rhs {
        RhsMode::Ones => prepared.perm_scalar.permute(&vec![1.0; n]),
        RhsMode::Manufactured => {
            let x_star = prepared.perm_scalar.permute(&vec![1.0; n]);
            prepared.reordered.operator().apply(&x_star)
        }
        RhsMode::File => {
            let Some(path) = &cfg.rhs_file else {
                bail!("--rhs file needs --rhs-file PATH");
            };
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading rhs {}", path.display()))?;
            let values: Vec<f64> = text
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<_, _>>()
                .with_context(|| format!("parsing rhs {}", path.display()))?;
            if values.len() != n {
                bail!("rhs has {} values, matrix needs {n}", values.len());
            }
            prepared.perm_scalar.permute(&values)
        }
    })
}

fn breakdown_name(b: Breakdown) -> &'static str {
    match b {
        Breakdown::RhoVanished => "rho_vanished",
        Breakdown::OmegaVanished => "omega_vanished",
        Breakdown::VDotR0Vanished => "v_dot_r0_vanished",
        Breakdown::TDotTVanished => "t_dot_t_vanished",
    }
}

/// `solve` command: full pipeline run.
pub fn solve(cfg: &RunConfig) -> Result<PipelineOutput> {
    let prepared = prepare(&cfg.source, &cfg.partitioner, None)?;
    let mut timings = prepared.timings;
    let strategy = solve_strategy(cfg.strategy, cfg.workers, cfg.max_sub_rows);

    let mut schedule_info = None;
    let preconditioner: Box<dyn Preconditioner> = match cfg.precond {
        PrecondKind::None => Box::new(IdentityPreconditioner),
        PrecondKind::Ilu0 => {
            let t0 = Instant::now();
            let factors = factor(&prepared.decoupled, &prepared.layout)?;
            timings.factor = t0.elapsed().as_secs_f64() * 1e3;
            let t0 = Instant::now();
            let m = match factors {
                Factors::Scalar(f) => {
                    Ilu0Preconditioner::from_factors(f, &prepared.layout, strategy)?
                }
                Factors::Block(f) => {
                    Ilu0Preconditioner::from_factors_bsr(f, &prepared.layout, strategy)?
                }
            };
            timings.schedule = t0.elapsed().as_secs_f64() * 1e3;
            let (sl, su) = m.schedule_summaries();
            schedule_info = Some(ScheduleInfo::new(sl, su));
            Box::new(m)
        }
        PrecondKind::Ildu0Fused => {
            let t0 = Instant::now();
            let factors = factor(&prepared.decoupled, &prepared.layout)?;
            timings.factor = t0.elapsed().as_secs_f64() * 1e3;
            let t0 = Instant::now();
            let m = match factors {
                Factors::Scalar(f) => Ildu0Preconditioner::from_factors(
                    ildu0(&f)?,
                    &prepared.layout,
                    strategy,
                    true,
                )?,
                Factors::Block(f) => Ildu0Preconditioner::from_factors_bsr(
                    ildu0_bsr(&f)?,
                    &prepared.layout,
                    strategy,
                    true,
                )?,
            };
            timings.schedule = t0.elapsed().as_secs_f64() * 1e3;
            let (sl, su) = m.schedule_summaries();
            schedule_info = Some(ScheduleInfo::new(sl, su));
            Box::new(m)
        }
    };

    let b = build_rhs(cfg, &prepared)?;
    let solver_cfg = BicgstabConfig {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        absolute_tol: cfg.abs_tol,
        ..Default::default()
    };
    let t0 = Instant::now();
    let x0 = vec![0.0; b.len()];
    let (x_re, solve_report) =
        bicgstab(prepared.reordered.operator(), &b, &x0, preconditioner.as_ref(), &solver_cfg)?;
    timings.solve = t0.elapsed().as_secs_f64() * 1e3;
    let _x = prepared.perm_scalar.unpermute(&x_re);

    let report = Report {
        schema_version: SCHEMA_VERSION,
        matrix: MatrixInfo {
            name: prepared.name,
            nrows: prepared.reordered.nrows_scalar(),
            nnz: prepared.reordered.nnz_scalar(),
        },
        decomposition: Some(decomposition_info(&prepared.stats, &prepared.layout)),
        schedule: schedule_info,
        solver: Some(solver_info(cfg, &solve_report)),
        timings_ms: timings,
        bench: None,
    };
    Ok(PipelineOutput {
        report,
        residual_history: solve_report.residual_history,
    })
}

fn solver_info(cfg: &RunConfig, report: &SolveReport) -> SolverInfo {
    SolverInfo {
        strategy: cfg.strategy.name().to_string(),
        preconditioner: cfg.precond.name().to_string(),
        iterations: report.iterations,
        converged: report.converged,
        final_residual: report.final_residual(),
        breakdown_reason: report.breakdown_reason.map(|b| breakdown_name(b).to_string()),
    }
}

fn solve_strategy(
    kind: StrategyKind,
    workers: Option<usize>,
    max_sub_rows: Option<usize>,
) -> SolveStrategy {
    let mut s = SolveStrategy::new(kind);
    if let Some(w) = workers {
        s = s.with_workers(w);
    }
    if let Some(r) = max_sub_rows {
        s = s.with_scratch_budget(r);
    }
    s
}

/// `trisolve-bench` command: times one lower-solve apply per strategy
/// against the decomposed ILU0 lower factor, right-hand side of ones.
pub fn trisolve_bench(
    source: &MatrixSource,
    partitioner: &Partitioner,
    strategies: &[StrategyKind],
    reps: usize,
    workers: Option<usize>,
    max_sub_rows: Option<usize>,
) -> Result<PipelineOutput> {
    let prepared = prepare(source, partitioner, None)?;
    let mut timings = prepared.timings;

    let t0 = Instant::now();
    let factors = factor(&prepared.decoupled, &prepared.layout)?;
    timings.factor = t0.elapsed().as_secs_f64() * 1e3;
    let t0 = Instant::now();
    let (sched_l, _) = factor_schedules(&factors, &prepared.layout)?;
    timings.schedule = t0.elapsed().as_secs_f64() * 1e3;

    let b = vec![1.0; prepared.reordered.nrows_scalar()];
    let reference = match &factors {
        Factors::Scalar(f) => solve_reference(&TriFactor::unit_lower(&f.l), &b)?,
        Factors::Block(f) => solve_reference(&TriFactor::unit_lower_bsr(&f.l), &b)?,
    };

    let mut entries = Vec::new();
    let t_solve = Instant::now();
    for &kind in strategies {
        let ctx = SolveContext::new(solve_strategy(kind, workers, max_sub_rows))?;
        let mut times = Vec::with_capacity(reps);
        let mut max_dev = 0.0f64;
        for _ in 0..reps {
            let t0 = Instant::now();
            let x = match &factors {
                Factors::Scalar(f) => {
                    let tf = TriFactor::unit_lower(&f.l);
                    run_strategy(&ctx, kind, &tf, &b, &sched_l, &prepared.layout)?
                }
                Factors::Block(f) => {
                    let tf = TriFactor::unit_lower_bsr(&f.l);
                    run_strategy(&ctx, kind, &tf, &b, &sched_l, &prepared.layout)?
                }
            };
            times.push(t0.elapsed().as_secs_f64() * 1e3);
            max_dev = max_dev.max(rel_inf(&x, &reference));
        }
        let min = times.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        entries.push(BenchEntry {
            strategy: kind.name().to_string(),
            reps,
            min_ms: min,
            mean_ms: mean,
            max_rel_deviation: max_dev,
        });
    }
    timings.solve = t_solve.elapsed().as_secs_f64() * 1e3;

    let report = Report {
        schema_version: SCHEMA_VERSION,
        matrix: MatrixInfo {
            name: prepared.name,
            nrows: prepared.reordered.nrows_scalar(),
            nnz: prepared.reordered.nnz_scalar(),
        },
        decomposition: Some(decomposition_info(&prepared.stats, &prepared.layout)),
        schedule: None,
        solver: None,
        timings_ms: timings,
        bench: Some(entries),
    };
    Ok(PipelineOutput {
        report,
        residual_history: Vec::new(),
    })
}

fn run_strategy<C: ddsolve::trisolve::Coeff>(
    ctx: &SolveContext,
    kind: StrategyKind,
    f: &TriFactor<C>,
    b: &[f64],
    sched: &LevelSchedule,
    layout: &SubdomainLayout,
) -> Result<Vec<f64>> {
    Ok(match kind {
        StrategyKind::Reference => solve_reference(f, b)?,
        StrategyKind::SyncFree => solve_syncfree(ctx, f, b, layout)?,
        StrategyKind::LevelVc => solve_level_vc(ctx, f, b, sched)?,
        StrategyKind::LevelEc => solve_level_ec(ctx, f, b, sched)?,
    })
}

fn rel_inf(a: &[f64], b: &[f64]) -> f64 {
    let scale = a
        .iter()
        .chain(b.iter())
        .fold(0.0f64, |m, &v| m.max(v.abs()))
        .max(1e-30);
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}
