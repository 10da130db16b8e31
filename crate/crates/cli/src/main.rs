//! Command-line driver: matrix generation/ingestion, decomposition,
//! end-to-end solves and triangular-solve benchmarking, with
//! machine-readable JSON reports.

mod pipeline;
mod report;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ddsolve::sparsemat::{self, GridSpec, Layout};
use ddsolve::trisolve::StrategyKind;
use pipeline::{MatrixSource, Partitioner, PrecondKind, RhsMode, RunConfig};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "ddsolve",
    about = "Fine-grained domain decomposition for sparse triangular solves and BiCGSTAB",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a 7-point Laplacian and write it as Matrix Market.
    Gen(GenArgs),
    /// Partition, reorder and decouple a matrix; report statistics.
    Decompose(DecomposeArgs),
    /// Run the full decomposition + BiCGSTAB pipeline.
    Solve(SolveArgs),
    /// Time one triangular-solve apply per strategy.
    TrisolveBench(BenchArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Matrix Market file to read (scalar CSR).
    #[arg(long, value_name = "PATH")]
    input: Option<PathBuf>,
    /// Generate a Laplacian on an NX,NY,NZ grid instead of reading.
    #[arg(long, value_name = "NX,NY,NZ", value_parser = parse_grid)]
    gen: Option<GridSpec>,
    /// Storage layout for generated matrices.
    #[arg(long, default_value = "scalar", value_parser = parse_layout)]
    layout: Layout,
}

impl InputArgs {
    fn source(&self) -> Result<MatrixSource> {
        match (&self.input, &self.gen) {
            (Some(path), None) => {
                if self.layout == Layout::Bsr3 {
                    bail!("--layout bsr3 requires --gen (Matrix Market input is scalar)");
                }
                Ok(MatrixSource::File(path.clone()))
            }
            (None, Some(grid)) => Ok(MatrixSource::Laplacian(*grid, self.layout)),
            (Some(_), Some(_)) => bail!("--input and --gen are mutually exclusive"),
            (None, None) => bail!("one of --input or --gen is required"),
        }
    }
}

#[derive(Args)]
struct PartitionArgs {
    /// Geometric tile dims TX,TY,TZ (generated Laplacians only).
    #[arg(long, value_name = "TX,TY,TZ", value_parser = parse_grid)]
    tile: Option<GridSpec>,
    /// Uniform part size for graph growing (general matrices).
    #[arg(long, value_name = "P", env = "DDSOLVE_PART_SIZE")]
    part_size: Option<usize>,
    /// Seed for graph-growing tie-breaks and generated right-hand sides.
    #[arg(long, default_value_t = 0, env = "DDSOLVE_SEED")]
    seed: u64,
}

impl PartitionArgs {
    fn partitioner(&self) -> Result<Partitioner> {
        match (&self.tile, self.part_size) {
            (Some(t), None) => Ok(Partitioner::Geometric(*t)),
            (None, Some(p)) => Ok(Partitioner::Graph { p, seed: self.seed }),
            (None, None) => Ok(Partitioner::None),
            (Some(_), Some(_)) => bail!("--tile and --part-size are mutually exclusive"),
        }
    }
}

#[derive(Args)]
struct GenArgs {
    /// Grid dims NX,NY,NZ.
    #[arg(long, value_name = "NX,NY,NZ", value_parser = parse_grid)]
    gen: GridSpec,
    #[arg(long, default_value = "scalar", value_parser = parse_layout)]
    layout: Layout,
    /// Output Matrix Market path (BSR is expanded to scalar entries).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Print the scalar nonzero count without building the matrix.
    #[arg(long)]
    count_only: bool,
}

#[derive(Args)]
struct DecomposeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    partition: PartitionArgs,
    /// Compute statistics arithmetically without building the matrix
    /// (generated Laplacians with geometric tiles only).
    #[arg(long)]
    count_only: bool,
    /// JSON report path.
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
    /// Write partition labels, one per line.
    #[arg(long, value_name = "PATH")]
    labels_out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    partition: PartitionArgs,
    /// Preconditioner: none, ilu0 or ildu0-fused.
    #[arg(long, default_value = "ilu0", value_parser = parse_precond, env = "DDSOLVE_PRECOND")]
    precond: PrecondKind,
    /// Triangular-solve strategy: reference, syncfree, level_vc, level_ec.
    #[arg(long, env = "DDSOLVE_STRATEGY")]
    strategy: Option<StrategyKind>,
    /// Worker pool size (defaults to available cores).
    #[arg(long, env = "DDSOLVE_WORKERS")]
    workers: Option<usize>,
    /// Convergence tolerance (relative to the initial residual).
    #[arg(long, env = "DDSOLVE_TOL")]
    tol: Option<f64>,
    /// Treat --tol as an absolute residual threshold.
    #[arg(long)]
    abs_tol: bool,
    #[arg(long, env = "DDSOLVE_MAX_ITER")]
    max_iter: Option<usize>,
    /// Scratch budget in scalar slots per subdomain.
    #[arg(long, env = "DDSOLVE_MAX_SUB_ROWS")]
    max_sub_rows: Option<usize>,
    /// Right-hand side: ones, manufactured (b = A*1) or file.
    #[arg(long, default_value = "manufactured", value_parser = parse_rhs)]
    rhs: RhsMode,
    /// Right-hand side file (one value per line) for --rhs file.
    #[arg(long, value_name = "PATH")]
    rhs_file: Option<PathBuf>,
    /// JSON report path.
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
    /// Residual-history CSV path (iteration,residual).
    #[arg(long, value_name = "PATH")]
    residuals: Option<PathBuf>,
    /// TOML config file; command-line flags win over its values.
    #[arg(long, value_name = "PATH", env = "DDSOLVE_CONFIG")]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    partition: PartitionArgs,
    /// Comma-separated strategy list.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "reference,syncfree,level_vc,level_ec"
    )]
    strategies: Vec<StrategyKind>,
    /// Timed repetitions per strategy.
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, env = "DDSOLVE_WORKERS")]
    workers: Option<usize>,
    #[arg(long, env = "DDSOLVE_MAX_SUB_ROWS")]
    max_sub_rows: Option<usize>,
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
}

fn parse_grid(s: &str) -> Result<GridSpec, String> {
    let dims: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("invalid dimension list {s:?}: {e}"))?;
    if dims.len() != 3 {
        return Err(format!("expected three comma-separated dims, got {s:?}"));
    }
    GridSpec::new(dims[0], dims[1], dims[2]).map_err(|e| e.to_string())
}

fn parse_layout(s: &str) -> Result<Layout, String> {
    match s.to_ascii_lowercase().as_str() {
        "scalar" | "csr" => Ok(Layout::Scalar),
        "bsr3" | "bsr" => Ok(Layout::Bsr3),
        other => Err(format!("unknown layout {other:?} (expected scalar or bsr3)")),
    }
}

fn parse_precond(s: &str) -> Result<PrecondKind, String> {
    match s.replace('-', "_").to_ascii_lowercase().as_str() {
        "none" => Ok(PrecondKind::None),
        "ilu0" => Ok(PrecondKind::Ilu0),
        "ildu0_fused" => Ok(PrecondKind::Ildu0Fused),
        other => Err(format!(
            "unknown preconditioner {other:?} (expected none, ilu0 or ildu0-fused)"
        )),
    }
}

fn parse_rhs(s: &str) -> Result<RhsMode, String> {
    match s.to_ascii_lowercase().as_str() {
        "ones" => Ok(RhsMode::Ones),
        "manufactured" => Ok(RhsMode::Manufactured),
        "file" => Ok(RhsMode::File),
        other => Err(format!(
            "unknown rhs mode {other:?} (expected ones, manufactured or file)"
        )),
    }
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    if args.count_only {
        let nnz = sparsemat::laplacian_nnz_scalar(args.gen, args.layout)?;
        println!("{nnz}");
        return Ok(());
    }
    let Some(out) = args.out else {
        bail!("--out is required unless --count-only is set");
    };
    let a = match args.layout {
        Layout::Scalar => sparsemat::laplacian_csr(args.gen)?,
        Layout::Bsr3 => sparsemat::laplacian_bsr(args.gen)?.to_csr(),
    };
    sparsemat::write_matrix_market(&a, &out)
        .with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {} ({} rows, {} nonzeros)", out.display(), a.nrows(), a.nnz());
    Ok(())
}

fn cmd_decompose(args: DecomposeArgs) -> Result<()> {
    let source = args.input.source()?;
    let partitioner = args.partition.partitioner()?;
    let out = pipeline::decompose(&source, &partitioner, args.count_only, args.labels_out)?;
    let stats = out
        .report
        .decomposition
        .as_ref()
        .expect("decompose always reports statistics");
    println!(
        "nonzeros {} -> {} (dropped {}, {:.2}%)",
        stats.nnz_before,
        stats.nnz_after,
        stats.nnz_dropped,
        stats.dropped_fraction * 100.0
    );
    report::write_json(&out.report, args.report.as_deref())?;
    Ok(())
}

fn cmd_solve(args: SolveArgs) -> Result<()> {
    let file_cfg = match &args.config {
        Some(path) => pipeline::FileConfig::load(path)?,
        None => pipeline::FileConfig::default(),
    };
    let cfg = RunConfig {
        source: args.input.source()?,
        partitioner: args.partition.partitioner()?,
        precond: args.precond,
        strategy: args
            .strategy
            .or(file_cfg.strategy()?)
            .unwrap_or(StrategyKind::LevelVc),
        workers: args.workers.or(file_cfg.workers),
        tol: args.tol.or(file_cfg.tol).unwrap_or(1e-8),
        abs_tol: args.abs_tol,
        max_iter: args.max_iter.or(file_cfg.max_iter).unwrap_or(1000),
        max_sub_rows: args.max_sub_rows.or(file_cfg.max_subdomain_rows),
        rhs: args.rhs,
        rhs_file: args.rhs_file,
    };
    let out = pipeline::solve(&cfg)?;

    let solver = out.report.solver.as_ref().expect("solve reports solver info");
    println!(
        "{}: {} iterations, final residual {:.3e}",
        if solver.converged { "converged" } else { "NOT CONVERGED" },
        solver.iterations,
        solver.final_residual
    );
    report::write_json(&out.report, args.report.as_deref())?;
    if let Some(path) = &args.residuals {
        report::write_residual_csv(&out.residual_history, path)?;
    }
    if !solver.converged {
        bail!("solver did not converge within the iteration budget");
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    if args.reps == 0 {
        bail!("--reps must be >= 1");
    }
    let source = args.input.source()?;
    let partitioner = args.partition.partitioner()?;
    let out = pipeline::trisolve_bench(
        &source,
        &partitioner,
        &args.strategies,
        args.reps,
        args.workers,
        args.max_sub_rows,
    )?;
    for entry in out.report.bench.as_ref().expect("bench entries") {
        println!(
            "{:<10} min {:.3} ms  mean {:.3} ms  max deviation {:.2e}",
            entry.strategy, entry.min_ms, entry.mean_ms, entry.max_rel_deviation
        );
    }
    report::write_json(&out.report, args.report.as_deref())?;
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Decompose(args) => cmd_decompose(args),
        Command::Solve(args) => cmd_solve(args),
        Command::TrisolveBench(args) => cmd_bench(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
