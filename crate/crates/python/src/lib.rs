//! Python bindings: the sparse containers plus the decomposition and
//! solve pipeline, mirroring the CLI's capabilities in-process.

use ddsolve::factor::{ildu0, ilu0_decomposed};
use ddsolve::krylov::{
    bicgstab, BicgstabConfig, IdentityPreconditioner, Ildu0Preconditioner, Ilu0Preconditioner,
};
use ddsolve::partition::{self, SubdomainLayout};
use ddsolve::reorder;
use ddsolve::sparsemat::{self, GridSpec, LinearOperator};
use ddsolve::trisolve::{SolveStrategy, StrategyKind};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn grid_from(dims: (usize, usize, usize)) -> PyResult<GridSpec> {
    GridSpec::new(dims.0, dims.1, dims.2).map_err(value_err)
}

/// Sparse matrix in compressed-sparse-row layout.
#[pyclass(name = "CsrMatrix", module = "ddsolve_py")]
struct PyCsrMatrix {
    inner: sparsemat::CsrMatrix,
}

#[pymethods]
impl PyCsrMatrix {
    /// n x n identity.
    #[staticmethod]
    fn identity(n: usize) -> Self {
        PyCsrMatrix {
            inner: sparsemat::CsrMatrix::identity(n),
        }
    }

    /// 7-point Laplacian on an (nx, ny, nz) grid, natural ordering.
    #[staticmethod]
    fn laplacian(nx: usize, ny: usize, nz: usize) -> PyResult<Self> {
        Ok(PyCsrMatrix {
            inner: sparsemat::laplacian_csr(grid_from((nx, ny, nz))?).map_err(value_err)?,
        })
    }

    /// Builds from (row, col, value) triplets; duplicates are summed.
    #[staticmethod]
    fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: Vec<(usize, usize, f64)>,
    ) -> PyResult<Self> {
        Ok(PyCsrMatrix {
            inner: sparsemat::CsrMatrix::from_triplets(nrows, ncols, &triplets)
                .map_err(value_err)?,
        })
    }

    /// Reads a coordinate-format Matrix Market file.
    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        Ok(PyCsrMatrix {
            inner: sparsemat::read_matrix_market(path)
                .map_err(|e| PyIOError::new_err(e.to_string()))?,
        })
    }

    fn to_file(&self, path: &str) -> PyResult<()> {
        sparsemat::write_matrix_market(&self.inner, path)
            .map_err(|e| PyIOError::new_err(e.to_string()))
    }

    #[getter]
    fn nrows(&self) -> usize {
        self.inner.nrows()
    }

    #[getter]
    fn ncols(&self) -> usize {
        self.inner.ncols()
    }

    #[getter]
    fn nnz(&self) -> usize {
        self.inner.nnz()
    }

    /// y = A x.
    fn spmv(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.spmv(&x).map_err(value_err)
    }

    /// Dense row-major copy (small matrices only).
    fn to_dense(&self) -> Vec<f64> {
        self.inner.to_dense()
    }

    fn __repr__(&self) -> String {
        format!(
            "CsrMatrix({}x{}, nnz={})",
            self.inner.nrows(),
            self.inner.ncols(),
            self.inner.nnz()
        )
    }
}

/// Sparse matrix in 3x3 block-sparse-row layout.
#[pyclass(name = "BsrMatrix", module = "ddsolve_py")]
struct PyBsrMatrix {
    inner: sparsemat::BsrMatrix,
}

#[pymethods]
impl PyBsrMatrix {
    /// Block Laplacian: each stencil entry e becomes the block e*I3.
    #[staticmethod]
    fn laplacian(nx: usize, ny: usize, nz: usize) -> PyResult<Self> {
        Ok(PyBsrMatrix {
            inner: sparsemat::laplacian_bsr(grid_from((nx, ny, nz))?).map_err(value_err)?,
        })
    }

    #[getter]
    fn n_block_rows(&self) -> usize {
        self.inner.n_block_rows()
    }

    #[getter]
    fn nnz_scalar(&self) -> usize {
        self.inner.nnz_scalar()
    }

    fn spmv(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.spmv(&x).map_err(value_err)
    }

    /// Scalar-equivalent CSR expansion.
    fn to_csr(&self) -> PyCsrMatrix {
        PyCsrMatrix {
            inner: self.inner.to_csr(),
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "BsrMatrix({} block rows, scalar nnz={})",
            self.inner.n_block_rows(),
            self.inner.nnz_scalar()
        )
    }
}

/// Per-row subdomain labels.
#[pyclass(name = "PartitionLabels", module = "ddsolve_py")]
struct PyPartitionLabels {
    inner: partition::PartitionLabels,
}

#[pymethods]
impl PyPartitionLabels {
    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels().to_vec()
    }

    #[getter]
    fn n_subdomains(&self) -> usize {
        self.inner.n_subdomains()
    }

    #[getter]
    fn rows_per_subdomain(&self) -> usize {
        self.inner.rows_per_subdomain()
    }

    fn __repr__(&self) -> String {
        format!(
            "PartitionLabels({} rows, {} subdomains of {})",
            self.inner.n_rows(),
            self.inner.n_subdomains(),
            self.inner.rows_per_subdomain()
        )
    }
}

/// Paired new-to-old / old-to-new row maps.
#[pyclass(name = "Permutation", module = "ddsolve_py")]
struct PyPermutation {
    inner: partition::Permutation,
}

#[pymethods]
impl PyPermutation {
    #[getter]
    fn new_to_old(&self) -> Vec<usize> {
        self.inner.new_to_old().to_vec()
    }

    #[getter]
    fn old_to_new(&self) -> Vec<usize> {
        self.inner.old_to_new().to_vec()
    }

    /// Gathers a vector into the new (reordered) order.
    fn permute(&self, v: Vec<f64>) -> Vec<f64> {
        self.inner.permute(&v)
    }

    /// Scatters a reordered vector back to the original order.
    fn unpermute(&self, v: Vec<f64>) -> Vec<f64> {
        self.inner.unpermute(&v)
    }
}

/// Labels grid vertices by uniform geometric tiles.
#[pyfunction]
fn geometric_cuts(
    grid: (usize, usize, usize),
    tile: (usize, usize, usize),
) -> PyResult<PyPartitionLabels> {
    Ok(PyPartitionLabels {
        inner: partition::geometric_cuts(grid_from(grid)?, grid_from(tile)?)
            .map_err(value_err)?,
    })
}

/// Uniform graph-growing partition of a general matrix.
#[pyfunction]
#[pyo3(signature = (a, p, seed = 0))]
fn graph_partition_uniform(a: &PyCsrMatrix, p: usize, seed: u64) -> PyResult<PyPartitionLabels> {
    Ok(PyPartitionLabels {
        inner: partition::graph_partition_uniform(&a.inner, p, seed).map_err(value_err)?,
    })
}

/// Stable grouping of rows by label.
#[pyfunction]
fn labels_to_permutation(labels: &PyPartitionLabels) -> PyPermutation {
    PyPermutation {
        inner: partition::labels_to_permutation(&labels.inner),
    }
}

/// Symmetric row/column reordering.
#[pyfunction]
fn reorder_csr(a: &PyCsrMatrix, perm: &PyPermutation) -> PyResult<PyCsrMatrix> {
    Ok(PyCsrMatrix {
        inner: reorder::reorder_csr(&a.inner, &perm.inner).map_err(value_err)?,
    })
}

/// Removes inter-subdomain couplings; returns (matrix, stats dict).
#[pyfunction]
fn drop_inter_partition<'py>(
    py: Python<'py>,
    a: &PyCsrMatrix,
    labels: &PyPartitionLabels,
) -> PyResult<(PyCsrMatrix, Bound<'py, PyDict>)> {
    let (kept, stats) =
        reorder::drop_inter_partition_csr(&a.inner, &labels.inner).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("nnz_before", stats.nnz_before)?;
    d.set_item("nnz_after", stats.nnz_after)?;
    d.set_item("dropped", stats.dropped)?;
    d.set_item("dropped_fraction", stats.dropped_fraction)?;
    Ok((PyCsrMatrix { inner: kept }, d))
}

/// End-to-end preconditioned BiCGSTAB.
///
/// With `labels`, the system is reordered, the preconditioner is built
/// on the decoupled matrix, and the solution is mapped back to the
/// original row order. `precond` is "none", "ilu0" or "ildu0_fused";
/// `strategy` is "reference", "syncfree", "level_vc" or "level_ec".
#[pyfunction]
#[pyo3(signature = (
    a, b, labels = None, precond = "ilu0", strategy = "level_vc", workers = 0,
    tol = 1e-8, max_iter = 1000
))]
#[allow(clippy::too_many_arguments)]
fn solve<'py>(
    py: Python<'py>,
    a: &PyCsrMatrix,
    b: Vec<f64>,
    labels: Option<&PyPartitionLabels>,
    precond: &str,
    strategy: &str,
    workers: usize,
    tol: f64,
    max_iter: usize,
) -> PyResult<(Vec<f64>, Bound<'py, PyDict>)> {
    let kind: StrategyKind = strategy.parse().map_err(value_err)?;
    let mut strat = SolveStrategy::new(kind);
    if workers > 0 {
        strat = strat.with_workers(workers);
    }

    let (system, b_re, perm, layout) = match labels {
        Some(l) => {
            let perm = partition::labels_to_permutation(&l.inner);
            let reordered = reorder::reorder_csr(&a.inner, &perm).map_err(value_err)?;
            let b_re = perm.permute(&b);
            (reordered, b_re, Some(perm), l.inner.layout())
        }
        None => (
            a.inner.clone(),
            b,
            None,
            SubdomainLayout::single(a.inner.nrows()),
        ),
    };

    let decoupled = match labels {
        Some(l) => {
            let (kept, _) =
                reorder::drop_inter_partition_csr(&system, &l.inner).map_err(value_err)?;
            kept
        }
        None => system.clone(),
    };

    let m: Box<dyn ddsolve::krylov::Preconditioner> = match precond {
        "none" => Box::new(IdentityPreconditioner),
        "ilu0" => Box::new(
            Ilu0Preconditioner::from_csr(&decoupled, &layout, strat).map_err(value_err)?,
        ),
        "ildu0_fused" => {
            let f = ildu0(&ilu0_decomposed(&decoupled, &layout).map_err(value_err)?)
                .map_err(value_err)?;
            Box::new(
                Ildu0Preconditioner::from_factors(f, &layout, strat, true).map_err(value_err)?,
            )
        }
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown preconditioner {other:?}"
            )))
        }
    };

    let cfg = BicgstabConfig {
        tol,
        max_iter,
        ..Default::default()
    };
    let x0 = vec![0.0; system.nrows()];
    let (x_re, report) =
        bicgstab(&system as &dyn LinearOperator, &b_re, &x0, m.as_ref(), &cfg)
            .map_err(value_err)?;
    let x = match &perm {
        Some(p) => p.unpermute(&x_re),
        None => x_re,
    };

    let d = PyDict::new(py);
    d.set_item("iterations", report.iterations)?;
    d.set_item("converged", report.converged)?;
    d.set_item("final_residual", report.final_residual())?;
    d.set_item("residual_history", report.residual_history.clone())?;
    Ok((x, d))
}

/// Scalar nonzero count of a generated Laplacian without building it.
#[pyfunction]
#[pyo3(signature = (grid, bsr3 = false))]
fn laplacian_nnz(grid: (usize, usize, usize), bsr3: bool) -> PyResult<u64> {
    let layout = if bsr3 {
        sparsemat::Layout::Bsr3
    } else {
        sparsemat::Layout::Scalar
    };
    sparsemat::laplacian_nnz_scalar(grid_from(grid)?, layout).map_err(value_err)
}

/// Decomposition statistics for a tiled Laplacian, computed
/// arithmetically.
#[pyfunction]
#[pyo3(signature = (grid, tile, bsr3 = false))]
fn laplacian_decomposition_stats<'py>(
    py: Python<'py>,
    grid: (usize, usize, usize),
    tile: (usize, usize, usize),
    bsr3: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let layout = if bsr3 {
        sparsemat::Layout::Bsr3
    } else {
        sparsemat::Layout::Scalar
    };
    let stats = reorder::laplacian_decomposition_stats(grid_from(grid)?, grid_from(tile)?, layout)
        .map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("nnz_before", stats.nnz_before)?;
    d.set_item("nnz_after", stats.nnz_after)?;
    d.set_item("dropped", stats.dropped)?;
    d.set_item("dropped_fraction", stats.dropped_fraction)?;
    Ok(d)
}

#[pymodule]
fn ddsolve_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCsrMatrix>()?;
    m.add_class::<PyBsrMatrix>()?;
    m.add_class::<PyPartitionLabels>()?;
    m.add_class::<PyPermutation>()?;
    m.add_function(wrap_pyfunction!(geometric_cuts, m)?)?;
    m.add_function(wrap_pyfunction!(graph_partition_uniform, m)?)?;
    m.add_function(wrap_pyfunction!(labels_to_permutation, m)?)?;
    m.add_function(wrap_pyfunction!(reorder_csr, m)?)?;
    m.add_function(wrap_pyfunction!(drop_inter_partition, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(laplacian_nnz, m)?)?;
    m.add_function(wrap_pyfunction!(laplacian_decomposition_stats, m)?)?;
    Ok(())
}
