#!/usr/bin/env python3
"""Smoke test for the ddsolve_py extension module.

Builds nothing itself: it expects `cargo build -p ddsolve-python`
(or --release) to have produced target/{debug,release}/libddsolve_py.so,
copies the library next to a temp dir under the importable name, and
runs a miniature end-to-end pipeline.
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def import_module():
    candidates = [
        REPO / "target" / "release" / "libddsolve_py.so",
        REPO / "target" / "debug" / "libddsolve_py.so",
        REPO / "target" / "release" / "libddsolve_py.dylib",
        REPO / "target" / "debug" / "libddsolve_py.dylib",
    ]
    built = [p for p in candidates if p.exists()]
    if not built:
        sys.exit(
            "ddsolve_py is not built; run `cargo build -p ddsolve-python` first"
        )
    stage = Path(tempfile.mkdtemp(prefix="ddsolve_py_"))
    target = stage / ("ddsolve_py" + built[0].suffix.replace(".dylib", ".so"))
    shutil.copy2(built[0], target)
    sys.path.insert(0, str(stage))
    import ddsolve_py

    return ddsolve_py


def main():
    dd = import_module()

    # two-cell chain: [[6,-1],[-1,6]] @ [1,1] = [5,5]
    a = dd.CsrMatrix.laplacian(2, 1, 1)
    assert a.nrows == 2 and a.nnz == 4
    assert a.spmv([1.0, 1.0]) == [5.0, 5.0]
    assert a.to_dense() == [6.0, -1.0, -1.0, 6.0]
    print("ok: laplacian generation and spmv")

    # count-only statistics match the evaluation-scale reference
    assert dd.laplacian_nnz((128, 128, 128), bsr3=True) == 131_235_840
    stats = dd.laplacian_decomposition_stats((128, 128, 128), (16, 16, 8), bsr3=True)
    assert stats["nnz_after"] == 122_683_392
    assert abs(stats["dropped_fraction"] * 100 - 6.52) < 0.005
    print("ok: count-only decomposition statistics")

    # geometric partition of an 8^3 grid into 4x4x4 tiles
    n = 8 * 8 * 8
    a = dd.CsrMatrix.laplacian(8, 8, 8)
    labels = dd.geometric_cuts((8, 8, 8), (4, 4, 4))
    assert labels.n_subdomains == 8
    assert labels.rows_per_subdomain == 64
    perm = dd.labels_to_permutation(labels)
    reordered = dd.reorder_csr(a, perm)
    decoupled, stats = dd.drop_inter_partition(reordered, labels)
    # one cut plane per axis, 64 neighbor pairs each, both directions
    assert stats["dropped"] == 2 * 3 * 64
    assert stats["nnz_before"] == a.nnz
    print("ok: partition, reorder, decouple")

    # manufactured solution through the fused ILDU0 solver
    b = a.spmv([1.0] * n)
    x, report = dd.solve(
        a, b, labels=labels, precond="ildu0_fused", strategy="level_vc", workers=2
    )
    assert report["converged"], report
    assert report["iterations"] >= 1
    assert len(report["residual_history"]) == report["iterations"] + 1
    err = max(abs(v - 1.0) for v in x)
    assert err < 1e-6, f"max error {err}"
    print(f"ok: solve converged in {report['iterations']} iterations, max error {err:.2e}")

    # identity-preconditioned run on the same system agrees
    x2, report2 = dd.solve(a, b, precond="none", strategy="reference", tol=1e-10)
    assert report2["converged"]
    assert max(abs(u - v) for u, v in zip(x, x2)) < 1e-5
    print("ok: unpreconditioned cross-check")

    # graph partitioning of a path stays contiguous
    tri = dd.CsrMatrix.from_triplets(
        8,
        8,
        [(i, i, 2.0) for i in range(8)]
        + [(i, i + 1, -1.0) for i in range(7)]
        + [(i + 1, i, -1.0) for i in range(7)],
    )
    glabels = dd.graph_partition_uniform(tri, 2, seed=0)
    assert glabels.labels == [0, 0, 1, 1, 2, 2, 3, 3]
    print("ok: graph growing")

    # Matrix Market round trip
    with tempfile.TemporaryDirectory() as tmp:
        path = str(Path(tmp) / "m.mtx")
        a.to_file(path)
        again = dd.CsrMatrix.from_file(path)
        assert again.nnz == a.nnz
        probe = [math.sin(0.1 * i) for i in range(n)]
        assert again.spmv(probe) == a.spmv(probe)
    print("ok: matrix market round trip")

    # BSR path triplicates the scalar stencil
    ab = dd.BsrMatrix.laplacian(4, 4, 4)
    assert ab.nnz_scalar == 9 * dd.laplacian_nnz((4, 4, 4))
    expanded = ab.to_csr()
    ones = [1.0] * (3 * 64)
    assert expanded.spmv(ones) == ab.spmv(ones)
    print("ok: bsr layout")

    print("SMOKE TEST PASSED")


if __name__ == "__main__":
    main()
