//! End-to-end checks of the binary: flags, file formats, report
//! schema, exit codes and run-to-run determinism.

use std::path::Path;
use std::process::{Command, Output};

fn ddsolve(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddsolve"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_writes_a_matrix_market_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("chain.mtx");
    let run = ddsolve(&["gen", "--gen", "2,1,1", "--out", out.to_str().unwrap()]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));

    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "%%MatrixMarket matrix coordinate real general"
    );
    assert_eq!(lines.next().unwrap(), "2 2 4");
    assert_eq!(lines.count(), 4);

    // round trip through the library matches the in-memory generator
    let read = ddsolve::sparsemat::read_matrix_market(&out).unwrap();
    let gen = ddsolve::sparsemat::laplacian_csr(
        ddsolve::sparsemat::GridSpec::new(2, 1, 1).unwrap(),
    )
    .unwrap();
    assert_eq!(read, gen);
}

#[test]
fn gen_count_only_reports_reference_scale_without_building() {
    let run = ddsolve(&["gen", "--gen", "128,128,128", "--layout", "bsr3", "--count-only"]);
    assert!(run.status.success());
    assert_eq!(stdout(&run).trim(), "131235840");
}

#[test]
fn decompose_count_only_reproduces_reference_fractions() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("l1.json");
    let run = ddsolve(&[
        "decompose",
        "--gen",
        "128,128,128",
        "--layout",
        "bsr3",
        "--tile",
        "16,16,8",
        "--count-only",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(run.status.success());
    let v = json(&report);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["decomposition"]["nnz_before"], 131_235_840u64);
    assert_eq!(v["decomposition"]["nnz_after"], 122_683_392u64);
    assert_eq!(v["decomposition"]["nnz_dropped"], 8_552_448u64);
    let frac = v["decomposition"]["dropped_fraction"].as_f64().unwrap();
    assert!((frac * 100.0 - 6.52).abs() < 0.005);
    assert_eq!(v["decomposition"]["P"], 2048);
    assert_eq!(v["decomposition"]["n_subdomains"], 1024);
}

#[test]
fn decompose_single_tile_drops_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let run = ddsolve(&[
        "decompose",
        "--gen",
        "4,4,4",
        "--tile",
        "4,4,4",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(run.status.success());
    let v = json(&report);
    assert_eq!(v["decomposition"]["nnz_dropped"], 0);
    assert!(v["schedule"]["max_levels"].as_u64().unwrap() >= 1);
}

#[test]
fn decompose_tridiagonal_with_graph_partitioner() {
    // tridiagonal n=8, parts of 2: 6 of 22 nonzeros dropped (27.27%)
    let dir = tempfile::tempdir().unwrap();
    let mtx = dir.path().join("tri.mtx");
    let mut triplets = Vec::new();
    for i in 0..8usize {
        triplets.push((i, i, 2.0));
        if i + 1 < 8 {
            triplets.push((i, i + 1, -1.0));
            triplets.push((i + 1, i, -1.0));
        }
    }
    let a = ddsolve::sparsemat::CsrMatrix::from_triplets(8, 8, &triplets).unwrap();
    ddsolve::sparsemat::write_matrix_market(&a, &mtx).unwrap();

    let report = dir.path().join("r.json");
    let labels = dir.path().join("labels.txt");
    let run = ddsolve(&[
        "decompose",
        "--input",
        mtx.to_str().unwrap(),
        "--part-size",
        "2",
        "--report",
        report.to_str().unwrap(),
        "--labels-out",
        labels.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let v = json(&report);
    assert_eq!(v["decomposition"]["nnz_dropped"], 6);
    let frac = v["decomposition"]["dropped_fraction"].as_f64().unwrap();
    assert!((frac - 6.0 / 22.0).abs() < 1e-12);

    let label_text = std::fs::read_to_string(&labels).unwrap();
    assert_eq!(label_text.lines().count(), 8);
}

#[test]
fn solve_identity_converges_in_one_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let mtx = dir.path().join("eye.mtx");
    ddsolve::sparsemat::write_matrix_market(&ddsolve::sparsemat::CsrMatrix::identity(5), &mtx)
        .unwrap();
    let report = dir.path().join("r.json");
    let run = ddsolve(&[
        "solve",
        "--input",
        mtx.to_str().unwrap(),
        "--precond",
        "none",
        "--strategy",
        "reference",
        "--rhs",
        "ones",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let v = json(&report);
    assert_eq!(v["solver"]["iterations"], 1);
    assert_eq!(v["solver"]["converged"], true);
}

#[test]
fn solve_report_schema_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let run_once = |tag: &str| -> (serde_json::Value, Vec<u8>) {
        let report = dir.path().join(format!("r{tag}.json"));
        let csv = dir.path().join(format!("res{tag}.csv"));
        let run = ddsolve(&[
            "solve",
            "--gen",
            "16,16,16",
            "--tile",
            "8,8,4",
            "--precond",
            "ilu0",
            "--strategy",
            "level_vc",
            "--workers",
            "3",
            "--tol",
            "1e-8",
            "--report",
            report.to_str().unwrap(),
            "--residuals",
            csv.to_str().unwrap(),
        ]);
        assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
        (json(&report), std::fs::read(&csv).unwrap())
    };
    let (v1, csv1) = run_once("a");
    let (v2, csv2) = run_once("b");

    // schema fields present
    for key in ["schema_version", "matrix", "decomposition", "schedule", "solver", "timings_ms"] {
        assert!(v1.get(key).is_some(), "missing {key}");
    }
    for key in ["partition", "reorder", "factor", "schedule", "solve"] {
        assert!(v1["timings_ms"].get(key).is_some(), "missing timing {key}");
    }
    assert_eq!(v1["solver"]["converged"], true);
    assert_eq!(v1["solver"]["strategy"], "level_vc");
    assert_eq!(v1["matrix"]["nrows"], 4096);

    // vc runs are bitwise reproducible: identical CSV bytes
    assert_eq!(csv1, csv2);
    assert_eq!(v1["solver"]["final_residual"], v2["solver"]["final_residual"]);
    let head = String::from_utf8_lossy(&csv1);
    assert!(head.starts_with("iteration,residual\n0,"));
}

#[test]
fn bench_reports_one_entry_per_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("bench.json");
    let run = ddsolve(&[
        "trisolve-bench",
        "--gen",
        "12,12,12",
        "--tile",
        "6,6,6",
        "--strategies",
        "reference,syncfree,level_vc,level_ec",
        "--reps",
        "3",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let v = json(&report);
    let bench = v["bench"].as_array().unwrap();
    assert_eq!(bench.len(), 4);
    let by_name: std::collections::HashMap<&str, &serde_json::Value> = bench
        .iter()
        .map(|e| (e["strategy"].as_str().unwrap(), e))
        .collect();
    assert_eq!(by_name["reference"]["max_rel_deviation"], 0.0);
    for (_, entry) in by_name {
        assert!(entry["max_rel_deviation"].as_f64().unwrap() <= 1e-10);
        assert_eq!(entry["reps"], 3);
        assert!(entry["min_ms"].as_f64().unwrap() >= 0.0);
    }
}

#[test]
fn solve_graph_partition_fused_and_rhs_file() {
    let dir = tempfile::tempdir().unwrap();
    let mtx = dir.path().join("lap.mtx");
    let a = ddsolve::sparsemat::laplacian_csr(
        ddsolve::sparsemat::GridSpec::new(6, 6, 6).unwrap(),
    )
    .unwrap();
    ddsolve::sparsemat::write_matrix_market(&a, &mtx).unwrap();

    // rhs = A * 1 written out one value per line
    let b = a.spmv(&vec![1.0; 216]).unwrap();
    let rhs = dir.path().join("b.txt");
    std::fs::write(
        &rhs,
        b.iter().map(|v| format!("{v}\n")).collect::<String>(),
    )
    .unwrap();

    let report = dir.path().join("r.json");
    let run = ddsolve(&[
        "solve",
        "--input",
        mtx.to_str().unwrap(),
        "--part-size",
        "27",
        "--precond",
        "ildu0-fused",
        "--strategy",
        "level_ec",
        "--rhs",
        "file",
        "--rhs-file",
        rhs.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let v = json(&report);
    assert_eq!(v["solver"]["converged"], true);
    assert_eq!(v["solver"]["preconditioner"], "ildu0_fused");
    assert_eq!(v["decomposition"]["n_subdomains"], 8);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("solver.toml");
    std::fs::write(&cfg, "strategy = \"reference\"\ntol = 1e-6\nmax_iter = 7\n").unwrap();
    let report = dir.path().join("r.json");
    // --max-iter on the command line overrides the config's 7
    let run = ddsolve(&[
        "solve",
        "--gen",
        "8,8,8",
        "--precond",
        "ilu0",
        "--config",
        cfg.to_str().unwrap(),
        "--max-iter",
        "400",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let v = json(&report);
    assert_eq!(v["solver"]["strategy"], "reference");
    assert_eq!(v["solver"]["converged"], true);
}

#[test]
fn errors_exit_nonzero_with_one_line_diagnostic() {
    let run = ddsolve(&["solve", "--input", "/nonexistent/m.mtx"]);
    assert!(!run.status.success());
    let err = String::from_utf8_lossy(&run.stderr);
    assert!(err.starts_with("error:"), "stderr was {err:?}");

    // malformed flag combination
    let run = ddsolve(&["decompose", "--gen", "4,4,4", "--tile", "3,3,3"]);
    assert!(!run.status.success());

    // bsr3 with file input is rejected
    let run = ddsolve(&["solve", "--input", "x.mtx", "--layout", "bsr3"]);
    assert!(!run.status.success());
}

#[test]
fn env_variables_override_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let run = Command::new(env!("CARGO_BIN_EXE_ddsolve"))
        .env("DDSOLVE_STRATEGY", "syncfree")
        .args([
            "solve",
            "--gen",
            "8,8,8",
            "--tile",
            "4,4,4",
            "--precond",
            "ilu0",
            "--report",
            report.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(json(&report)["solver"]["strategy"], "syncfree");
}
