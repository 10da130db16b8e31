//! Factorization checks against dense oracles.

#![allow(clippy::needless_range_loop)]

mod common;

use common::{dense_lu, random_block_matrix, random_decomposed_spd_like, random_dense_pattern_dd, Dense};
use ddsolve::factor::{ildu0, ildu0_bsr, ilu0, ilu0_bsr, ilu0_decomposed};
use ddsolve::partition::SubdomainLayout;
use ddsolve::sparsemat::{CsrMatrix, BLOCK_DIM};
use rand::rngs::StdRng;
use rand::SeedableRng;

fn assemble_lu(f: &ddsolve::factor::IluFactors) -> Dense {
    let n = f.l.nrows();
    let mut l = Dense::from_csr(&f.l);
    for i in 0..n {
        l.set(i, i, 1.0);
    }
    let u = Dense::from_csr(&f.u);
    l.matmul(&u)
}

#[test]
fn full_pattern_ilu0_equals_dense_lu() {
    let mut rng = StdRng::seed_from_u64(0xf00d);
    for trial in 0..20 {
        let n = 4 + (trial * 3) % 61;
        let a = random_dense_pattern_dd(&mut rng, n);
        let f = ilu0(&a).unwrap();
        let dense = Dense::from_csr(&a);
        let (lo, uo) = dense_lu(&dense);

        let mut l = Dense::from_csr(&f.l);
        for i in 0..n {
            l.set(i, i, 1.0);
        }
        let u = Dense::from_csr(&f.u);
        let dl = l.sub(&lo).frobenius() / lo.frobenius();
        let du = u.sub(&uo).frobenius() / uo.frobenius();
        assert!(dl < 1e-10, "L deviates {dl:e} at n = {n}");
        assert!(du < 1e-10, "U deviates {du:e} at n = {n}");
    }
}

#[test]
fn ildu0_reassembly_identity() {
    let mut rng = StdRng::seed_from_u64(0xbeef);
    for trial in 0..20 {
        let layout = SubdomainLayout::uniform(40 + trial, 10).unwrap();
        let a = random_decomposed_spd_like(&mut rng, &layout, 3);
        let f = ilu0(&a).unwrap();
        let d = ildu0(&f).unwrap();

        // L * diag(D) * U_unit must equal L * U
        let n = a.nrows();
        let mut l = Dense::from_csr(&f.l);
        for i in 0..n {
            l.set(i, i, 1.0);
        }
        let mut du = Dense::from_csr(&d.u_unit);
        for i in 0..n {
            du.set(i, i, 1.0);
            let dii = 1.0 / d.inv_d[i];
            for j in 0..n {
                du.set(i, j, du.get(i, j) * dii);
            }
        }
        let lhs = l.matmul(&du);
        let rhs = assemble_lu(&f);
        let rel = lhs.sub(&rhs).frobenius() / rhs.frobenius();
        assert!(rel < 1e-12, "reassembly deviates {rel:e}");
    }
}

#[test]
fn decomposed_factorization_is_bitwise_subdomain_local() {
    let mut rng = StdRng::seed_from_u64(0xc0ffee);
    let layout = SubdomainLayout::uniform(96, 16).unwrap();
    let a = random_decomposed_spd_like(&mut rng, &layout, 4);

    let whole = ilu0(&a).unwrap();
    let parallel = ilu0_decomposed(&a, &layout).unwrap();
    assert_eq!(whole, parallel, "parallel elimination must be bit-identical");

    // factoring each subdomain extracted as its own matrix gives the
    // same values because elimination never crosses boundaries
    for s in 0..layout.n_subdomains() {
        let range = layout.range(s);
        let mut triplets = Vec::new();
        for i in range.clone() {
            let (cols, vals) = a.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                triplets.push((i - range.start, c - range.start, v));
            }
        }
        let sub = CsrMatrix::from_triplets(range.len(), range.len(), &triplets).unwrap();
        let fs = ilu0(&sub).unwrap();
        for i in range.clone() {
            let (wc, wv) = whole.u.row(i);
            let (sc, sv) = fs.u.row(i - range.start);
            assert_eq!(wv, sv);
            assert_eq!(
                wc.iter().map(|c| c - range.start).collect::<Vec<_>>(),
                sc.to_vec()
            );
        }
    }
}

/// Inverts a small dense matrix by LU solves against unit vectors.
fn dense_inverse(m: &Dense) -> Dense {
    let n = m.n;
    let (l, u) = dense_lu(m);
    let mut out = Dense { n, a: vec![0.0; n * n] };
    for col in 0..n {
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = if i == col { 1.0 } else { 0.0 };
            for j in 0..i {
                s -= l.get(i, j) * y[j];
            }
            y[i] = s;
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in (i + 1)..n {
                s -= u.get(i, j) * x[j];
            }
            x[i] = s / u.get(i, i);
        }
        for row in 0..n {
            out.set(row, col, x[row]);
        }
    }
    out
}

#[test]
fn block_ilu0_on_full_pattern_reproduces_the_matrix() {
    let mut rng = StdRng::seed_from_u64(0xabcd);
    // full 2x2 block pattern: zero fill-in drops nothing, so L*U = A
    let pattern = CsrMatrix::from_triplets(
        2,
        2,
        &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)],
    )
    .unwrap();
    for _ in 0..10 {
        let a = random_block_matrix(&mut rng, &pattern);
        let f = ilu0_bsr(&a).unwrap();

        let n = a.nrows_scalar();
        let mut l = Dense::from_csr(&f.l.to_csr());
        for i in 0..n {
            l.set(i, i, 1.0);
        }
        let u = Dense::from_csr(&f.u.to_csr());
        let prod = l.matmul(&u);
        let dense_a = Dense::from_csr(&a.to_csr());
        let rel = prod.sub(&dense_a).frobenius() / dense_a.frobenius();
        assert!(rel < 1e-10, "block L*U deviates from A by {rel:e}");
    }
}

#[test]
fn block_ildu0_reassembly_identity() {
    let mut rng = StdRng::seed_from_u64(0x1234);
    let pattern = CsrMatrix::from_triplets(
        3,
        3,
        &[
            (0, 0, 1.0),
            (0, 1, 1.0),
            (1, 0, 1.0),
            (1, 1, 1.0),
            (1, 2, 1.0),
            (2, 1, 1.0),
            (2, 2, 1.0),
        ],
    )
    .unwrap();
    for _ in 0..10 {
        let a = random_block_matrix(&mut rng, &pattern);
        let f = ilu0_bsr(&a).unwrap();
        let d = ildu0_bsr(&f).unwrap();

        // L * D * U_unit == L * U on the scalar expansions, with
        // D recovered from inv_D by an independent dense inversion
        let n = a.nrows_scalar();
        let mut l = Dense::from_csr(&f.l.to_csr());
        for i in 0..n {
            l.set(i, i, 1.0);
        }
        let u = Dense::from_csr(&f.u.to_csr());
        let lu = l.matmul(&u);

        let mut d_dense = Dense { n, a: vec![0.0; n * n] };
        for (bi, inv) in d.inv_d.iter().enumerate() {
            let dblock = dense_inverse(&Dense {
                n: BLOCK_DIM,
                a: inv.to_vec(),
            });
            for r in 0..BLOCK_DIM {
                for c in 0..BLOCK_DIM {
                    d_dense.set(bi * BLOCK_DIM + r, bi * BLOCK_DIM + c, dblock.get(r, c));
                }
            }
        }
        let mut u_unit = Dense::from_csr(&d.u_unit.to_csr());
        for i in 0..n {
            u_unit.set(i, i, 1.0);
        }
        let ldu = l.matmul(&d_dense).matmul(&u_unit);
        let rel = ldu.sub(&lu).frobenius() / lu.frobenius();
        assert!(rel < 1e-12, "block reassembly deviates {rel:e}");
    }
}
