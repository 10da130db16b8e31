//! Shared oracles and generators for the integration suites.
//!
//! Everything here is deliberately independent of the library's
//! computation paths: dense textbook algorithms, brute-force scans and
//! naive accumulations that the optimized implementations are checked
//! against.

#![allow(dead_code)]
#![allow(clippy::needless_range_loop)]

use ddsolve::partition::SubdomainLayout;
use ddsolve::sparsemat::CsrMatrix;
use rand::rngs::StdRng;
use rand::Rng;

/// Dense row-major matrix with explicit dimension.
#[derive(Clone, Debug)]
pub struct Dense {
    pub n: usize,
    pub a: Vec<f64>,
}

impl Dense {
    pub fn from_csr(m: &CsrMatrix) -> Dense {
        assert_eq!(m.nrows(), m.ncols());
        Dense {
            n: m.nrows(),
            a: m.to_dense(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] = v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let mut s = 0.0;
            for j in 0..self.n {
                s += self.get(i, j) * x[j];
            }
            y[i] = s;
        }
        y
    }

    pub fn matmul(&self, other: &Dense) -> Dense {
        let n = self.n;
        let mut out = Dense {
            n,
            a: vec![0.0; n * n],
        };
        for i in 0..n {
            for k in 0..n {
                let aik = self.get(i, k);
                if aik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.a[i * n + j] += aik * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn frobenius(&self) -> f64 {
        self.a.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &Dense) -> Dense {
        Dense {
            n: self.n,
            a: self
                .a
                .iter()
                .zip(&other.a)
                .map(|(x, y)| x - y)
                .collect(),
        }
    }
}

/// Unpivoted dense LU: returns (L with unit diagonal, U).
pub fn dense_lu(a: &Dense) -> (Dense, Dense) {
    let n = a.n;
    let mut u = a.clone();
    let mut l = Dense {
        n,
        a: vec![0.0; n * n],
    };
    for i in 0..n {
        l.set(i, i, 1.0);
    }
    for k in 0..n {
        let pivot = u.get(k, k);
        assert!(pivot != 0.0, "dense LU hit a zero pivot");
        for i in (k + 1)..n {
            let f = u.get(i, k) / pivot;
            l.set(i, k, f);
            for j in k..n {
                u.set(i, j, u.get(i, j) - f * u.get(k, j));
            }
        }
    }
    // clean the eliminated lower triangle of U
    for i in 0..n {
        for j in 0..i {
            u.set(i, j, 0.0);
        }
    }
    (l, u)
}

/// Relative infinity-norm distance, scaled by the larger magnitude.
pub fn rel_inf(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
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

/// Longest-path level assignment by brute force: repeatedly relax
/// every row from its raw dependency list until nothing changes.
pub fn longest_path_levels(n: usize, deps: &[Vec<usize>]) -> Vec<usize> {
    let mut level = vec![0usize; n];
    loop {
        let mut changed = false;
        for i in 0..n {
            let want = deps[i]
                .iter()
                .map(|&j| level[j] + 1)
                .max()
                .unwrap_or(0);
            if level[i] != want {
                level[i] = want;
                changed = true;
            }
        }
        if !changed {
            return level;
        }
    }
}

/// Sequential re-enactment of the iterative mark-and-promote level
/// assignment: all rows start at the sentinel `nrows + 1`; each round
/// marks rows whose dependencies already sit at or below the current
/// level, promotes them to `level + 1`, and stops when a round marks
/// nothing. Rows marked in round 0 (no dependencies) get level 0 up
/// front.
pub fn fixpoint_levels(
    nrows: usize,
    row_ptr: &[usize],
    col_idx: &[usize],
    range: std::ops::Range<usize>,
    upper: bool,
) -> Vec<usize> {
    let width = range.len();
    let sentinel = nrows + 1;
    let mut hmap = vec![sentinel; width];
    let deps = |i: usize| -> Vec<usize> {
        (row_ptr[i]..row_ptr[i + 1])
            .map(|p| col_idx[p])
            .filter(|&c| if upper { c > i } else { c < i })
            .collect()
    };
    for i in range.clone() {
        if deps(i).is_empty() {
            hmap[i - range.start] = 0;
        }
    }
    let mut level = 0usize;
    loop {
        let mut marked = vec![false; width];
        let mut added = false;
        for i in range.clone() {
            if hmap[i - range.start] > level {
                let valid = deps(i)
                    .iter()
                    .all(|&j| hmap[j - range.start] <= level);
                if valid {
                    marked[i - range.start] = true;
                    added = true;
                }
            }
        }
        for li in 0..width {
            if marked[li] {
                hmap[li] = level + 1;
            }
        }
        if !added {
            break;
        }
        level += 1;
    }
    hmap
}

/// Strictly-triangular dependency lists of a factor, diagonal ignored.
pub fn dependency_lists(m: &CsrMatrix, upper: bool) -> Vec<Vec<usize>> {
    (0..m.nrows())
        .map(|i| {
            let (cols, _) = m.row(i);
            cols.iter()
                .copied()
                .filter(|&c| if upper { c > i } else { c < i })
                .collect()
        })
        .collect()
}

/// Plain textbook BiCGSTAB on a dense matrix with naive sequential
/// dot products; records the scalars of each full iteration.
pub struct TextbookTrace {
    pub rho: Vec<f64>,
    pub alpha: Vec<f64>,
    pub omega: Vec<f64>,
}

pub fn textbook_bicgstab(a: &Dense, b: &[f64], x0: &[f64], iters: usize) -> (Vec<f64>, TextbookTrace) {
    let ndot = |u: &[f64], v: &[f64]| -> f64 { u.iter().zip(v).map(|(x, y)| x * y).sum() };
    let mut x = x0.to_vec();
    let ax = a.matvec(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let r0 = r.clone();
    let mut p = r.clone();
    let mut rho = ndot(&r, &r);
    let mut trace = TextbookTrace {
        rho: Vec::new(),
        alpha: Vec::new(),
        omega: Vec::new(),
    };
    for _ in 0..iters {
        let v = a.matvec(&p);
        let alpha = rho / ndot(&v, &r0);
        let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        let t = a.matvec(&s);
        let omega = ndot(&t, &s) / ndot(&t, &t);
        for ((xi, pi), si) in x.iter_mut().zip(&p).zip(&s) {
            *xi += alpha * pi + omega * si;
        }
        r = s.iter().zip(&t).map(|(si, ti)| si - omega * ti).collect();
        trace.rho.push(rho);
        trace.alpha.push(alpha);
        trace.omega.push(omega);
        let rho_next = ndot(&r, &r0);
        let beta = (alpha / omega) * (rho_next / rho);
        p = r
            .iter()
            .zip(p.iter().zip(&v))
            .map(|(ri, (pi, vi))| ri + beta * (pi - omega * vi))
            .collect();
        rho = rho_next;
    }
    (x, trace)
}

/// Uniform layout with the last part taking the remainder.
pub fn uniform_layout(n: usize, p: usize) -> SubdomainLayout {
    SubdomainLayout::uniform(n, p).unwrap()
}

/// Random strictly-triangular decomposed factor: every dependency
/// stays inside its subdomain; off-diagonal magnitudes are scaled so
/// substitution stays well conditioned. `stored_diag` adds diagonal
/// entries in [1, 2).
pub fn random_decomposed_factor(
    rng: &mut StdRng,
    layout: &SubdomainLayout,
    upper: bool,
    stored_diag: bool,
    max_deps: usize,
) -> CsrMatrix {
    let n = layout.n_rows();
    let mut triplets = Vec::new();
    for s in 0..layout.n_subdomains() {
        let range = layout.range(s);
        for i in range.clone() {
            let candidates: Vec<usize> = if upper {
                ((i + 1)..range.end).collect()
            } else {
                (range.start..i).collect()
            };
            if !candidates.is_empty() && max_deps > 0 {
                let k = rng.random_range(0..=max_deps.min(candidates.len()));
                let mut picked: Vec<usize> = Vec::new();
                for _ in 0..k {
                    let c = candidates[rng.random_range(0..candidates.len())];
                    if !picked.contains(&c) {
                        picked.push(c);
                    }
                }
                let scale = 0.9 / (picked.len().max(1) as f64);
                for c in picked {
                    triplets.push((i, c, scale * (rng.random::<f64>() * 2.0 - 1.0)));
                }
            }
            if stored_diag {
                triplets.push((i, i, 1.0 + rng.random::<f64>()));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &triplets).unwrap()
}

/// Random diagonally dominant matrix with full (dense) pattern.
pub fn random_dense_pattern_dd(rng: &mut StdRng, n: usize) -> CsrMatrix {
    let mut triplets = Vec::with_capacity(n * n);
    for i in 0..n {
        let mut off_sum = 0.0;
        let mut row = Vec::with_capacity(n);
        for j in 0..n {
            if j != i {
                let v = rng.random::<f64>() * 2.0 - 1.0;
                off_sum += v.abs();
                row.push((i, j, v));
            }
        }
        row.push((i, i, off_sum + 1.0 + rng.random::<f64>()));
        triplets.extend(row);
    }
    CsrMatrix::from_triplets(n, n, &triplets).unwrap()
}

/// Random sparse pattern (values 1.0) with about `per_row` entries per
/// row plus the diagonal.
pub fn random_pattern(rng: &mut StdRng, n: usize, per_row: usize) -> CsrMatrix {
    let mut t = Vec::new();
    for i in 0..n {
        t.push((i, i, 1.0));
        for _ in 0..per_row {
            t.push((i, rng.random_range(0..n), 1.0));
        }
    }
    CsrMatrix::from_triplets(n, n, &t).unwrap()
}

/// Random BSR matrix on the block pattern of `pattern`, diagonal
/// blocks made dominant so factorizations stay well posed.
pub fn random_block_matrix(
    rng: &mut StdRng,
    pattern: &CsrMatrix,
) -> ddsolve::sparsemat::BsrMatrix {
    use ddsolve::sparsemat::{BsrMatrix, BLOCK_DIM, BLOCK_LEN};
    let n = pattern.nrows();
    let mut blocks = Vec::with_capacity(pattern.nnz() * BLOCK_LEN);
    for i in 0..n {
        let (cols, _) = pattern.row(i);
        for &c in cols {
            let mut b = [0.0; BLOCK_LEN];
            for (k, slot) in b.iter_mut().enumerate() {
                *slot = rng.random::<f64>() * 2.0 - 1.0;
                if c == i && k % (BLOCK_DIM + 1) == 0 {
                    *slot += 6.0;
                }
            }
            blocks.extend_from_slice(&b);
        }
    }
    BsrMatrix::from_parts(
        n,
        n,
        pattern.row_ptr().to_vec(),
        pattern.col_idx().to_vec(),
        blocks,
    )
    .unwrap()
}

/// Random sparse diagonally dominant matrix whose couplings never
/// cross subdomain boundaries (a ready-made decomposed system), with a
/// structurally symmetric pattern.
pub fn random_decomposed_spd_like(
    rng: &mut StdRng,
    layout: &SubdomainLayout,
    extra_per_row: usize,
) -> CsrMatrix {
    let n = layout.n_rows();
    let mut pattern: Vec<(usize, usize)> = Vec::new();
    for s in 0..layout.n_subdomains() {
        let range = layout.range(s);
        for i in range.clone() {
            for _ in 0..extra_per_row {
                if range.len() > 1 {
                    let j = rng.random_range(range.clone());
                    if j != i {
                        pattern.push((i.min(j), i.max(j)));
                    }
                }
            }
        }
    }
    pattern.sort_unstable();
    pattern.dedup();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut off_sums = vec![0.0f64; n];
    for (i, j) in pattern {
        let v = rng.random::<f64>() * 2.0 - 1.0;
        off_sums[i] += v.abs();
        off_sums[j] += v.abs();
        triplets.push((i, j, v));
        triplets.push((j, i, v));
    }
    for (i, &off) in off_sums.iter().enumerate() {
        triplets.push((i, i, off + 1.0 + rng.random::<f64>()));
    }
    CsrMatrix::from_triplets(n, n, &triplets).unwrap()
}
