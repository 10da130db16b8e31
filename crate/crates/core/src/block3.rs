//! Minimal dense 3x3 block algebra for BSR factors (row-major blocks).

pub const N: usize = 3;
pub const LEN: usize = 9;

pub type Block = [f64; LEN];
pub type Vec3 = [f64; N];

#[inline]
pub fn matvec(a: &Block, x: &Vec3) -> Vec3 {
    let mut y = [0.0; N];
    for r in 0..N {
        for c in 0..N {
            y[r] += a[r * N + c] * x[c];
        }
    }
    y
}

#[inline]
pub fn mul(a: &Block, b: &Block) -> Block {
    let mut out = [0.0; LEN];
    for r in 0..N {
        for c in 0..N {
            let mut s = 0.0;
            for k in 0..N {
                s += a[r * N + k] * b[k * N + c];
            }
            out[r * N + c] = s;
        }
    }
    out
}

#[inline]
pub fn sub_assign(a: &mut Block, b: &Block) {
    for (x, y) in a.iter_mut().zip(b) {
        *x -= y;
    }
}

#[inline]
pub fn det(a: &Block) -> f64 {
    a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
        + a[2] * (a[3] * a[7] - a[4] * a[6])
}

/// Closed-form inverse via the adjugate; `None` when `|det| < floor`.
pub fn inv(a: &Block, floor: f64) -> Option<Block> {
    let d = det(a);
    if d.abs() < floor {
        return None;
    }
    let inv_det = 1.0 / d;
    Some([
        (a[4] * a[8] - a[5] * a[7]) * inv_det,
        (a[2] * a[7] - a[1] * a[8]) * inv_det,
        (a[1] * a[5] - a[2] * a[4]) * inv_det,
        (a[5] * a[6] - a[3] * a[8]) * inv_det,
        (a[0] * a[8] - a[2] * a[6]) * inv_det,
        (a[2] * a[3] - a[0] * a[5]) * inv_det,
        (a[3] * a[7] - a[4] * a[6]) * inv_det,
        (a[1] * a[6] - a[0] * a[7]) * inv_det,
        (a[0] * a[4] - a[1] * a[3]) * inv_det,
    ])
}
