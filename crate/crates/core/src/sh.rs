//! Real spherical harmonics up to degree 3, using the sign and constant
//! conventions of the reference Gaussian splatting implementation.

use crate::error::{Error, Result};

pub const MAX_DEGREE: usize = 3;
pub const C0: f64 = 0.282_094_791_773_878_14;
const C1: f64 = 0.488_602_511_902_919_9;
const C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

pub const fn basis_len(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Basis values at direction `d`; entries past `basis_len(degree)` are zero.
pub fn basis(d: &[f64; 3], degree: usize) -> [f64; 16] {
    let (x, y, z) = (d[0], d[1], d[2]);
    let mut b = [0.0; 16];
    b[0] = C0;
    if degree >= 1 {
        b[1] = -C1 * y;
        b[2] = C1 * z;
        b[3] = -C1 * x;
    }
    if degree >= 2 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        b[4] = C2[0] * x * y;
        b[5] = C2[1] * y * z;
        b[6] = C2[2] * (2.0 * zz - xx - yy);
        b[7] = C2[3] * x * z;
        b[8] = C2[4] * (xx - yy);
        if degree >= 3 {
            b[9] = C3[0] * y * (3.0 * xx - yy);
            b[10] = C3[1] * x * y * z;
            b[11] = C3[2] * y * (4.0 * zz - xx - yy);
            b[12] = C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
            b[13] = C3[4] * x * (4.0 * zz - xx - yy);
            b[14] = C3[5] * z * (xx - yy);
            b[15] = C3[6] * x * (xx - 3.0 * yy);
        }
    }
    b
}

/// Partial derivatives of each basis function with respect to `(x, y, z)`,
/// treating the components as independent.
pub fn basis_gradient(d: &[f64; 3], degree: usize) -> [[f64; 3]; 16] {
    let (x, y, z) = (d[0], d[1], d[2]);
    let mut g = [[0.0; 3]; 16];
    if degree >= 1 {
        g[1] = [0.0, -C1, 0.0];
        g[2] = [0.0, 0.0, C1];
        g[3] = [-C1, 0.0, 0.0];
    }
    if degree >= 2 {
        g[4] = [C2[0] * y, C2[0] * x, 0.0];
        g[5] = [0.0, C2[1] * z, C2[1] * y];
        g[6] = [-2.0 * C2[2] * x, -2.0 * C2[2] * y, 4.0 * C2[2] * z];
        g[7] = [C2[3] * z, 0.0, C2[3] * x];
        g[8] = [2.0 * C2[4] * x, -2.0 * C2[4] * y, 0.0];
        if degree >= 3 {
            let (xx, yy, zz) = (x * x, y * y, z * z);
            g[9] = [C3[0] * 6.0 * x * y, C3[0] * (3.0 * xx - 3.0 * yy), 0.0];
            g[10] = [C3[1] * y * z, C3[1] * x * z, C3[1] * x * y];
            g[11] = [
                C3[2] * -2.0 * x * y,
                C3[2] * (4.0 * zz - xx - 3.0 * yy),
                C3[2] * 8.0 * y * z,
            ];
            g[12] = [
                C3[3] * -6.0 * x * z,
                C3[3] * -6.0 * y * z,
                C3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy),
            ];
            g[13] = [
                C3[4] * (4.0 * zz - 3.0 * xx - yy),
                C3[4] * -2.0 * x * y,
                C3[4] * 8.0 * x * z,
            ];
            g[14] = [C3[5] * 2.0 * x * z, C3[5] * -2.0 * y * z, C3[5] * (xx - yy)];
            g[15] = [C3[6] * (3.0 * xx - 3.0 * yy), C3[6] * -6.0 * x * y, 0.0];
        }
    }
    g
}

/// Raw (unclamped) colour of a B×3 coefficient block seen along `view_dir`,
/// including the +0.5 offset.
pub fn sh_to_color(sh: &[f64], view_dir: &[f64; 3], degree: usize) -> Result<[f64; 3]> {
    if degree > MAX_DEGREE || sh.len() != basis_len(degree) * 3 {
        return Err(Error::DegreeMismatch {
            degree,
            expected: basis_len(degree.min(MAX_DEGREE)) * 3,
            got: sh.len(),
        });
    }
    Ok(eval_color(sh, &basis(view_dir, degree), basis_len(degree)))
}

#[inline]
pub(crate) fn eval_color(sh: &[f64], basis: &[f64; 16], n: usize) -> [f64; 3] {
    let mut rgb = [0.5; 3];
    for (b, &y) in basis.iter().enumerate().take(n) {
        for c in 0..3 {
            rgb[c] += y * sh[b * 3 + c];
        }
    }
    rgb
}

/// DC coefficient that yields colour `c` under degree 0 evaluation.
pub fn rgb_to_dc(c: f64) -> f64 {
    (c - 0.5) / C0
}
