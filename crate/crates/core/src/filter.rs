//! Separable Gaussian filtering with window renormalization at the borders.
//!
//! Every output is a weighted mean of in-bounds samples only, so a constant
//! image stays constant up to the border. The transpose passes are the exact
//! adjoints used by the SSIM backward pass.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::exp;

/// Normalized 1D Gaussian kernel of the given (odd) size.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as isize;
    let mut k: Vec<f64> = (-half..=half)
        .map(|i| exp(-((i * i) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Sum of in-bounds kernel weights for every position along an axis.
fn border_weights(len: usize, kernel: &[f64]) -> Vec<f64> {
    let half = (kernel.len() / 2) as isize;
    (0..len as isize)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .filter(|(k, _)| {
                    let j = i + *k as isize - half;
                    j >= 0 && j < len as isize
                })
                .map(|(_, w)| w)
                .sum()
        })
        .collect()
}

/// Filters a single-channel `width × height` plane (row-major).
pub fn blur(plane: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let tmp = pass(plane, width, height, kernel, Axis::X, false);
    pass(&tmp, width, height, kernel, Axis::Y, false)
}

/// Adjoint of [`blur`].
pub fn blur_transpose(plane: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let tmp = pass(plane, width, height, kernel, Axis::Y, true);
    pass(&tmp, width, height, kernel, Axis::X, true)
}

#[derive(Clone, Copy)]
enum Axis {
    X,
    Y,
}

fn pass(src: &[f64], width: usize, height: usize, kernel: &[f64], axis: Axis, transpose: bool) -> Vec<f64> {
    let (len, lines) = match axis {
        Axis::X => (width, height),
        Axis::Y => (height, width),
    };
    let at = |line: usize, i: usize| match axis {
        Axis::X => line * width + i,
        Axis::Y => i * width + line,
    };
    let norm = border_weights(len, kernel);
    let half = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; src.len()];
    for line in 0..lines {
        for i in 0..len {
            let lo = (i as isize - half).max(0) as usize;
            let hi = ((i as isize + half) as usize).min(len - 1);
            if transpose {
                // out[j] += k(i - j) src[i] / Z_i for every j in the window of i
                let g = src[at(line, i)] / norm[i];
                for j in lo..=hi {
                    let k = kernel[(j as isize - i as isize + half) as usize];
                    out[at(line, j)] += k * g;
                }
            } else {
                let mut acc = 0.0;
                for j in lo..=hi {
                    acc += kernel[(j as isize - i as isize + half) as usize] * src[at(line, j)];
                }
                out[at(line, i)] = acc / norm[i];
            }
        }
    }
    out
}
