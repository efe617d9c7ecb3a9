//! Training objectives: photometric loss, edge-aware depth regularization
//! (EADR) and its activation schedule.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::math::{abs, exp};
use crate::metrics::ssim_with_grad;

pub const DEFAULT_LAMBDA_DSSIM: f64 = 0.2;
pub const DEFAULT_EADR_BETA: f64 = 2.0;

/// Per-iteration loss report. `eadr` is already multiplied by `eadr_weight`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub photometric: f64,
    pub eadr: f64,
    pub total: f64,
    pub eadr_weight: f64,
}

impl LossBreakdown {
    pub fn new(photometric: f64, eadr_raw: f64, eadr_weight: f64) -> Self {
        let eadr = eadr_weight * eadr_raw;
        Self {
            photometric,
            eadr,
            total: photometric + eadr,
            eadr_weight,
        }
    }
}

/// `(1 − λ)·L1 + λ·(1 − SSIM)/2`.
pub fn photometric_loss(rendered: &Image, target: &Image, lambda_dssim: f64) -> Result<f64> {
    Ok(photometric_loss_grad(rendered, target, lambda_dssim)?.0)
}

/// Photometric loss and its gradient with respect to `rendered`.
pub fn photometric_loss_grad(rendered: &Image, target: &Image, lambda_dssim: f64) -> Result<(f64, Image)> {
    rendered.check_same_shape(target)?;
    let n = rendered.data.len() as f64;
    let mut grad = Image::new(rendered.width, rendered.height, rendered.channels);
    let mut l1 = 0.0;
    for ((g, r), t) in grad.data.iter_mut().zip(&rendered.data).zip(&target.data) {
        let d = r - t;
        l1 += abs(d);
        *g = (1.0 - lambda_dssim) * sign(d) / n;
    }
    l1 /= n;
    let mut loss = (1.0 - lambda_dssim) * l1;
    if lambda_dssim > 0.0 {
        let (s, ds) = ssim_with_grad(rendered, target)?;
        loss += lambda_dssim * (1.0 - s) / 2.0;
        for (g, d) in grad.data.iter_mut().zip(&ds.data) {
            *g -= lambda_dssim * 0.5 * d;
        }
    }
    Ok((loss, grad))
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_eadr_shapes(depth: &Image, image: &Image) -> Result<()> {
    if depth.channels != 1 || depth.width != image.width || depth.height != image.height {
        return Err(Error::ShapeMismatch(alloc::format!(
            "depth {}x{}x{} vs image {}x{}x{}",
            depth.width,
            depth.height,
            depth.channels,
            image.width,
            image.height,
            image.channels
        )));
    }
    Ok(())
}

/// Mean absolute forward difference of the image channels between two pixels.
fn image_step(image: &Image, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
    let c = image.channels;
    let s: f64 = (0..c).map(|k| abs(image.get(x1, y1, k) - image.get(x0, y0, k))).sum();
    s / c as f64
}

/// `(1/N) Σ |∂x D| e^{−β|∂x I|} + |∂y D| e^{−β|∂y I|}` over forward differences,
/// with `N = H·W`. The schedule weight is applied by the caller.
pub fn eadr_loss(depth: &Image, image: &Image, beta: f64) -> Result<f64> {
    Ok(eadr_loss_grad(depth, image, beta)?.0)
}

pub fn eadr_loss_grad(depth: &Image, image: &Image, beta: f64) -> Result<(f64, Image)> {
    check_eadr_shapes(depth, image)?;
    let (w, h) = (depth.width, depth.height);
    let n = (w * h) as f64;
    let mut grad = Image::new(w, h, 1);
    let mut sum = 0.0;
    for y in 0..h {
        for x in 0..w {
            let d = depth.get(x, y, 0);
            if x + 1 < w {
                let dx = depth.get(x + 1, y, 0) - d;
                let weight = exp(-beta * image_step(image, x, y, x + 1, y));
                sum += abs(dx) * weight;
                let g = sign(dx) * weight / n;
                grad.data[y * w + x + 1] += g;
                grad.data[y * w + x] -= g;
            }
            if y + 1 < h {
                let dy = depth.get(x, y + 1, 0) - d;
                let weight = exp(-beta * image_step(image, x, y, x, y + 1));
                sum += abs(dy) * weight;
                let g = sign(dy) * weight / n;
                grad.data[(y + 1) * w + x] += g;
                grad.data[y * w + x] -= g;
            }
        }
    }
    Ok((sum / n, grad))
}

/// EADR gate: 0 before iteration `(T − 1)·i_step`, 1 from then on.
pub fn eadr_weight(iter: usize, total_prune_steps: usize, i_step: usize) -> f64 {
    let start = total_prune_steps.saturating_sub(1) * i_step;
    if iter < start {
        0.0
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noisy(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, 3, |x, y, c| ((x * 13 + y * 7 + c * 3) % 17) as f64 / 16.0)
    }

    #[test]
    fn identical_images_have_zero_loss() {
        let a = noisy(12, 12);
        assert!(photometric_loss(&a, &a, 0.2).unwrap().abs() < 1e-12);
        assert!(photometric_loss(&a, &a, 1.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn pure_l1_constant_offset() {
        let a = noisy(6, 5);
        let b = Image::from_fn(6, 5, 3, |x, y, c| a.get(x, y, c) + 0.1);
        assert!((photometric_loss(&b, &a, 0.0).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn photometric_gradient_matches_finite_differences() {
        let a = noisy(12, 10);
        let b = Image::from_fn(12, 10, 3, |x, y, c| 0.05 + 0.9 * (((x * 3 + y * 5 + c) % 7) as f64 / 6.0) + 0.0013 * x as f64);
        let (_, g) = photometric_loss_grad(&a, &b, 0.2).unwrap();
        let h = 1e-7;
        for idx in [1, 17, 99, 250, 359] {
            let mut p = a.clone();
            p.data[idx] += h;
            let mut m = a.clone();
            m.data[idx] -= h;
            let fd = (photometric_loss(&p, &b, 0.2).unwrap() - photometric_loss(&m, &b, 0.2).unwrap()) / (2.0 * h);
            assert!((fd - g.data[idx]).abs() < 1e-6, "{idx}: {fd} vs {}", g.data[idx]);
        }
    }

    #[test]
    fn photometric_shape_mismatch() {
        assert!(photometric_loss(&Image::new(2, 2, 3), &Image::new(2, 3, 3), 0.2).is_err());
    }

    #[test]
    fn constant_depth_has_no_penalty() {
        let d = Image::filled(7, 5, 1, 3.5);
        assert_eq!(eadr_loss(&d, &noisy(7, 5), 2.0).unwrap(), 0.0);
    }

    #[test]
    fn unit_ramp_direct_summation() {
        // Ramp along x: |∂x D| = 1 on H·(W−1) pairs, ∂y D = 0.
        let d = Image::from_fn(4, 4, 1, |x, _, _| x as f64);
        let flat = Image::filled(4, 4, 3, 0.5);
        let mut oracle = 0.0;
        for _y in 0..4 {
            for x in 0..4 {
                if x + 1 < 4 {
                    oracle += 1.0 * (-2.0f64 * 0.0).exp();
                }
            }
        }
        oracle /= 16.0;
        assert_eq!(oracle, 12.0 / 16.0);
        assert_eq!(eadr_loss(&d, &flat, 2.0).unwrap(), oracle);
        // Strong x-edges everywhere: |∂x I| = 1 gives a factor e⁻².
        let stripes = Image::from_fn(4, 4, 3, |x, _, _| (x % 2) as f64);
        let v = eadr_loss(&d, &stripes, 2.0).unwrap();
        assert!((v - oracle * (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn eadr_gradient_matches_finite_differences() {
        let d = Image::from_fn(8, 8, 1, |x, y, _| ((x * 5 + y * 11) % 9) as f64 * 0.37 + 0.01 * (x * y) as f64);
        let img = noisy(8, 8);
        let (_, g) = eadr_loss_grad(&d, &img, 2.0).unwrap();
        let h = 1e-6;
        for idx in 0..64 {
            let mut p = d.clone();
            p.data[idx] += h;
            let mut m = d.clone();
            m.data[idx] -= h;
            let fd = (eadr_loss(&p, &img, 2.0).unwrap() - eadr_loss(&m, &img, 2.0).unwrap()) / (2.0 * h);
            assert!((fd - g.data[idx]).abs() <= 1e-3 * fd.abs().max(1e-6));
        }
    }

    #[test]
    fn eadr_schedule_boundaries() {
        assert_eq!(eadr_weight(5999, 3, 3000), 0.0);
        assert_eq!(eadr_weight(6000, 3, 3000), 1.0);
        assert_eq!(eadr_weight(0, 2, 3000), 0.0);
        assert_eq!(eadr_weight(8999, 4, 3000), 0.0);
        assert_eq!(eadr_weight(9000, 4, 3000), 1.0);
    }

    #[test]
    fn breakdown_is_consistent() {
        let b = LossBreakdown::new(0.3, 0.2, 1.0);
        assert!((b.total - (b.photometric + b.eadr_weight * 0.2)).abs() < 1e-12);
        let z = LossBreakdown::new(0.3, 0.2, 0.0);
        assert_eq!(z.eadr, 0.0);
        assert_eq!(z.total, 0.3);
    }
}
