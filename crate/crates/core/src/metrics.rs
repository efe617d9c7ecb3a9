//! Image quality metrics: PSNR and SSIM.
//!
//! SSIM uses an 11×11 Gaussian window (σ = 1.5) with C₁ = 0.01², C₂ = 0.03²,
//! computed per channel and averaged over channels and pixels. Near the
//! borders the window is truncated and renormalized.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Result;
use crate::filter::{blur, blur_transpose, gaussian_kernel};
use crate::image::Image;
use crate::math::log10;

pub const PSNR_CAP: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b)?;
    let sum: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.data.len().max(1) as f64)
}

/// Peak signal-to-noise ratio for images in [0,1], capped at 100 dB.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    if m <= 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * log10(1.0 / m)).min(PSNR_CAP))
}

pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b)?;
    Ok(ssim_impl(a, b, false).0)
}

/// SSIM together with its gradient with respect to `a`.
pub fn ssim_with_grad(a: &Image, b: &Image) -> Result<(f64, Image)> {
    a.check_same_shape(b)?;
    let (v, g) = ssim_impl(a, b, true);
    Ok((v, g.expect("gradient requested")))
}

fn plane(img: &Image, c: usize) -> Vec<f64> {
    img.data.iter().skip(c).step_by(img.channels).copied().collect()
}

fn ssim_impl(a: &Image, b: &Image, want_grad: bool) -> (f64, Option<Image>) {
    let (w, h) = (a.width, a.height);
    let kernel = gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA);
    let count = a.data.len() as f64;
    let mut total = 0.0;
    let mut grad = want_grad.then(|| Image::new(w, h, a.channels));
    for c in 0..a.channels {
        let pa = plane(a, c);
        let pb = plane(b, c);
        let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
        let mu_a = blur(&pa, w, h, &kernel);
        let mu_b = blur(&pb, w, h, &kernel);
        let e_aa = blur(&prod(&pa, &pa), w, h, &kernel);
        let e_bb = blur(&prod(&pb, &pb), w, h, &kernel);
        let e_ab = blur(&prod(&pa, &pb), w, h, &kernel);
        let n = w * h;
        let (mut g_mu, mut g_aa, mut g_ab) = if want_grad {
            (vec![0.0; n], vec![0.0; n], vec![0.0; n])
        } else {
            (Vec::new(), Vec::new(), Vec::new())
        };
        for i in 0..n {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let s_aa = e_aa[i] - ma * ma;
            let s_bb = e_bb[i] - mb * mb;
            let s_ab = e_ab[i] - ma * mb;
            let n1 = 2.0 * ma * mb + SSIM_C1;
            let n2 = 2.0 * s_ab + SSIM_C2;
            let d1 = ma * ma + mb * mb + SSIM_C1;
            let d2 = s_aa + s_bb + SSIM_C2;
            let s = (n1 * n2) / (d1 * d2);
            total += s;
            if want_grad {
                let g_n1 = n2 / (d1 * d2);
                let g_n2 = n1 / (d1 * d2);
                let g_d1 = -s / d1;
                let g_d2 = -s / d2;
                g_mu[i] = g_n1 * 2.0 * mb - g_n2 * 2.0 * mb + g_d1 * 2.0 * ma - g_d2 * 2.0 * ma;
                g_aa[i] = g_d2;
                g_ab[i] = 2.0 * g_n2;
            }
        }
        if let Some(grad) = grad.as_mut() {
            let t_mu = blur_transpose(&g_mu, w, h, &kernel);
            let t_aa = blur_transpose(&g_aa, w, h, &kernel);
            let t_ab = blur_transpose(&g_ab, w, h, &kernel);
            for i in 0..n {
                grad.data[i * a.channels + c] = (t_mu[i] + 2.0 * pa[i] * t_aa[i] + pb[i] * t_ab[i]) / count;
            }
        }
    }
    (total / count, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checker(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, 3, |x, y, c| ((x * 7 + y * 3 + c * 5) % 11) as f64 / 10.0)
    }

    #[test]
    fn psnr_identical_is_capped() {
        let a = checker(8, 8);
        assert_eq!(psnr(&a, &a).unwrap(), 100.0);
    }

    #[test]
    fn psnr_uniform_offset() {
        let a = Image::filled(5, 4, 3, 0.3);
        let b = Image::filled(5, 4, 3, 0.4);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn psnr_matches_double_loop() {
        let a = checker(9, 7);
        let b = Image::from_fn(9, 7, 3, |x, y, c| ((x * 5 + y * 2 + c) % 13) as f64 / 12.0);
        let mut sum = 0.0;
        for y in 0..7 {
            for x in 0..9 {
                for c in 0..3 {
                    let d = a.get(x, y, c) - b.get(x, y, c);
                    sum += d * d;
                }
            }
        }
        let oracle = 10.0 * (1.0 / (sum / (9.0 * 7.0 * 3.0))).log10();
        assert!((psnr(&a, &b).unwrap() - oracle).abs() < 1e-9);
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let a = checker(16, 12);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let b = Image::from_fn(16, 12, 3, |x, y, c| ((x + y * 5 + c) % 7) as f64 / 6.0);
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-9);
        let inv = Image::from_fn(16, 12, 3, |x, y, c| 1.0 - a.get(x, y, c));
        let s = ssim(&a, &inv).unwrap();
        assert!(s < 1.0 && s >= -1.0);
    }

    #[test]
    fn ssim_constant_images_closed_form() {
        let (ma, mb) = (0.2, 0.7);
        let a = Image::filled(13, 15, 3, ma);
        let b = Image::filled(13, 15, 3, mb);
        let oracle = (2.0 * ma * mb + SSIM_C1) / (ma * ma + mb * mb + SSIM_C1);
        assert!((ssim(&a, &b).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        assert!(psnr(&Image::new(2, 2, 3), &Image::new(3, 2, 3)).is_err());
        assert!(ssim(&Image::new(2, 2, 3), &Image::new(2, 2, 1)).is_err());
    }

    #[test]
    fn ssim_gradient_matches_finite_differences() {
        let a = Image::from_fn(12, 9, 3, |x, y, c| 0.1 + 0.8 * (((x * 7 + y * 3 + c * 5) % 11) as f64 / 10.0));
        let b = checker(12, 9);
        let (_, g) = ssim_with_grad(&a, &b).unwrap();
        let h = 1e-6;
        for idx in [0, 5, 40, 100, 200, 323] {
            let mut p = a.clone();
            p.data[idx] += h;
            let mut m = a.clone();
            m.data[idx] -= h;
            let fd = (ssim(&p, &b).unwrap() - ssim(&m, &b).unwrap()) / (2.0 * h);
            assert!((fd - g.data[idx]).abs() < 1e-7, "{idx}: {fd} vs {}", g.data[idx]);
        }
    }
}
