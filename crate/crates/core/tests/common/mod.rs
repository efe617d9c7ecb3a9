#![allow(dead_code)]

pub mod prune;

use mcgs_core::gaussian::{GaussianField, Primitive};
use mcgs_core::rng::{self, StreamRng};
use mcgs_core::{CameraView, Image};
use nalgebra::Vector3;

pub fn look_at_view(id: u32, eye: [f64; 3], size: usize, focal: f64) -> CameraView {
    CameraView::look_at(
        id,
        Vector3::from(eye),
        Vector3::zeros(),
        Vector3::new(0.0, 1.0, 0.0),
        focal,
        Image::new(size, size, 3),
    )
    .unwrap()
}

/// Random primitives clustered around the origin, all in front of cameras at radius ~3.
pub fn random_field(rng: &mut StreamRng, n: usize, sh_degree: usize, spread: f64) -> GaussianField {
    let mut f = GaussianField::empty(sh_degree);
    let nb = (sh_degree + 1) * (sh_degree + 1);
    for _ in 0..n {
        let sh = (0..nb * 3)
            .map(|k| {
                if k < 3 {
                    rng::uniform(rng, -1.2, 1.2)
                } else {
                    rng::uniform(rng, -0.3, 0.3)
                }
            })
            .collect();
        f.push(&Primitive {
            position: [
                rng::uniform(rng, -spread, spread),
                rng::uniform(rng, -spread, spread),
                rng::uniform(rng, -spread, spread),
            ],
            rotation: [
                rng::uniform(rng, 0.2, 1.0),
                rng::uniform(rng, -0.6, 0.6),
                rng::uniform(rng, -0.6, 0.6),
                rng::uniform(rng, -0.6, 0.6),
            ],
            log_scale: [
                rng::uniform(rng, -2.2, -1.0),
                rng::uniform(rng, -2.2, -1.0),
                rng::uniform(rng, -2.2, -1.0),
            ],
            opacity_logit: rng::uniform(rng, -1.0, 2.0),
            sh,
        });
    }
    f
}

pub fn random_image(rng: &mut StreamRng, w: usize, h: usize, c: usize, lo: f64, hi: f64) -> Image {
    Image::from_fn(w, h, c, |_, _, _| rng::uniform(rng, lo, hi))
}

/// |a - b| ≤ max(rel · max(|a|, |b|), abs).
pub fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= (rel * a.abs().max(b.abs())).max(abs)
}
