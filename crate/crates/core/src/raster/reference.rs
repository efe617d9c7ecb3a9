//! Brute-force reference renderer: every primitive is evaluated at every
//! pixel, with no tiling, no footprint culling and no early termination.

use alloc::vec;
use alloc::vec::Vec;

use super::{project_covariance, RenderOutput, ALPHA_MAX, ALPHA_MIN, DEPTH_ALPHA_MIN, NEAR_PLANE};
use crate::gaussian::GaussianField;
use crate::geometry::CameraView;
use crate::image::Image;
use crate::math::exp;
use crate::sh::sh_to_color;

struct Projected {
    index: usize,
    z: f64,
    dist: f64,
    mean: [f64; 2],
    inv: [f64; 4],
    opacity: f64,
    color: [f64; 3],
}

pub fn render_reference(field: &GaussianField, view: &CameraView, background: [f64; 3]) -> RenderOutput {
    let center = view.center();
    let mut prims: Vec<Projected> = Vec::new();
    for i in 0..field.len() {
        let mu = field.position(i);
        let cam = view.to_camera(&mu);
        if cam.z <= NEAR_PLANE {
            continue;
        }
        let Ok(sigma) = field.covariance(i) else { continue };
        let Ok(cov) = project_covariance(&sigma, &mu, view) else { continue };
        let Some(inv) = cov.try_inverse() else { continue };
        let (u, v) = view.project_camera_frame(&cam);
        let dir = (mu - center).normalize();
        let raw = sh_to_color(field.sh(i), &[dir.x, dir.y, dir.z], field.sh_degree).unwrap_or([0.0; 3]);
        prims.push(Projected {
            index: i,
            z: cam.z,
            dist: (mu - center).norm(),
            mean: [u, v],
            inv: [inv[(0, 0)], inv[(0, 1)], inv[(1, 0)], inv[(1, 1)]],
            opacity: field.opacity(i),
            color: [raw[0].clamp(0.0, 1.0), raw[1].clamp(0.0, 1.0), raw[2].clamp(0.0, 1.0)],
        });
    }

    let (w, h) = (view.width, view.height);
    let mut out = RenderOutput {
        color: Image::new(w, h, 3),
        depth: Image::new(w, h, 1),
        depth_normalized: Image::new(w, h, 1),
        alpha: Image::new(w, h, 1),
        contrib_count: vec![0; w * h],
    };
    let mut hits: Vec<(f64, usize, f64, usize)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            hits.clear();
            for (k, p) in prims.iter().enumerate() {
                let dx = x as f64 - p.mean[0];
                let dy = y as f64 - p.mean[1];
                let q = dx * (p.inv[0] * dx + p.inv[1] * dy) + dy * (p.inv[2] * dx + p.inv[3] * dy);
                let alpha = (p.opacity * exp(-0.5 * q)).min(ALPHA_MAX);
                if alpha >= ALPHA_MIN {
                    hits.push((p.z, p.index, alpha, k));
                }
            }
            hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut t = 1.0;
            let mut rgb = [0.0; 3];
            let mut depth = 0.0;
            for &(_, _, alpha, k) in &hits {
                let p = &prims[k];
                for c in 0..3 {
                    rgb[c] += p.color[c] * alpha * t;
                }
                depth += p.dist * alpha * t;
                t *= 1.0 - alpha;
            }
            let i = y * w + x;
            for c in 0..3 {
                out.color.data[3 * i + c] = rgb[c] + t * background[c];
            }
            out.depth.data[i] = depth;
            out.alpha.data[i] = 1.0 - t;
            out.depth_normalized.data[i] = if 1.0 - t > DEPTH_ALPHA_MIN { depth / (1.0 - t) } else { 0.0 };
            out.contrib_count[i] = hits.len() as u32;
        }
    }
    out
}
