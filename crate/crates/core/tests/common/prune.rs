//! Brute-force references for the feature-guided pruning rule.

#![allow(dead_code)]

use mcgs_core::gaussian::{GaussianField, Primitive};
use mcgs_core::pruning::{FeatureMap, FeatureStack};
use mcgs_core::rng::{self, StreamRng};
use mcgs_core::CameraView;
use nalgebra::Vector3;

use super::look_at_view;

pub fn point_field(points: &[[f64; 3]]) -> GaussianField {
    let mut f = GaussianField::empty(0);
    for p in points {
        f.push(&Primitive {
            position: *p,
            rotation: [1.0, 0.0, 0.0, 0.0],
            log_scale: [-3.0; 3],
            opacity_logit: 2.0,
            sh: vec![0.0; 3],
        });
    }
    f
}

pub fn stack_of(level_dims: Vec<usize>, maps: Vec<FeatureMap>) -> FeatureStack {
    FeatureStack {
        level_dims,
        views: maps.into_iter().enumerate().map(|(i, m)| (i as u32, m)).collect(),
    }
}

/// Cosine over the masked entries; zero when either side vanishes.
pub fn masked_cosine(a: &[f64], b: &[f64], mask: &[bool]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for k in 0..a.len() {
        if mask[k] {
            dot += a[k] * b[k];
            na += a[k] * a[k];
            nb += b[k] * b[k];
        }
    }
    if na.sqrt() < 1e-12 || nb.sqrt() < 1e-12 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Level mask for a 1-indexed dimension `k`: at step `t` the first `L - t` levels are masked out.
pub fn level_keeps(k: usize, t: usize, dims: &[usize]) -> bool {
    let l = dims.len();
    if t >= l {
        return true;
    }
    let bound: usize = dims[..l - t].iter().sum();
    k > bound
}

/// Independent reference for the pruning rule: explicit projection, explicit
/// bilinear lookup, explicit masking and all-pairs comparison.
pub fn oracle_prune(
    mu: &Vector3<f64>,
    views: &[CameraView],
    maps: &[FeatureMap],
    dims: &[usize],
    t: usize,
    tau: f64,
) -> (bool, usize) {
    let total: usize = dims.iter().sum();
    let mask: Vec<bool> = (1..=total).map(|k| level_keeps(k, t, dims)).collect();
    let mut feats: Vec<Vec<f64>> = Vec::new();
    for (v, m) in views.iter().zip(maps) {
        let c = v.rotation * mu + v.translation;
        if c.z <= 1e-6 {
            continue;
        }
        let u = v.fx * c.x / c.z + v.cx;
        let w = v.fy * c.y / c.z + v.cy;
        if u < 0.0 || w < 0.0 || u > (m.width - 1) as f64 || w > (m.height - 1) as f64 {
            continue;
        }
        let (x0, y0) = (u.floor() as usize, w.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(m.width - 1), (y0 + 1).min(m.height - 1));
        let (fx, fy) = (u - x0 as f64, w - y0 as f64);
        feats.push(
            (0..total)
                .map(|k| {
                    let g = |x: usize, y: usize| m.data[k * m.width * m.height + y * m.width + x] as f64;
                    g(x0, y0) * (1.0 - fx) * (1.0 - fy)
                        + g(x1, y0) * fx * (1.0 - fy)
                        + g(x0, y1) * (1.0 - fx) * fy
                        + g(x1, y1) * fx * fy
                })
                .collect(),
        );
    }
    if feats.len() < 2 {
        return (false, feats.len());
    }
    let mut all_below = true;
    for a in 0..feats.len() {
        for b in 0..feats.len() {
            if a != b && masked_cosine(&feats[a], &feats[b], &mask) >= tau {
                all_below = false;
            }
        }
    }
    (all_below, feats.len())
}

pub fn random_map(rng: &mut StreamRng, dims: usize, size: usize, nonnegative: bool) -> FeatureMap {
    let mut m = FeatureMap::new(dims, size, size);
    // low-entropy features so that some pairs are similar and some are not
    let base: Vec<f32> = (0..dims).map(|_| rng::uniform(rng, -1.0, 1.0) as f32).collect();
    for k in 0..dims {
        for y in 0..size {
            for x in 0..size {
                let mut v = base[k] + 0.6 * rng::uniform(rng, -1.0, 1.0) as f32;
                if nonnegative {
                    v = v.abs();
                }
                m.set(k, x, y, v);
            }
        }
    }
    m
}

pub fn random_case(
    rng: &mut StreamRng,
    nonnegative: bool,
) -> (GaussianField, Vec<CameraView>, Vec<FeatureMap>, Vec<usize>, usize, f64) {
    let n_views = 2 + rng::below(rng, 3);
    let size = 6;
    let views: Vec<CameraView> = (0..n_views)
        .map(|i| {
            let a = rng::uniform(rng, -0.6, 0.6);
            look_at_view(i as u32, [3.0 * a.sin(), rng::uniform(rng, -0.5, 0.5), -3.0 * a.cos()], size, 5.0)
        })
        .collect();
    let levels = 1 + rng::below(rng, 4);
    let dims: Vec<usize> = (0..levels).map(|_| 1 + rng::below(rng, 3)).collect();
    let total: usize = dims.iter().sum();
    let maps: Vec<FeatureMap> = (0..n_views).map(|_| random_map(rng, total, size, nonnegative)).collect();
    let pts: Vec<[f64; 3]> = (0..4)
        .map(|_| {
            [
                rng::uniform(rng, -2.5, 2.5),
                rng::uniform(rng, -2.5, 2.5),
                rng::uniform(rng, -2.5, 2.5),
            ]
        })
        .collect();
    let t = 1 + rng::below(rng, levels + 1);
    let tau = rng::uniform(rng, 0.01, 0.99);
    (point_field(&pts), views, maps, dims, t, tau)
}

