//! Multi-view-consistency guided progressive pruning.
//!
//! Every view carries a K-channel feature map built from L levels, lowest
//! level first. At pruning step `t` only the top levels take part in the
//! cosine similarity, and lower levels are added as `t` grows. A Gaussian
//! is pruned when every pair of views that sees it disagrees (similarity
//! below τ).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::filter::{blur, gaussian_kernel};
use crate::gaussian::GaussianField;
use crate::geometry::{project_point, CameraView};
use crate::image::{bilinear_axis, Image};
use crate::math::{ceil, sqrt};
use crate::par::map_range;

/// Channel-major `K × H × W` feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub dims: usize,
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(dims: usize, width: usize, height: usize) -> Self {
        Self {
            dims,
            width,
            height,
            data: vec![0.0; dims * width * height],
        }
    }

    #[inline]
    pub fn at(&self, k: usize, x: usize, y: usize) -> f32 {
        self.data[(k * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, k: usize, x: usize, y: usize, v: f32) {
        self.data[(k * self.height + y) * self.width + x] = v;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    pub level_dims: Vec<usize>,
    /// `(view_id, map)` pairs.
    pub views: Vec<(u32, FeatureMap)>,
}

impl FeatureStack {
    pub fn total_dims(&self) -> usize {
        self.level_dims.iter().sum()
    }

    pub fn get(&self, view_id: u32) -> Option<&FeatureMap> {
        self.views.iter().find(|(id, _)| *id == view_id).map(|(_, m)| m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.level_dims.is_empty() || self.level_dims.contains(&0) {
            return Err(Error::FeatureViewMismatch("level dimensions must be non-empty and positive".into()));
        }
        let k = self.total_dims();
        for (id, m) in &self.views {
            if m.dims != k || m.data.len() != k * m.width * m.height {
                return Err(Error::FeatureViewMismatch(format!(
                    "view {id}: map has {} channels, level dims sum to {k}",
                    m.dims
                )));
            }
        }
        Ok(())
    }

    /// Checks that every view has a map of matching spatial size.
    pub fn check_views(&self, views: &[CameraView]) -> Result<()> {
        self.validate()?;
        for v in views {
            let m = self
                .get(v.view_id)
                .ok_or_else(|| Error::FeatureViewMismatch(format!("no features for view {}", v.view_id)))?;
            if m.width != v.width || m.height != v.height {
                return Err(Error::FeatureViewMismatch(format!(
                    "view {}: features {}x{}, image {}x{}",
                    v.view_id, m.width, m.height, v.width, v.height
                )));
            }
        }
        Ok(())
    }

    /// Builds the stack with the deterministic pyramid provider.
    pub fn from_views(views: &[CameraView], level_dims: &[usize]) -> Result<Self> {
        let maps = map_range(views.len(), true, |i| pyramid_features(&views[i].image, level_dims));
        let mut out = Vec::with_capacity(views.len());
        for (v, m) in views.iter().zip(maps) {
            out.push((v.view_id, m?));
        }
        Ok(Self {
            level_dims: level_dims.to_vec(),
            views: out,
        })
    }
}

const BASE_CHANNELS: usize = 6;

/// Deterministic multi-level features for one image.
///
/// Level `l` (1-based) blurs with σ = 2^(l−1), resamples onto a grid coarser
/// by the same factor, appends per-channel gradient magnitudes to the
/// centred colours, bilinearly upsamples back to pixel scale, replicates the
/// six base channels across `K_l` dimensions and L2-normalizes per pixel.
pub fn pyramid_features(image: &Image, level_dims: &[usize]) -> Result<FeatureMap> {
    if image.width == 0 || image.height == 0 || image.data.is_empty() {
        return Err(Error::EmptyImage);
    }
    if level_dims.is_empty() || level_dims.contains(&0) {
        return Err(Error::InvalidConfig("level dims must be non-empty and positive".into()));
    }
    let (w, h) = (image.width, image.height);
    let total: usize = level_dims.iter().sum();
    let mut out = FeatureMap::new(total, w, h);
    let planes: Vec<Vec<f64>> = (0..3)
        .map(|c| (0..w * h).map(|i| image.data[i * image.channels + c.min(image.channels - 1)]).collect())
        .collect();

    let mut offset = 0;
    for (l, &kl) in level_dims.iter().enumerate() {
        let factor = 1usize << l;
        let sigma = factor as f64;
        let radius = ceil(3.0 * sigma) as usize;
        let kernel = gaussian_kernel(2 * radius + 1, sigma);
        let cw = w.div_ceil(factor);
        let ch = h.div_ceil(factor);
        let centre = |i: usize| (i * factor) as f64 + (factor as f64 - 1.0) / 2.0;

        // coarse base channels, row-major cw×ch×6
        let mut coarse = vec![0.0; cw * ch * BASE_CHANNELS];
        for (c, plane) in planes.iter().enumerate() {
            // blurring offsets from a reference keeps flat regions exactly flat
            let reference = plane[0];
            let offsets: Vec<f64> = plane.iter().map(|v| v - reference).collect();
            let blurred: Vec<f64> = blur(&offsets, w, h, &kernel).into_iter().map(|v| v + reference).collect();
            let fine = Image::from_data(w, h, 1, blurred).expect("sized");
            let mut grid = vec![0.0; cw * ch];
            for y in 0..ch {
                for x in 0..cw {
                    let mut v = [0.0];
                    fine.sample_bilinear(centre(x), centre(y), &mut v);
                    grid[y * cw + x] = v[0];
                }
            }
            for y in 0..ch {
                for x in 0..cw {
                    let at = |xx: usize, yy: usize| grid[yy * cw + xx];
                    let gx = (at((x + 1).min(cw - 1), y) - at(x.saturating_sub(1), y)) / 2.0;
                    let gy = (at(x, (y + 1).min(ch - 1)) - at(x, y.saturating_sub(1))) / 2.0;
                    let base = (y * cw + x) * BASE_CHANNELS;
                    coarse[base + c] = at(x, y) - 0.5;
                    coarse[base + 3 + c] = sqrt(gx * gx + gy * gy);
                }
            }
        }
        let coarse = Image::from_data(cw, ch, BASE_CHANNELS, coarse).expect("sized");

        let mut base = [0.0; BASE_CHANNELS];
        let mut vals = vec![0.0; kl];
        for y in 0..h {
            for x in 0..w {
                let u = (x as f64 - (factor as f64 - 1.0) / 2.0) / factor as f64;
                let v = (y as f64 - (factor as f64 - 1.0) / 2.0) / factor as f64;
                coarse.sample_bilinear(u, v, &mut base);
                let mut norm = 0.0;
                for (j, val) in vals.iter_mut().enumerate() {
                    *val = base[j % BASE_CHANNELS];
                    norm += *val * *val;
                }
                let norm = sqrt(norm);
                for (j, val) in vals.iter().enumerate() {
                    let n = if norm > 1e-12 { val / norm } else { 0.0 };
                    out.set(offset + j, x, y, n as f32);
                }
            }
        }
        offset += kl;
    }
    Ok(out)
}

/// Bilinear feature lookup with pixel-centre alignment; `None` outside
/// `[0, W−1] × [0, H−1]`.
pub fn query_feature(f: &FeatureMap, p2d: (f64, f64)) -> Option<Vec<f64>> {
    query_feature_range(f, p2d, 0)
}

/// Same as [`query_feature`] but only returns dimensions `start..K`.
pub fn query_feature_range(f: &FeatureMap, p2d: (f64, f64), start: usize) -> Option<Vec<f64>> {
    let (u, v) = p2d;
    if !(u >= 0.0 && v >= 0.0 && u <= (f.width - 1) as f64 && v <= (f.height - 1) as f64) {
        return None;
    }
    let (x0, x1, fx) = bilinear_axis(u, f.width);
    let (y0, y1, fy) = bilinear_axis(v, f.height);
    let w00 = (1.0 - fx) * (1.0 - fy);
    let w10 = fx * (1.0 - fy);
    let w01 = (1.0 - fx) * fy;
    let w11 = fx * fy;
    Some(
        (start..f.dims)
            .map(|k| {
                w00 * f.at(k, x0, y0) as f64
                    + w10 * f.at(k, x1, y0) as f64
                    + w01 * f.at(k, x0, y1) as f64
                    + w11 * f.at(k, x1, y1) as f64
            })
            .collect(),
    )
}

/// Index of the first dimension kept at pruning step `t` (0-based).
pub fn level_mask_start(t: usize, level_dims: &[usize]) -> Result<usize> {
    if t < 1 {
        return Err(Error::InvalidStep(t));
    }
    let levels = level_dims.len();
    if t >= levels {
        return Ok(0);
    }
    Ok(level_dims[..levels - t].iter().sum())
}

/// Dimension mask for step `t`: keeps 1-indexed `k > Σ_{l ≤ L−t} K_l` while
/// `t < L`, and every dimension once `t ≥ L`.
pub fn level_mask(t: usize, level_dims: &[usize]) -> Result<Vec<bool>> {
    let start = level_mask_start(t, level_dims)?;
    let total: usize = level_dims.iter().sum();
    Ok((0..total).map(|k| k >= start).collect())
}

/// Cosine similarity of the masked sub-vectors; 0 when either is (near) zero.
pub fn masked_similarity(fm: &[f64], fn_: &[f64], mask: &[bool]) -> f64 {
    let mut dot = 0.0;
    let mut nm = 0.0;
    let mut nn = 0.0;
    for ((a, b), &keep) in fm.iter().zip(fn_).zip(mask) {
        if keep {
            dot += a * b;
            nm += a * a;
            nn += b * b;
        }
    }
    cosine(dot, nm, nn)
}

fn cosine(dot: f64, nm: f64, nn: f64) -> f64 {
    let (nm, nn) = (sqrt(nm), sqrt(nn));
    if nm < 1e-12 || nn < 1e-12 {
        return 0.0;
    }
    (dot / (nm * nn)).clamp(-1.0, 1.0)
}

fn full_similarity(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    cosine(dot, na, nb)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneDecision {
    /// `true` marks a primitive for removal.
    pub mask: Vec<bool>,
    /// Similarities of every valid unordered view pair, per primitive.
    pub pairwise_sims: Option<Vec<Vec<f64>>>,
    pub valid_view_count: Vec<u32>,
}

impl PruneDecision {
    pub fn pruned(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }
}

pub fn compute_prune_mask(
    field: &GaussianField,
    views: &[CameraView],
    features: &FeatureStack,
    t: usize,
    tau: f64,
) -> Result<PruneDecision> {
    compute_prune_mask_with(field, views, features, t, tau, false)
}

/// Prune decision at step `t` with threshold `tau`. Primitives seen by fewer
/// than two views are never pruned.
pub fn compute_prune_mask_with(
    field: &GaussianField,
    views: &[CameraView],
    features: &FeatureStack,
    t: usize,
    tau: f64,
    diagnostics: bool,
) -> Result<PruneDecision> {
    features.check_views(views)?;
    let start = level_mask_start(t, &features.level_dims)?;
    let maps: Vec<&FeatureMap> = views
        .iter()
        .map(|v| features.get(v.view_id).expect("checked above"))
        .collect();
    let per = map_range(field.len(), true, |j| {
        let mu = field.position(j);
        let queried: Vec<Vec<f64>> = views
            .iter()
            .zip(&maps)
            .filter_map(|(v, m)| {
                let (u, w, _) = project_point(&mu, v).ok()?;
                query_feature_range(m, (u, w), start)
            })
            .collect();
        let mut sims = Vec::new();
        let mut all_below = true;
        for a in 0..queried.len() {
            for b in a + 1..queried.len() {
                let s = full_similarity(&queried[a], &queried[b]);
                if s >= tau {
                    all_below = false;
                    if !diagnostics {
                        break;
                    }
                }
                sims.push(s);
            }
            if !all_below && !diagnostics {
                break;
            }
        }
        let valid = queried.len();
        (valid >= 2 && all_below, valid as u32, sims)
    });
    let mut mask = Vec::with_capacity(per.len());
    let mut counts = Vec::with_capacity(per.len());
    let mut sims_all = Vec::new();
    for (m, c, s) in per {
        mask.push(m);
        counts.push(c);
        if diagnostics {
            sims_all.push(s);
        }
    }
    Ok(PruneDecision {
        mask,
        pairwise_sims: diagnostics.then_some(sims_all),
        valid_view_count: counts,
    })
}

/// Removes the flagged primitives, preserving the order of survivors.
pub fn apply_prune(field: &GaussianField, decision: &PruneDecision) -> Result<GaussianField> {
    if decision.mask.len() != field.len() {
        return Err(Error::SizeMismatch {
            expected: field.len(),
            got: decision.mask.len(),
        });
    }
    let keep: Vec<bool> = decision.mask.iter().map(|m| !m).collect();
    let mut out = field.clone();
    out.retain_mask(&keep)?;
    Ok(out)
}
