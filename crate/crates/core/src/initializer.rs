//! Seed point cloud: matched-ray midpoints plus voxel-excluded random fill.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{pixel_ray, project_point, CameraView, Ray};
use crate::math::{floor, sqrt};
use crate::par::map_range;
use crate::rng;
use crate::synthetic::{sees, SyntheticScene};

/// One two-view correspondence in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub view_s: u32,
    pub view_t: u32,
    pub pixel_s: (f64, f64),
    pub pixel_t: (f64, f64),
    pub confidence: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorrespondenceSet {
    pub pairs: Vec<Match>,
}

impl CorrespondenceSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PointSource {
    Matched,
    Filled,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloudSeed {
    pub positions: Vec<Vector3<f64>>,
    pub colors: Vec<[f64; 3]>,
    pub source: Vec<PointSource>,
}

impl PointCloudSeed {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn push(&mut self, p: Vector3<f64>, color: [f64; 3], source: PointSource) {
        self.positions.push(p);
        self.colors.push(color);
        self.source.push(source);
    }

    pub fn count(&self, source: PointSource) -> usize {
        self.source.iter().filter(|s| **s == source).count()
    }

    fn select(&self, keep: &[bool]) -> Self {
        let mut out = Self::default();
        for (i, _) in keep.iter().enumerate().filter(|(_, k)| **k) {
            out.push(self.positions[i], self.colors[i], self.source[i]);
        }
        out
    }
}

/// Midpoint of the closest points between two rays. The flag is false for
/// near-parallel rays or when a closest point lies behind its ray origin.
pub fn triangulate_midpoint(ray_s: &Ray, ray_t: &Ray) -> (Vector3<f64>, bool) {
    let (ds, dt) = (ray_s.direction, ray_t.direction);
    let w0 = ray_s.origin - ray_t.origin;
    let b = ds.dot(&dt);
    let d = ds.dot(&w0);
    let e = dt.dot(&w0);
    let sin2 = ds.cross(&dt).norm_squared();
    if sqrt(sin2) < 1e-4 {
        return (ray_s.origin.lerp(&ray_t.origin, 0.5), false);
    }
    let s = (b * e - d) / sin2;
    let t = (e - b * d) / sin2;
    let xs = ray_s.at(s);
    let xt = ray_t.at(t);
    ((xs + xt) * 0.5, s >= 0.0 && t >= 0.0)
}

fn find_view(views: &[CameraView], id: u32) -> Result<&CameraView> {
    views.iter().find(|v| v.view_id == id).ok_or(Error::UnknownView(id))
}

/// One Matched point per valid correspondence, coloured by the mean of the
/// two bilinear samples.
pub fn build_seed_cloud(matches: &CorrespondenceSet, views: &[CameraView]) -> Result<PointCloudSeed> {
    for m in &matches.pairs {
        find_view(views, m.view_s)?;
        find_view(views, m.view_t)?;
    }
    let points = map_range(matches.len(), true, |i| -> Result<Option<(Vector3<f64>, [f64; 3])>> {
        let m = &matches.pairs[i];
        let vs = find_view(views, m.view_s)?;
        let vt = find_view(views, m.view_t)?;
        let (p, valid) = triangulate_midpoint(&pixel_ray(vs, m.pixel_s)?, &pixel_ray(vt, m.pixel_t)?);
        if !valid {
            return Ok(None);
        }
        let cs = vs.image.sample_rgb(m.pixel_s.0, m.pixel_s.1);
        let ct = vt.image.sample_rgb(m.pixel_t.0, m.pixel_t.1);
        let color = [0, 1, 2].map(|c| ((cs[c] + ct[c]) / 2.0).clamp(0.0, 1.0));
        Ok(Some((p, color)))
    });
    let mut cloud = PointCloudSeed::default();
    for p in points {
        if let Some((pos, color)) = p? {
            cloud.push(pos, color, PointSource::Matched);
        }
    }
    Ok(cloud)
}

fn nearest_distances(points: &[Vector3<f64>], i: usize, k: usize) -> Vec<f64> {
    let mut d: Vec<f64> = points
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, q)| (points[i] - q).norm())
        .collect();
    let k = k.min(d.len());
    if k == 0 {
        return Vec::new();
    }
    d.select_nth_unstable_by(k - 1, f64::total_cmp);
    d.truncate(k);
    d
}

/// Mean distance from each point to its `k` nearest other points (brute force).
pub fn knn_mean_distance(points: &[Vector3<f64>], k: usize) -> Vec<f64> {
    map_range(points.len(), true, |i| {
        let d = nearest_distances(points, i, k);
        if d.is_empty() {
            0.0
        } else {
            d.iter().sum::<f64>() / d.len() as f64
        }
    })
}

/// Mean squared distance to the `k` nearest other points.
pub fn knn_mean_sq_distance(points: &[Vector3<f64>], k: usize) -> Vec<f64> {
    map_range(points.len(), true, |i| {
        let d = nearest_distances(points, i, k);
        if d.is_empty() {
            0.0
        } else {
            d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64
        }
    })
}

/// Statistical k-NN filter over the Matched points. Filled points always
/// survive; clouds with at most `k` Matched points pass through.
pub fn filter_outliers(cloud: &PointCloudSeed, k: usize, std_ratio: f64) -> PointCloudSeed {
    let matched: Vec<usize> = (0..cloud.len())
        .filter(|&i| cloud.source[i] == PointSource::Matched)
        .collect();
    if k == 0 || matched.len() <= k {
        return cloud.clone();
    }
    let pts: Vec<Vector3<f64>> = matched.iter().map(|&i| cloud.positions[i]).collect();
    let stat = knn_mean_distance(&pts, k);
    let n = stat.len() as f64;
    let mean = stat.iter().sum::<f64>() / n;
    let var = stat.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    let limit = mean + std_ratio * sqrt(var);
    let mut keep = alloc::vec![true; cloud.len()];
    for (slot, &i) in matched.iter().enumerate() {
        keep[i] = stat[slot] <= limit;
    }
    cloud.select(&keep)
}

fn voxel_of(p: &Vector3<f64>, b_min: &Vector3<f64>, size: &Vector3<f64>, r: usize) -> [usize; 3] {
    let mut idx = [0usize; 3];
    for a in 0..3 {
        let f = floor((p[a] - b_min[a]) / size[a]);
        idx[a] = if f.is_nan() || f < 0.0 {
            0
        } else {
            (f as usize).min(r - 1)
        };
    }
    idx
}

/// Voxel index of `p` in an `r³` grid over the box, clamped per axis.
pub fn voxel_index(p: &Vector3<f64>, b_min: &Vector3<f64>, b_max: &Vector3<f64>, resolution: usize) -> [usize; 3] {
    let size = (b_max - b_min) / resolution as f64;
    voxel_of(p, b_min, &size, resolution)
}

/// Appends up to `n_fill` uniform points whose voxel holds no Matched point.
pub fn random_fill(
    cloud: &PointCloudSeed,
    b_min: &Vector3<f64>,
    b_max: &Vector3<f64>,
    n_fill: usize,
    resolution: usize,
    seed: u64,
) -> Result<PointCloudSeed> {
    let extent = b_max - b_min;
    if !extent.iter().all(|e| e.is_finite() && *e > 0.0) {
        return Err(Error::DegenerateBox);
    }
    if resolution == 0 {
        return Err(Error::InvalidConfig("fill resolution must be at least 1".into()));
    }
    let size = extent / resolution as f64;
    let occupied: BTreeSet<[usize; 3]> = cloud
        .positions
        .iter()
        .zip(&cloud.source)
        .filter(|(_, s)| **s == PointSource::Matched)
        .map(|(p, _)| voxel_of(p, b_min, &size, resolution))
        .collect();
    let mut rng = rng::derive(seed, 0xf111);
    let mut out = cloud.clone();
    for _ in 0..n_fill {
        let p = Vector3::new(
            rng::uniform(&mut rng, b_min.x, b_max.x),
            rng::uniform(&mut rng, b_min.y, b_max.y),
            rng::uniform(&mut rng, b_min.z, b_max.z),
        );
        let color = [0; 3].map(|_| rng::uniform(&mut rng, 0.0, 1.0));
        if !occupied.contains(&voxel_of(&p, b_min, &size, resolution)) {
            out.push(p, color, PointSource::Filled);
        }
    }
    Ok(out)
}

/// Axis-aligned box around the Matched points, dilated by 10% per side.
/// Without Matched points the box spans the camera centres and a point on
/// each optical axis one baseline ahead.
pub fn default_bbox(cloud: &PointCloudSeed, views: &[CameraView]) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let mut pts: Vec<Vector3<f64>> = cloud
        .positions
        .iter()
        .zip(&cloud.source)
        .filter(|(_, s)| **s == PointSource::Matched)
        .map(|(p, _)| *p)
        .collect();
    if pts.is_empty() {
        let centres: Vec<Vector3<f64>> = views.iter().map(|v| v.center()).collect();
        let mut baseline: f64 = 0.0;
        for a in &centres {
            for b in &centres {
                baseline = baseline.max((a - b).norm());
            }
        }
        let reach = baseline.max(1.0);
        for (v, c) in views.iter().zip(&centres) {
            let axis = v.rotation.row(2).transpose();
            pts.push(*c);
            pts.push(c + axis * reach);
        }
    }
    if pts.is_empty() {
        return Err(Error::DegenerateBox);
    }
    let mut lo = pts[0];
    let mut hi = pts[0];
    for p in &pts {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let extent = hi - lo;
    let floor_pad = 0.1 * extent.max().max(1e-3);
    for a in 0..3 {
        let pad = if extent[a] > 0.0 { 0.1 * extent[a] } else { floor_pad };
        lo[a] -= pad;
        hi[a] += pad;
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitConfig {
    /// `(k, std_ratio)`; the outlier filter is off when `None`.
    pub outlier_filter: Option<(usize, f64)>,
    /// Number of fill candidates; `None` picks `min(1000·views, 5000)`.
    pub n_fill: Option<usize>,
    pub resolution: usize,
    pub bbox: Option<(Vector3<f64>, Vector3<f64>)>,
    pub seed: u64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            outlier_filter: None,
            n_fill: None,
            resolution: 32,
            bbox: None,
            seed: 0,
        }
    }
}

pub const DEFAULT_FILTER_K: usize = 8;
pub const DEFAULT_FILTER_STD_RATIO: f64 = 2.0;

pub fn default_fill_count(n_views: usize) -> usize {
    (10 * n_views * 100).min(5000)
}

/// Midpoints, optional outlier filter, then voxel-excluded fill.
pub fn initialize(matches: &CorrespondenceSet, views: &[CameraView], cfg: &InitConfig) -> Result<PointCloudSeed> {
    let mut cloud = build_seed_cloud(matches, views)?;
    if let Some((k, ratio)) = cfg.outlier_filter {
        cloud = filter_outliers(&cloud, k, ratio);
    }
    let n_fill = cfg.n_fill.unwrap_or_else(|| default_fill_count(views.len()));
    if n_fill == 0 {
        return Ok(cloud);
    }
    let (lo, hi) = match cfg.bbox {
        Some(b) => b,
        None => default_bbox(&cloud, views)?,
    };
    random_fill(&cloud, &lo, &hi, n_fill, cfg.resolution, cfg.seed)
}

/// Oracle correspondences: ground-truth points projected into two random
/// training views that both see them, with Gaussian pixel noise.
pub fn generate_matches(
    scene: &SyntheticScene,
    views: &[CameraView],
    n_matches: usize,
    pixel_noise_std: f64,
    seed: u64,
) -> Result<CorrespondenceSet> {
    let candidates: Vec<(Vector3<f64>, Vec<usize>)> = scene
        .surface_samples
        .iter()
        .map(|s| {
            let vis: Vec<usize> = (0..views.len()).filter(|&v| sees(&views[v], &s.point)).collect();
            (s.point, vis)
        })
        .filter(|(_, vis)| vis.len() >= 2)
        .collect();
    if candidates.is_empty() {
        return Err(Error::InsufficientVisibility);
    }
    let mut rng = rng::derive(seed, 0x3a7c);
    let mut pairs = Vec::with_capacity(n_matches);
    for _ in 0..n_matches {
        let (p, vis) = &candidates[rng::below(&mut rng, candidates.len())];
        let a = rng::below(&mut rng, vis.len());
        let mut b = rng::below(&mut rng, vis.len() - 1);
        if b >= a {
            b += 1;
        }
        let mut pixel = |view: &CameraView| -> Result<(f64, f64)> {
            let (u, v, _) = project_point(p, view)?;
            let nu = u + pixel_noise_std * rng::normal(&mut rng);
            let nv = v + pixel_noise_std * rng::normal(&mut rng);
            Ok((
                nu.clamp(0.0, (view.width - 1) as f64),
                nv.clamp(0.0, (view.height - 1) as f64),
            ))
        };
        let (vs, vt) = (&views[vis[a]], &views[vis[b]]);
        let pixel_s = pixel(vs)?;
        let pixel_t = pixel(vt)?;
        pairs.push(Match {
            view_s: vs.view_id,
            view_t: vt.view_id,
            pixel_s,
            pixel_t,
            confidence: 1.0,
        });
    }
    Ok(CorrespondenceSet { pairs })
}
