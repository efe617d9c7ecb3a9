//! Differentiable CPU rasterizer.
//!
//! A render projects every primitive once, sorts the visible splats globally
//! by camera-frame depth (ties by primitive index), bins them into square
//! tiles and composites each pixel front to back. Tiles are independent, so
//! they run in parallel when the `std` feature is on; all reductions happen
//! in tile order and the output does not depend on the worker count.

mod backward;
mod project;
pub mod reference;

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Matrix2, Matrix3, Vector3, Vector4};

pub use backward::SplatGradients;
pub use project::{perspective_jacobian, project_covariance, LOW_PASS};
pub(crate) use project::{conic, conic_vjp, project_covariance_camera, project_covariance_vjp};

use crate::error::{Error, Result};
use crate::gaussian::{covariance_from, GaussianField};
use crate::geometry::CameraView;
use crate::image::Image;
use crate::math::{ceil, exp, floor, ln, sqrt};
use crate::par::map_range;
use crate::sh;

/// Splats with camera-frame depth at or below this are not rendered.
pub const NEAR_PLANE: f64 = 0.01;
/// Per-splat opacity ceiling.
pub const ALPHA_MAX: f64 = 0.99;
/// Splats contributing less than this at a pixel are skipped.
pub const ALPHA_MIN: f64 = 1.0 / 255.0;
/// Compositing stops once transmittance falls below this.
pub const TRANSMITTANCE_MIN: f64 = 1e-4;
/// Accumulated alpha below which normalized depth is reported as zero.
pub const DEPTH_ALPHA_MIN: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    /// H×W×3, background composited.
    pub color: Image,
    /// H×W composited distance to the camera centre.
    pub depth: Image,
    /// `depth / alpha` where alpha exceeds 1e-4, else 0.
    pub depth_normalized: Image,
    pub alpha: Image,
    pub contrib_count: Vec<u32>,
}

/// A primitive after projection into one view.
#[derive(Debug, Clone)]
pub(crate) struct Splat {
    pub index: usize,
    pub cam: Vector3<f64>,
    pub mean: [f64; 2],
    pub cov2d: Matrix2<f64>,
    pub conic: [f64; 3],
    pub opacity: f64,
    pub color: [f64; 3],
    pub color_clamped: [bool; 3],
    pub depth: f64,
    pub view_dir: [f64; 3],
    pub dist: f64,
    /// Inclusive pixel bounds `[x0, y0, x1, y1]`.
    pub rect: [usize; 4],
}

impl Splat {
    /// Quadratic form and Gaussian falloff at pixel `(px, py)`.
    #[inline]
    pub fn falloff(&self, px: f64, py: f64) -> (f64, f64, f64, f64) {
        let dx = px - self.mean[0];
        let dy = py - self.mean[1];
        let [a, b, c] = self.conic;
        let q = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy;
        (exp(-0.5 * q), q, dx, dy)
    }
}

/// Compact copy of the fields the per-pixel loops read, stored per tile.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Packed {
    pub mean: [f64; 2],
    pub conic: [f64; 3],
    pub opacity: f64,
    /// Quadratic-form value beyond which `opacity·G` is certainly below the alpha floor.
    pub q_cut: f64,
    pub color: [f64; 3],
    pub dist: f64,
    pub rect: [u32; 4],
}

impl Packed {
    fn new(s: &Splat) -> Self {
        Self {
            mean: s.mean,
            conic: s.conic,
            opacity: s.opacity,
            q_cut: 2.0 * ln(s.opacity / ALPHA_MIN) + 1e-6,
            color: s.color,
            dist: s.dist,
            rect: s.rect.map(|r| r as u32),
        }
    }

    /// Same result as [`splat_alpha`] on the source splat.
    #[inline(always)]
    pub fn alpha(&self, x: u32, y: u32, px: f64, py: f64) -> Option<(f64, f64, f64, f64, bool)> {
        if x < self.rect[0] || x > self.rect[2] || y < self.rect[1] || y > self.rect[3] {
            return None;
        }
        let dx = px - self.mean[0];
        let dy = py - self.mean[1];
        let [a, b, c] = self.conic;
        let q = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy;
        if q > self.q_cut {
            return None;
        }
        let g = exp(-0.5 * q);
        let raw = self.opacity * g;
        let alpha = raw.min(ALPHA_MAX);
        if alpha < ALPHA_MIN {
            return None;
        }
        Some((alpha, g, dx, dy, raw > ALPHA_MAX))
    }

    /// Conservative pixel columns on row `y` where `q ≤ q_cut`, clipped to
    /// the splat rectangle. Every pixel outside the span fails [`Packed::alpha`].
    #[inline]
    fn span(&self, y: u32, py: f64) -> Option<(u32, u32)> {
        if y < self.rect[1] || y > self.rect[3] {
            return None;
        }
        let dy = py - self.mean[1];
        let [a, b, c] = self.conic;
        let disc = (b * dy) * (b * dy) - a * (c * dy * dy - self.q_cut);
        if disc < 0.0 {
            return None;
        }
        let root = sqrt(disc);
        let lo = floor(self.mean[0] + (-b * dy - root) / a) - 1.0;
        let hi = ceil(self.mean[0] + (-b * dy + root) / a) + 1.0;
        let lo = if lo > self.rect[0] as f64 { lo as u32 } else { self.rect[0] };
        let hi = if hi < self.rect[2] as f64 { hi as u32 } else { self.rect[2] };
        (lo <= hi).then_some((lo, hi))
    }
}

/// Candidate splats of one tile row: `(slot, x_lo, x_hi)` in compositing order.
pub(crate) fn row_spans(list: &[Packed], y: u32, x0: u32, x1: u32, out: &mut Vec<(u32, u32, u32)>) {
    out.clear();
    let py = y as f64;
    for (slot, s) in list.iter().enumerate() {
        if let Some((lo, hi)) = s.span(y, py) {
            if hi >= x0 && lo < x1 {
                out.push((slot as u32, lo, hi));
            }
        }
    }
}

/// Everything the backward pass needs from a forward render.
#[derive(Debug, Clone)]
pub struct ForwardState {
    view_id: u32,
    width: usize,
    height: usize,
    background: [f64; 3],
    fingerprint: u64,
    pub(crate) splats: Vec<Splat>,
    pub(crate) tiles: Vec<Vec<u32>>,
    pub(crate) packed: Vec<Vec<Packed>>,
    tiles_x: usize,
    tile_size: usize,
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub output: RenderOutput,
    pub state: ForwardState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Renderer {
    pub tile_size: usize,
    pub parallel: bool,
}

impl Default for Renderer {
    fn default() -> Self {
        Self {
            tile_size: 16,
            parallel: true,
        }
    }
}

/// Renders with the default tiled renderer.
pub fn render(field: &GaussianField, view: &CameraView, background: [f64; 3]) -> RenderOutput {
    Renderer::default().render(field, view, background).output
}

/// Forward then backward in one call.
pub fn render_backward(
    field: &GaussianField,
    view: &CameraView,
    background: [f64; 3],
    d_color: &Image,
    d_depth: &Image,
) -> Result<SplatGradients> {
    let r = Renderer::default();
    let frame = r.render(field, view, background);
    r.backward(field, view, background, &frame.state, d_color, d_depth)
}

pub(crate) fn field_fingerprint(field: &GaussianField) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut mix = |v: f64| {
        h ^= v.to_bits();
        h = h.wrapping_mul(0x0100_0000_01b3);
    };
    mix(field.len() as f64);
    mix(field.sh_degree as f64);
    for buf in [
        &field.positions,
        &field.rotations,
        &field.log_scales,
        &field.opacity_logits,
        &field.sh_coeffs,
    ] {
        buf.iter().copied().for_each(&mut mix);
    }
    h
}

/// Projects primitive `i`; `None` when it cannot touch any pixel.
pub(crate) fn project_splat(field: &GaussianField, i: usize, view: &CameraView) -> Option<Splat> {
    let mu = field.position(i);
    let cam = view.to_camera(&mu);
    if cam.z <= NEAR_PLANE {
        return None;
    }
    let opacity = field.opacity(i);
    if opacity < ALPHA_MIN {
        return None;
    }
    let sigma = covariance_from(&field.rotation_raw(i), &field.scale(i)).ok()?;
    let cov2d = project_covariance_camera(&sigma, &cam, view);
    let det = cov2d.determinant();
    if !(det > 0.0) {
        return None;
    }
    let (mx, my) = view.project_camera_frame(&cam);
    // Beyond this radius opacity·G < 1/255 and the splat is skipped anyway.
    let lambda_max = {
        let (a, b, c) = (cov2d[(0, 0)], cov2d[(0, 1)], cov2d[(1, 1)]);
        let mid = 0.5 * (a + c);
        mid + sqrt((mid * mid - (a * c - b * b)).max(0.0))
    };
    let radius = sqrt(2.0 * lambda_max * ln(opacity / ALPHA_MIN).max(0.0));
    let x0 = ceil(mx - radius).max(0.0);
    let y0 = ceil(my - radius).max(0.0);
    let x1 = floor(mx + radius).min((view.width - 1) as f64);
    let y1 = floor(my + radius).min((view.height - 1) as f64);
    if !(x0 <= x1 && y0 <= y1) {
        return None;
    }
    let center = view.center();
    let offset = mu - center;
    let dist = offset.norm();
    let dir = offset / dist;
    let view_dir = [dir.x, dir.y, dir.z];
    let basis = sh::basis(&view_dir, field.sh_degree);
    let raw = sh::eval_color(field.sh(i), &basis, field.sh_len());
    let mut color = [0.0; 3];
    let mut color_clamped = [false; 3];
    for c in 0..3 {
        color[c] = raw[c].clamp(0.0, 1.0);
        color_clamped[c] = raw[c] < 0.0 || raw[c] > 1.0;
    }
    Some(Splat {
        index: i,
        cam,
        mean: [mx, my],
        cov2d,
        conic: conic(&cov2d),
        opacity,
        color,
        color_clamped,
        depth: cam.z,
        view_dir,
        dist,
        rect: [x0 as usize, y0 as usize, x1 as usize, y1 as usize],
    })
}

/// Blending factor of a splat at a pixel: `(α̂, G, clamped)`, or `None` when skipped.
#[inline]
pub(crate) fn splat_alpha(s: &Splat, px: f64, py: f64) -> Option<(f64, f64, f64, f64, bool)> {
    let (g, _q, dx, dy) = s.falloff(px, py);
    let raw = s.opacity * g;
    let alpha = raw.min(ALPHA_MAX);
    if alpha < ALPHA_MIN {
        return None;
    }
    Some((alpha, g, dx, dy, raw > ALPHA_MAX))
}

struct TileResult {
    color: Vec<[f64; 3]>,
    depth: Vec<f64>,
    alpha: Vec<f64>,
    count: Vec<u32>,
}

impl Renderer {
    pub fn sequential() -> Self {
        Self {
            parallel: false,
            ..Self::default()
        }
    }

    fn tile_grid(&self, view: &CameraView) -> (usize, usize) {
        (
            view.width.div_ceil(self.tile_size),
            view.height.div_ceil(self.tile_size),
        )
    }

    fn tile_bounds(&self, view: &CameraView, tile: usize, tiles_x: usize) -> (usize, usize, usize, usize) {
        let tx = tile % tiles_x;
        let ty = tile / tiles_x;
        let x0 = tx * self.tile_size;
        let y0 = ty * self.tile_size;
        (x0, y0, (x0 + self.tile_size).min(view.width), (y0 + self.tile_size).min(view.height))
    }

    pub(crate) fn prepare(&self, field: &GaussianField, view: &CameraView, background: [f64; 3]) -> ForwardState {
        let mut splats: Vec<Splat> = map_range(field.len(), self.parallel, |i| project_splat(field, i, view))
            .into_iter()
            .flatten()
            .collect();
        splats.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));
        let (tiles_x, tiles_y) = self.tile_grid(view);
        let mut tiles = vec![Vec::new(); tiles_x * tiles_y];
        for (k, s) in splats.iter().enumerate() {
            let [x0, y0, x1, y1] = s.rect;
            for ty in y0 / self.tile_size..=y1 / self.tile_size {
                for tx in x0 / self.tile_size..=x1 / self.tile_size {
                    tiles[ty * tiles_x + tx].push(k as u32);
                }
            }
        }
        let packed = tiles
            .iter()
            .map(|list| list.iter().map(|&k| Packed::new(&splats[k as usize])).collect())
            .collect();
        ForwardState {
            packed,
            view_id: view.view_id,
            width: view.width,
            height: view.height,
            background,
            fingerprint: field_fingerprint(field),
            splats,
            tiles,
            tiles_x,
            tile_size: self.tile_size,
        }
    }

    pub fn render(&self, field: &GaussianField, view: &CameraView, background: [f64; 3]) -> Frame {
        let state = self.prepare(field, view, background);
        let results = map_range(state.tiles.len(), self.parallel, |t| self.render_tile(&state, view, t));
        let (w, h) = (view.width, view.height);
        let mut output = RenderOutput {
            color: Image::new(w, h, 3),
            depth: Image::new(w, h, 1),
            depth_normalized: Image::new(w, h, 1),
            alpha: Image::new(w, h, 1),
            contrib_count: vec![0; w * h],
        };
        for (t, r) in results.into_iter().enumerate() {
            let (x0, y0, x1, _) = self.tile_bounds(view, t, state.tiles_x);
            let tw = x1 - x0;
            for (k, rgb) in r.color.iter().enumerate() {
                let (x, y) = (x0 + k % tw, y0 + k / tw);
                let p = y * w + x;
                for c in 0..3 {
                    output.color.data[3 * p + c] = rgb[c];
                }
                output.depth.data[p] = r.depth[k];
                output.alpha.data[p] = r.alpha[k];
                output.depth_normalized.data[p] = if r.alpha[k] > DEPTH_ALPHA_MIN {
                    r.depth[k] / r.alpha[k]
                } else {
                    0.0
                };
                output.contrib_count[p] = r.count[k];
            }
        }
        Frame { output, state }
    }

    fn render_tile(&self, state: &ForwardState, view: &CameraView, tile: usize) -> TileResult {
        let (x0, y0, x1, y1) = self.tile_bounds(view, tile, state.tiles_x);
        let n = (x1 - x0) * (y1 - y0);
        let mut out = TileResult {
            color: Vec::with_capacity(n),
            depth: Vec::with_capacity(n),
            alpha: Vec::with_capacity(n),
            count: Vec::with_capacity(n),
        };
        let list = &state.packed[tile];
        let mut spans = Vec::new();
        for y in y0..y1 {
            row_spans(list, y as u32, x0 as u32, x1 as u32, &mut spans);
            for x in x0..x1 {
                let (px, py) = (x as f64, y as f64);
                let mut t = 1.0;
                let mut rgb = [0.0; 3];
                let mut depth = 0.0;
                let mut count = 0;
                for &(slot, lo, hi) in &spans {
                    if (x as u32) < lo || (x as u32) > hi {
                        continue;
                    }
                    let s = &list[slot as usize];
                    let Some((alpha, ..)) = s.alpha(x as u32, y as u32, px, py) else {
                        continue;
                    };
                    let w = alpha * t;
                    for c in 0..3 {
                        rgb[c] += s.color[c] * w;
                    }
                    depth += s.dist * w;
                    t *= 1.0 - alpha;
                    count += 1;
                    if t < TRANSMITTANCE_MIN {
                        break;
                    }
                }
                for c in 0..3 {
                    rgb[c] += t * state.background[c];
                }
                out.color.push(rgb);
                out.depth.push(depth);
                out.alpha.push(1.0 - t);
                out.count.push(count);
            }
        }
        out
    }

    /// Blending weights `(primitive index, α̂ T)` at one pixel, in compositing order.
    pub fn pixel_weights(&self, state: &ForwardState, x: usize, y: usize) -> Vec<(usize, f64)> {
        let tile = (y / state.tile_size) * state.tiles_x + x / state.tile_size;
        let mut t = 1.0;
        let mut out = Vec::new();
        for &k in &state.tiles[tile] {
            let s = &state.splats[k as usize];
            if !in_rect(s, x, y) {
                continue;
            }
            let Some((alpha, ..)) = splat_alpha(s, x as f64, y as f64) else {
                continue;
            };
            out.push((s.index, alpha * t));
            t *= 1.0 - alpha;
            if t < TRANSMITTANCE_MIN {
                break;
            }
        }
        out
    }

    pub(crate) fn check_state(
        &self,
        field: &GaussianField,
        view: &CameraView,
        background: [f64; 3],
        state: &ForwardState,
    ) -> Result<()> {
        let matches = state.view_id == view.view_id
            && state.width == view.width
            && state.height == view.height
            && state.background == background
            && state.tile_size == self.tile_size
            && state.fingerprint == field_fingerprint(field);
        if matches {
            Ok(())
        } else {
            Err(Error::ForwardStateMissing)
        }
    }
}

#[inline]
pub(crate) fn in_rect(s: &Splat, x: usize, y: usize) -> bool {
    x >= s.rect[0] && x <= s.rect[2] && y >= s.rect[1] && y <= s.rect[3]
}

/// Raw parameters of one primitive as nalgebra types.
pub(crate) fn raw_params(field: &GaussianField, i: usize) -> (Vector3<f64>, Vector4<f64>, Vector3<f64>) {
    let ls = Vector3::new(
        field.log_scales[3 * i],
        field.log_scales[3 * i + 1],
        field.log_scales[3 * i + 2],
    );
    (field.position(i), field.rotation_raw(i), ls)
}

pub(crate) fn covariance_of(field: &GaussianField, i: usize) -> Matrix3<f64> {
    covariance_from(&field.rotation_raw(i), &field.scale(i)).unwrap_or_else(|_| Matrix3::zeros())
}
