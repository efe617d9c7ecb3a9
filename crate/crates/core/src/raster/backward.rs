//! Analytic adjoint of the forward render.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Matrix2, Vector3};

use super::{
    conic_vjp, covariance_of, project_covariance_vjp, raw_params, row_spans, ForwardState, Renderer,
    Splat, DEPTH_ALPHA_MIN, TRANSMITTANCE_MIN,
};
use crate::error::{Error, Result};
use crate::gaussian::{covariance_vjp, GaussianField};
use crate::geometry::CameraView;
use crate::image::Image;
use crate::par::map_range;
use crate::sh;

/// Gradients of a scalar loss with respect to every raw field parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct SplatGradients {
    pub d_positions: Vec<f64>,
    pub d_rotations: Vec<f64>,
    pub d_log_scales: Vec<f64>,
    pub d_opacity_logits: Vec<f64>,
    pub d_sh: Vec<f64>,
    /// Norm of the gradient on the projected mean, in NDC units.
    pub d_mean2d_norm: Vec<f64>,
    /// Primitives that produced a splat in this view.
    pub visible: Vec<bool>,
}

impl SplatGradients {
    pub fn zeros(field: &GaussianField) -> Self {
        let m = field.len();
        Self {
            d_positions: vec![0.0; 3 * m],
            d_rotations: vec![0.0; 4 * m],
            d_log_scales: vec![0.0; 3 * m],
            d_opacity_logits: vec![0.0; m],
            d_sh: vec![0.0; field.sh_len() * 3 * m],
            d_mean2d_norm: vec![0.0; m],
            visible: vec![false; m],
        }
    }

    pub fn len(&self) -> usize {
        self.d_opacity_logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All raw-parameter gradients chained in a fixed order.
    pub fn iter_all(&self) -> impl Iterator<Item = f64> + '_ {
        self.d_positions
            .iter()
            .chain(&self.d_rotations)
            .chain(&self.d_log_scales)
            .chain(&self.d_opacity_logits)
            .chain(&self.d_sh)
            .copied()
    }
}

/// Screen-space gradient accumulated for one splat.
#[derive(Debug, Clone, Copy, Default)]
struct ScreenGrad {
    mean: [f64; 2],
    conic: [f64; 3],
    opacity: f64,
    color: [f64; 3],
    dist: f64,
}

impl ScreenGrad {
    fn add(&mut self, o: &ScreenGrad) {
        for k in 0..2 {
            self.mean[k] += o.mean[k];
        }
        for k in 0..3 {
            self.conic[k] += o.conic[k];
            self.color[k] += o.color[k];
        }
        self.opacity += o.opacity;
        self.dist += o.dist;
    }
}

struct Contribution {
    slot: usize,
    alpha: f64,
    g: f64,
    dx: f64,
    dy: f64,
    clamped: bool,
    transmittance: f64,
}

impl Renderer {
    /// Gradients of `L = Σ d_color·color + d_depth·depth_normalized`.
    pub fn backward(
        &self,
        field: &GaussianField,
        view: &CameraView,
        background: [f64; 3],
        state: &ForwardState,
        d_color: &Image,
        d_depth: &Image,
    ) -> Result<SplatGradients> {
        self.check_state(field, view, background, state)?;
        let (w, h) = (view.width, view.height);
        if d_color.width != w || d_color.height != h || d_color.channels != 3 {
            return Err(Error::ShapeMismatch(alloc::format!(
                "color gradient is {}x{}x{}, render is {w}x{h}x3",
                d_color.width,
                d_color.height,
                d_color.channels
            )));
        }
        if d_depth.width != w || d_depth.height != h || d_depth.channels != 1 {
            return Err(Error::ShapeMismatch(alloc::format!(
                "depth gradient is {}x{}x{}, render is {w}x{h}x1",
                d_depth.width,
                d_depth.height,
                d_depth.channels
            )));
        }

        let partials = map_range(state.tiles.len(), self.parallel, |t| {
            self.backward_tile(state, view, t, d_color, d_depth)
        });
        let mut screen = vec![ScreenGrad::default(); state.splats.len()];
        for (t, local) in partials.iter().enumerate() {
            for (slot, g) in local.iter().enumerate() {
                screen[state.tiles[t][slot] as usize].add(g);
            }
        }

        let per_splat = map_range(state.splats.len(), self.parallel, |k| {
            splat_to_params(field, view, &state.splats[k], &screen[k])
        });
        let mut grads = SplatGradients::zeros(field);
        let b3 = field.sh_len() * 3;
        for (k, (s, p)) in state.splats.iter().zip(per_splat).enumerate() {
            let i = s.index;
            grads.d_positions[3 * i..3 * i + 3].copy_from_slice(&p.position);
            grads.d_rotations[4 * i..4 * i + 4].copy_from_slice(&p.rotation);
            grads.d_log_scales[3 * i..3 * i + 3].copy_from_slice(&p.log_scale);
            grads.d_opacity_logits[i] = p.opacity_logit;
            grads.d_sh[i * b3..(i + 1) * b3].copy_from_slice(&p.sh);
            let gx = screen[k].mean[0] * w as f64 * 0.5;
            let gy = screen[k].mean[1] * h as f64 * 0.5;
            grads.d_mean2d_norm[i] = crate::math::sqrt(gx * gx + gy * gy);
            grads.visible[i] = true;
        }
        Ok(grads)
    }

    fn backward_tile(
        &self,
        state: &ForwardState,
        view: &CameraView,
        tile: usize,
        d_color: &Image,
        d_depth: &Image,
    ) -> Vec<ScreenGrad> {
        let list = &state.tiles[tile];
        let packed = &state.packed[tile];
        let mut local = vec![ScreenGrad::default(); list.len()];
        if list.is_empty() {
            return local;
        }
        let (x0, y0, x1, y1) = self.tile_bounds(view, tile, state.tiles_x);
        let mut contribs: Vec<Contribution> = Vec::new();
        let mut spans = Vec::new();
        for y in y0..y1 {
            row_spans(packed, y as u32, x0 as u32, x1 as u32, &mut spans);
            for x in x0..x1 {
                let (px, py) = (x as f64, y as f64);
                contribs.clear();
                let mut t = 1.0;
                let mut depth = 0.0;
                for &(slot, lo, hi) in &spans {
                    if (x as u32) < lo || (x as u32) > hi {
                        continue;
                    }
                    let slot = slot as usize;
                    let s = &packed[slot];
                    let Some((alpha, g, dx, dy, clamped)) = s.alpha(x as u32, y as u32, px, py) else {
                        continue;
                    };
                    contribs.push(Contribution {
                        slot,
                        alpha,
                        g,
                        dx,
                        dy,
                        clamped,
                        transmittance: t,
                    });
                    depth += s.dist * alpha * t;
                    t *= 1.0 - alpha;
                    if t < TRANSMITTANCE_MIN {
                        break;
                    }
                }
                if contribs.is_empty() {
                    continue;
                }
                let p = y * view.width + x;
                let dc = [d_color.data[3 * p], d_color.data[3 * p + 1], d_color.data[3 * p + 2]];
                let ddn = d_depth.data[p];
                let acc = 1.0 - t;
                let (d_raw_depth, d_acc) = if acc > DEPTH_ALPHA_MIN {
                    (ddn / acc, -ddn * depth / (acc * acc))
                } else {
                    (0.0, 0.0)
                };
                // acc = 1 - T_final, and the background enters with weight T_final
                let d_tfinal = dc[0] * state.background[0] + dc[1] * state.background[1] + dc[2] * state.background[2]
                    - d_acc;
                let t_final = t;
                let mut suffix_color = [0.0; 3];
                let mut suffix_depth = 0.0;
                for c in contribs.iter().rev() {
                    let s = &packed[c.slot];
                    let wgt = c.alpha * c.transmittance;
                    let inv = 1.0 / (1.0 - c.alpha);
                    let g = &mut local[c.slot];
                    let mut d_alpha = 0.0;
                    for ch in 0..3 {
                        g.color[ch] += dc[ch] * wgt;
                        d_alpha += dc[ch] * (c.transmittance * s.color[ch] - suffix_color[ch] * inv);
                    }
                    g.dist += d_raw_depth * wgt;
                    d_alpha += d_raw_depth * (c.transmittance * s.dist - suffix_depth * inv);
                    d_alpha -= d_tfinal * t_final * inv;
                    for ch in 0..3 {
                        suffix_color[ch] += s.color[ch] * wgt;
                    }
                    suffix_depth += s.dist * wgt;

                    if c.clamped {
                        continue;
                    }
                    g.opacity += d_alpha * c.g;
                    let d_g = d_alpha * s.opacity;
                    let d_q = -0.5 * c.g * d_g;
                    let [a, b, cc] = s.conic;
                    g.conic[0] += d_q * c.dx * c.dx;
                    g.conic[1] += d_q * 2.0 * c.dx * c.dy;
                    g.conic[2] += d_q * c.dy * c.dy;
                    g.mean[0] += -d_q * (2.0 * a * c.dx + 2.0 * b * c.dy);
                    g.mean[1] += -d_q * (2.0 * b * c.dx + 2.0 * cc * c.dy);
                }
            }
        }
        local
    }
}

struct ParamGrad {
    position: [f64; 3],
    rotation: [f64; 4],
    log_scale: [f64; 3],
    opacity_logit: f64,
    sh: Vec<f64>,
}

fn splat_to_params(field: &GaussianField, view: &CameraView, s: &Splat, g: &ScreenGrad) -> ParamGrad {
    let i = s.index;
    let (mu, q_raw, log_scale) = raw_params(field, i);
    let nb = field.sh_len();

    let opacity_logit = g.opacity * s.opacity * (1.0 - s.opacity);

    // colour: clamp, SH coefficients, then view direction
    let mut d_raw_color = [0.0; 3];
    for c in 0..3 {
        if !s.color_clamped[c] {
            d_raw_color[c] = g.color[c];
        }
    }
    let basis = sh::basis(&s.view_dir, field.sh_degree);
    let mut d_sh = vec![0.0; nb * 3];
    for b in 0..nb {
        for c in 0..3 {
            d_sh[b * 3 + c] = basis[b] * d_raw_color[c];
        }
    }
    let mut d_mu = Vector3::zeros();
    if field.sh_degree > 0 {
        let grad = sh::basis_gradient(&s.view_dir, field.sh_degree);
        let coeffs = field.sh(i);
        let mut d_dir = Vector3::zeros();
        for b in 1..nb {
            let w: f64 = (0..3).map(|c| coeffs[b * 3 + c] * d_raw_color[c]).sum();
            d_dir += Vector3::new(grad[b][0], grad[b][1], grad[b][2]) * w;
        }
        let dir = Vector3::new(s.view_dir[0], s.view_dir[1], s.view_dir[2]);
        d_mu += (d_dir - dir * dir.dot(&d_dir)) / s.dist;
    }

    // composited distance ‖μ - o‖
    let center = view.center();
    d_mu += (mu - center) / s.dist * g.dist;

    // projected mean
    let t = s.cam;
    let iz = 1.0 / t.z;
    let mut d_t = Vector3::new(
        view.fx * iz * g.mean[0],
        view.fy * iz * g.mean[1],
        -view.fx * t.x * iz * iz * g.mean[0] - view.fy * t.y * iz * iz * g.mean[1],
    );

    // conic -> 2D covariance -> 3D covariance and camera-frame mean
    let d_cov2d: Matrix2<f64> = conic_vjp(&s.cov2d, &g.conic);
    let sigma = covariance_of(field, i);
    let (d_sigma, d_t_cov) = project_covariance_vjp(&sigma, &t, view, &d_cov2d);
    d_t += d_t_cov;
    d_mu += view.rotation.transpose() * d_t;

    let (d_q, d_ls) = covariance_vjp(&q_raw, &log_scale, &d_sigma).unwrap_or_default();

    ParamGrad {
        position: [d_mu.x, d_mu.y, d_mu.z],
        rotation: [d_q[0], d_q[1], d_q[2], d_q[3]],
        log_scale: [d_ls[0], d_ls[1], d_ls[2]],
        opacity_logit,
        sh: d_sh,
    }
}
