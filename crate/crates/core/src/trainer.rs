//! Optimization loop.
//!
//! Iterations are numbered from 1. Each iteration renders one training view,
//! back-propagates the photometric loss (plus the gated depth term), takes an
//! Adam step and then fires any scheduled events in a fixed order: base
//! densification, opacity reset, feature-guided pruning.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::gaussian::{max_scale, retain_rows, rotation_matrix, GaussianField, Primitive};
use crate::geometry::CameraView;
use crate::image::Image;
use crate::initializer::{knn_mean_sq_distance, PointCloudSeed};
use crate::losses::{
    eadr_loss_grad, eadr_weight, photometric_loss_grad, LossBreakdown, DEFAULT_EADR_BETA, DEFAULT_LAMBDA_DSSIM,
};
use crate::math::{exp, ln, logit, pow, sqrt};
use crate::pruning::{apply_prune, compute_prune_mask, FeatureStack};
use crate::raster::{Renderer, SplatGradients};
use crate::rng;
use crate::sh::{self, rgb_to_dc};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrainPreset {
    /// Three pruning steps, thresholds 0.75 / 0.8 / 0.85.
    ForwardFacing,
    /// Four pruning steps, thresholds 0.6 / 0.65 / 0.7 / 0.8.
    Panoramic,
}

impl TrainPreset {
    pub fn name(self) -> &'static str {
        match self {
            TrainPreset::ForwardFacing => "forward_facing",
            TrainPreset::Panoramic => "panoramic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "forward_facing" | "forward-facing" => Ok(TrainPreset::ForwardFacing),
            "panoramic" => Ok(TrainPreset::Panoramic),
            other => Err(Error::InvalidConfig(format!("unknown training preset `{other}`"))),
        }
    }

    pub fn prune_steps(self) -> usize {
        match self {
            TrainPreset::ForwardFacing => 3,
            TrainPreset::Panoramic => 4,
        }
    }

    /// Full threshold list; the first `prune_steps()` entries are used.
    pub fn tau_list(self) -> [f64; 4] {
        match self {
            TrainPreset::ForwardFacing => [0.75, 0.8, 0.85, 0.85],
            TrainPreset::Panoramic => [0.6, 0.65, 0.7, 0.8],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub total_iters: usize,
    pub position_lr_init: f64,
    pub position_lr_final: f64,
    pub rotation_lr: f64,
    pub scale_lr: f64,
    pub opacity_lr: f64,
    /// Learning rate of the constant SH band; higher bands use a twentieth.
    pub sh_lr: f64,
    pub densify_interval: usize,
    pub opacity_reset_interval: usize,
    pub densify_grad_threshold: f64,
    pub densify_until_iter: usize,
    /// Clone below, split above this fraction of the scene extent.
    pub percent_dense: f64,
    pub min_opacity: f64,
    pub prune_steps_total: usize,
    pub prune_i_step: usize,
    pub tau_schedule: Vec<f64>,
    pub level_dims: Vec<usize>,
    pub sh_degree: usize,
    pub background: [f64; 3],
    pub seed: u64,
    pub preset: TrainPreset,
    pub lambda_dssim: f64,
    pub eadr_beta: f64,
    pub eadr_depth_scale: f64,
    pub mvc_prune: bool,
    pub eadr: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::preset(TrainPreset::ForwardFacing)
    }
}

impl TrainConfig {
    pub fn preset(preset: TrainPreset) -> Self {
        let t = preset.prune_steps();
        Self {
            total_iters: 10_000,
            position_lr_init: 0.0016,
            position_lr_final: 0.000016,
            rotation_lr: 0.001,
            scale_lr: 0.005,
            opacity_lr: 0.05,
            sh_lr: 0.0025,
            densify_interval: 300,
            opacity_reset_interval: 1000,
            densify_grad_threshold: 0.0005,
            densify_until_iter: 5000,
            percent_dense: 0.01,
            min_opacity: 0.005,
            prune_steps_total: t,
            prune_i_step: 3000,
            tau_schedule: preset.tau_list()[..t].to_vec(),
            level_dims: vec![64, 64, 128, 256],
            sh_degree: 1,
            background: [0.0; 3],
            seed: 0,
            preset,
            lambda_dssim: DEFAULT_LAMBDA_DSSIM,
            eadr_beta: DEFAULT_EADR_BETA,
            eadr_depth_scale: 1.0,
            mvc_prune: true,
            eadr: true,
        }
    }

    /// Sets the iteration budget and moves the densification cut-off to half of it.
    pub fn with_total_iters(mut self, total: usize) -> Self {
        self.total_iters = total;
        self.densify_until_iter = total / 2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.total_iters == 0 {
            return bad("total_iters must be at least 1");
        }
        if self.densify_interval == 0 || self.opacity_reset_interval == 0 || self.prune_i_step == 0 {
            return bad("intervals must be at least 1");
        }
        if self.prune_steps_total == 0 {
            return bad("prune_steps_total must be at least 1");
        }
        if self.tau_schedule.len() != self.prune_steps_total {
            return Err(Error::InvalidConfig(format!(
                "tau schedule has {} entries, expected {}",
                self.tau_schedule.len(),
                self.prune_steps_total
            )));
        }
        if self.tau_schedule.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return bad("tau values must lie in (0, 1)");
        }
        let lrs = [
            self.position_lr_init,
            self.position_lr_final,
            self.rotation_lr,
            self.scale_lr,
            self.opacity_lr,
            self.sh_lr,
        ];
        if lrs.iter().any(|lr| !(*lr >= 0.0) || !lr.is_finite()) {
            return bad("learning rates must be finite and non-negative");
        }
        if self.level_dims.is_empty() || self.level_dims.contains(&0) {
            return bad("level dims must be non-empty and positive");
        }
        if self.sh_degree > sh::MAX_DEGREE {
            return bad("sh_degree must be at most 3");
        }
        if !(0.0..=1.0).contains(&self.lambda_dssim) || !(self.eadr_beta >= 0.0) {
            return bad("lambda_dssim must lie in [0, 1] and eadr_beta must be non-negative");
        }
        Ok(())
    }

    /// Iteration after which opacity resets stop.
    pub fn opacity_reset_until(&self) -> usize {
        self.prune_steps_total.saturating_sub(1) * self.prune_i_step
    }

    /// Pruning step `t` (1-based) scheduled at `iter`, if any.
    pub fn prune_step_at(&self, iter: usize) -> Option<usize> {
        if iter == 0 || iter % self.prune_i_step != 0 {
            return None;
        }
        let k = iter / self.prune_i_step;
        (k <= self.prune_steps_total).then_some(k)
    }
}

/// Log-linear decay from `position_lr_init` to `position_lr_final`.
pub fn position_lr(iter: usize, config: &TrainConfig) -> f64 {
    let t = (iter as f64 / config.total_iters as f64).clamp(0.0, 1.0);
    if config.position_lr_init <= 0.0 || config.position_lr_final <= 0.0 {
        return config.position_lr_init * (1.0 - t) + config.position_lr_final * t;
    }
    exp(ln(config.position_lr_init) * (1.0 - t) + ln(config.position_lr_final) * t)
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-15;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Moments {
    fn zeros(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    fn extend(&mut self, n: usize) {
        self.m.resize(self.m.len() + n, 0.0);
        self.v.resize(self.v.len() + n, 0.0);
    }

    fn retain(&mut self, width: usize, keep: &[bool]) {
        retain_rows(&mut self.m, width, keep);
        retain_rows(&mut self.v, width, keep);
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: impl Fn(usize) -> f64, step: u64) {
        let bc1 = 1.0 - pow(ADAM_BETA1, step as f64);
        let bc2 = 1.0 - pow(ADAM_BETA2, step as f64);
        for (k, p) in params.iter_mut().enumerate() {
            let g = grads[k];
            self.m[k] = ADAM_BETA1 * self.m[k] + (1.0 - ADAM_BETA1) * g;
            self.v[k] = ADAM_BETA2 * self.v[k] + (1.0 - ADAM_BETA2) * g * g;
            let lr = lr(k);
            if lr != 0.0 {
                *p -= lr * (self.m[k] / bc1) / (sqrt(self.v[k] / bc2) + ADAM_EPS);
            }
        }
    }
}

/// Adam moments for every parameter group, tracking the field's rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub positions: Moments,
    pub rotations: Moments,
    pub log_scales: Moments,
    pub opacity: Moments,
    pub sh: Moments,
}

impl OptimizerState {
    pub fn for_field(field: &GaussianField) -> Self {
        Self {
            step: 0,
            positions: Moments::zeros(field.positions.len()),
            rotations: Moments::zeros(field.rotations.len()),
            log_scales: Moments::zeros(field.log_scales.len()),
            opacity: Moments::zeros(field.opacity_logits.len()),
            sh: Moments::zeros(field.sh_coeffs.len()),
        }
    }

    fn groups_mut(&mut self, sh_width: usize) -> [(&mut Moments, usize); 5] {
        [
            (&mut self.positions, 3),
            (&mut self.rotations, 4),
            (&mut self.log_scales, 3),
            (&mut self.opacity, 1),
            (&mut self.sh, sh_width),
        ]
    }

    fn extend(&mut self, n: usize, sh_width: usize) {
        for (g, w) in self.groups_mut(sh_width) {
            g.extend(n * w);
        }
    }

    fn retain(&mut self, keep: &[bool], sh_width: usize) {
        for (g, w) in self.groups_mut(sh_width) {
            g.retain(w, keep);
        }
    }

    /// Leading dimension of every buffer, in group order.
    pub fn rows(&self, sh_width: usize) -> [usize; 5] {
        [
            self.positions.m.len() / 3,
            self.rotations.m.len() / 4,
            self.log_scales.m.len() / 3,
            self.opacity.m.len(),
            self.sh.m.len() / sh_width.max(1),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainEvent {
    Densify { iter: usize, cloned: usize, split: usize, removed: usize },
    OpacityReset { iter: usize },
    MvcPrune { iter: usize, step: usize, tau: f64, removed: usize },
    EadrEnabled { iter: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub view_id: u32,
    pub loss: LossBreakdown,
    pub n_gaussians: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub field: GaussianField,
    /// Last completed iteration.
    pub iter: usize,
    pub optimizer: OptimizerState,
    /// Number of feature-guided prunes executed so far.
    pub prune_step: usize,
    pub history: Vec<IterRecord>,
    pub events: Vec<TrainEvent>,
    pub scene_extent: f64,
}

/// Radius of the camera centres around their mean, padded by 10%.
pub fn scene_extent(views: &[CameraView]) -> f64 {
    if views.is_empty() {
        return 1.0;
    }
    let centres: Vec<Vector3<f64>> = views.iter().map(|v| v.center()).collect();
    let mean = centres.iter().fold(Vector3::zeros(), |a, c| a + c) / centres.len() as f64;
    let radius = centres.iter().map(|c| (c - mean).norm()).fold(0.0, f64::max);
    if radius > 0.0 {
        1.1 * radius
    } else {
        1.0
    }
}

pub const INITIAL_OPACITY: f64 = 0.1;
pub const RESET_OPACITY: f64 = 0.01;

/// Field with one primitive per seed point: constant-band colour, isotropic
/// scale from the three nearest neighbours, identity rotation, opacity 0.1.
pub fn field_from_seed(seed: &PointCloudSeed, sh_degree: usize) -> GaussianField {
    let mut field = GaussianField::empty(sh_degree);
    let sq = knn_mean_sq_distance(&seed.positions, 3);
    let b = field.sh_len();
    for (i, p) in seed.positions.iter().enumerate() {
        let mut coeffs = vec![0.0; b * 3];
        for c in 0..3 {
            coeffs[c] = rgb_to_dc(seed.colors[i][c]);
        }
        let s = crate::gaussian::isotropic_log_scale(sq[i]);
        field.push(&Primitive {
            position: [p.x, p.y, p.z],
            rotation: [1.0, 0.0, 0.0, 0.0],
            log_scale: [s; 3],
            opacity_logit: logit(INITIAL_OPACITY),
            sh: coeffs,
        });
    }
    field
}

impl TrainState {
    pub fn new(field: GaussianField, views: &[CameraView]) -> Self {
        Self {
            optimizer: OptimizerState::for_field(&field),
            field,
            iter: 0,
            prune_step: 0,
            history: Vec::new(),
            events: Vec::new(),
            scene_extent: scene_extent(views),
        }
    }

    pub fn from_seed(seed: &PointCloudSeed, views: &[CameraView], config: &TrainConfig) -> Self {
        Self::new(field_from_seed(seed, config.sh_degree), views)
    }

    pub fn mvc_prunes(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.events.iter().filter_map(|e| match *e {
            TrainEvent::MvcPrune { iter, step, tau, .. } => Some((iter, step, tau)),
            _ => None,
        })
    }
}

/// Index into `views` for a 1-based iteration: a fresh seeded shuffle per epoch.
pub fn view_for_iter(iter: usize, n_views: usize, seed: u64) -> usize {
    let k = iter - 1;
    let epoch = k / n_views;
    let mut order: Vec<usize> = (0..n_views).collect();
    rng::shuffle(&mut rng::derive(seed, (1 << 40) | epoch as u64), &mut order);
    order[k % n_views]
}

/// One full iteration, including any events scheduled at it.
pub fn train_step(
    state: &mut TrainState,
    views: &[CameraView],
    features: Option<&FeatureStack>,
    config: &TrainConfig,
    renderer: &Renderer,
) -> Result<LossBreakdown> {
    if state.field.is_empty() {
        return Err(Error::EmptyField);
    }
    if views.is_empty() {
        return Err(Error::InvalidConfig("no training views".into()));
    }
    let iter = state.iter + 1;
    let view = &views[view_for_iter(iter, views.len(), config.seed)];
    let bg = config.background;

    let frame = renderer.render(&state.field, view, bg);
    let (photo, d_color) = photometric_loss_grad(&frame.output.color, &view.image, config.lambda_dssim)?;
    let weight = if config.eadr {
        eadr_weight(iter, config.prune_steps_total, config.prune_i_step)
    } else {
        0.0
    };
    let (eadr_raw, d_depth) = if weight > 0.0 {
        let scale = config.eadr_depth_scale;
        let mut depth = frame.output.depth_normalized.clone();
        depth.data.iter_mut().for_each(|d| *d *= scale);
        let (raw, mut g) = eadr_loss_grad(&depth, &view.image, config.eadr_beta)?;
        g.data.iter_mut().for_each(|d| *d *= weight * scale);
        (raw, g)
    } else {
        (0.0, Image::new(view.width, view.height, 1))
    };
    let grads = renderer.backward(&state.field, view, bg, &frame.state, &d_color, &d_depth)?;

    if iter < config.densify_until_iter {
        for (i, vis) in grads.visible.iter().enumerate() {
            if *vis {
                state.field.grad_accum[i] += grads.d_mean2d_norm[i];
                state.field.grad_count[i] += 1;
            }
        }
    }
    adam_update(state, &grads, config, iter);
    state.iter = iter;

    if weight > 0.0 && (iter == 1 || eadr_weight(iter - 1, config.prune_steps_total, config.prune_i_step) == 0.0) {
        state.events.push(TrainEvent::EadrEnabled { iter });
    }
    if iter % config.densify_interval == 0 && iter < config.densify_until_iter {
        densify_and_prune_base(state, config)?;
    }
    if iter % config.opacity_reset_interval == 0 && iter <= config.opacity_reset_until() {
        reset_opacity(state);
    }
    if config.mvc_prune {
        if let Some(t) = config.prune_step_at(iter) {
            let features =
                features.ok_or_else(|| Error::InvalidConfig("feature-guided pruning needs a feature stack".into()))?;
            mvc_prune(state, views, features, t, config.tau_schedule[t - 1])?;
        }
    }

    let loss = LossBreakdown::new(photo, eadr_raw, weight);
    state.history.push(IterRecord {
        iter,
        view_id: view.view_id,
        loss,
        n_gaussians: state.field.len(),
    });
    Ok(loss)
}

fn adam_update(state: &mut TrainState, grads: &SplatGradients, config: &TrainConfig, iter: usize) {
    let opt = &mut state.optimizer;
    opt.step += 1;
    let step = opt.step;
    let f = &mut state.field;
    let pos_lr = position_lr(iter, config);
    opt.positions.step(&mut f.positions, &grads.d_positions, |_| pos_lr, step);
    opt.rotations.step(&mut f.rotations, &grads.d_rotations, |_| config.rotation_lr, step);
    opt.log_scales.step(&mut f.log_scales, &grads.d_log_scales, |_| config.scale_lr, step);
    opt.opacity.step(&mut f.opacity_logits, &grads.d_opacity_logits, |_| config.opacity_lr, step);
    let (dc, rest) = (config.sh_lr, config.sh_lr / 20.0);
    let width = f.sh_len() * 3;
    opt.sh.step(&mut f.sh_coeffs, &grads.d_sh, |k| if k % width < 3 { dc } else { rest }, step);
}

/// Clamps every opacity to at most 0.01 and clears its moments.
pub fn reset_opacity(state: &mut TrainState) {
    let cap = logit(RESET_OPACITY);
    for o in &mut state.field.opacity_logits {
        *o = o.min(cap);
    }
    state.optimizer.opacity = Moments::zeros(state.field.len());
    state.events.push(TrainEvent::OpacityReset { iter: state.iter });
}

/// Feature-guided prune at step `t`, compacting the optimizer rows with the field.
pub fn mvc_prune(
    state: &mut TrainState,
    views: &[CameraView],
    features: &FeatureStack,
    t: usize,
    tau: f64,
) -> Result<usize> {
    let decision = compute_prune_mask(&state.field, views, features, t, tau)?;
    let removed = decision.pruned();
    let keep: Vec<bool> = decision.mask.iter().map(|m| !m).collect();
    state.field = apply_prune(&state.field, &decision)?;
    let width = state.field.sh_len() * 3;
    state.optimizer.retain(&keep, width);
    state.prune_step = t;
    state.events.push(TrainEvent::MvcPrune {
        iter: state.iter,
        step: t,
        tau,
        removed,
    });
    Ok(removed)
}

/// Clone small and split large primitives whose mean projected-mean gradient
/// exceeds the threshold, then drop transparent (and, after the first opacity
/// reset, oversized) primitives.
pub fn densify_and_prune_base(state: &mut TrainState, config: &TrainConfig) -> Result<()> {
    let m = state.field.len();
    let extent = state.scene_extent;
    let split_size = config.percent_dense * extent;
    let mean_grad: Vec<f64> = (0..m)
        .map(|i| match state.field.grad_count[i] {
            0 => 0.0,
            c => state.field.grad_accum[i] / c as f64,
        })
        .collect();
    let hot: Vec<bool> = mean_grad.iter().map(|g| *g > config.densify_grad_threshold).collect();
    let sizes: Vec<f64> = (0..m).map(|i| max_scale(&state.field, i)).collect();
    let clone: Vec<usize> = (0..m).filter(|&i| hot[i] && sizes[i] <= split_size).collect();
    let split: Vec<usize> = (0..m).filter(|&i| hot[i] && sizes[i] > split_size).collect();

    let sh_width = state.field.sh_len() * 3;
    for &i in &clone {
        let p = state.field.primitive(i);
        state.field.push(&p);
    }
    let mut noise = rng::derive(config.seed, (2 << 40) | state.iter as u64);
    let shrink = ln(1.6);
    for &i in &split {
        let parent = state.field.primitive(i);
        let rot = rotation_matrix(&state.field.rotation_raw(i));
        let s = state.field.scale(i);
        for _ in 0..2 {
            let z = Vector3::new(
                rng::normal(&mut noise) * s.x,
                rng::normal(&mut noise) * s.y,
                rng::normal(&mut noise) * s.z,
            );
            let offset = rot * z;
            let mut child = parent.clone();
            for a in 0..3 {
                child.position[a] += offset[a];
                child.log_scale[a] -= shrink;
            }
            state.field.push(&child);
        }
    }
    let added = clone.len() + 2 * split.len();
    state.optimizer.extend(added, sh_width);

    let check_big = state.iter > config.opacity_reset_interval;
    let mut keep: Vec<bool> = (0..state.field.len())
        .map(|i| {
            let transparent = state.field.opacity(i) < config.min_opacity;
            let big = check_big && max_scale(&state.field, i) > 0.1 * extent;
            !(transparent || big)
        })
        .collect();
    for &i in &split {
        keep[i] = false;
    }
    let removed = keep.iter().filter(|k| !**k).count();
    state.field.retain_mask(&keep)?;
    state.optimizer.retain(&keep, sh_width);
    state.field.reset_grad_stats();
    state.events.push(TrainEvent::Densify {
        iter: state.iter,
        cloned: clone.len(),
        split: split.len(),
        removed,
    });
    Ok(())
}

/// Owns the views, features and state of one training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub views: Vec<CameraView>,
    pub features: Option<FeatureStack>,
    pub renderer: Renderer,
    pub state: TrainState,
}

impl Trainer {
    /// Builds the built-in feature stack when pruning is enabled.
    pub fn new(config: TrainConfig, views: Vec<CameraView>, seed: &PointCloudSeed) -> Result<Self> {
        let features = if config.mvc_prune {
            Some(FeatureStack::from_views(&views, &config.level_dims)?)
        } else {
            None
        };
        Self::with_features(config, views, seed, features)
    }

    pub fn with_features(
        config: TrainConfig,
        views: Vec<CameraView>,
        seed: &PointCloudSeed,
        features: Option<FeatureStack>,
    ) -> Result<Self> {
        config.validate()?;
        if let Some(f) = &features {
            f.check_views(&views)?;
        }
        let state = TrainState::from_seed(seed, &views, &config);
        Ok(Self {
            config,
            views,
            features,
            renderer: Renderer::default(),
            state,
        })
    }

    pub fn step(&mut self) -> Result<LossBreakdown> {
        train_step(
            &mut self.state,
            &self.views,
            self.features.as_ref(),
            &self.config,
            &self.renderer,
        )
    }

    /// Runs to `total_iters`.
    pub fn run(&mut self) -> Result<&TrainState> {
        while self.state.iter < self.config.total_iters {
            self.step()?;
        }
        Ok(&self.state)
    }
}
