//! Ground-truth scenes built from a known Gaussian field.
//!
//! Views are rendered with the brute-force reference renderer and quantized
//! to 8 bits, so a scene round-trips losslessly through PNG.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{Vector3, Vector4};

use crate::error::{Error, Result};
use crate::gaussian::{GaussianField, Primitive};
use crate::geometry::{project_point, CameraView};
use crate::image::Image;
use crate::math::{cos, ln, logit, sin, sqrt};
use crate::raster::reference::render_reference;
use crate::rng::{self, StreamRng};
use crate::sh::{rgb_to_dc, sh_to_color};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenePreset {
    /// Compact blob of Gaussians seen from a forward-facing arc.
    Cluster,
    /// Flat textured plane seen from a forward-facing arc.
    Plane,
    /// Hollow sphere seen from cameras spread over a larger sphere.
    Shell,
}

impl ScenePreset {
    pub fn name(self) -> &'static str {
        match self {
            ScenePreset::Cluster => "cluster",
            ScenePreset::Plane => "plane",
            ScenePreset::Shell => "shell",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cluster" => Ok(ScenePreset::Cluster),
            "plane" => Ok(ScenePreset::Plane),
            "shell" => Ok(ScenePreset::Shell),
            other => Err(Error::InvalidConfig(format!("unknown scene preset `{other}`"))),
        }
    }

    /// Panoramic layouts surround the object; the others face it.
    pub fn is_panoramic(self) -> bool {
        matches!(self, ScenePreset::Shell)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub preset: ScenePreset,
    pub n_gaussians: usize,
    pub n_views: usize,
    pub n_heldout: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

/// Shell, 100 primitives, 8 training and 8 held-out views at 128×128, seed 7.
impl Default for SceneSpec {
    fn default() -> Self {
        Self::new(ScenePreset::Shell, 100, 8, (128, 128), 7).with_heldout(8)
    }
}

impl SceneSpec {
    pub fn new(preset: ScenePreset, n_gaussians: usize, n_views: usize, size: (usize, usize), seed: u64) -> Self {
        Self {
            preset,
            n_gaussians,
            n_views,
            n_heldout: 0,
            height: size.0,
            width: size.1,
            seed,
        }
    }

    pub fn with_heldout(mut self, n: usize) -> Self {
        self.n_heldout = n;
        self
    }
}

/// A ground-truth point with the training views in whose frustum it projects.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSample {
    pub point: Vector3<f64>,
    pub color: [f64; 3],
    pub visible_in: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub gt_field: GaussianField,
    pub views: Vec<CameraView>,
    pub heldout: Vec<CameraView>,
    pub surface_samples: Vec<SurfaceSample>,
}

impl SyntheticScene {
    /// Largest distance between two generating means.
    pub fn diameter(&self) -> f64 {
        let n = self.gt_field.len();
        let mut d: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                d = d.max((self.gt_field.position(i) - self.gt_field.position(j)).norm());
            }
        }
        d
    }
}

pub const BACKGROUND: [f64; 3] = [0.0, 0.0, 0.0];

pub fn make_scene(spec: &SceneSpec) -> Result<SyntheticScene> {
    if spec.n_gaussians < 1 || spec.n_views < 2 {
        return Err(Error::InvalidConfig(
            "a synthetic scene needs at least one Gaussian and two views".into(),
        ));
    }
    if spec.width == 0 || spec.height == 0 {
        return Err(Error::InvalidConfig("image size must be positive".into()));
    }
    let mut rng = rng::derive(spec.seed, 0x5ce7e);
    let gt_field = generate_field(spec, &mut rng);

    let total = spec.n_views + spec.n_heldout;
    let eyes = camera_positions(spec.preset, total);
    let focal = spec.width as f64;
    let blank = Image::new(spec.width, spec.height, 3);
    let (mut views, mut heldout) = (Vec::new(), Vec::new());
    for (i, eye) in eyes.iter().enumerate() {
        let is_heldout = ((i + 1) * spec.n_heldout) / total > (i * spec.n_heldout) / total;
        let id = if is_heldout {
            (spec.n_views + heldout.len()) as u32
        } else {
            views.len() as u32
        };
        let camera = CameraView::look_at(
            id,
            *eye,
            Vector3::zeros(),
            Vector3::new(0.0, 1.0, 0.0),
            focal,
            blank.clone(),
        )?;
        let mut image = render_reference(&gt_field, &camera, BACKGROUND).color;
        image.quantize_8bit();
        let camera = camera.with_image(image)?;
        if is_heldout {
            heldout.push(camera);
        } else {
            views.push(camera);
        }
    }

    let surface_samples = (0..gt_field.len())
        .map(|i| {
            let point = gt_field.position(i);
            let raw = sh_to_color(gt_field.sh(i), &[0.0, 0.0, 1.0], gt_field.sh_degree)?;
            let visible_in = views
                .iter()
                .filter(|v| sees(v, &point))
                .map(|v| v.view_id)
                .collect();
            Ok(SurfaceSample {
                point,
                color: raw.map(|c| c.clamp(0.0, 1.0)),
                visible_in,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SyntheticScene {
        spec: spec.clone(),
        gt_field,
        views,
        heldout,
        surface_samples,
    })
}

/// In front of the camera and inside the image.
pub fn sees(view: &CameraView, point: &Vector3<f64>) -> bool {
    match project_point(point, view) {
        Ok((u, v, _)) => view.contains_pixel(u, v),
        Err(_) => false,
    }
}

fn random_rotation(rng: &mut StreamRng) -> Vector4<f64> {
    loop {
        let q = Vector4::new(rng::normal(rng), rng::normal(rng), rng::normal(rng), rng::normal(rng));
        let n = q.norm();
        if n > 1e-6 {
            return q / n;
        }
    }
}

fn generate_field(spec: &SceneSpec, rng: &mut StreamRng) -> GaussianField {
    let mut field = GaussianField::empty(0);
    for _ in 0..spec.n_gaussians {
        let (position, log_scale, rotation) = match spec.preset {
            ScenePreset::Cluster => {
                let p = [0.4 * rng::normal(rng), 0.4 * rng::normal(rng), 0.4 * rng::normal(rng)];
                let s = [0; 3].map(|_| ln(rng::uniform(rng, 0.06, 0.14)));
                (p, s, random_rotation(rng))
            }
            ScenePreset::Plane => {
                let p = [rng::uniform(rng, -1.0, 1.0), rng::uniform(rng, -1.0, 1.0), 0.0];
                let s = [
                    ln(rng::uniform(rng, 0.08, 0.16)),
                    ln(rng::uniform(rng, 0.08, 0.16)),
                    ln(0.01),
                ];
                let angle = rng::uniform(rng, 0.0, PI);
                let q = crate::gaussian::axis_angle_quaternion(&Vector3::z(), angle);
                (p, s, q)
            }
            ScenePreset::Shell => {
                let d = loop {
                    let d = Vector3::new(rng::normal(rng), rng::normal(rng), rng::normal(rng));
                    if d.norm() > 1e-6 {
                        break d.normalize();
                    }
                };
                let s = [0; 3].map(|_| ln(rng::uniform(rng, 0.1, 0.18)));
                ([d.x, d.y, d.z], s, random_rotation(rng))
            }
        };
        let color = [0; 3].map(|_| rng::uniform(rng, 0.1, 0.9));
        let opacity = rng::uniform(rng, 0.6, 0.95);
        field.push(&Primitive {
            position,
            rotation: [rotation[0], rotation[1], rotation[2], rotation[3]],
            log_scale,
            opacity_logit: logit(opacity),
            sh: color.map(rgb_to_dc).to_vec(),
        });
    }
    field
}

/// Camera centres for `n` views, in the interleaving order.
fn camera_positions(preset: ScenePreset, n: usize) -> Vec<Vector3<f64>> {
    match preset {
        ScenePreset::Cluster | ScenePreset::Plane => {
            let radius = 3.0;
            let half = 25.0_f64.to_radians();
            (0..n)
                .map(|i| {
                    let t = if n == 1 { 0.5 } else { i as f64 / (n - 1) as f64 };
                    let theta = -half + 2.0 * half * t;
                    Vector3::new(radius * sin(theta), 0.0, -radius * cos(theta))
                })
                .collect()
        }
        ScenePreset::Shell => {
            let radius = 1.8;
            let golden = PI * (3.0 - sqrt(5.0));
            (0..n)
                .map(|i| {
                    let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                    let r = sqrt(1.0 - y * y);
                    let phi = golden * i as f64;
                    Vector3::new(radius * r * cos(phi), radius * y, radius * r * sin(phi))
                })
                .collect()
        }
    }
}
