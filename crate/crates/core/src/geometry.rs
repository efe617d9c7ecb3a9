//! Pinhole camera model, projection and pixel rays.
//!
//! Pixels are addressed as `(u, v) = (column, row)` with the origin at the
//! top-left and pixel centres on integer coordinates. Cameras follow the
//! x-right, y-down, z-forward convention; `rotation` and `translation` map
//! world points into the camera frame.

use alloc::format;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::image::Image;

/// Points with camera-frame depth at or below this are rejected by [`project_point`].
pub const Z_NEAR: f64 = 1e-6;

const FRAME_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub view_id: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub width: usize,
    pub height: usize,
    pub image: Image,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
}

impl Ray {
    pub fn new(origin: Vector3<f64>, direction: Vector3<f64>) -> Self {
        Self {
            origin,
            direction: direction.normalize(),
        }
    }

    pub fn at(&self, t: f64) -> Vector3<f64> {
        self.origin + self.direction * t
    }
}

impl CameraView {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        view_id: u32,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        image: Image,
    ) -> Result<Self> {
        let view = Self {
            view_id,
            fx,
            fy,
            cx,
            cy,
            rotation,
            translation,
            width: image.width,
            height: image.height,
            image,
        };
        view.validate()?;
        Ok(view)
    }

    /// Camera placed at `eye` looking at `target`; `up` is the world up hint.
    pub fn look_at(
        view_id: u32,
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        focal: f64,
        image: Image,
    ) -> Result<Self> {
        let forward = (target - eye).normalize();
        let mut down = -up.normalize();
        if down.cross(&forward).norm() < 1e-6 {
            down = Vector3::new(0.0, 0.0, 1.0);
            if down.cross(&forward).norm() < 1e-6 {
                down = Vector3::new(1.0, 0.0, 0.0);
            }
        }
        let right = down.cross(&forward).normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        let cx = (image.width as f64 - 1.0) / 2.0;
        let cy = (image.height as f64 - 1.0) / 2.0;
        Self::new(view_id, focal, focal, cx, cy, rotation, translation, image)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidCamera(format!(
                "view {}: focal lengths must be positive",
                self.view_id
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera(format!("view {}: empty image size", self.view_id)));
        }
        if self.image.width != self.width || self.image.height != self.height || self.image.channels != 3 {
            return Err(Error::InvalidCamera(format!(
                "view {}: image is {}x{}x{}, camera is {}x{}x3",
                self.view_id, self.image.width, self.image.height, self.image.channels, self.width, self.height
            )));
        }
        let gram = self.rotation.transpose() * self.rotation;
        if (gram - Matrix3::identity()).amax() > FRAME_TOL || (self.rotation.determinant() - 1.0).abs() > FRAME_TOL {
            return Err(Error::InvalidCamera(format!(
                "view {}: rotation is not a proper orthonormal matrix",
                self.view_id
            )));
        }
        if self.image.data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidCamera(format!(
                "view {}: image values must lie in [0,1]",
                self.view_id
            )));
        }
        Ok(())
    }

    /// Camera centre in world coordinates, `-Rᵀ T`.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn to_camera(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * world + self.translation
    }

    /// Projects a camera-frame point. The caller guarantees positive depth.
    #[inline]
    pub fn project_camera_frame(&self, p: &Vector3<f64>) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    pub fn contains_pixel(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u <= (self.width - 1) as f64 && v <= (self.height - 1) as f64
    }

    /// Copy of the camera with a different image (size must match).
    pub fn with_image(&self, image: Image) -> Result<Self> {
        Self::new(
            self.view_id,
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            self.rotation,
            self.translation,
            image,
        )
    }
}

/// Perspective projection of a world point. Returns `(u, v, z)` with `z` the
/// camera-frame depth used as the divisor.
pub fn project_point(mu: &Vector3<f64>, view: &CameraView) -> Result<(f64, f64, f64)> {
    let p = view.to_camera(mu);
    if p.z <= Z_NEAR {
        return Err(Error::BehindCamera { z: p.z });
    }
    let (u, v) = view.project_camera_frame(&p);
    Ok((u, v, p.z))
}

/// World-space ray through the centre of pixel `(u, v)`.
pub fn pixel_ray(view: &CameraView, pixel: (f64, f64)) -> Result<Ray> {
    let (u, v) = pixel;
    if !(u >= 0.0 && v >= 0.0 && u < view.width as f64 && v < view.height as f64) {
        return Err(Error::OutOfBounds {
            u,
            v,
            width: view.width,
            height: view.height,
        });
    }
    let local = Vector3::new((u - view.cx) / view.fx, (v - view.cy) / view.fy, 1.0);
    let direction = (view.rotation.transpose() * local).normalize();
    Ok(Ray {
        origin: view.center(),
        direction,
    })
}
