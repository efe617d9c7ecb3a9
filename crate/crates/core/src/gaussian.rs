//! The optimizable Gaussian primitive set.
//!
//! Parameters are stored raw in flat per-group buffers. Activations are
//! applied on read: `exp` for scales, `sigmoid` for opacity and quaternion
//! normalization for rotation.

use alloc::vec::Vec;

use nalgebra::{Matrix3, SymmetricEigen, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::math::{exp, sigmoid, sqrt};
use crate::sh;

const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianField {
    pub sh_degree: usize,
    /// M×3 world positions.
    pub positions: Vec<f64>,
    /// M×4 raw quaternions `(w, x, y, z)`.
    pub rotations: Vec<f64>,
    /// M×3 log scales.
    pub log_scales: Vec<f64>,
    /// M opacity logits.
    pub opacity_logits: Vec<f64>,
    /// M×B×3 SH coefficients, `B = (sh_degree + 1)²`.
    pub sh_coeffs: Vec<f64>,
    /// Running sum of projected-mean gradient norms (densification statistic).
    pub grad_accum: Vec<f64>,
    pub grad_count: Vec<u32>,
}

/// One primitive's raw parameters, used when building or splitting fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Primitive {
    pub position: [f64; 3],
    pub rotation: [f64; 4],
    pub log_scale: [f64; 3],
    pub opacity_logit: f64,
    pub sh: Vec<f64>,
}

impl GaussianField {
    pub fn empty(sh_degree: usize) -> Self {
        Self {
            sh_degree,
            positions: Vec::new(),
            rotations: Vec::new(),
            log_scales: Vec::new(),
            opacity_logits: Vec::new(),
            sh_coeffs: Vec::new(),
            grad_accum: Vec::new(),
            grad_count: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.opacity_logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of SH basis functions per colour channel.
    pub fn sh_len(&self) -> usize {
        sh::basis_len(self.sh_degree)
    }

    pub fn push(&mut self, p: &Primitive) {
        debug_assert_eq!(p.sh.len(), self.sh_len() * 3);
        self.positions.extend_from_slice(&p.position);
        self.rotations.extend_from_slice(&p.rotation);
        self.log_scales.extend_from_slice(&p.log_scale);
        self.opacity_logits.push(p.opacity_logit);
        self.sh_coeffs.extend_from_slice(&p.sh);
        self.grad_accum.push(0.0);
        self.grad_count.push(0);
    }

    pub fn primitive(&self, i: usize) -> Primitive {
        let b = self.sh_len() * 3;
        Primitive {
            position: [self.positions[3 * i], self.positions[3 * i + 1], self.positions[3 * i + 2]],
            rotation: [
                self.rotations[4 * i],
                self.rotations[4 * i + 1],
                self.rotations[4 * i + 2],
                self.rotations[4 * i + 3],
            ],
            log_scale: [self.log_scales[3 * i], self.log_scales[3 * i + 1], self.log_scales[3 * i + 2]],
            opacity_logit: self.opacity_logits[i],
            sh: self.sh_coeffs[i * b..(i + 1) * b].to_vec(),
        }
    }

    pub fn position(&self, i: usize) -> Vector3<f64> {
        Vector3::new(self.positions[3 * i], self.positions[3 * i + 1], self.positions[3 * i + 2])
    }

    pub fn rotation_raw(&self, i: usize) -> Vector4<f64> {
        Vector4::new(
            self.rotations[4 * i],
            self.rotations[4 * i + 1],
            self.rotations[4 * i + 2],
            self.rotations[4 * i + 3],
        )
    }

    pub fn scale(&self, i: usize) -> Vector3<f64> {
        Vector3::new(
            exp(self.log_scales[3 * i]),
            exp(self.log_scales[3 * i + 1]),
            exp(self.log_scales[3 * i + 2]),
        )
    }

    pub fn opacity(&self, i: usize) -> f64 {
        sigmoid(self.opacity_logits[i])
    }

    pub fn sh(&self, i: usize) -> &[f64] {
        let b = self.sh_len() * 3;
        &self.sh_coeffs[i * b..(i + 1) * b]
    }

    pub fn covariance(&self, i: usize) -> Result<Matrix3<f64>> {
        covariance_from(&self.rotation_raw(i), &self.scale(i))
    }

    /// Keeps the primitives whose flag is `true`, preserving order.
    pub fn retain_mask(&mut self, keep: &[bool]) -> Result<()> {
        if keep.len() != self.len() {
            return Err(Error::SizeMismatch {
                expected: self.len(),
                got: keep.len(),
            });
        }
        let b = self.sh_len() * 3;
        retain_rows(&mut self.positions, 3, keep);
        retain_rows(&mut self.rotations, 4, keep);
        retain_rows(&mut self.log_scales, 3, keep);
        retain_rows(&mut self.opacity_logits, 1, keep);
        retain_rows(&mut self.sh_coeffs, b, keep);
        retain_rows(&mut self.grad_accum, 1, keep);
        retain_rows(&mut self.grad_count, 1, keep);
        Ok(())
    }

    pub fn reset_grad_stats(&mut self) {
        self.grad_accum.iter_mut().for_each(|g| *g = 0.0);
        self.grad_count.iter_mut().for_each(|c| *c = 0);
    }

    /// Checks that every per-primitive buffer agrees on the leading dimension.
    pub fn check_consistent(&self) -> Result<()> {
        let m = self.len();
        let checks = [
            (self.positions.len(), 3 * m),
            (self.rotations.len(), 4 * m),
            (self.log_scales.len(), 3 * m),
            (self.sh_coeffs.len(), self.sh_len() * 3 * m),
            (self.grad_accum.len(), m),
            (self.grad_count.len(), m),
        ];
        for (got, expected) in checks {
            if got != expected {
                return Err(Error::SizeMismatch { expected, got });
            }
        }
        Ok(())
    }
}

pub(crate) fn retain_rows<T: Copy>(buf: &mut Vec<T>, width: usize, keep: &[bool]) {
    let mut write = 0;
    for (row, &k) in keep.iter().enumerate() {
        if k {
            if write != row {
                buf.copy_within(row * width..(row + 1) * width, write * width);
            }
            write += 1;
        }
    }
    buf.truncate(write * width);
}

/// Rotation matrix of a unit quaternion `(w, x, y, z)`.
pub fn rotation_matrix(q: &Vector4<f64>) -> Matrix3<f64> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Pulls a gradient on the rotation matrix back to the unit quaternion.
pub fn rotation_matrix_vjp(q: &Vector4<f64>, d_r: &Matrix3<f64>) -> Vector4<f64> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    let dw = Matrix3::new(0.0, -2.0 * z, 2.0 * y, 2.0 * z, 0.0, -2.0 * x, -2.0 * y, 2.0 * x, 0.0);
    let dx = Matrix3::new(0.0, 2.0 * y, 2.0 * z, 2.0 * y, -4.0 * x, -2.0 * w, 2.0 * z, 2.0 * w, -4.0 * x);
    let dy = Matrix3::new(-4.0 * y, 2.0 * x, 2.0 * w, 2.0 * x, 0.0, 2.0 * z, -2.0 * w, 2.0 * z, -4.0 * y);
    let dz = Matrix3::new(-4.0 * z, -2.0 * w, 2.0 * x, 2.0 * w, -4.0 * z, 2.0 * y, 2.0 * x, 2.0 * y, 0.0);
    Vector4::new(
        d_r.component_mul(&dw).sum(),
        d_r.component_mul(&dx).sum(),
        d_r.component_mul(&dy).sum(),
        d_r.component_mul(&dz).sum(),
    )
}

fn normalized_quaternion(q: &Vector4<f64>) -> Result<(Vector4<f64>, f64)> {
    let norm = q.norm();
    if norm < 1e-12 {
        return Err(Error::ZeroQuaternion);
    }
    Ok((q / norm, norm))
}

/// `Σ = R(q) diag(s)² R(q)ᵀ`. The quaternion need not be normalized.
pub fn covariance_from(q: &Vector4<f64>, s: &Vector3<f64>) -> Result<Matrix3<f64>> {
    debug_assert!(s.iter().all(|&v| v > 0.0));
    let (qn, _) = normalized_quaternion(q)?;
    let m = rotation_matrix(&qn) * Matrix3::from_diagonal(s);
    Ok(m * m.transpose())
}

/// Gradients of a loss with respect to the raw quaternion and the log scales,
/// given the (full, symmetric) gradient on the covariance.
pub fn covariance_vjp(
    q_raw: &Vector4<f64>,
    log_scale: &Vector3<f64>,
    d_sigma: &Matrix3<f64>,
) -> Result<(Vector4<f64>, Vector3<f64>)> {
    let (qn, norm) = normalized_quaternion(q_raw)?;
    let s = log_scale.map(exp);
    let r = rotation_matrix(&qn);
    let m = r * Matrix3::from_diagonal(&s);
    // Σ = M Mᵀ
    let d_m = (d_sigma + d_sigma.transpose()) * m;
    let d_r = d_m * Matrix3::from_diagonal(&s);
    let mut d_log_s = Vector3::zeros();
    for k in 0..3 {
        let ds = d_m.column(k).dot(&r.column(k));
        d_log_s[k] = ds * s[k];
    }
    let d_qn = rotation_matrix_vjp(&qn, &d_r);
    let d_q = (d_qn - qn * qn.dot(&d_qn)) / norm;
    Ok((d_q, d_log_s))
}

/// Unnormalized Gaussian kernel `exp(-½ (x-μ)ᵀ Σ⁻¹ (x-μ))`.
pub fn evaluate_gaussian(x: &Vector3<f64>, mu: &Vector3<f64>, sigma: &Matrix3<f64>) -> Result<f64> {
    let eig = SymmetricEigen::new(*sigma);
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    if lo <= 0.0 || hi / lo > MAX_CONDITION {
        let condition = if lo <= 0.0 { f64::INFINITY } else { hi / lo };
        return Err(Error::SingularCovariance { condition });
    }
    let d = x - mu;
    // Σ⁻¹ = V Λ⁻¹ Vᵀ
    let proj = eig.eigenvectors.transpose() * d;
    let q: f64 = proj
        .iter()
        .zip(eig.eigenvalues.iter())
        .map(|(p, l)| p * p / l)
        .sum();
    Ok(exp(-0.5 * q))
}

/// Unit quaternion for a rotation of `angle` radians about `axis`.
pub fn axis_angle_quaternion(axis: &Vector3<f64>, angle: f64) -> Vector4<f64> {
    let a = axis.normalize();
    let (s, c) = (libm::sin(angle / 2.0), libm::cos(angle / 2.0));
    Vector4::new(c, a.x * s, a.y * s, a.z * s)
}

/// Largest activated scale of primitive `i`.
pub fn max_scale(field: &GaussianField, i: usize) -> f64 {
    let s = field.scale(i);
    s.max()
}

pub(crate) fn isotropic_log_scale(mean_sq_dist: f64) -> f64 {
    libm::log(sqrt(mean_sq_dist.max(1e-14)))
}
