//! EWA projection of 3D covariances to the image plane and its adjoint.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{CameraView, Z_NEAR};

/// Isotropic dilation added to every projected covariance (in px²).
pub const LOW_PASS: f64 = 0.3;

/// Perspective Jacobian at camera-frame point `t`.
pub fn perspective_jacobian(t: &Vector3<f64>, view: &CameraView) -> Matrix2x3<f64> {
    let iz = 1.0 / t.z;
    let iz2 = iz * iz;
    Matrix2x3::new(
        view.fx * iz,
        0.0,
        -view.fx * t.x * iz2,
        0.0,
        view.fy * iz,
        -view.fy * t.y * iz2,
    )
}

/// `Σ' = J W Σ Wᵀ Jᵀ + 0.3 I`, with `W` the world-to-camera rotation and `J`
/// the perspective Jacobian at `mu`.
pub fn project_covariance(sigma: &Matrix3<f64>, mu: &Vector3<f64>, view: &CameraView) -> Result<Matrix2<f64>> {
    let t = view.to_camera(mu);
    if t.z <= Z_NEAR {
        return Err(Error::BehindCamera { z: t.z });
    }
    Ok(project_covariance_camera(sigma, &t, view))
}

pub(crate) fn project_covariance_camera(sigma: &Matrix3<f64>, t: &Vector3<f64>, view: &CameraView) -> Matrix2<f64> {
    let a = perspective_jacobian(t, view) * view.rotation;
    let m = a * sigma * a.transpose();
    let off = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    Matrix2::new(m[(0, 0)] + LOW_PASS, off, off, m[(1, 1)] + LOW_PASS)
}

/// Adjoint of [`project_covariance_camera`]: given the full (symmetric)
/// gradient on `Σ'`, returns the gradients on `Σ` and on the camera-frame mean.
pub(crate) fn project_covariance_vjp(
    sigma: &Matrix3<f64>,
    t: &Vector3<f64>,
    view: &CameraView,
    d_cov2d: &Matrix2<f64>,
) -> (Matrix3<f64>, Vector3<f64>) {
    let j = perspective_jacobian(t, view);
    let a = j * view.rotation;
    let d_sigma = a.transpose() * d_cov2d * a;
    let d_a = d_cov2d * a * sigma + d_cov2d.transpose() * a * sigma.transpose();
    let d_j = d_a * view.rotation.transpose();
    let iz = 1.0 / t.z;
    let iz2 = iz * iz;
    let iz3 = iz2 * iz;
    let (fx, fy) = (view.fx, view.fy);
    let d_t = Vector3::new(
        d_j[(0, 2)] * (-fx * iz2),
        d_j[(1, 2)] * (-fy * iz2),
        d_j[(0, 0)] * (-fx * iz2)
            + d_j[(0, 2)] * (2.0 * fx * t.x * iz3)
            + d_j[(1, 1)] * (-fy * iz2)
            + d_j[(1, 2)] * (2.0 * fy * t.y * iz3),
    );
    (d_sigma, d_t)
}

/// Inverse of a symmetric 2×2 `[[A, B], [B, C]]` as `(a, b, c)`.
pub(crate) fn conic(cov: &Matrix2<f64>) -> [f64; 3] {
    let (a, b, c) = (cov[(0, 0)], cov[(0, 1)], cov[(1, 1)]);
    let det = a * c - b * b;
    [c / det, -b / det, a / det]
}

/// Pulls a gradient on the conic `(a, b, c)` (with `b` entering the quadratic
/// form twice) back to a full symmetric gradient on the covariance.
pub(crate) fn conic_vjp(cov: &Matrix2<f64>, g: &[f64; 3]) -> Matrix2<f64> {
    let (a, b, c) = (cov[(0, 0)], cov[(0, 1)], cov[(1, 1)]);
    let det = a * c - b * b;
    let id = 1.0 / det;
    let id2 = id * id;
    let ga = g[0] * (-c * c * id2) + g[1] * (b * c * id2) + g[2] * (id - a * c * id2);
    let gb = g[0] * (2.0 * b * c * id2) + g[1] * (-id - 2.0 * b * b * id2) + g[2] * (2.0 * a * b * id2);
    let gc = g[0] * (id - a * c * id2) + g[1] * (a * b * id2) + g[2] * (-a * a * id2);
    Matrix2::new(ga, gb / 2.0, gb / 2.0, gc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image;

    fn view(f: f64) -> CameraView {
        CameraView::new(
            0,
            f,
            f,
            15.5,
            15.5,
            Matrix3::identity(),
            Vector3::zeros(),
            Image::new(32, 32, 3),
        )
        .unwrap()
    }

    #[test]
    fn tiny_covariance_hits_low_pass_floor() {
        let v = view(40.0);
        let s = Matrix3::identity() * 1e-14;
        let c = project_covariance(&s, &Vector3::new(0.3, -0.2, 2.0), &v).unwrap();
        assert!((c - Matrix2::identity() * 0.3).amax() < 1e-9);
    }

    #[test]
    fn optical_axis_matches_symbolic_jacobian() {
        // On the axis J = [[f/z,0,0],[0,f/z,0]], so Σ' = (f²σ²/z² + 0.3) I.
        let (f, sigma, z) = (40.0, 0.05, 2.0);
        let v = view(f);
        let s = Matrix3::identity() * sigma * sigma;
        let c = project_covariance(&s, &Vector3::new(0.0, 0.0, z), &v).unwrap();
        let expected = f * f * sigma * sigma / (z * z) + 0.3;
        assert!((c - Matrix2::identity() * expected).amax() < 1e-12);
        let far = project_covariance(&s, &Vector3::new(0.0, 0.0, 2.0 * z), &v).unwrap();
        let pre_near = c[(0, 0)] - 0.3;
        let pre_far = far[(0, 0)] - 0.3;
        assert!((pre_far - pre_near / 4.0).abs() < 1e-12);
    }

    #[test]
    fn behind_camera() {
        let v = view(40.0);
        assert!(matches!(
            project_covariance(&Matrix3::identity(), &Vector3::new(0.0, 0.0, -1.0), &v),
            Err(Error::BehindCamera { .. })
        ));
    }

    #[test]
    fn eigenvalues_at_least_floor() {
        let v = view(30.0);
        let s = Matrix3::new(0.02, 0.01, 0.0, 0.01, 0.03, -0.005, 0.0, -0.005, 0.01);
        let c = project_covariance(&s, &Vector3::new(0.4, 0.1, 1.5), &v).unwrap();
        let e = c.symmetric_eigenvalues();
        assert!(e.min() >= 0.3 - 1e-12);
        assert_eq!(c[(0, 1)], c[(1, 0)]);
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let v = view(30.0);
        let sigma = Matrix3::new(0.02, 0.01, 0.0, 0.01, 0.03, -0.005, 0.0, -0.005, 0.01);
        let t = Vector3::new(0.4, 0.1, 1.5);
        let g = Matrix2::new(0.7, 0.2, 0.2, -0.4);
        let f = |s: &Matrix3<f64>, t: &Vector3<f64>| project_covariance_camera(s, t, &v).component_mul(&g).sum();
        let (ds, dt) = project_covariance_vjp(&sigma, &t, &v, &g);
        let h = 1e-6;
        for k in 0..3 {
            let mut tp = t;
            tp[k] += h;
            let mut tm = t;
            tm[k] -= h;
            let fd = (f(&sigma, &tp) - f(&sigma, &tm)) / (2.0 * h);
            assert!((fd - dt[k]).abs() < 1e-5 * fd.abs().max(1.0), "t{k} {fd} {}", dt[k]);
        }
        for r in 0..3 {
            for c in 0..3 {
                let mut sp = sigma;
                sp[(r, c)] += h;
                let mut sm = sigma;
                sm[(r, c)] -= h;
                let fd = (f(&sp, &t) - f(&sm, &t)) / (2.0 * h);
                assert!((fd - ds[(r, c)]).abs() < 1e-5 * fd.abs().max(1.0));
            }
        }
    }

    #[test]
    fn conic_vjp_matches_finite_differences() {
        let cov = Matrix2::new(2.0, 0.3, 0.3, 1.2);
        let g = [0.5, -0.8, 0.25];
        let f = |a: f64, b: f64, c: f64| {
            let k = conic(&Matrix2::new(a, b, b, c));
            k[0] * g[0] + k[1] * g[1] + k[2] * g[2]
        };
        let d = conic_vjp(&cov, &g);
        let h = 1e-6;
        let fa = (f(2.0 + h, 0.3, 1.2) - f(2.0 - h, 0.3, 1.2)) / (2.0 * h);
        let fb = (f(2.0, 0.3 + h, 1.2) - f(2.0, 0.3 - h, 1.2)) / (2.0 * h);
        let fc = (f(2.0, 0.3, 1.2 + h) - f(2.0, 0.3, 1.2 - h)) / (2.0 * h);
        assert!((fa - d[(0, 0)]).abs() < 1e-8);
        assert!((fb - 2.0 * d[(0, 1)]).abs() < 1e-8);
        assert!((fc - d[(1, 1)]).abs() < 1e-8);
    }
}
