//! Axis-angle rotations and their derivatives.

use nalgebra::{Matrix3, Vector3};

/// Below this angle the closed-form derivative is replaced by its series.
const SMALL_ANGLE: f64 = 1e-7;

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues' formula: rotation matrix for the axis-angle vector `w`.
pub fn rodrigues(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta = w.norm();
    let k = skew(w);
    if theta < SMALL_ANGLE {
        return Matrix3::identity() + k + 0.5 * k * k;
    }
    let a = theta.sin() / theta;
    let b = (1.0 - theta.cos()) / (theta * theta);
    Matrix3::identity() + a * k + b * k * k
}

/// Partial derivatives of `rodrigues(w)` with respect to `w[0..3]`.
///
/// Uses dR/dw_i = (w_i [w]x + [w x (I - R) e_i]x) R / |w|^2 away from the
/// origin and the second-order series near it.
pub fn rodrigues_derivatives(w: &Vector3<f64>) -> [Matrix3<f64>; 3] {
    let theta2 = w.norm_squared();
    let k = skew(w);
    let mut out = [Matrix3::zeros(); 3];
    if theta2.sqrt() < SMALL_ANGLE {
        for (i, d) in out.iter_mut().enumerate() {
            let e = skew(&Vector3::ith(i, 1.0));
            *d = e + 0.5 * (e * k + k * e);
        }
        return out;
    }
    let r = rodrigues(w);
    let i_minus_r = Matrix3::identity() - r;
    for (i, d) in out.iter_mut().enumerate() {
        let ei = Vector3::ith(i, 1.0);
        let v = w.cross(&(i_minus_r * ei));
        *d = (w[i] * k + skew(&v)) * r / theta2;
    }
    out
}
