//! Real spherical-harmonics irradiance, bands 0-2.
//!
//! | index | (l, m)  | H_b(n)                      |
//! |-------|---------|-----------------------------|
//! | 0     | (0, 0)  | 1 / (2 sqrt(pi))            |
//! | 1     | (1, -1) | sqrt(3) / (2 sqrt(pi)) y    |
//! | 2     | (1, 0)  | sqrt(3) / (2 sqrt(pi)) z    |
//! | 3     | (1, 1)  | sqrt(3) / (2 sqrt(pi)) x    |
//! | 4     | (2, -2) | sqrt(15) / (2 sqrt(pi)) xy  |
//! | 5     | (2, -1) | sqrt(15) / (2 sqrt(pi)) yz  |
//! | 6     | (2, 0)  | sqrt(5) / (4 sqrt(pi)) (3z^2 - 1) |
//! | 7     | (2, 1)  | sqrt(15) / (2 sqrt(pi)) xz  |
//! | 8     | (2, 2)  | sqrt(15) / (4 sqrt(pi)) (x^2 - y^2) |

use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::model::code::{N_GAMMA, SH_COEFFS};

/// Fixed face reflectance applied to every channel.
pub const REFLECTANCE: f64 = 0.8;

fn k0() -> f64 {
    0.5 / PI.sqrt()
}
fn k1() -> f64 {
    3f64.sqrt() / (2.0 * PI.sqrt())
}
fn k2() -> f64 {
    15f64.sqrt() / (2.0 * PI.sqrt())
}
fn k20() -> f64 {
    5f64.sqrt() / (4.0 * PI.sqrt())
}
fn k22() -> f64 {
    15f64.sqrt() / (4.0 * PI.sqrt())
}

/// Band-0 constant `1 / (2 sqrt(pi))`.
pub fn band0_constant() -> f64 {
    k0()
}

pub fn sh_basis(n: &Vector3<f64>) -> [f64; SH_COEFFS] {
    let (x, y, z) = (n.x, n.y, n.z);
    [
        k0(),
        k1() * y,
        k1() * z,
        k1() * x,
        k2() * x * y,
        k2() * y * z,
        k20() * (3.0 * z * z - 1.0),
        k2() * x * z,
        k22() * (x * x - y * y),
    ]
}

/// Gradients of each basis function with respect to the normal.
pub fn sh_basis_gradient(n: &Vector3<f64>) -> [Vector3<f64>; SH_COEFFS] {
    let (x, y, z) = (n.x, n.y, n.z);
    [
        Vector3::zeros(),
        Vector3::new(0.0, k1(), 0.0),
        Vector3::new(0.0, 0.0, k1()),
        Vector3::new(k1(), 0.0, 0.0),
        Vector3::new(k2() * y, k2() * x, 0.0),
        Vector3::new(0.0, k2() * z, k2() * y),
        Vector3::new(0.0, 0.0, 6.0 * k20() * z),
        Vector3::new(k2() * z, 0.0, k2() * x),
        Vector3::new(2.0 * k22() * x, -2.0 * k22() * y, 0.0),
    ]
}

/// SH illumination: `gamma[c * 9 + b]` weights basis `b` in channel `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Illumination {
    pub gamma: [f64; N_GAMMA],
    pub reflectance: f64,
}

impl Illumination {
    pub fn new(gamma: &[f64]) -> Result<Self> {
        let gamma: [f64; N_GAMMA] = gamma.try_into().map_err(|_| Error::LengthMismatch {
            block: "gamma",
            expected: N_GAMMA,
            got: gamma.len(),
        })?;
        Ok(Self {
            gamma,
            reflectance: REFLECTANCE,
        })
    }

    /// Fixed lighting for normalized renders: ambient white plus a key
    /// light from the camera direction so shape stays visible.
    pub fn canonical() -> Self {
        let mut gamma = [0.0; N_GAMMA];
        for (c, ambient) in [2.3, 2.15, 2.0].into_iter().enumerate() {
            gamma[c * SH_COEFFS] = ambient;
            gamma[c * SH_COEFFS + 2] = -1.0;
        }
        Self {
            gamma,
            reflectance: REFLECTANCE,
        }
    }

    /// Shading without the unit-length check.
    pub fn shade_raw(&self, n: &Vector3<f64>) -> [f64; 3] {
        let h = sh_basis(n);
        let mut out = [0.0; 3];
        for (c, o) in out.iter_mut().enumerate() {
            let g = &self.gamma[c * SH_COEFFS..(c + 1) * SH_COEFFS];
            *o = self.reflectance * g.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>();
        }
        out
    }

    /// Per-channel gradient of the shaded colour with respect to the normal.
    pub fn shade_gradient(&self, n: &Vector3<f64>) -> [Vector3<f64>; 3] {
        let dh = sh_basis_gradient(n);
        let mut out = [Vector3::zeros(); 3];
        for (c, o) in out.iter_mut().enumerate() {
            for b in 0..SH_COEFFS {
                *o += dh[b] * (self.reflectance * self.gamma[c * SH_COEFFS + b]);
            }
        }
        out
    }
}

/// `C(n, gamma) = r * sum_b gamma_b H_b(n)` per channel.
pub fn shade(normal: &Vector3<f64>, illum: &Illumination) -> Result<[f64; 3]> {
    let norm = normal.norm();
    if (norm - 1.0).abs() > 1e-6 || !norm.is_finite() {
        return Err(Error::NonUnitNormal { norm });
    }
    Ok(illum.shade_raw(normal))
}
