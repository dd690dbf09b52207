//! The 228-dimensional semantic code vector `x = (alpha, delta, theta, T, t, gamma)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_SHAPE: usize = 90;
pub const N_EXPRESSION: usize = 90;
/// Global rotation plus four articulated joints (neck, jaw, two eyes).
pub const N_JOINTS: usize = 5;
pub const N_POSE: usize = 3 * N_JOINTS;
pub const SH_COEFFS: usize = 9;
pub const N_GAMMA: usize = 3 * SH_COEFFS;

pub const ALPHA: usize = 0;
pub const DELTA: usize = ALPHA + N_SHAPE;
pub const THETA: usize = DELTA + N_EXPRESSION;
pub const CAM_ROTATION: usize = THETA + N_POSE;
pub const CAM_TRANSLATION: usize = CAM_ROTATION + 3;
pub const GAMMA: usize = CAM_TRANSLATION + 3;
pub const CODE_DIM: usize = GAMMA + N_GAMMA;

/// Length of the geometry block `G = (alpha, delta, theta)`.
pub const GEOMETRY_DIM: usize = CAM_ROTATION;
/// Length of the rendering block `R = (T, t, gamma)`.
pub const RENDER_DIM: usize = CODE_DIM - GEOMETRY_DIM;

/// Semantic code vector, stored flat in the canonical block order.
///
/// `gamma` is channel-major: entry `c * 9 + b` weights SH basis `b` in colour
/// channel `c`. The camera translation is an offset from the rest position
/// held by [`crate::render::CameraIntrinsics`], so the zero code is a valid
/// frontal view.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticCodeVector {
    values: Vec<f64>,
}

impl Default for SemanticCodeVector {
    fn default() -> Self {
        Self::zeros()
    }
}

impl SemanticCodeVector {
    pub fn zeros() -> Self {
        Self {
            values: vec![0.0; CODE_DIM],
        }
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        if values.len() != CODE_DIM {
            return Err(Error::LengthMismatch {
                block: "semantic code",
                expected: CODE_DIM,
                got: values.len(),
            });
        }
        Ok(Self {
            values: values.to_vec(),
        })
    }

    /// Code with the given geometry block and a zero rendering block.
    pub fn from_geometry(geometry: &[f64]) -> Result<Self> {
        let mut x = Self::zeros();
        x.set_geometry(geometry)?;
        Ok(x)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn alpha(&self) -> &[f64] {
        &self.values[ALPHA..DELTA]
    }
    pub fn delta(&self) -> &[f64] {
        &self.values[DELTA..THETA]
    }
    pub fn theta(&self) -> &[f64] {
        &self.values[THETA..CAM_ROTATION]
    }
    pub fn cam_rotation(&self) -> [f64; 3] {
        [self.values[CAM_ROTATION], self.values[CAM_ROTATION + 1], self.values[CAM_ROTATION + 2]]
    }
    pub fn cam_translation(&self) -> [f64; 3] {
        [
            self.values[CAM_TRANSLATION],
            self.values[CAM_TRANSLATION + 1],
            self.values[CAM_TRANSLATION + 2],
        ]
    }
    pub fn gamma(&self) -> &[f64] {
        &self.values[GAMMA..CODE_DIM]
    }

    pub fn alpha_mut(&mut self) -> &mut [f64] {
        &mut self.values[ALPHA..DELTA]
    }
    pub fn delta_mut(&mut self) -> &mut [f64] {
        &mut self.values[DELTA..THETA]
    }
    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.values[THETA..CAM_ROTATION]
    }
    pub fn cam_rotation_mut(&mut self) -> &mut [f64] {
        &mut self.values[CAM_ROTATION..CAM_TRANSLATION]
    }
    pub fn cam_translation_mut(&mut self) -> &mut [f64] {
        &mut self.values[CAM_TRANSLATION..GAMMA]
    }
    pub fn gamma_mut(&mut self) -> &mut [f64] {
        &mut self.values[GAMMA..CODE_DIM]
    }

    pub fn geometry(&self) -> &[f64] {
        &self.values[..GEOMETRY_DIM]
    }
    pub fn rendering(&self) -> &[f64] {
        &self.values[GEOMETRY_DIM..]
    }

    pub fn set_geometry(&mut self, g: &[f64]) -> Result<()> {
        if g.len() != GEOMETRY_DIM {
            return Err(Error::LengthMismatch {
                block: "geometry block",
                expected: GEOMETRY_DIM,
                got: g.len(),
            });
        }
        self.values[..GEOMETRY_DIM].copy_from_slice(g);
        Ok(())
    }

    pub fn set_rendering(&mut self, r: &[f64]) -> Result<()> {
        if r.len() != RENDER_DIM {
            return Err(Error::LengthMismatch {
                block: "rendering block",
                expected: RENDER_DIM,
                got: r.len(),
            });
        }
        self.values[GEOMETRY_DIM..].copy_from_slice(r);
        Ok(())
    }

    /// `E_r`: squared norm of alpha, delta and theta.
    pub fn regularization(&self) -> f64 {
        self.geometry().iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[derive(Serialize, Deserialize)]
struct CodeBlocks {
    alpha: Vec<f64>,
    delta: Vec<f64>,
    theta: Vec<f64>,
    cam_rotation: Vec<f64>,
    cam_translation: Vec<f64>,
    gamma: Vec<f64>,
}

impl Serialize for SemanticCodeVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CodeBlocks {
            alpha: self.alpha().to_vec(),
            delta: self.delta().to_vec(),
            theta: self.theta().to_vec(),
            cam_rotation: self.cam_rotation().to_vec(),
            cam_translation: self.cam_translation().to_vec(),
            gamma: self.gamma().to_vec(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SemanticCodeVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let b = CodeBlocks::deserialize(d)?;
        let flat: Vec<f64> = [b.alpha, b.delta, b.theta, b.cam_rotation, b.cam_translation, b.gamma].concat();
        SemanticCodeVector::from_slice(&flat).map_err(serde::de::Error::custom)
    }
}
