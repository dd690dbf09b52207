//! Pinhole camera `u = pp + f * (x_c, y_c) / z_c` with `x_c = R^T (p - t)`.

use nalgebra::{Matrix2x3, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::rotation::{rodrigues, rodrigues_derivatives};
use crate::geometry::{Point2, Point3};
use crate::model::{FaceModel, SemanticCodeVector};

/// Canonical image side length in pixels.
pub const CANONICAL_SIZE: usize = 240;
/// Canonical camera distance in mm.
pub const CANONICAL_DISTANCE: f64 = 600.0;
/// Fraction of the image the mean head spans in the canonical view.
pub const CANONICAL_FILL: f64 = 0.8;

/// Fixed part of the camera. `rest_translation` is the camera position the
/// code's translation block is added to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub focal: f64,
    pub principal: [f64; 2],
    pub width: usize,
    pub height: usize,
    pub rest_translation: [f64; 3],
}

impl CameraIntrinsics {
    /// 240x240 view from 600 mm in front of the face, focal chosen so the
    /// model's mean head spans 80% of the image.
    pub fn canonical(model: &FaceModel) -> Self {
        let extent = model
            .mean
            .bounding_box()
            .map(|(lo, hi)| (hi.x - lo.x).max(hi.y - lo.y))
            .unwrap_or(1.0);
        let size = CANONICAL_SIZE as f64;
        Self {
            focal: CANONICAL_FILL * size * CANONICAL_DISTANCE / extent,
            principal: [size / 2.0, size / 2.0],
            width: CANONICAL_SIZE,
            height: CANONICAL_SIZE,
            rest_translation: [0.0, 0.0, -CANONICAL_DISTANCE],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal > 0.0 && self.focal.is_finite()) {
            return Err(Error::InvalidInput(format!("focal must be positive, got {}", self.focal)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidInput("image size must be positive".into()));
        }
        Ok(())
    }

    /// Camera for a code's rendering block.
    pub fn camera(&self, x: &SemanticCodeVector) -> Camera {
        let t = x.cam_translation();
        let r = self.rest_translation;
        Camera {
            focal: self.focal,
            principal: self.principal,
            rotation: x.cam_rotation(),
            translation: [r[0] + t[0], r[1] + t[1], r[2] + t[2]],
            width: self.width,
            height: self.height,
        }
    }

    /// Camera at the rest pose (no rotation, rest translation).
    pub fn rest_camera(&self) -> Camera {
        Camera {
            focal: self.focal,
            principal: self.principal,
            rotation: [0.0; 3],
            translation: self.rest_translation,
            width: self.width,
            height: self.height,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub focal: f64,
    pub principal: [f64; 2],
    /// Axis-angle camera orientation `T`.
    pub rotation: [f64; 3],
    /// Camera position `t` in world mm.
    pub translation: [f64; 3],
    pub width: usize,
    pub height: usize,
}

/// Camera-space point and screen position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: Point2,
    pub depth: f64,
    pub camera_point: Point3,
}

impl Camera {
    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        rodrigues(&Vector3::from(self.rotation))
    }

    pub fn position(&self) -> Point3 {
        Point3::from(self.translation)
    }

    /// `Phi(p) = R^T (p - t)`.
    pub fn to_camera(&self, p: &Point3) -> Point3 {
        self.rotation_matrix().transpose() * (p - self.position())
    }

    pub fn project(&self, p: &Point3) -> Result<Projection> {
        let r_t = self.rotation_matrix().transpose();
        self.project_with(&r_t, p)
    }

    pub(crate) fn project_with(&self, r_t: &Matrix3<f64>, p: &Point3) -> Result<Projection> {
        let q = r_t * (p - self.position());
        if q.z <= 0.0 || !q.z.is_finite() {
            return Err(Error::BehindCamera { depth: q.z });
        }
        Ok(Projection {
            pixel: Point2::new(
                self.principal[0] + self.focal * q.x / q.z,
                self.principal[1] + self.focal * q.y / q.z,
            ),
            depth: q.z,
            camera_point: q,
        })
    }

    /// Derivative of the pixel position with respect to the camera-space point.
    pub fn pixel_jacobian(&self, q: &Point3) -> Matrix2x3<f64> {
        let f = self.focal;
        let iz = 1.0 / q.z;
        Matrix2x3::new(f * iz, 0.0, -f * q.x * iz * iz, 0.0, f * iz, -f * q.y * iz * iz)
    }

    /// `d(R^T)/dT_i` for the three rotation entries.
    pub fn rotation_transpose_derivatives(&self) -> [Matrix3<f64>; 3] {
        rodrigues_derivatives(&Vector3::from(self.rotation)).map(|d| d.transpose())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam(focal: f64, rotation: [f64; 3], translation: [f64; 3]) -> Camera {
        Camera {
            focal,
            principal: [0.0, 0.0],
            rotation,
            translation,
            width: 10,
            height: 10,
        }
    }

    #[test]
    fn on_axis_point() {
        let p = cam(1.0, [0.0; 3], [0.0; 3]).project(&Point3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(p.pixel, Point2::zeros());
        assert_eq!(p.depth, 1.0);
    }

    #[test]
    fn translation_moves_depth() {
        let q = Point3::new(0.0, 0.0, 5.0);
        let a = cam(1.0, [0.0; 3], [0.0; 3]).project(&q).unwrap();
        let b = cam(1.0, [0.0; 3], [0.0, 0.0, -7.0]).project(&q).unwrap();
        assert!((b.depth - a.depth - 7.0).abs() < 1e-12);
    }

    #[test]
    fn quarter_turn_matches_explicit_matrix() {
        // rotation by pi/2 about y written out by hand
        let r = Matrix3::new(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0);
        let c = Camera {
            focal: 500.0,
            principal: [120.0, 100.0],
            rotation: [0.0, std::f64::consts::FRAC_PI_2, 0.0],
            translation: [3.0, -2.0, 1.0],
            width: 240,
            height: 200,
        };
        for p in [Point3::new(40.0, 5.0, -7.0), Point3::new(12.0, -30.0, 2.0), Point3::new(100.0, 0.0, 50.0)] {
            let q = r.transpose() * (p - Point3::new(3.0, -2.0, 1.0));
            let expect = Point2::new(120.0 + 500.0 * q.x / q.z, 100.0 + 500.0 * q.y / q.z);
            let got = c.project(&p).unwrap();
            assert!((got.pixel - expect).norm() < 1e-9);
            assert!((got.depth - q.z).abs() < 1e-9);
        }
    }

    #[test]
    fn behind_camera_is_an_error() {
        let c = cam(1.0, [0.0; 3], [0.0; 3]);
        assert!(matches!(c.project(&Point3::new(0.0, 0.0, -1.0)), Err(Error::BehindCamera { .. })));
        assert!(c.project(&Point3::new(1.0, 1.0, 0.0)).is_err());
    }
}
