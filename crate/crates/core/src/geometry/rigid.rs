use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::mesh::{Mesh, Point3};
use crate::error::{Error, Result};

/// `p -> rotation * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn apply_mesh(&self, mesh: &Mesh) -> Mesh {
        mesh.with_vertices(mesh.vertices.iter().map(|p| self.apply(p)).collect())
    }

    /// Least-squares rigid transform taking `source[i]` onto `target[i]`
    /// (orthogonal Procrustes / Kabsch with reflection correction).
    pub fn fit(source: &[Point3], target: &[Point3]) -> Result<Self> {
        if source.len() != target.len() {
            return Err(Error::LengthMismatch {
                block: "procrustes correspondences",
                expected: source.len(),
                got: target.len(),
            });
        }
        if source.is_empty() {
            return Err(Error::Empty("procrustes correspondences"));
        }
        let n = source.len() as f64;
        let cs = source.iter().sum::<Point3>() / n;
        let ct = target.iter().sum::<Point3>() / n;
        let mut h = Matrix3::zeros();
        for (s, t) in source.iter().zip(target) {
            h += (s - cs) * (t - ct).transpose();
        }
        let svd = h.svd(true, true);
        let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
            return Err(Error::RankDeficient("procrustes SVD failed".into()));
        };
        let v = v_t.transpose();
        let d = (v * u.transpose()).determinant().signum();
        let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
        let rotation = v * fix * u.transpose();
        Ok(Self {
            rotation,
            translation: ct - rotation * cs,
        })
    }

    /// Rotation angle (radians) of `self * other^-1`.
    pub fn rotation_error(&self, other: &RigidTransform) -> f64 {
        let r = self.rotation * other.rotation.transpose();
        ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rotation::rodrigues;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn recovers_known_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let truth = RigidTransform {
            rotation: rodrigues(&Vector3::new(0.4, -1.3, 0.9)),
            translation: Vector3::new(12.0, -3.0, 40.0),
        };
        let src: Vec<Point3> = (0..10)
            .map(|_| Point3::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)))
            .collect();
        let dst: Vec<Point3> = src.iter().map(|p| truth.apply(p)).collect();
        let est = RigidTransform::fit(&src, &dst).unwrap();
        assert!(est.rotation_error(&truth) < 1e-9);
        assert!((est.translation - truth.translation).norm() < 1e-9);
        let back = est.inverse();
        for (s, d) in src.iter().zip(&dst) {
            assert!((back.apply(d) - s).norm() < 1e-9);
        }
    }

    #[test]
    fn never_returns_reflection() {
        let src = vec![Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0), Point3::new(0.0, 0.0, 1.0), Point3::zeros()];
        let dst: Vec<Point3> = src.iter().map(|p| Point3::new(-p.x, p.y, p.z)).collect();
        let est = RigidTransform::fit(&src, &dst).unwrap();
        assert!((est.rotation.determinant() - 1.0).abs() < 1e-12);
    }
}
