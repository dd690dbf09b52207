//! Annotated skull: mesh plus anthropometric landmarks with outward normals.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{ClosestPointIndex, Mesh, Point3};
use crate::model::FaceModel;

use super::depth::TissueDepthTable;

/// Largest accepted distance of a landmark from the skull surface.
pub const ON_SURFACE_TOL: f64 = 1e-3;
const UNIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkullLandmark {
    pub position: Point3,
    pub normal: Point3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkullAnnotation {
    pub skull: Mesh,
    pub landmarks: BTreeMap<u32, SkullLandmark>,
}

impl SkullAnnotation {
    /// Checks unit normals and that every landmark lies on the skull.
    pub fn new(skull: Mesh, landmarks: BTreeMap<u32, SkullLandmark>) -> Result<Self> {
        if skull.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let index = ClosestPointIndex::new(&skull)?;
        for (id, l) in &landmarks {
            let norm = l.normal.norm();
            if (norm - 1.0).abs() > UNIT_TOL {
                return Err(Error::NonUnitNormal { norm });
            }
            let d = index.closest(&l.position).distance;
            if !(d <= ON_SURFACE_TOL) {
                return Err(Error::InvalidInput(format!("skull landmark {id} lies {d} mm off the skull surface")));
            }
        }
        Ok(Self { skull, landmarks })
    }

    /// Parses landmark rows `id x y z nx ny nz`; normals are normalized if
    /// within 1e-3 of unit length.
    pub fn parse_landmarks(text: &str, path: &Path) -> Result<BTreeMap<u32, SkullLandmark>> {
        let mut out = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 7 {
                return Err(Error::parse(path, k + 1, format!("expected `id x y z nx ny nz`, got {line:?}")));
            }
            let id: u32 = cols[0].parse().map_err(|_| Error::parse(path, k + 1, format!("bad id {:?}", cols[0])))?;
            let mut v = [0.0f64; 6];
            for (slot, s) in v.iter_mut().zip(&cols[1..]) {
                *slot = s.parse().map_err(|_| Error::parse(path, k + 1, format!("bad number {s:?}")))?;
                if !slot.is_finite() {
                    return Err(Error::parse(path, k + 1, "non-finite value"));
                }
            }
            let normal = Point3::new(v[3], v[4], v[5]);
            let norm = normal.norm();
            if (norm - 1.0).abs() > 1e-3 {
                return Err(Error::parse(path, k + 1, format!("normal has length {norm}")));
            }
            let lm = SkullLandmark {
                position: Point3::new(v[0], v[1], v[2]),
                normal: normal / norm,
            };
            if out.insert(id, lm).is_some() {
                return Err(Error::parse(path, k + 1, format!("id {id} appears twice")));
            }
        }
        Ok(out)
    }

    pub fn landmarks_to_text(&self) -> String {
        let mut out = String::new();
        for (id, l) in &self.landmarks {
            let (p, n) = (l.position, l.normal);
            let _ = writeln!(out, "{id} {} {} {} {} {} {}", p.x, p.y, p.z, n.x, n.y, n.z);
        }
        out
    }

    /// Reads a skull OBJ and its landmark file.
    pub fn read(mesh_path: &Path, landmark_path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(mesh_path)?;
        let topology = Mesh::obj_topology_hint(&text).unwrap_or("skull").to_string();
        let skull = Mesh::parse_obj(&text, mesh_path, &topology)?;
        let landmarks = Self::parse_landmarks(&std::fs::read_to_string(landmark_path)?, landmark_path)?;
        Self::new(skull, landmarks)
    }

    pub fn write(&self, mesh_path: &Path, landmark_path: &Path) -> Result<()> {
        self.skull.write_obj(mesh_path)?;
        std::fs::write(landmark_path, self.landmarks_to_text())?;
        Ok(())
    }
}

/// Synthetic skull underneath a known face.
///
/// Every face vertex moves inward along its normal by the forehead depth,
/// except anthropometric vertices, which use their own table depth. Each
/// landmark is annotated at its skull vertex with the face normal, so the
/// extended landmarks land exactly on the generating face.
pub fn skull_from_face(face: &Mesh, model: &FaceModel, depths: &TissueDepthTable) -> Result<SkullAnnotation> {
    if face.topology_id != model.topology_id() {
        return Err(Error::InvalidInput(format!(
            "face topology {:?} differs from model topology {:?}",
            face.topology_id,
            model.topology_id()
        )));
    }
    let d1 = depths.forehead_depth()?;
    let normals = face.vertex_normals();
    if !normals.undefined.is_empty() {
        return Err(Error::InvalidInput(format!("face has {} degenerate vertices", normals.undefined.len())));
    }
    let mut depth = vec![d1; face.vertex_count()];
    for (id, &v) in &model.anthropometric_map {
        if let Some(e) = depths.get(*id) {
            depth[v] = e.depth;
        }
    }
    let vertices = face
        .vertices
        .iter()
        .zip(&normals.normals)
        .zip(&depth)
        .map(|((p, n), d)| p - n * *d)
        .collect();
    let skull = Mesh::new(vertices, face.triangles.clone(), "synthetic-skull")?;
    let landmarks = model
        .anthropometric_map
        .iter()
        .filter(|(id, _)| depths.get(**id).is_some())
        .map(|(&id, &v)| {
            (
                id,
                SkullLandmark {
                    position: skull.vertices[v],
                    normal: normals.normals[v],
                },
            )
        })
        .collect();
    SkullAnnotation::new(skull, landmarks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives::octasphere;

    #[test]
    fn parse_and_print_round_trip() {
        let text = "1 0 0 50 0 0 1\n# comment\n2 50 0 0 1 0 0\n";
        let lm = SkullAnnotation::parse_landmarks(text, Path::new("s.txt")).unwrap();
        let skull = octasphere(3, 50.0);
        let a = SkullAnnotation::new(skull, lm).unwrap();
        let again = SkullAnnotation::parse_landmarks(&a.landmarks_to_text(), Path::new("s.txt")).unwrap();
        assert_eq!(again, a.landmarks);
    }

    #[test]
    fn bad_rows_cite_line() {
        let err = SkullAnnotation::parse_landmarks("1 0 0 0 0 0 1\n2 0 0 0 0 0 3\n", Path::new("s.txt")).unwrap_err();
        assert!(err.to_string().contains("s.txt:2"), "{err}");
        let err = SkullAnnotation::parse_landmarks("1 0 0 0 0 1\n", Path::new("s.txt")).unwrap_err();
        assert!(err.to_string().contains("s.txt:1"), "{err}");
    }

    #[test]
    fn off_surface_landmark_rejected() {
        let mut lm = BTreeMap::new();
        lm.insert(
            1,
            SkullLandmark {
                position: Point3::new(0.0, 0.0, 51.0),
                normal: Point3::z(),
            },
        );
        assert!(SkullAnnotation::new(octasphere(3, 50.0), lm).is_err());
    }
}
