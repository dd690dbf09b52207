//! Extended landmarks and the superimposition score `S = M / (M + U)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::depth::TissueDepthTable;
use super::skull::SkullAnnotation;
use crate::error::{Error, Result};
use crate::geometry::{Mesh, Point3, RigidTransform};
use crate::model::FaceModel;

/// How the face is registered to the skull before scoring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alignment {
    /// Face and skull already share a frame.
    Identity,
    /// Apply this transform to the face.
    Explicit(RigidTransform),
    /// Least-squares rigid fit of the face landmarks onto the extended points.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandmarkMatch {
    pub id: u32,
    pub extended: [f64; 3],
    pub face_point: [f64; 3],
    pub distance: f64,
    pub eta: f64,
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperimpositionResult {
    pub landmarks: Vec<LandmarkMatch>,
    pub matched: usize,
    pub unmatched: usize,
    pub score: f64,
    /// Transform applied to the face before classification.
    pub alignment: RigidTransform,
}

impl SuperimpositionResult {
    pub fn percent(&self) -> String {
        format_percent(self.score)
    }

    pub fn mean_distance(&self) -> f64 {
        self.landmarks.iter().map(|l| l.distance).sum::<f64>() / self.landmarks.len().max(1) as f64
    }

    pub fn unmatched_ids(&self) -> Vec<u32> {
        self.landmarks.iter().filter(|l| !l.matched).map(|l| l.id).collect()
    }
}

/// `0.4379` -> `"43.79%"`.
pub fn format_percent(score: f64) -> String {
    format!("{:.2}%", 100.0 * score)
}

/// `n_i = m_i + d_i * normal_i` for every id in the depth table.
pub fn extend_landmarks(skull: &SkullAnnotation, depths: &TissueDepthTable) -> Result<BTreeMap<u32, Point3>> {
    let missing: Vec<u32> = depths.ids().filter(|id| !skull.landmarks.contains_key(id)).collect();
    if !missing.is_empty() {
        return Err(Error::MissingIds { ids: missing });
    }
    Ok(depths
        .entries
        .iter()
        .map(|(id, e)| {
            let l = &skull.landmarks[id];
            (*id, l.position + l.normal * e.depth)
        })
        .collect())
}

/// Classifies every landmark shared by the depth table and the model.
pub fn superimpose(
    face: &Mesh,
    model: &FaceModel,
    skull: &SkullAnnotation,
    depths: &TissueDepthTable,
    alignment: Alignment,
) -> Result<SuperimpositionResult> {
    let extended = extend_landmarks(skull, depths)?;
    superimpose_extended(face, model, &extended, depths, alignment)
}

/// [`superimpose`] with precomputed extended landmarks.
pub fn superimpose_extended(
    face: &Mesh,
    model: &FaceModel,
    extended: &BTreeMap<u32, Point3>,
    depths: &TissueDepthTable,
    alignment: Alignment,
) -> Result<SuperimpositionResult> {
    if face.topology_id != model.topology_id() || face.vertex_count() != model.vertex_count() {
        return Err(Error::InvalidInput(format!(
            "face topology {:?} does not match model topology {:?}",
            face.topology_id,
            model.topology_id()
        )));
    }
    let pairs: Vec<(u32, Point3, Point3, f64)> = extended
        .iter()
        .filter_map(|(id, n)| {
            let v = *model.anthropometric_map.get(id)?;
            let eta = depths.get(*id)?.eta;
            Some((*id, *n, face.vertices[v], eta))
        })
        .collect();
    if pairs.is_empty() {
        return Err(Error::Empty("landmark intersection of skull, depth table and model"));
    }
    let transform = match alignment {
        Alignment::Identity => RigidTransform::identity(),
        Alignment::Explicit(t) => t,
        Alignment::Auto => {
            let src: Vec<Point3> = pairs.iter().map(|p| p.2).collect();
            let dst: Vec<Point3> = pairs.iter().map(|p| p.1).collect();
            RigidTransform::fit(&src, &dst)?
        }
    };
    let landmarks: Vec<LandmarkMatch> = pairs
        .iter()
        .map(|&(id, n, p, eta)| {
            let p = transform.apply(&p);
            let distance = (n - p).norm();
            LandmarkMatch {
                id,
                extended: n.into(),
                face_point: p.into(),
                distance,
                eta,
                matched: distance < eta,
            }
        })
        .collect();
    let matched = landmarks.iter().filter(|l| l.matched).count();
    let unmatched = landmarks.len() - matched;
    Ok(SuperimpositionResult {
        score: matched as f64 / (matched + unmatched) as f64,
        matched,
        unmatched,
        landmarks,
        alignment: transform,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives::octasphere;
    use crate::superimpose::depth::TissueDepth;
    use crate::superimpose::skull::SkullLandmark;

    fn axis_skull(depth: f64) -> (SkullAnnotation, TissueDepthTable) {
        let mut lm = BTreeMap::new();
        lm.insert(
            1,
            SkullLandmark {
                position: Point3::new(0.0, 0.0, 50.0),
                normal: Point3::z(),
            },
        );
        let skull = SkullAnnotation::new(octasphere(2, 50.0), lm).unwrap();
        let mut e = BTreeMap::new();
        e.insert(1, TissueDepth { depth, eta: 1.0 });
        (skull, TissueDepthTable::new(e).unwrap())
    }

    #[test]
    fn axis_extension() {
        let (skull, depths) = axis_skull(5.0);
        let n = extend_landmarks(&skull, &depths).unwrap();
        assert_eq!(n[&1], Point3::new(0.0, 0.0, 55.0));
    }

    #[test]
    fn missing_skull_ids_listed() {
        let (skull, _) = axis_skull(5.0);
        match extend_landmarks(&skull, &TissueDepthTable::synthetic()) {
            Err(Error::MissingIds { ids }) => assert_eq!(ids, (2..=18).collect::<Vec<u32>>()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn percent_format() {
        assert_eq!(format_percent(0.4379), "43.79%");
        assert_eq!(format_percent(1.0), "100.00%");
        assert_eq!(format_percent(0.75), "75.00%");
    }
}
