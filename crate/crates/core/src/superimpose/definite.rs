//! Constraints on regions of constant tissue depth (forehead, back of head).

use serde::{Deserialize, Serialize};

use super::depth::TissueDepthTable;
use super::skull::SkullAnnotation;
use crate::error::{Error, Result};
use crate::geometry::{Mesh, OffsetSurface, Point3};
use crate::model::synth::HEAD_RADII;
use crate::model::FaceModel;

/// Forehead starts above this normalized height on the front of the head.
const FOREHEAD_V: f64 = -0.55;

/// A face vertex and the point on the offset skull it should pass through.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefiniteConstraint {
    pub vertex: usize,
    pub point: [f64; 3],
}

/// Back of the head, or the forehead on the front.
pub fn is_back_of_head(p: &Point3) -> bool {
    p.z > 0.0
}

pub fn is_forehead(p: &Point3) -> bool {
    p.z <= 0.0 && p.y / HEAD_RADII[1] < FOREHEAD_V
}

/// Forehead and back-of-head vertices of the model's mean mesh, excluding
/// anthropometric landmark vertices (those carry their own depth).
pub fn definite_region_vertices(model: &FaceModel) -> Vec<usize> {
    let landmark: std::collections::BTreeSet<usize> = model.anthropometric_map.values().copied().collect();
    model
        .mean
        .vertices
        .iter()
        .enumerate()
        .filter(|(i, p)| (is_back_of_head(p) || is_forehead(p)) && !landmark.contains(i))
        .map(|(i, _)| i)
        .collect()
}

/// Projects each region vertex of `face` onto the skull's offset surface at
/// the forehead depth.
pub fn definite_region_landmarks(
    skull: &SkullAnnotation,
    depths: &TissueDepthTable,
    face: &Mesh,
    region: &[usize],
) -> Result<Vec<DefiniteConstraint>> {
    if region.is_empty() {
        return Err(Error::Empty("definite region"));
    }
    if let Some(&bad) = region.iter().find(|&&v| v >= face.vertex_count()) {
        return Err(Error::InvalidInput(format!("definite vertex {bad} is outside the face mesh")));
    }
    let surface = OffsetSurface::new(&skull.skull, depths.forehead_depth()?)?;
    Ok(region
        .iter()
        .map(|&v| {
            let p: Point3 = surface.project(&face.vertices[v]).point;
            DefiniteConstraint { vertex: v, point: p.into() }
        })
        .collect())
}
