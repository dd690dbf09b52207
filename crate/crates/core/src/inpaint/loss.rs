//! Context, prior and geometry losses of the latent search.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mesh, OffsetSurface, Point3};
use crate::model::FaceModel;
use crate::render::RenderedImage;

/// Face feature a constraint acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConstraintTarget {
    /// Anthropometric landmark id, resolved through the model's map.
    Landmark(u32),
    /// Raw template vertex.
    Vertex(usize),
}

impl fmt::Display for ConstraintTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Landmark(id) => write!(f, "{id}"),
            Self::Vertex(v) => write!(f, "v:{v}"),
        }
    }
}

impl FromStr for ConstraintTarget {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.strip_prefix("v:") {
            Some(v) => v.parse().map(Self::Vertex).map_err(|_| format!("bad vertex index {v:?}")),
            None => s.parse().map(Self::Landmark).map_err(|_| format!("bad landmark id {s:?}")),
        }
    }
}

/// A face point that should pass through `point`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub target: ConstraintTarget,
    pub point: [f64; 3],
}

/// Vertices that should lie on an offset of the skull. The target point of
/// each vertex is its live projection onto the surface.
#[derive(Debug, Clone)]
pub struct DefiniteSurface {
    pub surface: OffsetSurface,
    pub vertices: Vec<usize>,
}

impl DefiniteSurface {
    pub fn new(skull: &Mesh, offset: f64, vertices: Vec<usize>) -> Result<Self> {
        Ok(Self {
            surface: OffsetSurface::new(skull, offset)?,
            vertices,
        })
    }

    /// `|signed distance - offset|` for each vertex of `face`.
    pub fn residuals(&self, face: &[Point3]) -> Vec<f64> {
        face.iter()
            .map(|p| (self.surface.project(p).signed_distance - self.surface.offset()).abs())
            .collect()
    }
}

/// Template vertex of every constraint.
pub fn resolve_constraints(model: &FaceModel, constraints: &[Constraint]) -> Result<Vec<(usize, Point3)>> {
    let mut missing = Vec::new();
    let mut out = Vec::with_capacity(constraints.len());
    for c in constraints {
        let v = match c.target {
            ConstraintTarget::Landmark(id) => match model.anthropometric_map.get(&id) {
                Some(&v) => v,
                None => {
                    missing.push(id);
                    continue;
                }
            },
            ConstraintTarget::Vertex(v) if v < model.vertex_count() => v,
            ConstraintTarget::Vertex(v) => {
                return Err(Error::InvalidInput(format!(
                    "constraint vertex {v} is outside the model ({} vertices)",
                    model.vertex_count()
                )))
            }
        };
        out.push((v, Point3::from(c.point)));
    }
    if !missing.is_empty() {
        return Err(Error::MissingIds { ids: missing });
    }
    Ok(out)
}

fn check_pair(g: &RenderedImage, y: &RenderedImage, weights: &[f64]) -> Result<()> {
    if (g.width, g.height) != (y.width, y.height) {
        return Err(Error::InvalidInput(format!(
            "generated image is {}x{}, target is {}x{}",
            g.width, g.height, y.width, y.height
        )));
    }
    if weights.len() != g.pixel_count() {
        return Err(Error::LengthMismatch {
            block: "importance weights",
            expected: g.pixel_count(),
            got: weights.len(),
        });
    }
    Ok(())
}

/// `sum_i W_i sum_c |g_ic - y_ic|`.
pub fn context_loss(g: &RenderedImage, y: &RenderedImage, weights: &[f64]) -> Result<f64> {
    check_pair(g, y, weights)?;
    Ok(weights
        .iter()
        .enumerate()
        .filter(|(_, w)| **w != 0.0)
        .map(|(i, w)| w * (0..3).map(|c| (g.pixels[3 * i + c] - y.pixels[3 * i + c]).abs()).sum::<f64>())
        .sum())
}

/// Gradient of [`context_loss`] with respect to the pixels of `g`.
pub fn context_loss_gradient(g: &RenderedImage, y: &RenderedImage, weights: &[f64]) -> Result<Vec<f64>> {
    check_pair(g, y, weights)?;
    let mut out = vec![0.0; g.pixels.len()];
    for (i, w) in weights.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        for c in 0..3 {
            let d = g.pixels[3 * i + c] - y.pixels[3 * i + c];
            out[3 * i + c] = if d > 0.0 {
                *w
            } else if d < 0.0 {
                -w
            } else {
                0.0
            };
        }
    }
    Ok(out)
}

fn check_score(d: f64) -> Result<()> {
    if !(d > 0.0 && d < 1.0) {
        return Err(Error::Contract(format!("discriminator score {d} is outside (0, 1)")));
    }
    Ok(())
}

/// `lambda_p * ln(1 - D)`.
pub fn prior_loss(d: f64, lambda_p: f64) -> Result<f64> {
    check_score(d)?;
    Ok(if lambda_p == 0.0 { 0.0 } else { lambda_p * (1.0 - d).ln() })
}

/// Derivative of [`prior_loss`] in `D`.
pub fn prior_loss_derivative(d: f64, lambda_p: f64) -> Result<f64> {
    check_score(d)?;
    Ok(-lambda_p / (1.0 - d))
}

/// `lambda_2` times the summed distances of the constrained face points to
/// their targets, plus the distances of definite vertices to the offset
/// surface.
pub fn geometry_loss(
    face: &Mesh,
    model: &FaceModel,
    constraints: &[Constraint],
    definite: Option<&DefiniteSurface>,
    lambda_2: f64,
) -> Result<f64> {
    if face.vertex_count() != model.vertex_count() {
        return Err(Error::InvalidInput(format!(
            "face has {} vertices, model has {}",
            face.vertex_count(),
            model.vertex_count()
        )));
    }
    let targets = resolve_constraints(model, constraints)?;
    let mut sum: f64 = targets.iter().map(|(v, t)| (face.vertices[*v] - t).norm()).sum();
    if let Some(d) = definite {
        let bad: BTreeSet<usize> = d.vertices.iter().copied().filter(|&v| v >= face.vertex_count()).collect();
        if !bad.is_empty() {
            return Err(Error::InvalidInput(format!("definite vertices outside the face: {bad:?}")));
        }
        let pts: Vec<Point3> = d.vertices.iter().map(|&v| face.vertices[v]).collect();
        sum += d.residuals(&pts).iter().sum::<f64>();
    }
    Ok(lambda_2 * sum)
}
