//! Deterministic synthetic face models on a head-like template.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::code::{N_EXPRESSION, N_JOINTS, N_SHAPE};
use super::face_model::{FaceModel, Joint, JOINT_NAMES, JOINT_PARENTS};
use crate::error::{Error, Result};
use crate::geometry::primitives::icosphere;
use crate::geometry::{Mesh, Point3};

/// Half-axes of the template head ellipsoid (mm): width, height, depth.
pub const HEAD_RADII: [f64; 3] = [75.0, 105.0, 90.0];

/// Number of image landmarks before reduction.
pub const N_IMAGE_LANDMARKS: usize = 66;

/// Per-column RMS displacement (mm) of the shape and expression bases.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisEnergy {
    pub shape: Vec<f64>,
    pub expression: Vec<f64>,
}

impl Default for BasisEnergy {
    fn default() -> Self {
        Self::power_law(3.0, 1.5, 0.6)
    }
}

impl BasisEnergy {
    /// `scale * (k + 1)^-decay` for column `k`.
    pub fn power_law(shape_scale: f64, expression_scale: f64, decay: f64) -> Self {
        let profile = |s: f64, n: usize| (0..n).map(|k| s * ((k + 1) as f64).powf(-decay)).collect();
        Self {
            shape: profile(shape_scale, N_SHAPE),
            expression: profile(expression_scale, N_EXPRESSION),
        }
    }

    pub fn zeros() -> Self {
        Self {
            shape: vec![0.0; N_SHAPE],
            expression: vec![0.0; N_EXPRESSION],
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v, n) in [("shape", &self.shape, N_SHAPE), ("expression", &self.expression, N_EXPRESSION)] {
            if v.len() != n {
                return Err(Error::InvalidInput(format!("{name} energy profile needs {n} entries, got {}", v.len())));
            }
            if v.iter().any(|e| !e.is_finite() || *e < 0.0) {
                return Err(Error::InvalidInput(format!("{name} energies must be finite and non-negative")));
            }
            if v.windows(2).any(|w| w[1] > w[0]) {
                return Err(Error::InvalidInput(format!("{name} energies must be non-increasing")));
            }
        }
        Ok(())
    }
}

/// Icosphere subdivision level giving exactly `n` vertices.
pub fn subdivision_for(n: usize) -> Result<u32> {
    let mut k = 0u32;
    loop {
        let count = 10 * 4usize.pow(k) + 2;
        if count == n {
            return Ok(k);
        }
        if count > n || k > 8 {
            return Err(Error::InvalidInput(format!(
                "vertex count {n} is not supported; use 10*4^k + 2 (12, 42, 162, 642, 2562, 10242, ...)"
            )));
        }
        k += 1;
    }
}

fn gauss(x: f64, s: f64) -> f64 {
    (-(x / s).powi(2)).exp()
}

fn smoothstep(a: f64, b: f64, x: f64) -> f64 {
    let t = ((x - a) / (b - a)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Head template: ellipsoid with nose and chin. x right, y down, face toward -z.
pub fn head_template(n: usize) -> Result<Mesh> {
    let k = subdivision_for(n)?;
    let sphere = icosphere(k, 1.0);
    let verts = sphere
        .vertices
        .iter()
        .map(|d| head_point(d))
        .collect();
    Mesh::new(verts, sphere.triangles, format!("craniofit-head-{n}"))
}

fn head_point(d: &Point3) -> Point3 {
    let mut p = Point3::new(HEAD_RADII[0] * d.x, HEAD_RADII[1] * d.y, HEAD_RADII[2] * d.z);
    if d.z < 0.0 {
        let front = -d.z;
        let nose = 22.0 * gauss(d.x, 0.13) * gauss(d.y + 0.05, 0.2) * front;
        p.z -= nose;
        let chin = 8.0 * gauss(d.x, 0.3) * gauss(d.y - 0.78, 0.12) * front;
        p.z -= chin * 0.9;
        p.y += chin * 0.3;
    }
    p
}

/// Image landmark layout in a normalized face box (`u` right, `v` down,
/// both roughly in [-1, 1]). Follows the common 68-point ordering with the
/// inner mouth reduced to six points.
pub fn image_landmark_layout() -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(N_IMAGE_LANDMARKS);
    for i in 0..17 {
        let a = PI * i as f64 / 16.0;
        out.push([-0.78 * a.cos(), -0.05 + 0.83 * a.sin()]);
    }
    for side in [-1.0, 1.0] {
        for i in 0..5 {
            let s = i as f64 / 4.0;
            let s = if side < 0.0 { s } else { 1.0 - s };
            let u = side * (0.62 - 0.5 * s);
            out.push([u, -0.42 - 0.07 * (PI * s).sin()]);
        }
    }
    for i in 0..4 {
        out.push([0.0, -0.3 + 0.1 * i as f64]);
    }
    for i in 0..5 {
        let u = -0.18 + 0.09 * i as f64;
        out.push([u, 0.1 + 0.03 * (1.0 - (u / 0.18).abs())]);
    }
    for cx in [-0.36, 0.36] {
        for deg in [180.0_f64, 120.0, 60.0, 0.0, 300.0, 240.0] {
            let a = deg.to_radians();
            out.push([cx + 0.13 * a.cos(), -0.25 - 0.055 * a.sin()]);
        }
    }
    for i in 0..12 {
        let a = PI - 2.0 * PI * i as f64 / 12.0;
        out.push([0.3 * a.cos(), 0.38 - 0.12 * a.sin()]);
    }
    for i in 0..6 {
        let a = PI - 2.0 * PI * i as f64 / 6.0;
        out.push([0.17 * a.cos(), 0.38 - 0.05 * a.sin()]);
    }
    debug_assert_eq!(out.len(), N_IMAGE_LANDMARKS);
    out
}

/// Anthropometric sites (id, face-box position): midline 1-10, then the
/// bilateral pairs supraorbital, suborbital, inferior malar and gonion.
pub const ANTHROPOMETRIC_LAYOUT: [(u32, [f64; 2]); 18] = [
    (1, [0.0, -0.62]),
    (2, [0.0, -0.45]),
    (3, [0.0, -0.33]),
    (4, [0.0, -0.12]),
    (5, [0.0, 0.22]),
    (6, [0.0, 0.3]),
    (7, [0.0, 0.46]),
    (8, [0.0, 0.56]),
    (9, [0.0, 0.68]),
    (10, [0.0, 0.8]),
    (11, [-0.36, -0.4]),
    (12, [0.36, -0.4]),
    (13, [-0.36, -0.12]),
    (14, [0.36, -0.12]),
    (15, [-0.5, 0.05]),
    (16, [0.5, 0.05]),
    (17, [-0.75, 0.45]),
    (18, [0.75, 0.45]),
];

pub const ANTHROPOMETRIC_NAMES: [&str; 18] = [
    "supraglabella",
    "glabella",
    "nasion",
    "rhinion",
    "mid-philtrum",
    "upper lip margin",
    "lower lip margin",
    "chin-lip fold",
    "mental eminence",
    "menton",
    "supraorbital left",
    "supraorbital right",
    "suborbital left",
    "suborbital right",
    "inferior malar left",
    "inferior malar right",
    "gonion left",
    "gonion right",
];

/// Front-facing vertex nearest each face-box position, never reusing a
/// vertex. Meshes too coarse for that fall back to the plain nearest vertex.
fn assign_vertices(mean: &Mesh, layout: &[[f64; 2]]) -> Vec<usize> {
    let normals = mean.vertex_normals().normals;
    let mut used = vec![false; mean.vertex_count()];
    let nearest = |uv: &[f64; 2], used: &[bool], strict: bool| {
        let mut best = (f64::INFINITY, None);
        for (i, p) in mean.vertices.iter().enumerate() {
            if strict && (used[i] || p.z >= 0.0 || normals[i].z > -0.15) {
                continue;
            }
            let du = p.x / HEAD_RADII[0] - uv[0];
            let dv = p.y / HEAD_RADII[1] - uv[1];
            let d = du * du + dv * dv + if p.z >= 0.0 { 4.0 } else { 0.0 };
            if d < best.0 {
                best = (d, Some(i));
            }
        }
        best.1
    };
    layout
        .iter()
        .map(|uv| {
            let v = nearest(uv, &used, true)
                .or_else(|| nearest(uv, &used, false))
                .expect("template has vertices");
            used[v] = true;
            v
        })
        .collect()
}

fn joints() -> Vec<Joint> {
    let pivots = [
        Point3::new(0.0, 0.0, 0.0),
        Point3::new(0.0, 95.0, 15.0),
        Point3::new(0.0, 15.0, 10.0),
        Point3::new(-27.0, -26.0, -55.0),
        Point3::new(27.0, -26.0, -55.0),
    ];
    (0..N_JOINTS)
        .map(|j| Joint {
            name: JOINT_NAMES[j],
            pivot: pivots[j],
            parent: JOINT_PARENTS[j],
        })
        .collect()
}

fn skinning(mean: &Mesh, joints: &[Joint]) -> Vec<f64> {
    let mut out = Vec::with_capacity(mean.vertex_count() * N_JOINTS);
    for p in &mean.vertices {
        let v = p.y / HEAD_RADII[1];
        let front = smoothstep(0.1, -0.5, p.z / HEAD_RADII[2]);
        let neck = smoothstep(0.6, 0.95, v);
        let jaw = smoothstep(0.2, 0.5, v) * front * (1.0 - neck);
        let eye = |c: &Point3| 0.9 * (-(p - c).norm_squared() / (2.0 * 11.0 * 11.0)).exp();
        let raw = [1.0, neck * 2.0, jaw * 3.0, eye(&joints[3].pivot), eye(&joints[4].pivot)];
        let sum: f64 = raw.iter().sum();
        out.extend(raw.iter().map(|w| w / sum));
    }
    out
}

fn random_field(rng: &mut ChaCha8Rng, dirs: &[Point3], column: usize, total: usize) -> Vec<f64> {
    let mut field = vec![0.0; 3 * dirs.len()];
    let base = 0.7 + 2.6 * column as f64 / total as f64;
    for _ in 0..3 {
        let axis = loop {
            let a = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let n = a.norm();
            if n > 1e-3 && n <= 1.0 {
                break a / n;
            }
        };
        let omega: Vector3<f64> = axis * (base + rng.gen_range(0.0..1.0)) * PI;
        let phase = rng.gen_range(0.0..2.0 * PI);
        let amp = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        for (i, d) in dirs.iter().enumerate() {
            let frontal = 0.25 + 0.75 * (1.0 - d.z) / 2.0;
            let s = (omega.dot(d) + phase).cos() * frontal;
            for c in 0..3 {
                field[3 * i + c] += amp[c] * s;
            }
        }
    }
    field
}

/// Modified Gram-Schmidt, run twice for orthogonality to working precision.
/// Columns left without an independent direction (tiny meshes) become zero.
fn orthonormalize(columns: &mut [Vec<f64>]) {
    for k in 0..columns.len() {
        for _ in 0..2 {
            for j in 0..k {
                let (done, rest) = columns.split_at_mut(k);
                let dot: f64 = done[j].iter().zip(&rest[0]).map(|(a, b)| a * b).sum();
                for (x, q) in rest[0].iter_mut().zip(&done[j]) {
                    *x -= dot * q;
                }
            }
        }
        let norm = columns[k].iter().map(|x| x * x).sum::<f64>().sqrt();
        let inv = if norm < 1e-9 { 0.0 } else { 1.0 / norm };
        for x in &mut columns[k] {
            *x *= inv;
        }
    }
}

/// Builds a deterministic model with `n` vertices (`n = 10 * 4^k + 2`).
///
/// Basis fields are smooth random cosine waves, stronger on the face than
/// on the back of the head, jointly orthogonalized and then scaled so
/// column `k` has per-vertex RMS displacement equal to its energy.
pub fn synthesize_model(seed: u64, n: usize, energy: &BasisEnergy) -> Result<FaceModel> {
    if n < 12 {
        return Err(Error::InvalidInput(format!("vertex count must be at least 12, got {n}")));
    }
    energy.validate()?;
    let mean = head_template(n)?;
    let dirs: Vec<Point3> = mean
        .vertices
        .iter()
        .map(|p| Point3::new(p.x / HEAD_RADII[0], p.y / HEAD_RADII[1], p.z / HEAD_RADII[2]))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = N_SHAPE + N_EXPRESSION;
    let mut columns: Vec<Vec<f64>> = (0..total)
        .map(|c| random_field(&mut rng, &dirs, c % N_SHAPE, N_SHAPE))
        .collect();
    orthonormalize(&mut columns);
    let scale = (n as f64).sqrt();
    for (k, col) in columns.iter_mut().enumerate() {
        let e = if k < N_SHAPE { energy.shape[k] } else { energy.expression[k - N_SHAPE] };
        for x in col.iter_mut() {
            *x *= e * scale;
        }
    }
    let expression_basis = columns[N_SHAPE..].concat();
    let shape_basis = columns[..N_SHAPE].concat();

    let joints = joints();
    let skin_weights = skinning(&mean, &joints);
    let image_landmarks = assign_vertices(&mean, &image_landmark_layout());
    let anthro_uv: Vec<[f64; 2]> = ANTHROPOMETRIC_LAYOUT.iter().map(|(_, uv)| *uv).collect();
    let anthropometric_map: BTreeMap<u32, usize> = ANTHROPOMETRIC_LAYOUT
        .iter()
        .map(|(id, _)| *id)
        .zip(assign_vertices(&mean, &anthro_uv))
        .collect();

    let model = FaceModel {
        mean,
        shape_basis,
        expression_basis,
        joints,
        skin_weights,
        anthropometric_map,
        image_landmarks,
    };
    model.validate()?;
    Ok(model)
}
