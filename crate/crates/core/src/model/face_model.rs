//! Linear blendshape face model with jointed pose, `M(alpha, delta, theta)`.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Matrix3xX, Vector3};

use super::code::{GEOMETRY_DIM, N_EXPRESSION, N_JOINTS, N_SHAPE};
use crate::error::{Error, Result};
use crate::geometry::rotation::{rodrigues, rodrigues_derivatives};
use crate::geometry::{Mesh, Point3};

/// A pose joint: pivot point in the rest frame and parent in the kinematic tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Joint {
    pub name: &'static str,
    pub pivot: Point3,
    pub parent: Option<usize>,
}

/// Joint layout: global rotation, neck, jaw, left eye, right eye.
pub const JOINT_NAMES: [&str; N_JOINTS] = ["global", "neck", "jaw", "eye_left", "eye_right"];
pub const JOINT_PARENTS: [Option<usize>; N_JOINTS] = [None, Some(0), Some(1), Some(1), Some(1)];

#[derive(Debug, Clone, PartialEq)]
pub struct FaceModel {
    pub mean: Mesh,
    /// `n_shape` rows of `3N` displacements, row-major.
    pub shape_basis: Vec<f64>,
    /// `n_expression` rows of `3N` displacements, row-major.
    pub expression_basis: Vec<f64>,
    pub joints: Vec<Joint>,
    /// `N` rows of per-joint skinning weights, each row sums to one.
    pub skin_weights: Vec<f64>,
    /// Anthropometric landmark id to vertex index (tissue-depth sites).
    pub anthropometric_map: BTreeMap<u32, usize>,
    /// Vertex index of each of the 66 image landmarks, indexed by landmark id.
    pub image_landmarks: Vec<usize>,
}

/// Rigid transform `v -> r v + p`.
#[derive(Debug, Clone, Copy)]
struct Affine {
    r: Matrix3<f64>,
    p: Vector3<f64>,
}

impl Affine {
    fn identity() -> Self {
        Self {
            r: Matrix3::identity(),
            p: Vector3::zeros(),
        }
    }
    fn then(&self, inner: &Affine) -> Affine {
        Affine {
            r: self.r * inner.r,
            p: self.r * inner.p + self.p,
        }
    }
    fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.r * v + self.p
    }
}

/// Posed joint transforms and the pieces needed for their derivatives.
struct Posing {
    world: Vec<Affine>,
    /// Local rotation derivatives per joint.
    d_local: Vec<[Matrix3<f64>; 3]>,
    /// For joint k and each joint j on its chain: (j, A_parent(j), transform
    /// from j's frame down to k).
    chains: Vec<Vec<(usize, Affine, Affine)>>,
    identity: bool,
}

impl FaceModel {
    pub fn vertex_count(&self) -> usize {
        self.mean.vertices.len()
    }

    pub fn n_shape(&self) -> usize {
        self.shape_basis.len() / (3 * self.vertex_count()).max(1)
    }

    pub fn n_expression(&self) -> usize {
        self.expression_basis.len() / (3 * self.vertex_count()).max(1)
    }

    pub fn topology_id(&self) -> &str {
        &self.mean.topology_id
    }

    /// Structural checks on a loaded or synthesized model.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertex_count();
        if n == 0 {
            return Err(Error::EmptyMesh);
        }
        if self.shape_basis.len() != N_SHAPE * 3 * n {
            return Err(Error::LengthMismatch {
                block: "shape basis",
                expected: N_SHAPE * 3 * n,
                got: self.shape_basis.len(),
            });
        }
        if self.expression_basis.len() != N_EXPRESSION * 3 * n {
            return Err(Error::LengthMismatch {
                block: "expression basis",
                expected: N_EXPRESSION * 3 * n,
                got: self.expression_basis.len(),
            });
        }
        if self.joints.len() != N_JOINTS {
            return Err(Error::LengthMismatch {
                block: "joints",
                expected: N_JOINTS,
                got: self.joints.len(),
            });
        }
        if self.skin_weights.len() != n * N_JOINTS {
            return Err(Error::LengthMismatch {
                block: "skinning weights",
                expected: n * N_JOINTS,
                got: self.skin_weights.len(),
            });
        }
        for (v, row) in self.skin_weights.chunks(N_JOINTS).enumerate() {
            if row.iter().any(|w| *w < 0.0 || !w.is_finite()) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!("skinning row {v} is not a partition of unity")));
            }
        }
        for (j, joint) in self.joints.iter().enumerate() {
            if let Some(p) = joint.parent {
                if p >= j {
                    return Err(Error::InvalidInput(format!("joint {j} parent {p} must precede it")));
                }
            }
        }
        if let Some((id, v)) = self.anthropometric_map.iter().find(|(_, &v)| v >= n) {
            return Err(Error::InvalidInput(format!("landmark {id} maps to vertex {v} >= {n}")));
        }
        if let Some(v) = self.image_landmarks.iter().find(|&&v| v >= n) {
            return Err(Error::InvalidInput(format!("image landmark vertex {v} >= {n}")));
        }
        Ok(())
    }

    fn check_lengths(&self, alpha: &[f64], delta: &[f64], theta: &[f64]) -> Result<()> {
        if alpha.len() != self.n_shape() {
            return Err(Error::LengthMismatch {
                block: "alpha",
                expected: self.n_shape(),
                got: alpha.len(),
            });
        }
        if delta.len() != self.n_expression() {
            return Err(Error::LengthMismatch {
                block: "delta",
                expected: self.n_expression(),
                got: delta.len(),
            });
        }
        if theta.len() != 3 * self.joints.len() {
            return Err(Error::LengthMismatch {
                block: "theta",
                expected: 3 * self.joints.len(),
                got: theta.len(),
            });
        }
        Ok(())
    }

    fn split_geometry(geometry: &[f64]) -> Result<(&[f64], &[f64], &[f64])> {
        if geometry.len() != GEOMETRY_DIM {
            return Err(Error::LengthMismatch {
                block: "geometry block",
                expected: GEOMETRY_DIM,
                got: geometry.len(),
            });
        }
        let (alpha, rest) = geometry.split_at(N_SHAPE);
        let (delta, theta) = rest.split_at(N_EXPRESSION);
        Ok((alpha, delta, theta))
    }

    fn posing(&self, theta: &[f64]) -> Posing {
        let k = self.joints.len();
        let identity = theta.iter().all(|t| *t == 0.0);
        let mut local = Vec::with_capacity(k);
        let mut d_local = Vec::with_capacity(k);
        for (j, joint) in self.joints.iter().enumerate() {
            let w = Vector3::new(theta[3 * j], theta[3 * j + 1], theta[3 * j + 2]);
            let q = rodrigues(&w);
            local.push(Affine {
                r: q,
                p: joint.pivot - q * joint.pivot,
            });
            d_local.push(rodrigues_derivatives(&w));
        }
        let mut world: Vec<Affine> = Vec::with_capacity(k);
        for (j, joint) in self.joints.iter().enumerate() {
            let a = match joint.parent {
                Some(p) => world[p].then(&local[j]),
                None => local[j],
            };
            world.push(a);
        }
        let mut chains = Vec::with_capacity(k);
        for target in 0..k {
            let mut path = vec![target];
            while let Some(p) = self.joints[*path.last().unwrap()].parent {
                path.push(p);
            }
            path.reverse();
            let mut entries = Vec::with_capacity(path.len());
            for (pos, &j) in path.iter().enumerate() {
                let before = match self.joints[j].parent {
                    Some(p) => world[p],
                    None => Affine::identity(),
                };
                let mut after = Affine::identity();
                for &c in &path[pos + 1..] {
                    after = after.then(&local[c]);
                }
                entries.push((j, before, after));
            }
            chains.push(entries);
        }
        Posing {
            world,
            d_local,
            chains,
            identity,
        }
    }

    fn rest_vertex(&self, v: usize, alpha: &[f64], delta: &[f64]) -> Point3 {
        let n3 = 3 * self.vertex_count();
        let mut p = self.mean.vertices[v];
        for (k, a) in alpha.iter().enumerate() {
            if *a != 0.0 {
                let o = k * n3 + 3 * v;
                p += Vector3::new(self.shape_basis[o], self.shape_basis[o + 1], self.shape_basis[o + 2]) * *a;
            }
        }
        for (k, d) in delta.iter().enumerate() {
            if *d != 0.0 {
                let o = k * n3 + 3 * v;
                p += Vector3::new(
                    self.expression_basis[o],
                    self.expression_basis[o + 1],
                    self.expression_basis[o + 2],
                ) * *d;
            }
        }
        p
    }

    fn rest_vertices(&self, alpha: &[f64], delta: &[f64]) -> Vec<Point3> {
        let n = self.vertex_count();
        let mut flat: Vec<f64> = self.mean.vertices.iter().flat_map(|p| [p.x, p.y, p.z]).collect();
        for (coeffs, basis) in [(alpha, &self.shape_basis), (delta, &self.expression_basis)] {
            for (k, c) in coeffs.iter().enumerate() {
                if *c == 0.0 {
                    continue;
                }
                let row = &basis[k * 3 * n..(k + 1) * 3 * n];
                for (f, b) in flat.iter_mut().zip(row) {
                    *f += c * b;
                }
            }
        }
        flat.chunks(3).map(|c| Point3::new(c[0], c[1], c[2])).collect()
    }

    fn blend(&self, v: usize, posing: &Posing) -> Affine {
        let row = &self.skin_weights[v * N_JOINTS..(v + 1) * N_JOINTS];
        let mut out = Affine {
            r: Matrix3::zeros(),
            p: Vector3::zeros(),
        };
        for (w, a) in row.iter().zip(&posing.world) {
            if *w != 0.0 {
                out.r += a.r * *w;
                out.p += a.p * *w;
            }
        }
        out
    }

    /// Evaluates `M(alpha, delta, theta)`.
    pub fn evaluate(&self, alpha: &[f64], delta: &[f64], theta: &[f64]) -> Result<Mesh> {
        self.check_lengths(alpha, delta, theta)?;
        let mut verts = self.rest_vertices(alpha, delta);
        let posing = self.posing(theta);
        if !posing.identity {
            for (v, p) in verts.iter_mut().enumerate() {
                *p = self.blend(v, &posing).apply(p);
            }
        }
        Ok(self.mean.with_vertices(verts))
    }

    /// Evaluates the mesh for a 195-entry geometry block.
    pub fn evaluate_geometry(&self, geometry: &[f64]) -> Result<Mesh> {
        let (a, d, t) = Self::split_geometry(geometry)?;
        self.evaluate(a, d, t)
    }

    /// Posed positions of selected vertices only.
    pub fn evaluate_vertices(&self, geometry: &[f64], vertices: &[usize]) -> Result<Vec<Point3>> {
        let (alpha, delta, theta) = Self::split_geometry(geometry)?;
        self.check_lengths(alpha, delta, theta)?;
        let posing = self.posing(theta);
        Ok(vertices
            .iter()
            .map(|&v| {
                let p = self.rest_vertex(v, alpha, delta);
                if posing.identity {
                    p
                } else {
                    self.blend(v, &posing).apply(&p)
                }
            })
            .collect())
    }

    /// Analytic 3x195 Jacobian blocks of the selected posed vertices with
    /// respect to `(alpha, delta, theta)`.
    pub fn jacobian_vertices(&self, geometry: &[f64], vertices: &[usize]) -> Result<Vec<Matrix3xX<f64>>> {
        let (alpha, delta, theta) = Self::split_geometry(geometry)?;
        self.check_lengths(alpha, delta, theta)?;
        let posing = self.posing(theta);
        let n3 = 3 * self.vertex_count();
        let ns = self.n_shape();
        let ne = self.n_expression();
        Ok(vertices
            .iter()
            .map(|&v| {
                let mut jac = Matrix3xX::zeros(GEOMETRY_DIM);
                let m = self.blend(v, &posing).r;
                for k in 0..ns {
                    let o = k * n3 + 3 * v;
                    let b = Vector3::new(self.shape_basis[o], self.shape_basis[o + 1], self.shape_basis[o + 2]);
                    jac.set_column(k, &(m * b));
                }
                for k in 0..ne {
                    let o = k * n3 + 3 * v;
                    let b = Vector3::new(
                        self.expression_basis[o],
                        self.expression_basis[o + 1],
                        self.expression_basis[o + 2],
                    );
                    jac.set_column(ns + k, &(m * b));
                }
                let rest = self.rest_vertex(v, alpha, delta);
                let row = &self.skin_weights[v * N_JOINTS..(v + 1) * N_JOINTS];
                for (target, w) in row.iter().enumerate() {
                    if *w == 0.0 {
                        continue;
                    }
                    for (j, before, after) in &posing.chains[target] {
                        let local = after.apply(&rest) - self.joints[*j].pivot;
                        for (i, dq) in posing.d_local[*j].iter().enumerate() {
                            let col = ns + ne + 3 * j + i;
                            let d = before.r * (dq * local) * *w;
                            let cur = jac.column(col).into_owned();
                            jac.set_column(col, &(cur + d));
                        }
                    }
                }
                jac
            })
            .collect())
    }

    /// Full-mesh Jacobian, one 3x195 block per vertex.
    pub fn evaluate_jacobian(&self, alpha: &[f64], delta: &[f64], theta: &[f64]) -> Result<Vec<Matrix3xX<f64>>> {
        self.check_lengths(alpha, delta, theta)?;
        let geometry: Vec<f64> = [alpha, delta, theta].concat();
        let all: Vec<usize> = (0..self.vertex_count()).collect();
        self.jacobian_vertices(&geometry, &all)
    }

    /// Vector-Jacobian product: pulls per-vertex gradients on the posed mesh
    /// back onto the 195 geometry coefficients.
    pub fn vjp(&self, geometry: &[f64], grad_vertices: &[Point3]) -> Result<Vec<f64>> {
        let (alpha, delta, theta) = Self::split_geometry(geometry)?;
        self.check_lengths(alpha, delta, theta)?;
        let n = self.vertex_count();
        if grad_vertices.len() != n {
            return Err(Error::LengthMismatch {
                block: "vertex gradient",
                expected: n,
                got: grad_vertices.len(),
            });
        }
        let posing = self.posing(theta);
        let ns = self.n_shape();
        let ne = self.n_expression();
        let mut out = vec![0.0; GEOMETRY_DIM];
        // gradient on rest positions
        let pulled: Vec<f64> = if posing.identity {
            grad_vertices.iter().flat_map(|g| [g.x, g.y, g.z]).collect()
        } else {
            (0..n)
                .flat_map(|v| {
                    let h = self.blend(v, &posing).r.transpose() * grad_vertices[v];
                    [h.x, h.y, h.z]
                })
                .collect()
        };
        for k in 0..ns {
            let row = &self.shape_basis[k * 3 * n..(k + 1) * 3 * n];
            out[k] = row.iter().zip(&pulled).map(|(a, b)| a * b).sum();
        }
        for k in 0..ne {
            let row = &self.expression_basis[k * 3 * n..(k + 1) * 3 * n];
            out[ns + k] = row.iter().zip(&pulled).map(|(a, b)| a * b).sum();
        }
        let rest = self.rest_vertices(alpha, delta);
        for v in 0..n {
            let g = grad_vertices[v];
            if g == Vector3::zeros() {
                continue;
            }
            let row = &self.skin_weights[v * N_JOINTS..(v + 1) * N_JOINTS];
            for (target, w) in row.iter().enumerate() {
                if *w == 0.0 {
                    continue;
                }
                for (j, before, after) in &posing.chains[target] {
                    let local = after.apply(&rest[v]) - self.joints[*j].pivot;
                    let gb = before.r.transpose() * g * *w;
                    for (i, dq) in posing.d_local[*j].iter().enumerate() {
                        out[ns + ne + 3 * j + i] += gb.dot(&(dq * local));
                    }
                }
            }
        }
        Ok(out)
    }

    /// Least-squares `(alpha, delta)` of a mesh in rest pose (theta = 0).
    ///
    /// Exact for meshes in the span of the bases, which are mutually orthogonal.
    pub fn project_mesh(&self, mesh: &Mesh) -> Result<Vec<f64>> {
        if !self.mean.same_topology(mesh) {
            return Err(Error::InvalidInput(format!(
                "mesh topology `{}` does not match model topology `{}`",
                mesh.topology_id,
                self.topology_id()
            )));
        }
        let n = self.vertex_count();
        let diff: Vec<f64> = mesh
            .vertices
            .iter()
            .zip(&self.mean.vertices)
            .flat_map(|(a, b)| {
                let d = a - b;
                [d.x, d.y, d.z]
            })
            .collect();
        let mut g = vec![0.0; GEOMETRY_DIM];
        let ns = self.n_shape();
        for (k, slot) in g.iter_mut().enumerate().take(ns + self.n_expression()) {
            let row = if k < ns {
                &self.shape_basis[k * 3 * n..(k + 1) * 3 * n]
            } else {
                &self.expression_basis[(k - ns) * 3 * n..(k - ns + 1) * 3 * n]
            };
            let nn: f64 = row.iter().map(|b| b * b).sum();
            if nn > 0.0 {
                *slot = row.iter().zip(&diff).map(|(a, b)| a * b).sum::<f64>() / nn;
            }
        }
        Ok(g)
    }

    /// Vertex index for an anthropometric landmark id.
    pub fn anthropometric_vertex(&self, id: u32) -> Option<usize> {
        self.anthropometric_map.get(&id).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::synth::{synthesize_model, BasisEnergy};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_model() -> FaceModel {
        synthesize_model(5, 162, &BasisEnergy::default()).unwrap()
    }

    fn random_geometry(rng: &mut ChaCha8Rng, pose_scale: f64) -> Vec<f64> {
        let mut g: Vec<f64> = (0..GEOMETRY_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for v in &mut g[N_SHAPE + N_EXPRESSION..] {
            *v *= pose_scale;
        }
        g
    }

    /// Independent evaluation: explicit sums, Rodrigues matrices built from
    /// scratch, kinematic chain walked per vertex.
    fn naive_evaluate(m: &FaceModel, g: &[f64]) -> Vec<Point3> {
        let n = m.vertex_count();
        let rot = |w: [f64; 3]| -> Matrix3<f64> {
            let t = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
            if t == 0.0 {
                return Matrix3::identity();
            }
            let k = [w[0] / t, w[1] / t, w[2] / t];
            let (s, c) = t.sin_cos();
            let mut r = Matrix3::zeros();
            for i in 0..3 {
                for j in 0..3 {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    r[(i, j)] = c * delta + (1.0 - c) * k[i] * k[j];
                }
            }
            r[(0, 1)] -= s * k[2];
            r[(0, 2)] += s * k[1];
            r[(1, 0)] += s * k[2];
            r[(1, 2)] -= s * k[0];
            r[(2, 0)] -= s * k[1];
            r[(2, 1)] += s * k[0];
            r
        };
        let theta = &g[N_SHAPE + N_EXPRESSION..];
        (0..n)
            .map(|v| {
                let mut p = m.mean.vertices[v];
                for k in 0..N_SHAPE {
                    for c in 0..3 {
                        p[c] += g[k] * m.shape_basis[k * 3 * n + 3 * v + c];
                    }
                }
                for k in 0..N_EXPRESSION {
                    for c in 0..3 {
                        p[c] += g[N_SHAPE + k] * m.expression_basis[k * 3 * n + 3 * v + c];
                    }
                }
                let mut out = Point3::zeros();
                for j in 0..N_JOINTS {
                    let w = m.skin_weights[v * N_JOINTS + j];
                    // apply local rotations from joint j up to the root
                    let mut q = p;
                    let mut cur = Some(j);
                    while let Some(c) = cur {
                        let r = rot([theta[3 * c], theta[3 * c + 1], theta[3 * c + 2]]);
                        q = r * (q - m.joints[c].pivot) + m.joints[c].pivot;
                        cur = m.joints[c].parent;
                    }
                    out += q * w;
                }
                out
            })
            .collect()
    }

    #[test]
    fn zero_code_is_mean_shape() {
        let m = small_model();
        let mesh = m.evaluate(&[0.0; N_SHAPE], &[0.0; N_EXPRESSION], &[0.0; 15]).unwrap();
        assert_eq!(mesh, m.mean);
    }

    #[test]
    fn unit_alpha_adds_first_column() {
        let m = small_model();
        let mut alpha = [0.0; N_SHAPE];
        alpha[0] = 1.0;
        let mesh = m.evaluate(&alpha, &[0.0; N_EXPRESSION], &[0.0; 15]).unwrap();
        for (v, p) in mesh.vertices.iter().enumerate() {
            let expect = m.mean.vertices[v]
                + Vector3::new(m.shape_basis[3 * v], m.shape_basis[3 * v + 1], m.shape_basis[3 * v + 2]);
            assert_eq!(*p, expect);
        }
    }

    #[test]
    fn random_code_matches_naive_oracle() {
        let m = small_model();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..5 {
            let g = random_geometry(&mut rng, 0.4);
            let mesh = m.evaluate_geometry(&g).unwrap();
            let oracle = naive_evaluate(&m, &g);
            for (a, b) in mesh.vertices.iter().zip(&oracle) {
                assert!((a - b).norm() < 1e-9);
            }
            let subset = [0, 7, 100, 161];
            let part = m.evaluate_vertices(&g, &subset).unwrap();
            for (p, &v) in part.iter().zip(&subset) {
                assert!((p - mesh.vertices[v]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn length_mismatch_names_block() {
        let m = small_model();
        let err = m.evaluate(&[0.0; 3], &[0.0; N_EXPRESSION], &[0.0; 15]).unwrap_err();
        assert!(err.to_string().contains("alpha"));
        let err = m.evaluate(&[0.0; N_SHAPE], &[0.0; N_EXPRESSION], &[0.0; 14]).unwrap_err();
        assert!(err.to_string().contains("theta"));
    }

    #[test]
    fn jacobian_linear_block_at_rest_pose() {
        let m = small_model();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut g = random_geometry(&mut rng, 0.0);
        for v in &mut g[N_SHAPE + N_EXPRESSION..] {
            *v = 0.0;
        }
        let jac = m.jacobian_vertices(&g, &[3, 50]).unwrap();
        let n = m.vertex_count();
        for (blk, &v) in jac.iter().zip(&[3usize, 50]) {
            for k in 0..N_SHAPE {
                for c in 0..3 {
                    assert_eq!(blk[(c, k)], m.shape_basis[k * 3 * n + 3 * v + c]);
                }
            }
        }
    }

    fn fd_check(m: &FaceModel, g: &[f64], tol: f64) {
        let verts: Vec<usize> = (0..m.vertex_count()).step_by(7).collect();
        let jac = m.jacobian_vertices(g, &verts).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for col in 0..GEOMETRY_DIM {
            let mut gp = g.to_vec();
            let mut gm = g.to_vec();
            gp[col] += h;
            gm[col] -= h;
            let p = m.evaluate_vertices(&gp, &verts).unwrap();
            let q = m.evaluate_vertices(&gm, &verts).unwrap();
            for (i, blk) in jac.iter().enumerate() {
                for c in 0..3 {
                    let fd = (p[i][c] - q[i][c]) / (2.0 * h);
                    let a = blk[(c, col)];
                    worst = worst.max((fd - a).abs() / a.abs().max(1.0));
                }
            }
        }
        assert!(worst < tol, "max relative error {worst}");
    }

    #[test]
    fn jacobian_matches_finite_differences_at_zero() {
        let m = small_model();
        fd_check(&m, &vec![0.0; GEOMETRY_DIM], 1e-5);
    }

    #[test]
    fn jacobian_matches_finite_differences_random() {
        let m = small_model();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..3 {
            fd_check(&m, &random_geometry(&mut rng, 0.5), 1e-4);
        }
    }

    #[test]
    fn vjp_matches_dense_jacobian() {
        let m = small_model();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = random_geometry(&mut rng, 0.3);
        let grad: Vec<Point3> = (0..m.vertex_count())
            .map(|_| Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let fast = m.vjp(&g, &grad).unwrap();
        let (a, d, t) = FaceModel::split_geometry(&g).unwrap();
        let jac = m.evaluate_jacobian(a, d, t).unwrap();
        for (col, f) in fast.iter().enumerate() {
            let dense: f64 = jac.iter().zip(&grad).map(|(b, gv)| b.column(col).dot(gv)).sum();
            assert!((dense - f).abs() < 1e-9 * dense.abs().max(1.0));
        }
    }

    #[test]
    fn linear_in_blend_coefficients() {
        let m = small_model();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let theta: Vec<f64> = (0..15).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let a1: Vec<f64> = (0..N_SHAPE).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a2: Vec<f64> = (0..N_SHAPE).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let d1: Vec<f64> = (0..N_EXPRESSION).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let d2: Vec<f64> = (0..N_EXPRESSION).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (s, t) = (0.7, -1.6);
        let mix = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| s * p + t * q).collect() };
        let lhs = m.evaluate(&mix(&a1, &a2), &mix(&d1, &d2), &theta).unwrap();
        let e1 = m.evaluate(&a1, &d1, &theta).unwrap();
        let e2 = m.evaluate(&a2, &d2, &theta).unwrap();
        let e0 = m.evaluate(&[0.0; N_SHAPE], &[0.0; N_EXPRESSION], &theta).unwrap();
        for v in 0..m.vertex_count() {
            let rhs = e1.vertices[v] * s + e2.vertices[v] * t - e0.vertices[v] * (s + t - 1.0);
            assert!((lhs.vertices[v] - rhs).norm() < 1e-9);
        }
        assert_eq!(lhs.triangles, m.mean.triangles);
    }

    #[test]
    fn project_mesh_recovers_blend_coefficients() {
        let m = small_model();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut g = random_geometry(&mut rng, 0.0);
        for v in &mut g[N_SHAPE + N_EXPRESSION..] {
            *v = 0.0;
        }
        let mesh = m.evaluate_geometry(&g).unwrap();
        let back = m.project_mesh(&mesh).unwrap();
        let again = m.evaluate_geometry(&back).unwrap();
        assert!(again.max_deviation(&mesh) < 1e-9);
    }
}
