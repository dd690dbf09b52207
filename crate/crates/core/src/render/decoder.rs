//! Forward image formation and its analytic backward pass.

use nalgebra::{DMatrix, Matrix3, Matrix3xX, Vector3};

use super::camera::{Camera, CameraIntrinsics};
use super::raster::{barycentric, rasterize, RenderedImage, ScreenVertex};
use super::sh::{sh_basis, Illumination};
use crate::error::{Error, Result};
use crate::geometry::mesh::{area_weighted_normal_sums, vertex_normals_vjp};
use crate::geometry::rotation::skew;
use crate::geometry::{Mesh, Point2, Point3};
use crate::model::code::{CAM_ROTATION, CAM_TRANSLATION, CODE_DIM, GAMMA, GEOMETRY_DIM, SH_COEFFS, THETA};
use crate::model::{FaceModel, SemanticCodeVector};

/// Renders a posed mesh with per-vertex SH shading of camera-space normals.
pub fn render_mesh(mesh: &Mesh, camera: &Camera, illum: &Illumination) -> Result<RenderedImage> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let r = camera.rotation_matrix();
    let r_t = r.transpose();
    let screen: Vec<ScreenVertex> = mesh
        .vertices
        .iter()
        .map(|p| camera.project_with(&r_t, p).ok().map(|q| (q.pixel, q.depth)))
        .collect();
    if screen.iter().all(Option::is_none) {
        let depth = mesh.vertices.iter().map(|p| (r_t * (p - camera.position())).z).fold(f64::NEG_INFINITY, f64::max);
        return Err(Error::BehindCamera { depth });
    }
    let normals = mesh.vertex_normals().normals;
    let colors: Vec<[f64; 3]> = normals.iter().map(|n| illum.shade_raw(&(r_t * n))).collect();
    Ok(rasterize(camera.width, camera.height, &screen, &mesh.triangles, &colors))
}

/// Renders `M(G)` with the camera and lighting of the code's rendering block.
pub fn render(model: &FaceModel, x: &SemanticCodeVector, intrinsics: &CameraIntrinsics) -> Result<RenderedImage> {
    intrinsics.validate()?;
    let mesh = model.evaluate_geometry(x.geometry())?;
    render_mesh(&mesh, &intrinsics.camera(x), &Illumination::new(x.gamma())?)
}

/// Geometry block with the global head rotation removed.
pub fn canonical_geometry(geometry: &[f64]) -> Vec<f64> {
    let mut g = geometry.to_vec();
    for v in &mut g[THETA..THETA + 3] {
        *v = 0.0;
    }
    g
}

/// Canonical render: rest camera, canonical lighting and no global head
/// rotation, so only shape, expression and articulated pose show.
pub fn normalize_render(model: &FaceModel, x: &SemanticCodeVector, intrinsics: &CameraIntrinsics) -> Result<RenderedImage> {
    normalize_render_geometry(model, x.geometry(), intrinsics)
}

pub fn normalize_render_geometry(model: &FaceModel, geometry: &[f64], intrinsics: &CameraIntrinsics) -> Result<RenderedImage> {
    intrinsics.validate()?;
    let mesh = model.evaluate_geometry(&canonical_geometry(geometry))?;
    render_mesh(&mesh, &intrinsics.rest_camera(), &Illumination::canonical())
}

/// Canonical render that reuses a given triangle-per-pixel assignment:
/// colours are barycentric interpolations in the assigned triangle, which
/// may extrapolate. This is the smooth function the image VJP differentiates.
pub fn normalize_render_with_coverage(
    model: &FaceModel,
    geometry: &[f64],
    intrinsics: &CameraIntrinsics,
    coverage: &[Option<u32>],
) -> Result<RenderedImage> {
    intrinsics.validate()?;
    let (width, height) = (intrinsics.width, intrinsics.height);
    if coverage.len() != width * height {
        return Err(Error::LengthMismatch {
            block: "coverage",
            expected: width * height,
            got: coverage.len(),
        });
    }
    let mesh = model.evaluate_geometry(&canonical_geometry(geometry))?;
    let camera = intrinsics.rest_camera();
    let illum = Illumination::canonical();
    let r_t = camera.rotation_matrix().transpose();
    let colors: Vec<[f64; 3]> = mesh.vertex_normals().normals.iter().map(|n| illum.shade_raw(&(r_t * n))).collect();
    let mut img = RenderedImage::blank(width, height);
    for (i, cov) in coverage.iter().enumerate() {
        let Some(t) = cov else { continue };
        let tri = mesh.triangles[*t as usize];
        let q = tri.map(|v| camera.project_with(&r_t, &mesh.vertices[v]));
        let [Ok(a), Ok(b), Ok(c)] = q else {
            return Err(Error::InvalidInput(format!("covered triangle {t} is behind the camera")));
        };
        let p = Point2::new((i % width) as f64 + 0.5, (i / width) as f64 + 0.5);
        let w = barycentric(&a.pixel, &b.pixel, &c.pixel, &p)
            .ok_or_else(|| Error::InvalidInput(format!("covered triangle {t} is degenerate")))?;
        img.coverage[i] = Some(*t);
        img.depth[i] = w[0] * a.depth + w[1] * b.depth + w[2] * c.depth;
        for ch in 0..3 {
            let v: f64 = (0..3).map(|k| w[k] * colors[tri[k]][ch]).sum();
            img.pixels[3 * i + ch] = v.clamp(0.0, 1.0);
        }
    }
    Ok(img)
}

/// Gradient of `sum(grad_pixels * image)` with respect to the geometry
/// block, for the canonical render. Coverage is held fixed; barycentric
/// weights and vertex colours are differentiated.
pub fn normalize_render_vjp(
    model: &FaceModel,
    geometry: &[f64],
    intrinsics: &CameraIntrinsics,
    grad_pixels: &[f64],
) -> Result<(RenderedImage, Vec<f64>)> {
    let g = canonical_geometry(geometry);
    let (img, mut grad) = image_vjp(model, &g, &intrinsics.rest_camera(), &Illumination::canonical(), grad_pixels)?;
    for v in &mut grad[THETA..THETA + 3] {
        *v = 0.0;
    }
    Ok((img, grad))
}

fn edge_grads(x: &Point2, y: &Point2, p: &Point2) -> (Point2, Point2) {
    (Point2::new(y.y - p.y, p.x - y.x), Point2::new(p.y - x.y, x.x - p.x))
}

fn area_grads(a: &Point2, b: &Point2, c: &Point2) -> [Point2; 3] {
    [
        Point2::new(b.y - c.y, c.x - b.x),
        Point2::new(c.y - a.y, a.x - c.x),
        Point2::new(a.y - b.y, b.x - a.x),
    ]
}

/// Renders `M(geometry)` and pulls a pixel gradient back to the geometry block.
pub fn image_vjp(
    model: &FaceModel,
    geometry: &[f64],
    camera: &Camera,
    illum: &Illumination,
    grad_pixels: &[f64],
) -> Result<(RenderedImage, Vec<f64>)> {
    let mesh = model.evaluate_geometry(geometry)?;
    let img = render_mesh(&mesh, camera, illum)?;
    if grad_pixels.len() != img.pixels.len() {
        return Err(Error::LengthMismatch {
            block: "pixel gradient",
            expected: img.pixels.len(),
            got: grad_pixels.len(),
        });
    }
    let r = camera.rotation_matrix();
    let r_t = r.transpose();
    let n = mesh.vertex_count();
    let proj: Vec<_> = mesh.vertices.iter().map(|p| camera.project_with(&r_t, p).ok()).collect();
    let sums = area_weighted_normal_sums(&mesh.vertices, &mesh.triangles);
    let normals: Vec<Point3> = sums
        .iter()
        .map(|s| {
            let l = s.norm();
            if l > 0.0 {
                s / l
            } else {
                Point3::zeros()
            }
        })
        .collect();
    let cam_normals: Vec<Point3> = normals.iter().map(|nm| r_t * nm).collect();
    let colors: Vec<[f64; 3]> = cam_normals.iter().map(|nm| illum.shade_raw(nm)).collect();

    let mut grad_color = vec![[0.0; 3]; n];
    let mut grad_screen = vec![Point2::zeros(); n];
    for (i, cov) in img.coverage.iter().enumerate() {
        let Some(t) = cov else { continue };
        let tri = mesh.triangles[*t as usize];
        let g = [grad_pixels[3 * i], grad_pixels[3 * i + 1], grad_pixels[3 * i + 2]];
        if g == [0.0; 3] {
            continue;
        }
        let pts = tri.map(|v| proj[v].expect("covered triangles are in front").pixel);
        let p = Point2::new((i % img.width) as f64 + 0.5, (i / img.width) as f64 + 0.5);
        let w = barycentric(&pts[0], &pts[1], &pts[2], &p).expect("covered triangles are non-degenerate");
        // clamped channels pass no gradient
        let mut g_eff = g;
        for (ch, ge) in g_eff.iter_mut().enumerate() {
            let raw: f64 = (0..3).map(|k| w[k] * colors[tri[k]][ch]).sum();
            if !(0.0..=1.0).contains(&raw) {
                *ge = 0.0;
            }
        }
        let s: [f64; 3] = std::array::from_fn(|k| (0..3).map(|ch| g_eff[ch] * colors[tri[k]][ch]).sum());
        for k in 0..3 {
            for ch in 0..3 {
                grad_color[tri[k]][ch] += w[k] * g_eff[ch];
            }
        }
        let area = super::raster::edge(&pts[0], &pts[1], &pts[2]);
        let sw: f64 = (0..3).map(|k| s[k] * w[k]).sum();
        // E_0 = edge(b, c, p), E_1 = edge(c, a, p), E_2 = edge(a, b, p)
        for k in 0..3 {
            let (x, y) = ((k + 1) % 3, (k + 2) % 3);
            let (gx, gy) = edge_grads(&pts[x], &pts[y], &p);
            grad_screen[tri[x]] += gx * (s[k] / area);
            grad_screen[tri[y]] += gy * (s[k] / area);
        }
        let ag = area_grads(&pts[0], &pts[1], &pts[2]);
        for k in 0..3 {
            grad_screen[tri[k]] -= ag[k] * (sw / area);
        }
    }

    let mut grad_vertices = vec![Point3::zeros(); n];
    let mut grad_normals = vec![Point3::zeros(); n];
    for v in 0..n {
        if grad_screen[v] != Point2::zeros() {
            if let Some(pr) = &proj[v] {
                let jq = camera.pixel_jacobian(&pr.camera_point);
                grad_vertices[v] += r * (jq.transpose() * grad_screen[v]);
            }
        }
        if grad_color[v] != [0.0; 3] {
            let dc = illum.shade_gradient(&cam_normals[v]);
            let gn_cam: Vector3<f64> = (0..3).map(|ch| dc[ch] * grad_color[v][ch]).sum();
            grad_normals[v] = r * gn_cam;
        }
    }
    let from_normals = vertex_normals_vjp(&mesh.vertices, &mesh.triangles, &sums, &grad_normals);
    for (g, h) in grad_vertices.iter_mut().zip(&from_normals) {
        *g += h;
    }
    let grad = model.vjp(geometry, &grad_vertices)?;
    Ok((img, grad))
}

/// Landmark outputs `F_i = [u_i, c_i]` of one code.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkFrame {
    pub pixels: Vec<Point2>,
    pub depths: Vec<f64>,
    pub colors: Vec<[f64; 3]>,
}

/// Forward and backward pass for a fixed set of landmark vertices.
///
/// Only the landmark vertices and their one-rings are evaluated, so the
/// cost is independent of the mesh size.
#[derive(Debug, Clone)]
pub struct LandmarkDecoder<'a> {
    model: &'a FaceModel,
    intrinsics: CameraIntrinsics,
    vertices: Vec<usize>,
    /// Vertices to evaluate: landmarks first, then their ring neighbours.
    needed: Vec<usize>,
    /// Per landmark: incident triangles as local indices into `needed`.
    rings: Vec<Vec<[usize; 3]>>,
}

impl<'a> LandmarkDecoder<'a> {
    pub fn new(model: &'a FaceModel, intrinsics: CameraIntrinsics, vertices: Vec<usize>) -> Result<Self> {
        intrinsics.validate()?;
        let n = model.vertex_count();
        if let Some(v) = vertices.iter().find(|&&v| v >= n) {
            return Err(Error::InvalidInput(format!("landmark vertex {v} >= vertex count {n}")));
        }
        let vt = model.mean.vertex_triangles();
        let mut needed = vertices.clone();
        let mut local = std::collections::HashMap::new();
        for (i, &v) in vertices.iter().enumerate() {
            local.entry(v).or_insert(i);
        }
        let mut rings = Vec::with_capacity(vertices.len());
        for &v in &vertices {
            let mut ring = Vec::new();
            for &t in &vt[v] {
                let tri = model.mean.triangles[t].map(|u| {
                    *local.entry(u).or_insert_with(|| {
                        needed.push(u);
                        needed.len() - 1
                    })
                });
                ring.push(tri);
            }
            rings.push(ring);
        }
        Ok(Self {
            model,
            intrinsics,
            vertices,
            needed,
            rings,
        })
    }

    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    pub fn model(&self) -> &FaceModel {
        self.model
    }

    fn positions(&self, x: &SemanticCodeVector, with_colors: bool) -> Result<Vec<Point3>> {
        let count = if with_colors { self.needed.len() } else { self.vertices.len() };
        self.model.evaluate_vertices(x.geometry(), &self.needed[..count])
    }

    fn normal_sum(&self, ring: &[[usize; 3]], pos: &[Point3]) -> Point3 {
        ring.iter()
            .map(|t| (pos[t[1]] - pos[t[0]]).cross(&(pos[t[2]] - pos[t[0]])))
            .sum()
    }

    pub fn forward(&self, x: &SemanticCodeVector) -> Result<LandmarkFrame> {
        self.forward_impl(x, true)
    }

    /// Pixel positions only (colours left empty).
    pub fn forward_pixels(&self, x: &SemanticCodeVector) -> Result<LandmarkFrame> {
        self.forward_impl(x, false)
    }

    fn forward_impl(&self, x: &SemanticCodeVector, with_colors: bool) -> Result<LandmarkFrame> {
        let camera = self.intrinsics.camera(x);
        let r_t = camera.rotation_matrix().transpose();
        let pos = self.positions(x, with_colors)?;
        let mut pixels = Vec::with_capacity(self.vertices.len());
        let mut depths = Vec::with_capacity(self.vertices.len());
        for p in &pos[..self.vertices.len()] {
            let pr = camera.project_with(&r_t, p)?;
            pixels.push(pr.pixel);
            depths.push(pr.depth);
        }
        let mut colors = Vec::new();
        if with_colors {
            let illum = Illumination::new(x.gamma())?;
            for ring in &self.rings {
                let s = self.normal_sum(ring, &pos);
                let nrm = if s.norm() > 0.0 { s.normalize() } else { Point3::zeros() };
                colors.push(illum.shade_raw(&(r_t * nrm)));
            }
        }
        Ok(LandmarkFrame { pixels, depths, colors })
    }

    /// Dense Jacobian of the landmark outputs over all 228 code entries.
    ///
    /// Rows `2i, 2i + 1` are landmark `i`'s pixel coordinates; with colours,
    /// rows `2L + 3i + c` are its colour channels.
    pub fn jacobian(&self, x: &SemanticCodeVector, with_colors: bool) -> Result<(LandmarkFrame, DMatrix<f64>)> {
        let l = self.vertices.len();
        let rows = if with_colors { 5 * l } else { 2 * l };
        let mut jac = DMatrix::zeros(rows, CODE_DIM);
        let camera = self.intrinsics.camera(x);
        let r = camera.rotation_matrix();
        let r_t = r.transpose();
        let d_rt = camera.rotation_transpose_derivatives();
        let count = if with_colors { self.needed.len() } else { l };
        let pos = self.model.evaluate_vertices(x.geometry(), &self.needed[..count])?;
        let jm = self.model.jacobian_vertices(x.geometry(), &self.needed[..count])?;
        let mut frame = LandmarkFrame {
            pixels: Vec::with_capacity(l),
            depths: Vec::with_capacity(l),
            colors: Vec::new(),
        };
        for i in 0..l {
            let pr = camera.project_with(&r_t, &pos[i])?;
            frame.pixels.push(pr.pixel);
            frame.depths.push(pr.depth);
            let jp = camera.pixel_jacobian(&pr.camera_point);
            let a = jp * r_t;
            let g = a * &jm[i];
            jac.view_mut((2 * i, 0), (2, GEOMETRY_DIM)).copy_from(&g);
            let rel = pos[i] - camera.position();
            for (k, d) in d_rt.iter().enumerate() {
                let col = jp * (d * rel);
                jac[(2 * i, CAM_ROTATION + k)] = col[0];
                jac[(2 * i + 1, CAM_ROTATION + k)] = col[1];
            }
            for k in 0..3 {
                jac[(2 * i, CAM_TRANSLATION + k)] = -a[(0, k)];
                jac[(2 * i + 1, CAM_TRANSLATION + k)] = -a[(1, k)];
            }
        }
        if with_colors {
            let illum = Illumination::new(x.gamma())?;
            for (i, ring) in self.rings.iter().enumerate() {
                let s = self.normal_sum(ring, &pos);
                let len = s.norm();
                if len == 0.0 {
                    frame.colors.push(illum.shade_raw(&Point3::zeros()));
                    let h = sh_basis(&Point3::zeros());
                    for c in 0..3 {
                        for b in 0..SH_COEFFS {
                            jac[(2 * l + 3 * i + c, GAMMA + c * SH_COEFFS + b)] = illum.reflectance * h[b];
                        }
                    }
                    continue;
                }
                let nrm = s / len;
                let n_cam = r_t * nrm;
                frame.colors.push(illum.shade_raw(&n_cam));
                // d n_hat / d geometry
                let mut ds = Matrix3xX::zeros(GEOMETRY_DIM);
                for t in ring {
                    for k in 0..3 {
                        let prev = pos[t[(k + 2) % 3]];
                        let next = pos[t[(k + 1) % 3]];
                        ds += skew(&(prev - next)) * &jm[t[k]];
                    }
                }
                let proj_n = (Matrix3::identity() - nrm * nrm.transpose()) / len;
                let dn_cam = r_t * proj_n * ds;
                let dc = illum.shade_gradient(&n_cam);
                let h = sh_basis(&n_cam);
                for c in 0..3 {
                    let row = 2 * l + 3 * i + c;
                    let g = dc[c].transpose() * &dn_cam;
                    jac.view_mut((row, 0), (1, GEOMETRY_DIM)).copy_from(&g);
                    for (k, d) in d_rt.iter().enumerate() {
                        jac[(row, CAM_ROTATION + k)] = dc[c].dot(&(d * nrm));
                    }
                    for b in 0..SH_COEFFS {
                        jac[(row, GAMMA + c * SH_COEFFS + b)] = illum.reflectance * h[b];
                    }
                }
            }
        }
        Ok((frame, jac))
    }

    /// Contracts output gradients with the Jacobian: the gradient over all
    /// 228 code entries of `sum <grad_pixels, u> + sum <grad_colors, c>`.
    pub fn backward(
        &self,
        x: &SemanticCodeVector,
        grad_pixels: &[Point2],
        grad_colors: Option<&[[f64; 3]]>,
    ) -> Result<Vec<f64>> {
        let l = self.vertices.len();
        if grad_pixels.len() != l {
            return Err(Error::LengthMismatch {
                block: "landmark pixel gradient",
                expected: l,
                got: grad_pixels.len(),
            });
        }
        if let Some(gc) = grad_colors {
            if gc.len() != l {
                return Err(Error::LengthMismatch {
                    block: "landmark colour gradient",
                    expected: l,
                    got: gc.len(),
                });
            }
        }
        let (_, jac) = self.jacobian(x, grad_colors.is_some())?;
        let mut g = nalgebra::DVector::zeros(jac.nrows());
        for (i, gp) in grad_pixels.iter().enumerate() {
            g[2 * i] = gp.x;
            g[2 * i + 1] = gp.y;
        }
        if let Some(gc) = grad_colors {
            for (i, c) in gc.iter().enumerate() {
                for ch in 0..3 {
                    g[2 * l + 3 * i + ch] = c[ch];
                }
            }
        }
        Ok((jac.transpose() * g).iter().copied().collect())
    }
}
