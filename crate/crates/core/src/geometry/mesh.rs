use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Point3 = Vector3<f64>;

/// Triangle mesh in millimetres.
///
/// Meshes sharing a `topology_id` are consistently parameterized: same
/// vertex count, same triangle list, vertex `i` means the same anatomical
/// point on every one of them.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[usize; 3]>,
    pub topology_id: String,
}

/// Per-vertex unit normals. Vertices whose incident triangles all have zero
/// area get a zero vector and are listed in `undefined`.
#[derive(Debug, Clone)]
pub struct VertexNormals {
    pub normals: Vec<Point3>,
    pub undefined: Vec<usize>,
}

impl Mesh {
    pub fn new(
        vertices: Vec<Point3>,
        triangles: Vec<[usize; 3]>,
        topology_id: impl Into<String>,
    ) -> Result<Self> {
        let n = vertices.len();
        if let Some((t, tri)) = triangles
            .iter()
            .enumerate()
            .find(|(_, tri)| tri.iter().any(|&i| i >= n))
        {
            return Err(Error::InvalidInput(format!(
                "triangle {t} {tri:?} references a vertex >= {n}"
            )));
        }
        Ok(Self {
            vertices,
            triangles,
            topology_id: topology_id.into(),
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty() || self.triangles.is_empty()
    }

    /// True if `other` shares this mesh's parameterization.
    pub fn same_topology(&self, other: &Mesh) -> bool {
        self.topology_id == other.topology_id
            && self.vertices.len() == other.vertices.len()
            && self.triangles == other.triangles
    }

    /// Copy with replaced vertex positions and the same connectivity.
    pub fn with_vertices(&self, vertices: Vec<Point3>) -> Mesh {
        debug_assert_eq!(vertices.len(), self.vertices.len());
        Mesh {
            vertices,
            triangles: self.triangles.clone(),
            topology_id: self.topology_id.clone(),
        }
    }

    pub fn triangle_corners(&self, t: usize) -> [Point3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Area-weighted vertex normals.
    pub fn vertex_normals(&self) -> VertexNormals {
        let sums = area_weighted_normal_sums(&self.vertices, &self.triangles);
        let mut undefined = Vec::new();
        let normals = sums
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let len = m.norm();
                if len > 0.0 && len.is_finite() {
                    m / len
                } else {
                    undefined.push(i);
                    Point3::zeros()
                }
            })
            .collect();
        VertexNormals { normals, undefined }
    }

    /// One-ring triangle lists per vertex.
    pub fn vertex_triangles(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                out[v].push(t);
            }
        }
        out
    }

    pub fn bounding_box(&self) -> Option<(Point3, Point3)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        }))
    }

    /// Maximum vertex-to-vertex distance between two meshes of one topology.
    pub fn max_deviation(&self, other: &Mesh) -> f64 {
        self.vertices
            .iter()
            .zip(&other.vertices)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Reads the `v`/`f` subset of the Wavefront text format (1-based indices).
    pub fn read_obj(path: &Path, topology_id: &str) -> Result<Mesh> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_obj(&text, path, topology_id)
    }

    pub fn parse_obj(text: &str, path: &Path, topology_id: &str) -> Result<Mesh> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            let mut it = line.split_whitespace();
            match it.next() {
                Some("v") => {
                    let xyz: Vec<f64> = it
                        .take(3)
                        .map(|s| s.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::parse(path, lineno + 1, e.to_string()))?;
                    if xyz.len() != 3 {
                        return Err(Error::parse(path, lineno + 1, "vertex needs 3 coordinates"));
                    }
                    vertices.push(Point3::new(xyz[0], xyz[1], xyz[2]));
                }
                Some("f") => {
                    let idx: Vec<usize> = it
                        .map(|s| {
                            // accept "i", "i/t", "i/t/n"
                            s.split('/')
                                .next()
                                .unwrap_or("")
                                .parse::<usize>()
                                .ok()
                                .filter(|&i| i >= 1)
                                .map(|i| i - 1)
                        })
                        .collect::<Option<_>>()
                        .ok_or_else(|| Error::parse(path, lineno + 1, "bad face index"))?;
                    if idx.len() != 3 {
                        return Err(Error::parse(path, lineno + 1, "only triangles are supported"));
                    }
                    triangles.push([idx[0], idx[1], idx[2]]);
                }
                _ => {}
            }
        }
        Mesh::new(vertices, triangles, topology_id)
            .map_err(|e| Error::parse(path, 0, e.to_string()))
    }

    pub fn to_obj_string(&self) -> String {
        let mut s = String::with_capacity(self.vertices.len() * 40 + self.triangles.len() * 20);
        let _ = writeln!(s, "# topology {}", self.topology_id);
        for v in &self.vertices {
            let _ = writeln!(s, "v {:.17e} {:.17e} {:.17e}", v.x, v.y, v.z);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        s
    }

    pub fn write_obj(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_obj_string())?;
        Ok(())
    }

    /// Topology id recorded by `to_obj_string`, if present.
    pub fn obj_topology_hint(text: &str) -> Option<&str> {
        text.lines()
            .find_map(|l| l.strip_prefix("# topology "))
            .map(str::trim)
    }
}

/// Unnormalized vertex normals: sum over incident triangles of
/// `(b - a) x (c - a)`, i.e. twice the area times the face normal.
pub fn area_weighted_normal_sums(vertices: &[Point3], triangles: &[[usize; 3]]) -> Vec<Point3> {
    let mut sums = vec![Point3::zeros(); vertices.len()];
    for &[a, b, c] in triangles {
        let n = (vertices[b] - vertices[a]).cross(&(vertices[c] - vertices[a]));
        sums[a] += n;
        sums[b] += n;
        sums[c] += n;
    }
    sums
}

/// Pulls a gradient on unit vertex normals back onto vertex positions.
///
/// `sums` are the unnormalized sums from [`area_weighted_normal_sums`];
/// vertices with zero sums receive no gradient.
pub fn vertex_normals_vjp(
    vertices: &[Point3],
    triangles: &[[usize; 3]],
    sums: &[Point3],
    grad_normals: &[Point3],
) -> Vec<Point3> {
    let grad_sums: Vec<Point3> = sums
        .iter()
        .zip(grad_normals)
        .map(|(m, g)| {
            let len = m.norm();
            if len == 0.0 {
                return Point3::zeros();
            }
            let n = m / len;
            (g - n * n.dot(g)) / len
        })
        .collect();
    let mut grad = vec![Point3::zeros(); vertices.len()];
    for &[a, b, c] in triangles {
        let g = grad_sums[a] + grad_sums[b] + grad_sums[c];
        if g == Point3::zeros() {
            continue;
        }
        let e1 = vertices[b] - vertices[a];
        let e2 = vertices[c] - vertices[a];
        let gb = e2.cross(&g);
        let gc = g.cross(&e1);
        grad[b] += gb;
        grad[c] += gc;
        grad[a] -= gb + gc;
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rotation::rodrigues;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tetrahedron() -> Mesh {
        let s = 1.0 / 3f64.sqrt();
        let v = vec![
            Point3::new(s, s, s),
            Point3::new(s, -s, -s),
            Point3::new(-s, s, -s),
            Point3::new(-s, -s, s),
        ];
        // outward winding
        let t = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
        Mesh::new(v, t, "tet").unwrap()
    }

    #[test]
    fn planar_square_normals() {
        let m = Mesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(1.0, 1.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
            "sq",
        )
        .unwrap();
        let n = m.vertex_normals();
        assert!(n.undefined.is_empty());
        for v in &n.normals {
            assert_eq!(*v, Point3::new(0.0, 0.0, 1.0));
        }
    }

    #[test]
    fn tetrahedron_normals_point_outward() {
        let m = tetrahedron();
        let n = m.vertex_normals();
        for (p, nv) in m.vertices.iter().zip(&n.normals) {
            assert!((nv.norm() - 1.0).abs() < 1e-12);
            assert!((nv - p.normalize()).norm() < 1e-12);
        }
    }

    #[test]
    fn degenerate_vertex_is_reported() {
        let m = Mesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(2.0, 0.0, 0.0),
            ],
            vec![[0, 1, 2]],
            "line",
        )
        .unwrap();
        assert_eq!(m.vertex_normals().undefined, vec![0, 1, 2]);
    }

    #[test]
    fn bad_index_rejected() {
        assert!(Mesh::new(vec![Point3::zeros(); 2], vec![[0, 1, 2]], "x").is_err());
    }

    #[test]
    fn normals_match_brute_force_incident_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // random convex-ish mesh: perturbed octahedron subdivision
        let base = crate::geometry::primitives::icosphere(2, 1.0);
        let verts: Vec<Point3> = base
            .vertices
            .iter()
            .map(|v| v * (1.0 + 0.1 * rng.gen::<f64>()))
            .collect();
        let m = base.with_vertices(verts);
        let n = m.vertex_normals();
        for (i, nv) in n.normals.iter().enumerate() {
            // independent summation: loop over all triangles, pick those containing i
            let mut acc = [0.0f64; 3];
            for t in &m.triangles {
                if t.contains(&i) {
                    let (a, b, c) = (m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]]);
                    let u = [b.x - a.x, b.y - a.y, b.z - a.z];
                    let w = [c.x - a.x, c.y - a.y, c.z - a.z];
                    acc[0] += u[1] * w[2] - u[2] * w[1];
                    acc[1] += u[2] * w[0] - u[0] * w[2];
                    acc[2] += u[0] * w[1] - u[1] * w[0];
                }
            }
            let len = (acc[0] * acc[0] + acc[1] * acc[1] + acc[2] * acc[2]).sqrt();
            let oracle = Point3::new(acc[0] / len, acc[1] / len, acc[2] / len);
            assert!((nv - oracle).norm() < 1e-12);
        }
    }

    #[test]
    fn normals_rotate_with_mesh() {
        let m = crate::geometry::primitives::icosphere(2, 3.0);
        let r = rodrigues(&Point3::new(0.3, -1.2, 0.5));
        let rotated = m.with_vertices(m.vertices.iter().map(|v| r * v).collect());
        let a = m.vertex_normals().normals;
        let b = rotated.vertex_normals().normals;
        for (x, y) in a.iter().zip(&b) {
            assert!((r * x - y).norm() < 1e-9);
        }
    }

    #[test]
    fn normal_vjp_matches_finite_differences() {
        let m = tetrahedron();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g: Vec<Point3> = (0..4)
            .map(|_| Point3::new(rng.gen(), rng.gen(), rng.gen()))
            .collect();
        let loss = |v: &[Point3]| -> f64 {
            let s = area_weighted_normal_sums(v, &m.triangles);
            s.iter().zip(&g).map(|(m, g)| m.normalize().dot(g)).sum()
        };
        let sums = area_weighted_normal_sums(&m.vertices, &m.triangles);
        let grad = vertex_normals_vjp(&m.vertices, &m.triangles, &sums, &g);
        let h = 1e-6;
        for i in 0..4 {
            for k in 0..3 {
                let mut p = m.vertices.clone();
                let mut q = m.vertices.clone();
                p[i][k] += h;
                q[i][k] -= h;
                let fd = (loss(&p) - loss(&q)) / (2.0 * h);
                assert!((fd - grad[i][k]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn obj_round_trip() {
        let m = tetrahedron();
        let text = m.to_obj_string();
        let back = Mesh::parse_obj(&text, Path::new("mem"), "tet").unwrap();
        assert_eq!(back, m);
        assert_eq!(Mesh::obj_topology_hint(&text), Some("tet"));
    }

    #[test]
    fn obj_parse_error_has_line() {
        let err = Mesh::parse_obj("v 0 0 0\nv 1 x 0\n", Path::new("bad.obj"), "t").unwrap_err();
        assert!(err.to_string().contains("bad.obj:2"), "{err}");
    }
}
