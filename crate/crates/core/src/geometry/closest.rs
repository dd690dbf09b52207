//! Exact closest-point queries on triangle meshes and offset-surface projection.

use super::mesh::{Mesh, Point3};
use crate::error::{Error, Result};

/// Closest point on triangle `abc` to `p`, with its barycentric coordinates.
///
/// Region classification follows Ericson, "Real-Time Collision Detection" 5.1.5.
pub fn closest_point_on_triangle(p: &Point3, a: &Point3, b: &Point3, c: &Point3) -> (Point3, [f64; 3]) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, [1.0, 0.0, 0.0]);
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, [0.0, 1.0, 0.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, [1.0 - v, v, 0.0]);
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, [0.0, 0.0, 1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, [1.0 - w, 0.0, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, [0.0, 1.0 - w, w]);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, [1.0 - v - w, v, w])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestHit {
    pub point: Point3,
    pub triangle: usize,
    pub barycentric: [f64; 3],
    pub distance: f64,
}

/// Uniform-grid accelerated closest-point index over a mesh.
#[derive(Debug, Clone)]
pub struct ClosestPointIndex {
    mesh: Mesh,
    normals: Vec<Point3>,
    origin: Point3,
    cell: f64,
    dims: [usize; 3],
    cells: Vec<Vec<u32>>,
}

impl ClosestPointIndex {
    pub fn new(mesh: &Mesh) -> Result<Self> {
        if mesh.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let (lo, hi) = mesh.bounding_box().ok_or(Error::EmptyMesh)?;
        let extent = hi - lo;
        let diag = extent.norm().max(1e-9);
        // about two triangles per cell on average
        let target = (mesh.triangles.len() as f64 / 2.0).max(1.0);
        let volume = extent.iter().map(|e| e.max(diag * 1e-3)).product::<f64>();
        let cell = (volume / target).cbrt().max(diag * 1e-3).max(extent.amax() / 255.0);
        let dims = [0, 1, 2].map(|k| (extent[k] / cell).floor() as usize + 1);
        let mut cells = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        let origin = lo;
        let to_cell = |v: f64, k: usize| -> usize {
            (((v - origin[k]) / cell).floor().max(0.0) as usize).min(dims[k] - 1)
        };
        for (t, _) in mesh.triangles.iter().enumerate() {
            let [a, b, c] = mesh.triangle_corners(t);
            let tlo = a.inf(&b).inf(&c);
            let thi = a.sup(&b).sup(&c);
            for i in to_cell(tlo.x, 0)..=to_cell(thi.x, 0) {
                for j in to_cell(tlo.y, 1)..=to_cell(thi.y, 1) {
                    for k in to_cell(tlo.z, 2)..=to_cell(thi.z, 2) {
                        cells[(k * dims[1] + j) * dims[0] + i].push(t as u32);
                    }
                }
            }
        }
        let vn = mesh.vertex_normals();
        Ok(Self {
            mesh: mesh.clone(),
            normals: vn.normals,
            origin,
            cell,
            dims,
            cells,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    /// Exact closest point on the mesh to `q`.
    pub fn closest(&self, q: &Point3) -> ClosestHit {
        let dims = self.dims;
        let rel = (q - self.origin) / self.cell;
        let home = [0, 1, 2].map(|k| (rel[k].floor().max(0.0) as isize).min(dims[k] as isize - 1));
        let mut best: Option<ClosestHit> = None;
        let max_ring = dims.iter().copied().max().unwrap_or(1) as isize;
        let mut visited = vec![false; self.mesh.triangles.len()];
        for ring in 0..=max_ring {
            let mut any_cell = false;
            for i in home[0] - ring..=home[0] + ring {
                for j in home[1] - ring..=home[1] + ring {
                    for k in home[2] - ring..=home[2] + ring {
                        let on_shell = (i - home[0]).abs() == ring
                            || (j - home[1]).abs() == ring
                            || (k - home[2]).abs() == ring;
                        if !on_shell
                            || i < 0
                            || j < 0
                            || k < 0
                            || i >= dims[0] as isize
                            || j >= dims[1] as isize
                            || k >= dims[2] as isize
                        {
                            continue;
                        }
                        any_cell = true;
                        let idx = (k as usize * dims[1] + j as usize) * dims[0] + i as usize;
                        for &t in &self.cells[idx] {
                            let t = t as usize;
                            if visited[t] {
                                continue;
                            }
                            visited[t] = true;
                            let [a, b, c] = self.mesh.triangle_corners(t);
                            let (p, bary) = closest_point_on_triangle(q, &a, &b, &c);
                            let d = (p - q).norm();
                            if best.is_none_or(|h| d < h.distance) {
                                best = Some(ClosestHit {
                                    point: p,
                                    triangle: t,
                                    barycentric: bary,
                                    distance: d,
                                });
                            }
                        }
                    }
                }
            }
            if let Some(h) = best {
                // every unvisited triangle lies outside the searched block
                let reach = self.searched_block_distance(q, &home, ring);
                if h.distance <= reach {
                    return h;
                }
            }
            if !any_cell && ring > 0 {
                break;
            }
        }
        best.expect("non-empty mesh always yields a hit")
    }

    /// Lower bound on the distance from `q` to any grid cell outside the
    /// block of half-width `ring` around `home`.
    fn searched_block_distance(&self, q: &Point3, home: &[isize; 3], ring: isize) -> f64 {
        let grid_lo = self.origin;
        let grid_hi = self.origin + Point3::from_iterator(self.dims.iter().map(|&d| d as f64 * self.cell));
        let mut d = f64::INFINITY;
        for k in 0..3 {
            let lo_idx = home[k] - ring;
            let hi_idx = home[k] + ring + 1;
            if lo_idx > 0 {
                let mut hi = grid_hi;
                hi[k] = self.origin[k] + lo_idx as f64 * self.cell;
                d = d.min(box_distance(q, &grid_lo, &hi));
            }
            if hi_idx < self.dims[k] as isize {
                let mut lo = grid_lo;
                lo[k] = self.origin[k] + hi_idx as f64 * self.cell;
                d = d.min(box_distance(q, &lo, &grid_hi));
            }
        }
        d
    }

    /// Interpolated unit vertex normal at a hit.
    pub fn normal_at(&self, hit: &ClosestHit) -> Point3 {
        let [a, b, c] = self.mesh.triangles[hit.triangle];
        let n = self.normals[a] * hit.barycentric[0]
            + self.normals[b] * hit.barycentric[1]
            + self.normals[c] * hit.barycentric[2];
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            let [pa, pb, pc] = self.mesh.triangle_corners(hit.triangle);
            (pb - pa).cross(&(pc - pa)).normalize()
        }
    }
}

fn box_distance(q: &Point3, lo: &Point3, hi: &Point3) -> f64 {
    let mut d2 = 0.0;
    for k in 0..3 {
        let e = (lo[k] - q[k]).max(q[k] - hi[k]).max(0.0);
        d2 += e * e;
    }
    d2.sqrt()
}

/// Result of projecting a point onto an offset surface.
#[derive(Debug, Clone, Copy)]
pub struct OffsetProjection {
    pub point: Point3,
    /// Signed distance of the query to the base surface (positive outside).
    pub signed_distance: f64,
    /// Unit outward direction used for the displacement.
    pub direction: Point3,
}

/// The surface at constant distance `offset` outside a base mesh.
#[derive(Debug, Clone)]
pub struct OffsetSurface {
    index: ClosestPointIndex,
    offset: f64,
}

impl OffsetSurface {
    pub fn new(mesh: &Mesh, offset: f64) -> Result<Self> {
        if !(offset >= 0.0) {
            return Err(Error::InvalidInput(format!("offset must be >= 0, got {offset}")));
        }
        Ok(Self {
            index: ClosestPointIndex::new(mesh)?,
            offset,
        })
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn base(&self) -> &Mesh {
        self.index.mesh()
    }

    /// Closest base point displaced by `offset` along the outward direction.
    ///
    /// Off the surface the direction is the unit vector from the closest
    /// point to the query (flipped for queries inside), which gives the exact
    /// offset surface of a convex mesh. On the surface it falls back to the
    /// interpolated vertex normal.
    pub fn project(&self, q: &Point3) -> OffsetProjection {
        let hit = self.index.closest(q);
        let normal = self.index.normal_at(&hit);
        let diff = q - hit.point;
        let (direction, signed_distance) = if hit.distance > 1e-12 * (1.0 + q.norm()) {
            let u = diff / hit.distance;
            if u.dot(&normal) >= 0.0 {
                (u, hit.distance)
            } else {
                (-u, -hit.distance)
            }
        } else {
            (normal, 0.0)
        };
        OffsetProjection {
            point: hit.point + direction * self.offset,
            signed_distance,
            direction,
        }
    }
}

/// One-shot projection of `query` onto the `offset` surface of `mesh`.
pub fn offset_surface_project(mesh: &Mesh, offset: f64, query: &Point3) -> Result<Point3> {
    Ok(OffsetSurface::new(mesh, offset)?.project(query).point)
}
