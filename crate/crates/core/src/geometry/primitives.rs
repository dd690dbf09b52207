//! Procedural test and template meshes.

use std::collections::HashMap;

use super::mesh::{Mesh, Point3};

/// Vertex count of an icosphere after `subdivisions` rounds: `10 * 4^k + 2`.
pub fn icosphere_vertex_count(subdivisions: u32) -> usize {
    10 * 4usize.pow(subdivisions) + 2
}

/// Subdivided icosahedron projected onto a sphere of `radius`, outward winding.
pub fn icosphere(subdivisions: u32, radius: f64) -> Mesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let vertices = vec![
        Point3::new(-1.0, phi, 0.0),
        Point3::new(1.0, phi, 0.0),
        Point3::new(-1.0, -phi, 0.0),
        Point3::new(1.0, -phi, 0.0),
        Point3::new(0.0, -1.0, phi),
        Point3::new(0.0, 1.0, phi),
        Point3::new(0.0, -1.0, -phi),
        Point3::new(0.0, 1.0, -phi),
        Point3::new(phi, 0.0, -1.0),
        Point3::new(phi, 0.0, 1.0),
        Point3::new(-phi, 0.0, -1.0),
        Point3::new(-phi, 0.0, 1.0),
    ];
    let triangles = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    subdivide_sphere(vertices, triangles, subdivisions, radius, "icosphere")
}

/// Subdivided octahedron on a sphere; the six axis points are vertices.
pub fn octasphere(subdivisions: u32, radius: f64) -> Mesh {
    let vertices = vec![
        Point3::new(1.0, 0.0, 0.0),
        Point3::new(-1.0, 0.0, 0.0),
        Point3::new(0.0, 1.0, 0.0),
        Point3::new(0.0, -1.0, 0.0),
        Point3::new(0.0, 0.0, 1.0),
        Point3::new(0.0, 0.0, -1.0),
    ];
    let triangles = vec![
        [0, 2, 4],
        [2, 1, 4],
        [1, 3, 4],
        [3, 0, 4],
        [2, 0, 5],
        [1, 2, 5],
        [3, 1, 5],
        [0, 3, 5],
    ];
    subdivide_sphere(vertices, triangles, subdivisions, radius, "octasphere")
}

fn subdivide_sphere(
    mut vertices: Vec<Point3>,
    mut triangles: Vec<[usize; 3]>,
    subdivisions: u32,
    radius: f64,
    name: &str,
) -> Mesh {
    for v in vertices.iter_mut() {
        *v = v.normalize();
    }
    for _ in 0..subdivisions {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(triangles.len() * 4);
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point3>| -> usize {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
                vertices.len() - 1
            })
        };
        for &[a, b, c] in &triangles {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        triangles = next;
    }
    let vertices = vertices.into_iter().map(|v| v * radius).collect();
    Mesh::new(vertices, triangles, format!("{name}-{subdivisions}"))
        .expect("subdivision produces valid indices")
}

/// Regular grid in the plane z = 0 covering `[-half, half]^2`, normals +z.
pub fn plane_grid(cells: usize, half: f64) -> Mesh {
    let n = cells + 1;
    let step = 2.0 * half / cells as f64;
    let mut vertices = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            vertices.push(Point3::new(-half + i as f64 * step, -half + j as f64 * step, 0.0));
        }
    }
    let mut triangles = Vec::with_capacity(cells * cells * 2);
    for j in 0..cells {
        for i in 0..cells {
            let a = j * n + i;
            triangles.push([a, a + 1, a + n + 1]);
            triangles.push([a, a + n + 1, a + n]);
        }
    }
    Mesh::new(vertices, triangles, format!("plane-{cells}")).expect("grid indices are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_counts() {
        for k in 0..5 {
            let m = icosphere(k, 1.0);
            assert_eq!(m.vertex_count(), icosphere_vertex_count(k));
            assert_eq!(m.triangles.len(), 20 * 4usize.pow(k));
        }
        assert_eq!(icosphere_vertex_count(4), 2562);
    }

    #[test]
    fn sphere_normals_are_outward() {
        for m in [icosphere(2, 2.0), octasphere(2, 2.0)] {
            let n = m.vertex_normals();
            for (p, nv) in m.vertices.iter().zip(&n.normals) {
                assert!(p.normalize().dot(nv) > 0.99);
            }
        }
    }
}
