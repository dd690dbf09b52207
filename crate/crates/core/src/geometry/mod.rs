//! Geometric substrate: meshes, normals, landmark triangulation, closest-point
//! and offset-surface queries, rigid alignment.

pub mod closest;
pub mod delaunay;
pub mod mesh;
pub mod primitives;
pub mod rigid;
pub mod rotation;

pub use closest::{offset_surface_project, ClosestPointIndex, OffsetProjection, OffsetSurface};
pub use delaunay::{delaunay, LandmarkGraph, Point2};
pub use mesh::{Mesh, Point3, VertexNormals};
pub use rigid::RigidTransform;
