//! Computational-geometry kernel: 2D polygons with inset/offset machinery,
//! tagged triangle meshes, boolean subtraction against convex cutters,
//! PCA-based oriented bounding boxes, and ray casting.
//!
//! Everything downstream (wall construction, rendering, texturing, object
//! placement) builds on these types. All math is f64; tolerances are
//! centralized in [`tol`].

mod csg;
mod mesh;
mod obb;
mod polygon;
mod ray;

pub use csg::mesh_subtract;
pub use mesh::{Category, FaceTag, TriMesh, P3, V3};
pub use obb::{oriented_bounding_box, Obb};
pub use polygon::{
    inset_polygon, intersection_area, min_area_rect, offset_ring, point_segment_distance,
    Polygon2D, Rect2, P2, V2,
};
pub use ray::{point_triangle_distance, raycast, RayHit};

use thiserror::Error;

/// Tolerance constants shared across the kernel. Values are in meters
/// (or square meters where noted) unless stated otherwise.
pub mod tol {
    /// Two points closer than this are considered coincident.
    pub const POINT_EPS: f64 = 1e-9;
    /// Triangles with area at or below this are degenerate (square meters).
    pub const MIN_FACE_AREA: f64 = 1e-12;
    /// Ray hits with parameter at or below this are ignored (self-hit guard).
    pub const RAY_T_MIN: f64 = 1e-6;
    /// Plane-side classification tolerance for boolean splits.
    pub const PLANE_EPS: f64 = 1e-9;
    /// Maximum deviation from orthonormality accepted for box axes.
    pub const ORTHO_EPS: f64 = 1e-6;
}

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("consecutive polygon vertices {0} and {1} coincide")]
    CoincidentVertices(usize, usize),
    #[error("polygon edges {0} and {1} intersect")]
    SelfIntersecting(usize, usize),
    #[error("polygon winding is clockwise, expected counter-clockwise")]
    ClockwiseWinding,
    #[error("inset by {distance} collapses the polygon")]
    InsetCollapse { distance: f64 },
    #[error("no valid ear found while triangulating")]
    TriangulationFailed,
    #[error("mesh has no triangles")]
    EmptyMesh,
    #[error("triangle {face} references vertex {index} beyond {count} vertices")]
    IndexOutOfBounds { face: usize, index: u32, count: usize },
    #[error("tag count {tags} does not match triangle count {triangles}")]
    TagCountMismatch { tags: usize, triangles: usize },
    #[error("uv count {uvs} does not match vertex count {vertices}")]
    UvCountMismatch { uvs: usize, vertices: usize },
    #[error("triangle {0} is degenerate")]
    DegenerateTriangle(usize),
    #[error("base mesh is non-manifold near the cutter: an edge is shared by {count} faces")]
    NonManifoldInput { count: usize },
    #[error("cutter is not a closed convex solid: {0}")]
    InvalidCutter(&'static str),
}
