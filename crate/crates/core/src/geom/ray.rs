//! Ray casting against tagged meshes.

use super::mesh::{P3, TriMesh, V3};
use super::tol;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    /// Distance along the ray in units of the direction length.
    pub t: f64,
    pub face: usize,
    /// Barycentric weights of the second and third triangle vertices.
    pub u: f64,
    pub v: f64,
}

/// Nearest intersection with t > RAY_T_MIN, scanning every triangle
/// (Moeller-Trumbore). Ties on t keep the lowest face index. `dir` should be
/// unit length if `t` is to be read as a distance.
pub fn raycast(mesh: &TriMesh, origin: P3, dir: V3) -> Option<RayHit> {
    let mut best: Option<RayHit> = None;
    for face in 0..mesh.face_count() {
        let [a, b, c] = mesh.triangle_points(face);
        if let Some((t, u, v)) = intersect_triangle(origin, dir, a, b, c) {
            if best.as_ref().map_or(true, |h| t < h.t) {
                best = Some(RayHit { t, face, u, v });
            }
        }
    }
    best
}

pub(crate) fn intersect_triangle(
    origin: P3,
    dir: V3,
    a: P3,
    b: P3,
    c: P3,
) -> Option<(f64, f64, f64)> {
    let e1 = b - a;
    let e2 = c - a;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-12 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - a;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    if t <= tol::RAY_T_MIN {
        return None;
    }
    Some((t, u, v))
}

/// Distance from a point to a triangle (closest point on the triangle).
pub fn point_triangle_distance(p: P3, a: P3, b: P3, c: P3) -> f64 {
    // Region classification after Ericson, Real-Time Collision Detection.
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm();
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (p - (a + ab * v)).norm();
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (p - (a + ac * w)).norm();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (p - (b + (c - b) * w)).norm();
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (p - (a + ab * v + ac * w)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Category, FaceTag};

    fn cube() -> TriMesh {
        TriMesh::box_from_aabb(
            P3::new(-1.0, -1.0, -1.0),
            P3::new(1.0, 1.0, 1.0),
            FaceTag::structural("r", Category::Wall),
        )
    }

    #[test]
    fn hits_nearest_face() {
        let m = cube();
        let hit = raycast(&m, P3::new(-5.0, 0.0, 0.0), V3::new(1.0, 0.0, 0.0)).unwrap();
        assert!((hit.t - 4.0).abs() < 1e-12);
        let [a, b, c] = m.triangle_points(hit.face);
        for p in [a, b, c] {
            assert!((p.x + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn miss_returns_none() {
        let m = cube();
        assert!(raycast(&m, P3::new(-5.0, 3.0, 0.0), V3::new(1.0, 0.0, 0.0)).is_none());
        // Pointing away.
        assert!(raycast(&m, P3::new(-5.0, 0.0, 0.0), V3::new(-1.0, 0.0, 0.0)).is_none());
    }

    #[test]
    fn self_hit_guard() {
        let m = cube();
        // Origin exactly on the -x face, shooting inward: the nearest legal
        // hit is the +x face at t = 2.
        let hit = raycast(&m, P3::new(-1.0, 0.2, 0.2), V3::new(1.0, 0.0, 0.0)).unwrap();
        assert!((hit.t - 2.0).abs() < 1e-12);
    }

    #[test]
    fn point_triangle_distance_regions() {
        let a = P3::new(0.0, 0.0, 0.0);
        let b = P3::new(2.0, 0.0, 0.0);
        let c = P3::new(0.0, 2.0, 0.0);
        assert!((point_triangle_distance(P3::new(0.5, 0.5, 1.0), a, b, c) - 1.0).abs() < 1e-12);
        assert!((point_triangle_distance(P3::new(-1.0, 0.0, 0.0), a, b, c) - 1.0).abs() < 1e-12);
        assert!((point_triangle_distance(P3::new(3.0, 0.0, 0.0), a, b, c) - 1.0).abs() < 1e-12);
        assert!(
            (point_triangle_distance(P3::new(2.0, 2.0, 0.0), a, b, c) - 2.0f64.sqrt()).abs()
                < 1e-12
        );
    }
}
