//! Simple 2D polygons and offset machinery.
//!
//! Polygons are counter-clockwise, simple, and free of coincident consecutive
//! vertices. Collinear forward vertices are allowed; they show up when wall
//! runs are split at shared-edge overlap endpoints.

use super::{tol, GeomError};
use nalgebra::{Point2, Vector2};

pub type P2 = Point2<f64>;
pub type V2 = Vector2<f64>;

fn cross2(a: V2, b: V2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Left-hand perpendicular; for CCW polygons this points into the interior
/// when applied to an edge direction.
fn left(v: V2) -> V2 {
    V2::new(-v.y, v.x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polygon2D {
    vertices: Vec<P2>,
}

impl Polygon2D {
    pub fn new(vertices: Vec<P2>) -> Result<Self, GeomError> {
        if vertices.len() < 3 {
            return Err(GeomError::TooFewVertices(vertices.len()));
        }
        let n = vertices.len();
        for i in 0..n {
            let j = (i + 1) % n;
            if (vertices[j] - vertices[i]).norm() <= tol::POINT_EPS {
                return Err(GeomError::CoincidentVertices(i, j));
            }
        }
        if let Some((i, j)) = first_self_intersection(&vertices) {
            return Err(GeomError::SelfIntersecting(i, j));
        }
        if signed_area(&vertices) <= 0.0 {
            return Err(GeomError::ClockwiseWinding);
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[P2] {
        &self.vertices
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge(&self, i: usize) -> (P2, P2) {
        let n = self.vertices.len();
        (self.vertices[i % n], self.vertices[(i + 1) % n])
    }

    pub fn edge_length(&self, i: usize) -> f64 {
        let (a, b) = self.edge(i);
        (b - a).norm()
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn perimeter(&self) -> f64 {
        (0..self.vertices.len()).map(|i| self.edge_length(i)).sum()
    }

    /// Area centroid.
    pub fn centroid(&self) -> P2 {
        let mut cx = 0.0;
        let mut cy = 0.0;
        let mut a = 0.0;
        let n = self.vertices.len();
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            let w = p.x * q.y - q.x * p.y;
            cx += (p.x + q.x) * w;
            cy += (p.y + q.y) * w;
            a += w;
        }
        P2::new(cx / (3.0 * a), cy / (3.0 * a))
    }

    /// Even-odd containment test. Points on the boundary are not guaranteed
    /// either way; combine with [`Polygon2D::distance_to_boundary`] when the
    /// distinction matters.
    pub fn contains(&self, p: P2) -> bool {
        let mut inside = false;
        let n = self.vertices.len();
        let mut j = n - 1;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[j];
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    pub fn distance_to_boundary(&self, p: P2) -> f64 {
        (0..self.vertices.len())
            .map(|i| {
                let (a, b) = self.edge(i);
                point_segment_distance(p, a, b)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Ear-clipping triangulation. Returns vertex-index triples; collinear
    /// forward vertices contribute no triangles of their own.
    pub fn triangulate(&self) -> Result<Vec<[usize; 3]>, GeomError> {
        let mut idx: Vec<usize> = (0..self.vertices.len()).collect();
        let mut out = Vec::with_capacity(self.vertices.len().saturating_sub(2));
        let v = &self.vertices;

        while idx.len() > 3 {
            let n = idx.len();
            let mut clipped = false;
            // Prefer strictly convex ears; degenerate (collinear) corners are
            // dropped without emitting a triangle.
            for k in 0..n {
                let ia = idx[(k + n - 1) % n];
                let ib = idx[k];
                let ic = idx[(k + 1) % n];
                let ab = v[ib] - v[ia];
                let bc = v[ic] - v[ib];
                let turn = cross2(ab, bc);
                if turn.abs() <= tol::POINT_EPS && ab.dot(&bc) > 0.0 {
                    idx.remove(k);
                    clipped = true;
                    break;
                }
                if turn <= tol::POINT_EPS {
                    continue;
                }
                let mut blocked = false;
                for &other in &idx {
                    if other == ia || other == ib || other == ic {
                        continue;
                    }
                    if point_in_triangle_closed(v[other], v[ia], v[ib], v[ic]) {
                        blocked = true;
                        break;
                    }
                }
                if !blocked {
                    out.push([ia, ib, ic]);
                    idx.remove(k);
                    clipped = true;
                    break;
                }
            }
            if !clipped {
                return Err(GeomError::TriangulationFailed);
            }
        }
        if idx.len() == 3 {
            let tri = [idx[0], idx[1], idx[2]];
            let area = cross2(v[tri[1]] - v[tri[0]], v[tri[2]] - v[tri[0]]);
            if area > tol::POINT_EPS {
                out.push(tri);
            }
        }
        Ok(out)
    }
}

pub fn signed_area(vertices: &[P2]) -> f64 {
    let n = vertices.len();
    let mut a = 0.0;
    for i in 0..n {
        let p = vertices[i];
        let q = vertices[(i + 1) % n];
        a += p.x * q.y - q.x * p.y;
    }
    a * 0.5
}

fn point_in_triangle_closed(p: P2, a: P2, b: P2, c: P2) -> bool {
    let d1 = cross2(b - a, p - a);
    let d2 = cross2(c - b, p - b);
    let d3 = cross2(a - c, p - c);
    let has_neg = d1 < -tol::POINT_EPS || d2 < -tol::POINT_EPS || d3 < -tol::POINT_EPS;
    let has_pos = d1 > tol::POINT_EPS || d2 > tol::POINT_EPS || d3 > tol::POINT_EPS;
    !(has_neg && has_pos)
}

pub fn point_segment_distance(p: P2, a: P2, b: P2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

fn segments_touch(p1: P2, p2: P2, p3: P2, p4: P2) -> bool {
    let o = |a: P2, b: P2, c: P2| cross2(b - a, c - a);
    let eps = tol::POINT_EPS;
    let d1 = o(p3, p4, p1);
    let d2 = o(p3, p4, p2);
    let d3 = o(p1, p2, p3);
    let d4 = o(p1, p2, p4);
    if ((d1 > eps && d2 < -eps) || (d1 < -eps && d2 > eps))
        && ((d3 > eps && d4 < -eps) || (d3 < -eps && d4 > eps))
    {
        return true;
    }
    let on = |a: P2, b: P2, c: P2, d: f64| d.abs() <= eps && point_segment_distance(c, a, b) <= eps;
    on(p3, p4, p1, d1) || on(p3, p4, p2, d2) || on(p1, p2, p3, d3) || on(p1, p2, p4, d4)
}

/// First pair of non-adjacent edges that intersect or touch, or a doubling-back
/// pair of adjacent edges. None for a simple polygon.
fn first_self_intersection(vertices: &[P2]) -> Option<(usize, usize)> {
    let n = vertices.len();
    for i in 0..n {
        let (a1, a2) = (vertices[i], vertices[(i + 1) % n]);
        // Adjacent edge folding straight back over this one.
        let j = (i + 1) % n;
        let (b1, b2) = (vertices[j], vertices[(j + 1) % n]);
        let d1 = a2 - a1;
        let d2 = b2 - b1;
        if cross2(d1, d2).abs() <= tol::POINT_EPS && d1.dot(&d2) < 0.0 {
            return Some((i, j));
        }
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (b1, b2) = (vertices[j], vertices[(j + 1) % n]);
            if segments_touch(a1, a2, b1, b2) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Inward offset of a closed CCW chain of edges with a per-edge distance.
/// Edges are joined by miters where the chain turns; collinear neighbors with
/// different distances produce a perpendicular jog (both endpoints kept).
///
/// Returns the inner segment for each input edge. Fails with `InsetCollapse`
/// when any inner segment reverses direction or the assembled inner loop is
/// not a valid CCW simple polygon strictly smaller than the outer loop.
pub fn offset_ring(chain: &[(P2, P2)], dist: &[f64]) -> Result<Vec<(P2, P2)>, GeomError> {
    assert_eq!(chain.len(), dist.len());
    let n = chain.len();
    let max_d = dist.iter().cloned().fold(0.0, f64::max);
    let dirs: Vec<V2> = chain.iter().map(|(a, b)| (b - a).normalize()).collect();

    // Junction k sits between edge k-1 and edge k, at chain[k].0.
    let mut starts = vec![P2::origin(); n];
    let mut ends = vec![P2::origin(); n];
    for k in 0..n {
        let prev = (k + n - 1) % n;
        let v = chain[k].0;
        let turn = cross2(dirs[prev], dirs[k]);
        if turn.abs() > tol::POINT_EPS {
            // Offset lines: p = a_i + left(dir_i)*d_i + t*dir_i. Intersect.
            let p1 = chain[prev].0 + left(dirs[prev]) * dist[prev];
            let p2 = chain[k].0 + left(dirs[k]) * dist[k];
            let t = cross2(p2 - p1, dirs[k]) / turn;
            let m = p1 + dirs[prev] * t;
            ends[prev] = m;
            starts[k] = m;
        } else {
            ends[prev] = v + left(dirs[prev]) * dist[prev];
            starts[k] = v + left(dirs[k]) * dist[k];
        }
    }

    for i in 0..n {
        if (ends[i] - starts[i]).dot(&dirs[i]) <= tol::POINT_EPS {
            return Err(GeomError::InsetCollapse { distance: max_d });
        }
    }

    // Assemble the inner loop (jogs contribute two vertices) and validate it.
    let mut loop_pts: Vec<P2> = Vec::with_capacity(n);
    for i in 0..n {
        for p in [starts[i], ends[i]] {
            if loop_pts.last().map_or(true, |l| (p - l).norm() > tol::POINT_EPS) {
                loop_pts.push(p);
            }
        }
    }
    if loop_pts.len() >= 2 && (loop_pts[0] - loop_pts[loop_pts.len() - 1]).norm() <= tol::POINT_EPS
    {
        loop_pts.pop();
    }
    let inner = Polygon2D::new(loop_pts)
        .map_err(|_| GeomError::InsetCollapse { distance: max_d })?;
    let outer: Vec<P2> = chain.iter().map(|(a, _)| *a).collect();
    if inner.area() >= signed_area(&outer) {
        return Err(GeomError::InsetCollapse { distance: max_d });
    }

    Ok((0..n).map(|i| (starts[i], ends[i])).collect())
}

/// Uniform inward inset with miter joins. The result is rejected when the
/// offset self-intersects or stops being a CCW polygon.
pub fn inset_polygon(poly: &Polygon2D, d: f64) -> Result<Polygon2D, GeomError> {
    if d < 0.0 {
        return Err(GeomError::InsetCollapse { distance: d });
    }
    let n = poly.vertex_count();
    let chain: Vec<(P2, P2)> = (0..n).map(|i| poly.edge(i)).collect();
    let ring = offset_ring(&chain, &vec![d; n])?;
    let mut pts: Vec<P2> = Vec::with_capacity(n);
    for (s, _) in &ring {
        if pts.last().map_or(true, |l| (s - l).norm() > tol::POINT_EPS) {
            pts.push(*s);
        }
    }
    if pts.len() >= 2 && (pts[0] - pts[pts.len() - 1]).norm() <= tol::POINT_EPS {
        pts.pop();
    }
    Polygon2D::new(pts).map_err(|_| GeomError::InsetCollapse { distance: d })
}

/// Minimum-area enclosing rectangle of the polygon (rotating calipers over
/// the convex hull). Ties pick the earliest hull edge, which keeps the result
/// deterministic for squares.
#[derive(Debug, Clone)]
pub struct Rect2 {
    pub center: P2,
    pub axis_u: V2,
    pub axis_v: V2,
    pub half_u: f64,
    pub half_v: f64,
}

pub fn min_area_rect(poly: &Polygon2D) -> Rect2 {
    let hull = convex_hull(poly.vertices());
    let n = hull.len();
    debug_assert!(n >= 3);
    let mut best: Option<(f64, Rect2)> = None;
    for i in 0..n {
        let dir = (hull[(i + 1) % n] - hull[i]).normalize();
        let perp = left(dir);
        let (mut umin, mut umax, mut vmin, mut vmax) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &hull {
            let r = p - hull[i];
            let u = r.dot(&dir);
            let v = r.dot(&perp);
            umin = umin.min(u);
            umax = umax.max(u);
            vmin = vmin.min(v);
            vmax = vmax.max(v);
        }
        let area = (umax - umin) * (vmax - vmin);
        if best.as_ref().map_or(true, |(a, _)| area < *a - tol::POINT_EPS) {
            let center = hull[i] + dir * (0.5 * (umin + umax)) + perp * (0.5 * (vmin + vmax));
            best = Some((
                area,
                Rect2 {
                    center,
                    axis_u: dir,
                    axis_v: perp,
                    half_u: 0.5 * (umax - umin),
                    half_v: 0.5 * (vmax - vmin),
                },
            ));
        }
    }
    best.unwrap().1
}

fn convex_hull(points: &[P2]) -> Vec<P2> {
    let mut pts: Vec<P2> = points.to_vec();
    pts.sort_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).unwrap());
    pts.dedup_by(|a, b| (*a - *b).norm() <= tol::POINT_EPS);
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<P2> = Vec::with_capacity(pts.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &P2>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 {
                let m = hull.len();
                if cross2(hull[m - 1] - hull[m - 2], p - hull[m - 1]) <= tol::POINT_EPS {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Area of the intersection of two simple polygons, computed by clipping
/// triangulations pairwise (each triangle is convex, so Sutherland-Hodgman
/// clipping is exact).
pub fn intersection_area(a: &Polygon2D, b: &Polygon2D) -> f64 {
    let ta = a.triangulate().unwrap_or_default();
    let tb = b.triangulate().unwrap_or_default();
    let va = a.vertices();
    let vb = b.vertices();
    let mut total = 0.0;
    for x in &ta {
        let sub = [va[x[0]], va[x[1]], va[x[2]]];
        for y in &tb {
            let clip = [vb[y[0]], vb[y[1]], vb[y[2]]];
            total += clip_area(&sub, &clip);
        }
    }
    total
}

fn clip_area(subject: &[P2; 3], clip: &[P2; 3]) -> f64 {
    let mut poly: Vec<P2> = subject.to_vec();
    for i in 0..3 {
        let a = clip[i];
        let b = clip[(i + 1) % 3];
        let dir = b - a;
        let mut next: Vec<P2> = Vec::with_capacity(poly.len() + 2);
        for k in 0..poly.len() {
            let p = poly[k];
            let q = poly[(k + 1) % poly.len()];
            let dp = cross2(dir, p - a);
            let dq = cross2(dir, q - a);
            if dp >= 0.0 {
                next.push(p);
            }
            if (dp > 0.0 && dq < 0.0) || (dp < 0.0 && dq > 0.0) {
                let t = dp / (dp - dq);
                next.push(p + (q - p) * t);
            }
        }
        poly = next;
        if poly.len() < 3 {
            return 0.0;
        }
    }
    signed_area(&poly).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(s: f64) -> Polygon2D {
        Polygon2D::new(vec![
            P2::new(0.0, 0.0),
            P2::new(s, 0.0),
            P2::new(s, s),
            P2::new(0.0, s),
        ])
        .unwrap()
    }

    #[test]
    fn rejects_clockwise() {
        let r = Polygon2D::new(vec![
            P2::new(0.0, 0.0),
            P2::new(0.0, 1.0),
            P2::new(1.0, 1.0),
            P2::new(1.0, 0.0),
        ]);
        assert!(matches!(r, Err(GeomError::ClockwiseWinding)));
    }

    #[test]
    fn rejects_self_intersection() {
        let bowtie = Polygon2D::new(vec![
            P2::new(0.0, 0.0),
            P2::new(1.0, 1.0),
            P2::new(1.0, 0.0),
            P2::new(0.0, 1.0),
        ]);
        assert!(matches!(bowtie, Err(GeomError::SelfIntersecting(..))));
    }

    #[test]
    fn accepts_collinear_forward_vertices() {
        let p = Polygon2D::new(vec![
            P2::new(0.0, 0.0),
            P2::new(2.0, 0.0),
            P2::new(4.0, 0.0),
            P2::new(4.0, 4.0),
            P2::new(0.0, 4.0),
        ])
        .unwrap();
        assert!((p.area() - 16.0).abs() < 1e-12);
        let tris = p.triangulate().unwrap();
        let total: f64 = tris
            .iter()
            .map(|t| {
                let v = p.vertices();
                0.5 * cross2(v[t[1]] - v[t[0]], v[t[2]] - v[t[0]])
            })
            .sum();
        assert!((total - 16.0).abs() < 1e-9);
    }

    #[test]
    fn inset_square_by_fifth() {
        let p = square(4.0);
        let q = inset_polygon(&p, 0.2).unwrap();
        assert!((q.area() - 3.6 * 3.6).abs() < 1e-9);
        for v in q.vertices() {
            assert!(v.x > 0.19 && v.x < 3.81 && v.y > 0.19 && v.y < 3.81);
        }
    }

    #[test]
    fn inset_tiny_distance_near_identity() {
        let p = square(4.0);
        let q = inset_polygon(&p, 1e-12).unwrap();
        for (a, b) in p.vertices().iter().zip(q.vertices()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn inset_collapse_detected() {
        let p = square(1.0);
        assert!(matches!(
            inset_polygon(&p, 0.6),
            Err(GeomError::InsetCollapse { .. })
        ));
    }

    #[test]
    fn inset_composes_on_convex() {
        let p = Polygon2D::new(vec![
            P2::new(0.0, 0.0),
            P2::new(5.0, 0.0),
            P2::new(6.0, 3.0),
            P2::new(2.5, 5.0),
            P2::new(-0.5, 2.0),
        ])
        .unwrap();
        let lhs = inset_polygon(&inset_polygon(&p, 0.3).unwrap(), 0.2).unwrap();
        let rhs = inset_polygon(&p, 0.5).unwrap();
        assert_eq!(lhs.vertex_count(), rhs.vertex_count());
        for (a, b) in lhs.vertices().iter().zip(rhs.vertices()) {
            assert!((a - b).norm() < 1e-6);
        }
    }

    #[test]
    fn inset_area_strictly_decreasing() {
        let p = Polygon2D::new(vec![
            P2::new(0.0, 0.0),
            P2::new(6.0, 0.0),
            P2::new(6.0, 2.0),
            P2::new(3.0, 2.0),
            P2::new(3.0, 5.0),
            P2::new(0.0, 5.0),
        ])
        .unwrap();
        let mut prev = p.area();
        for k in 1..=6 {
            let d = 0.1 * k as f64;
            let q = inset_polygon(&p, d).unwrap();
            assert!(q.area() < prev);
            prev = q.area();
        }
    }

    #[test]
    fn offset_ring_jog_on_split_edge() {
        // Bottom edge split at x=2; right half offset 0.1, everything else 0.2.
        let chain = vec![
            (P2::new(0.0, 0.0), P2::new(2.0, 0.0)),
            (P2::new(2.0, 0.0), P2::new(4.0, 0.0)),
            (P2::new(4.0, 0.0), P2::new(4.0, 4.0)),
            (P2::new(4.0, 4.0), P2::new(0.0, 4.0)),
            (P2::new(0.0, 4.0), P2::new(0.0, 0.0)),
        ];
        let d = vec![0.2, 0.1, 0.2, 0.2, 0.2];
        let ring = offset_ring(&chain, &d).unwrap();
        assert!((ring[0].0 - P2::new(0.2, 0.2)).norm() < 1e-12);
        assert!((ring[0].1 - P2::new(2.0, 0.2)).norm() < 1e-12);
        assert!((ring[1].0 - P2::new(2.0, 0.1)).norm() < 1e-12);
        assert!((ring[1].1 - P2::new(3.8, 0.1)).norm() < 1e-12);
    }

    #[test]
    fn min_rect_of_rotated_rectangle() {
        let c = 0.5f64.to_radians().cos();
        let ang = 0.6f64;
        let (s, co) = ang.sin_cos();
        let rot = |x: f64, y: f64| P2::new(x * co - y * s, x * s + y * co);
        let p = Polygon2D::new(vec![
            rot(0.0, 0.0),
            rot(3.0, 0.0),
            rot(3.0, 1.5),
            rot(0.0, 1.5),
        ])
        .unwrap();
        let r = min_area_rect(&p);
        let dims = {
            let mut d = [r.half_u * 2.0, r.half_v * 2.0];
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            d
        };
        assert!((dims[0] - 1.5).abs() < 1e-9 && (dims[1] - 3.0).abs() < 1e-9);
        let _ = c;
    }

    #[test]
    fn intersection_area_of_offset_squares() {
        let a = square(2.0);
        let b = Polygon2D::new(vec![
            P2::new(1.0, 1.0),
            P2::new(3.0, 1.0),
            P2::new(3.0, 3.0),
            P2::new(1.0, 3.0),
        ])
        .unwrap();
        assert!((intersection_area(&a, &b) - 1.0).abs() < 1e-9);
        assert!((intersection_area(&a, &a) - 4.0).abs() < 1e-9);
        let far = Polygon2D::new(vec![
            P2::new(10.0, 0.0),
            P2::new(11.0, 0.0),
            P2::new(11.0, 1.0),
            P2::new(10.0, 1.0),
        ])
        .unwrap();
        assert_eq!(intersection_area(&a, &far), 0.0);
    }

    #[test]
    fn l_shape_centroid_and_containment() {
        let p = Polygon2D::new(vec![
            P2::new(0.0, 0.0),
            P2::new(4.0, 0.0),
            P2::new(4.0, 2.0),
            P2::new(2.0, 2.0),
            P2::new(2.0, 4.0),
            P2::new(0.0, 4.0),
        ])
        .unwrap();
        assert!(p.contains(P2::new(1.0, 1.0)));
        assert!(p.contains(P2::new(3.0, 1.0)));
        assert!(!p.contains(P2::new(3.0, 3.0)));
        assert!((p.area() - 12.0).abs() < 1e-12);
    }
}
