//! Boolean subtraction of a convex solid from a tagged mesh.
//!
//! BSP-based clipping in the CSG.js lineage, restricted to closed convex
//! cutters. The base is processed per index-connected component; components
//! whose bounding box never meets the cutter pass through untouched, so a
//! disjoint subtraction leaves the triangle multiset bit-identical.
//!
//! Faces that originate from the cutter (the cut caps) inherit the tag of the
//! nearest original base triangle of the component they carved.

use super::mesh::{FaceTag, P3, TriMesh, V3};
use super::ray::point_triangle_distance;
use super::{tol, GeomError};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy)]
struct Plane {
    n: V3,
    w: f64,
}

impl Plane {
    fn from_points(a: P3, b: P3, c: P3) -> Option<Plane> {
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        if len <= tol::MIN_FACE_AREA {
            return None;
        }
        let n = n / len;
        Some(Plane { n, w: n.dot(&a.coords) })
    }

    fn flip(&mut self) {
        self.n = -self.n;
        self.w = -self.w;
    }

    fn dist(&self, p: &P3) -> f64 {
        self.n.dot(&p.coords) - self.w
    }
}

#[derive(Debug, Clone)]
struct CsgPoly {
    verts: Vec<P3>,
    plane: Plane,
    tag: FaceTag,
    from_base: bool,
}

impl CsgPoly {
    fn flip(&mut self) {
        self.verts.reverse();
        self.plane.flip();
    }
}

const COPLANAR: u8 = 0;
const FRONT: u8 = 1;
const BACK: u8 = 2;
const SPANNING: u8 = 3;

fn split_polygon(
    plane: &Plane,
    poly: &CsgPoly,
    coplanar_front: &mut Vec<CsgPoly>,
    coplanar_back: &mut Vec<CsgPoly>,
    front: &mut Vec<CsgPoly>,
    back: &mut Vec<CsgPoly>,
) {
    let mut poly_type = 0u8;
    let mut types = Vec::with_capacity(poly.verts.len());
    for v in &poly.verts {
        let d = plane.dist(v);
        let t = if d < -tol::PLANE_EPS {
            BACK
        } else if d > tol::PLANE_EPS {
            FRONT
        } else {
            COPLANAR
        };
        poly_type |= t;
        types.push(t);
    }
    match poly_type {
        COPLANAR => {
            if plane.n.dot(&poly.plane.n) > 0.0 {
                coplanar_front.push(poly.clone());
            } else {
                coplanar_back.push(poly.clone());
            }
        }
        FRONT => front.push(poly.clone()),
        BACK => back.push(poly.clone()),
        _ => {
            let n = poly.verts.len();
            let mut f: Vec<P3> = Vec::with_capacity(n + 1);
            let mut b: Vec<P3> = Vec::with_capacity(n + 1);
            for i in 0..n {
                let j = (i + 1) % n;
                let (ti, tj) = (types[i], types[j]);
                let (vi, vj) = (poly.verts[i], poly.verts[j]);
                if ti != BACK {
                    f.push(vi);
                }
                if ti != FRONT {
                    b.push(vi);
                }
                if (ti | tj) == SPANNING {
                    let t = (plane.w - plane.n.dot(&vi.coords)) / plane.n.dot(&(vj - vi));
                    let v = vi + (vj - vi) * t;
                    f.push(v);
                    b.push(v);
                }
            }
            if f.len() >= 3 {
                front.push(CsgPoly {
                    verts: f,
                    plane: poly.plane,
                    tag: poly.tag.clone(),
                    from_base: poly.from_base,
                });
            }
            if b.len() >= 3 {
                back.push(CsgPoly {
                    verts: b,
                    plane: poly.plane,
                    tag: poly.tag.clone(),
                    from_base: poly.from_base,
                });
            }
        }
    }
}

#[derive(Default)]
struct BspNode {
    plane: Option<Plane>,
    front: Option<Box<BspNode>>,
    back: Option<Box<BspNode>>,
    polys: Vec<CsgPoly>,
}

impl BspNode {
    fn from_polys(polys: Vec<CsgPoly>) -> Self {
        let mut node = BspNode::default();
        node.build(polys);
        node
    }

    fn build(&mut self, polys: Vec<CsgPoly>) {
        if polys.is_empty() {
            return;
        }
        if self.plane.is_none() {
            self.plane = Some(polys[0].plane);
        }
        let plane = self.plane.unwrap();
        let mut front = Vec::new();
        let mut back = Vec::new();
        for p in &polys {
            let mut cf = Vec::new();
            let mut cb = Vec::new();
            split_polygon(&plane, p, &mut cf, &mut cb, &mut front, &mut back);
            self.polys.extend(cf);
            self.polys.extend(cb);
        }
        if !front.is_empty() {
            self.front.get_or_insert_with(Default::default).build(front);
        }
        if !back.is_empty() {
            self.back.get_or_insert_with(Default::default).build(back);
        }
    }

    fn invert(&mut self) {
        for p in &mut self.polys {
            p.flip();
        }
        if let Some(p) = &mut self.plane {
            p.flip();
        }
        if let Some(f) = &mut self.front {
            f.invert();
        }
        if let Some(b) = &mut self.back {
            b.invert();
        }
        std::mem::swap(&mut self.front, &mut self.back);
    }

    /// Removes the parts of `polys` inside this BSP's solid.
    fn clip_polygons(&self, polys: Vec<CsgPoly>) -> Vec<CsgPoly> {
        let Some(plane) = self.plane else {
            return polys;
        };
        let mut front = Vec::new();
        let mut back = Vec::new();
        for p in &polys {
            // Coplanar polygons ride with the half-space their normal faces.
            let mut cf = Vec::new();
            let mut cb = Vec::new();
            split_polygon(&plane, p, &mut cf, &mut cb, &mut front, &mut back);
            front.extend(cf);
            back.extend(cb);
        }
        let mut out = match &self.front {
            Some(f) => f.clip_polygons(front),
            None => front,
        };
        if let Some(b) = &self.back {
            out.extend(b.clip_polygons(back));
        }
        out
    }

    fn clip_to(&mut self, bsp: &BspNode) {
        self.polys = bsp.clip_polygons(std::mem::take(&mut self.polys));
        if let Some(f) = &mut self.front {
            f.clip_to(bsp);
        }
        if let Some(b) = &mut self.back {
            b.clip_to(bsp);
        }
    }

    fn all_polygons(&self, out: &mut Vec<CsgPoly>) {
        out.extend(self.polys.iter().cloned());
        if let Some(f) = &self.front {
            f.all_polygons(out);
        }
        if let Some(b) = &self.back {
            b.all_polygons(out);
        }
    }
}

fn mesh_polys(mesh: &TriMesh, faces: &[usize], from_base: bool) -> Vec<CsgPoly> {
    faces
        .iter()
        .filter_map(|&f| {
            let [a, b, c] = mesh.triangle_points(f);
            Plane::from_points(a, b, c).map(|plane| CsgPoly {
                verts: vec![a, b, c],
                plane,
                tag: mesh.tag(f).clone(),
                from_base,
            })
        })
        .collect()
}

fn validate_cutter(cutter: &TriMesh) -> Result<(), GeomError> {
    if cutter.is_empty() {
        return Err(GeomError::InvalidCutter("empty mesh"));
    }
    let mut edges: HashMap<(u32, u32), usize> = HashMap::new();
    for t in cutter.triangles() {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            *edges.entry(key).or_insert(0) += 1;
        }
    }
    if edges.values().any(|&c| c != 2) {
        return Err(GeomError::InvalidCutter("surface is not closed"));
    }
    if cutter.signed_volume() <= 0.0 {
        return Err(GeomError::InvalidCutter("not outward-oriented"));
    }
    for f in 0..cutter.face_count() {
        let [a, b, c] = cutter.triangle_points(f);
        let Some(plane) = Plane::from_points(a, b, c) else {
            continue;
        };
        for v in cutter.vertices() {
            if plane.dist(v) > 1e-7 {
                return Err(GeomError::InvalidCutter("not convex"));
            }
        }
    }
    Ok(())
}

fn quantize(p: &P3) -> (i64, i64, i64) {
    let q = |x: f64| (x / tol::POINT_EPS).round() as i64;
    (q(p.x), q(p.y), q(p.z))
}

/// Non-manifold guard over the faces that can interact with the cutter:
/// an edge (by welded vertex position) shared by more than two of the
/// component's triangles makes the carve ill-defined.
fn check_manifold_near(
    mesh: &TriMesh,
    comp: &[usize],
    interacting: &[usize],
) -> Result<(), GeomError> {
    let mut counts: HashMap<((i64, i64, i64), (i64, i64, i64)), usize> = HashMap::new();
    for &f in comp {
        let pts = mesh.triangle_points(f);
        for k in 0..3 {
            let a = quantize(&pts[k]);
            let b = quantize(&pts[(k + 1) % 3]);
            let key = if a <= b { (a, b) } else { (b, a) };
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    for &f in interacting {
        let pts = mesh.triangle_points(f);
        for k in 0..3 {
            let a = quantize(&pts[k]);
            let b = quantize(&pts[(k + 1) % 3]);
            let key = if a <= b { (a, b) } else { (b, a) };
            let c = counts[&key];
            if c > 2 {
                return Err(GeomError::NonManifoldInput { count: c });
            }
        }
    }
    Ok(())
}

struct MeshBuilder {
    vertices: Vec<P3>,
    triangles: Vec<[u32; 3]>,
    tags: Vec<FaceTag>,
    lookup: HashMap<(i64, i64, i64), u32>,
}

impl MeshBuilder {
    fn new() -> Self {
        Self { vertices: Vec::new(), triangles: Vec::new(), tags: Vec::new(), lookup: HashMap::new() }
    }

    fn vertex(&mut self, p: P3) -> u32 {
        let key = quantize(&p);
        if let Some(&i) = self.lookup.get(&key) {
            return i;
        }
        let i = self.vertices.len() as u32;
        self.vertices.push(p);
        self.lookup.insert(key, i);
        i
    }

    fn triangle(&mut self, a: P3, b: P3, c: P3, tag: FaceTag) {
        if 0.5 * (b - a).cross(&(c - a)).norm() <= tol::MIN_FACE_AREA {
            return;
        }
        let t = [self.vertex(a), self.vertex(b), self.vertex(c)];
        if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
            return;
        }
        self.triangles.push(t);
        self.tags.push(tag);
    }

    /// Appends faces verbatim with fresh indices (no welding against other
    /// components), preserving vertex values bit for bit.
    fn passthrough(&mut self, mesh: &TriMesh, faces: &[usize]) {
        let sub = mesh.submesh(faces);
        let offset = self.vertices.len() as u32;
        self.vertices.extend_from_slice(sub.vertices());
        for (t, tag) in sub.triangles().iter().zip(sub.tags()) {
            self.triangles.push([t[0] + offset, t[1] + offset, t[2] + offset]);
            self.tags.push(tag.clone());
        }
    }

    fn finish(self) -> Result<TriMesh, GeomError> {
        TriMesh::new(self.vertices, self.triangles, self.tags)
    }
}

/// Subtracts a closed convex cutter from the base mesh.
///
/// Tags of surviving base faces are preserved; cut faces inherit the tag of
/// the nearest original face of the carved component. Components the cutter
/// cannot touch are passed through unchanged.
pub fn mesh_subtract(base: &TriMesh, cutter: &TriMesh) -> Result<TriMesh, GeomError> {
    validate_cutter(cutter)?;
    let (cmin, cmax) = cutter.aabb().expect("cutter is non-empty");

    let mut out = MeshBuilder::new();
    for comp in base.components() {
        let sub = base.submesh(&comp);
        let Some((bmin, bmax)) = sub.aabb() else {
            continue;
        };
        let disjoint = (0..3).any(|k| bmax[k] < cmin[k] - tol::POINT_EPS || bmin[k] > cmax[k] + tol::POINT_EPS);
        if disjoint {
            out.passthrough(base, &comp);
            continue;
        }

        let interacting = sub.faces_touching_aabb(cmin, cmax, 1e-6);
        let all: Vec<usize> = (0..sub.face_count()).collect();
        check_manifold_near(&sub, &all, &interacting)?;

        let mut a = BspNode::from_polys(mesh_polys(&sub, &all, true));
        let mut b = BspNode::from_polys(mesh_polys(cutter, &all_faces(cutter), false));
        a.invert();
        a.clip_to(&b);
        b.clip_to(&a);
        b.invert();
        b.clip_to(&a);
        b.invert();
        let mut from_b = Vec::new();
        b.all_polygons(&mut from_b);
        a.build(from_b);
        a.invert();
        let mut polys = Vec::new();
        a.all_polygons(&mut polys);

        for poly in polys {
            let tag = if poly.from_base {
                poly.tag.clone()
            } else {
                nearest_face_tag(&sub, &poly)
            };
            for i in 1..poly.verts.len() - 1 {
                out.triangle(poly.verts[0], poly.verts[i], poly.verts[i + 1], tag.clone());
            }
        }
    }
    out.finish()
}

fn all_faces(mesh: &TriMesh) -> Vec<usize> {
    (0..mesh.face_count()).collect()
}

fn nearest_face_tag(original: &TriMesh, poly: &CsgPoly) -> FaceTag {
    let centroid = {
        let mut acc = V3::zeros();
        for v in &poly.verts {
            acc += v.coords;
        }
        P3::from(acc / poly.verts.len() as f64)
    };
    let mut best = (f64::INFINITY, 0usize);
    for f in 0..original.face_count() {
        let [a, b, c] = original.triangle_points(f);
        let d = point_triangle_distance(centroid, a, b, c);
        if d < best.0 {
            best = (d, f);
        }
    }
    original.tag(best.1).clone()
}
