//! Tagged triangle meshes.
//!
//! Every triangle carries a tag naming the room it belongs to, a structural
//! category, and optionally the object it came from. Tags survive boolean
//! operations and drive mesh-to-primitive grouping at export.

use super::polygon::{P2, Polygon2D};
use super::{tol, GeomError};
use nalgebra::{Point3, Vector3};
use std::collections::HashMap;
use std::sync::Arc;

pub type P3 = Point3<f64>;
pub type V3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Wall,
    Floor,
    Ceiling,
    Object,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Wall => "wall",
            Category::Floor => "floor",
            Category::Ceiling => "ceiling",
            Category::Object => "object",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "wall" => Some(Category::Wall),
            "floor" => Some(Category::Floor),
            "ceiling" => Some(Category::Ceiling),
            "object" => Some(Category::Object),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FaceTag {
    pub room: Arc<str>,
    pub category: Category,
    pub object: Option<Arc<str>>,
}

impl FaceTag {
    pub fn structural(room: &str, category: Category) -> Self {
        debug_assert!(category != Category::Object);
        Self { room: room.into(), category, object: None }
    }

    pub fn object(room: &str, object_id: &str) -> Self {
        Self { room: room.into(), category: Category::Object, object: Some(object_id.into()) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<P3>,
    triangles: Vec<[u32; 3]>,
    tags: Vec<FaceTag>,
    uvs: Option<Vec<[f32; 2]>>,
}

impl TriMesh {
    pub fn new(
        vertices: Vec<P3>,
        triangles: Vec<[u32; 3]>,
        tags: Vec<FaceTag>,
    ) -> Result<Self, GeomError> {
        Self::with_uvs(vertices, triangles, tags, None)
    }

    pub fn with_uvs(
        vertices: Vec<P3>,
        triangles: Vec<[u32; 3]>,
        tags: Vec<FaceTag>,
        uvs: Option<Vec<[f32; 2]>>,
    ) -> Result<Self, GeomError> {
        if tags.len() != triangles.len() {
            return Err(GeomError::TagCountMismatch { tags: tags.len(), triangles: triangles.len() });
        }
        if let Some(uv) = &uvs {
            if uv.len() != vertices.len() {
                return Err(GeomError::UvCountMismatch { uvs: uv.len(), vertices: vertices.len() });
            }
        }
        for (f, t) in triangles.iter().enumerate() {
            for &i in t {
                if i as usize >= vertices.len() {
                    return Err(GeomError::IndexOutOfBounds { face: f, index: i, count: vertices.len() });
                }
            }
            let a = vertices[t[0] as usize];
            let b = vertices[t[1] as usize];
            let c = vertices[t[2] as usize];
            if 0.5 * (b - a).cross(&(c - a)).norm() <= tol::MIN_FACE_AREA {
                return Err(GeomError::DegenerateTriangle(f));
            }
        }
        Ok(Self { vertices, triangles, tags, uvs })
    }

    pub fn empty() -> Self {
        Self { vertices: Vec::new(), triangles: Vec::new(), tags: Vec::new(), uvs: None }
    }

    pub fn vertices(&self) -> &[P3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn tags(&self) -> &[FaceTag] {
        &self.tags
    }

    pub fn tag(&self, face: usize) -> &FaceTag {
        &self.tags[face]
    }

    pub fn uvs(&self) -> Option<&[[f32; 2]]> {
        self.uvs.as_deref()
    }

    pub fn face_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle_points(&self, face: usize) -> [P3; 3] {
        let t = self.triangles[face];
        [self.vertices[t[0] as usize], self.vertices[t[1] as usize], self.vertices[t[2] as usize]]
    }

    pub fn face_normal(&self, face: usize) -> V3 {
        let [a, b, c] = self.triangle_points(face);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.triangle_points(face);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Signed volume via the divergence theorem; positive for outward-oriented
    /// closed surfaces. Open or inward-oriented parts subtract.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let a = self.vertices[t[0] as usize].coords;
                let b = self.vertices[t[1] as usize].coords;
                let c = self.vertices[t[2] as usize].coords;
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub fn aabb(&self) -> Option<(P3, P3)> {
        if self.vertices.is_empty() {
            return None;
        }
        let mut min = self.vertices[0];
        let mut max = self.vertices[0];
        for v in &self.vertices {
            for k in 0..3 {
                min[k] = min[k].min(v[k]);
                max[k] = max[k].max(v[k]);
            }
        }
        Some((min, max))
    }

    /// Area-weighted surface centroid.
    pub fn surface_centroid(&self) -> Option<P3> {
        if self.triangles.is_empty() {
            return None;
        }
        let mut acc = V3::zeros();
        let mut total = 0.0;
        for f in 0..self.face_count() {
            let [a, b, c] = self.triangle_points(f);
            let area = self.face_area(f);
            acc += (a.coords + b.coords + c.coords) / 3.0 * area;
            total += area;
        }
        Some(P3::from(acc / total))
    }

    /// Appends another mesh, remapping its indices. UV channels merge; a mesh
    /// without UVs contributes zeros when the other side has them.
    pub fn append(&mut self, other: &TriMesh) {
        let offset = self.vertices.len() as u32;
        if self.uvs.is_some() || other.uvs.is_some() {
            let mut uv = self.uvs.take().unwrap_or_else(|| vec![[0.0, 0.0]; self.vertices.len()]);
            match &other.uvs {
                Some(o) => uv.extend_from_slice(o),
                None => uv.extend(std::iter::repeat([0.0f32, 0.0]).take(other.vertices.len())),
            }
            self.uvs = Some(uv);
        }
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles
            .extend(other.triangles.iter().map(|t| [t[0] + offset, t[1] + offset, t[2] + offset]));
        self.tags.extend_from_slice(&other.tags);
    }

    pub fn transform(&mut self, rotation: &nalgebra::Rotation3<f64>, translation: V3) {
        for v in &mut self.vertices {
            *v = rotation * *v + translation;
        }
    }

    pub fn translated(&self, translation: V3) -> TriMesh {
        let mut m = self.clone();
        for v in &mut m.vertices {
            *v += translation;
        }
        m
    }

    /// Triangle groups connected through shared vertex indices.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut parent: Vec<usize> = (0..self.vertices.len()).collect();
        fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for t in &self.triangles {
            let a = find(&mut parent, t[0] as usize);
            let b = find(&mut parent, t[1] as usize);
            let c = find(&mut parent, t[2] as usize);
            parent[b] = a;
            parent[c] = a;
        }
        let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
        let mut order: Vec<usize> = Vec::new();
        for (f, t) in self.triangles.iter().enumerate() {
            let root = find(&mut parent, t[0] as usize);
            let entry = groups.entry(root).or_insert_with(|| {
                order.push(root);
                Vec::new()
            });
            entry.push(f);
        }
        order.into_iter().map(|r| groups.remove(&r).unwrap()).collect()
    }

    /// New mesh from a subset of faces, with vertices reindexed but values
    /// preserved bit for bit.
    pub fn submesh(&self, faces: &[usize]) -> TriMesh {
        let mut remap: HashMap<u32, u32> = HashMap::new();
        let mut vertices = Vec::new();
        let mut uvs = self.uvs.as_ref().map(|_| Vec::new());
        let mut triangles = Vec::with_capacity(faces.len());
        let mut tags = Vec::with_capacity(faces.len());
        for &f in faces {
            let t = self.triangles[f];
            let mut nt = [0u32; 3];
            for k in 0..3 {
                nt[k] = *remap.entry(t[k]).or_insert_with(|| {
                    vertices.push(self.vertices[t[k] as usize]);
                    if let (Some(dst), Some(src)) = (uvs.as_mut(), self.uvs.as_ref()) {
                        dst.push(src[t[k] as usize]);
                    }
                    (vertices.len() - 1) as u32
                });
            }
            triangles.push(nt);
            tags.push(self.tags[f].clone());
        }
        TriMesh { vertices, triangles, tags, uvs }
    }

    /// Axis-aligned box with outward normals.
    pub fn box_from_aabb(min: P3, max: P3, tag: FaceTag) -> TriMesh {
        let v = vec![
            P3::new(min.x, min.y, min.z),
            P3::new(max.x, min.y, min.z),
            P3::new(max.x, max.y, min.z),
            P3::new(min.x, max.y, min.z),
            P3::new(min.x, min.y, max.z),
            P3::new(max.x, min.y, max.z),
            P3::new(max.x, max.y, max.z),
            P3::new(min.x, max.y, max.z),
        ];
        let quads: [[u32; 4]; 6] = [
            [0, 3, 2, 1], // bottom, -z
            [4, 5, 6, 7], // top, +z
            [0, 1, 5, 4], // -y
            [2, 3, 7, 6], // +y
            [1, 2, 6, 5], // +x
            [3, 0, 4, 7], // -x
        ];
        let mut triangles = Vec::with_capacity(12);
        for q in quads {
            triangles.push([q[0], q[1], q[2]]);
            triangles.push([q[0], q[2], q[3]]);
        }
        let tags = vec![tag; 12];
        TriMesh { vertices: v, triangles, tags, uvs: None }
    }

    /// Extrudes a CCW polygon along +z from z0 to z1 (z1 > z0) into a closed
    /// prism with outward normals.
    pub fn extrude_polygon(
        poly: &Polygon2D,
        z0: f64,
        z1: f64,
        tag: FaceTag,
    ) -> Result<TriMesh, GeomError> {
        debug_assert!(z1 > z0);
        let n = poly.vertex_count();
        let cap = poly.triangulate()?;
        let mut vertices = Vec::with_capacity(2 * n);
        for v in poly.vertices() {
            vertices.push(P3::new(v.x, v.y, z0));
        }
        for v in poly.vertices() {
            vertices.push(P3::new(v.x, v.y, z1));
        }
        let mut triangles = Vec::with_capacity(4 * n);
        for t in &cap {
            // Bottom faces point down: reverse the CCW cap winding.
            triangles.push([t[0] as u32, t[2] as u32, t[1] as u32]);
        }
        for t in &cap {
            triangles.push([(t[0] + n) as u32, (t[1] + n) as u32, (t[2] + n) as u32]);
        }
        for i in 0..n {
            let j = (i + 1) % n;
            let (a, b) = (i as u32, j as u32);
            let (a2, b2) = (a + n as u32, b + n as u32);
            triangles.push([a, b, b2]);
            triangles.push([a, b2, a2]);
        }
        let tags = vec![tag; triangles.len()];
        Ok(TriMesh { vertices, triangles, tags, uvs: None })
    }

    /// Prism over a convex CCW plan quad, used for wall segments.
    pub fn prism_from_plan(
        plan: &[P2],
        z0: f64,
        z1: f64,
        tag: FaceTag,
    ) -> Result<TriMesh, GeomError> {
        let poly = Polygon2D::new(plan.to_vec())?;
        Self::extrude_polygon(&poly, z0, z1, tag)
    }

    pub fn set_uvs(&mut self, uvs: Vec<[f32; 2]>) -> Result<(), GeomError> {
        if uvs.len() != self.vertices.len() {
            return Err(GeomError::UvCountMismatch { uvs: uvs.len(), vertices: self.vertices.len() });
        }
        self.uvs = Some(uvs);
        Ok(())
    }

    /// Faces whose AABB intersects the given box (inflated by eps).
    pub fn faces_touching_aabb(&self, min: P3, max: P3, eps: f64) -> Vec<usize> {
        let mut out = Vec::new();
        'face: for f in 0..self.face_count() {
            let pts = self.triangle_points(f);
            for k in 0..3 {
                let lo = pts.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min);
                let hi = pts.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max);
                if hi < min[k] - eps || lo > max[k] + eps {
                    continue 'face;
                }
            }
            out.push(f);
        }
        out
    }
}
