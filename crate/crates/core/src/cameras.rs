//! Camera generation and synthesis scheduling.
//!
//! Each room gets three camera groups: two bootstrap cameras facing each
//! other across the long axis from the shorter walls, a ring of eye-level
//! perimeter cameras looking at the centroid, and an elevated ring pitched
//! downward. Synthesis order is greedy: after the bootstrap pair, the next
//! camera is always the one rotationally closest (by absolute quaternion dot
//! product) to something already scheduled, which also names its style
//! reference.
//!
//! Convention, used everywhere: quaternions are scalar-first (w, x, y, z)
//! and map camera space to world space; the world is right-handed with +z
//! up; the camera looks along its local −z with +x right and +y up, so
//! image rows grow downward while camera y grows upward.

use crate::floorplan::Room;
use crate::geom::{inset_polygon, min_area_rect, point_triangle_distance, Category, GeomError, Polygon2D, TriMesh, P2, P3, V2, V3};
use nalgebra::{Matrix3, Rotation3, UnitQuaternion};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default image width in pixels.
pub const DEFAULT_WIDTH: u32 = 1376;
/// Default image height in pixels.
pub const DEFAULT_HEIGHT: u32 = 768;
/// Default horizontal field of view (radians).
pub const DEFAULT_HFOV: f64 = 60.0 * std::f64::consts::PI / 180.0;
/// Wider field of view used when photographing a room for object recovery.
pub const OBJECT_STAGE_HFOV: f64 = 90.0 * std::f64::consts::PI / 180.0;
/// Camera height above the floor for eye-level cameras (meters).
pub const EYE_HEIGHT: f64 = 1.60;
/// Distance kept between eye-level cameras and the wall face (meters).
pub const WALL_OFFSET: f64 = 0.30;
/// Overhead cameras sit at this fraction of the ceiling height.
pub const OVERHEAD_FRACTION: f64 = 0.85;
/// Overhead downward pitch (radians).
pub const OVERHEAD_PITCH: f64 = 25.0 * std::f64::consts::PI / 180.0;
pub const PERIMETER_COUNT: usize = 16;
pub const OVERHEAD_COUNT: usize = 8;
/// Perimeter rings thin out when arc spacing would drop below this (meters).
pub const MIN_CAMERA_SPACING: f64 = 0.5;

#[derive(Debug, Error)]
pub enum CameraError {
    #[error("bad intrinsics: {0}")]
    BadIntrinsics(String),
    #[error("quaternion has zero norm")]
    ZeroQuaternion,
    #[error("no collision-free camera position between objects and walls")]
    NoFreeSpace,
    #[error(transparent)]
    Geom(#[from] GeomError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CameraRole {
    Bootstrap,
    Perimeter,
    Overhead,
}

impl CameraRole {
    pub fn as_str(self) -> &'static str {
        match self {
            CameraRole::Bootstrap => "bootstrap",
            CameraRole::Perimeter => "perimeter",
            CameraRole::Overhead => "overhead",
        }
    }
}

/// Pinhole intrinsics in pixels, principal point at the image center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    /// Square-pixel intrinsics from a horizontal field of view.
    pub fn from_hfov(width: u32, height: u32, hfov: f64) -> Self {
        let fx = width as f64 / (2.0 * (hfov / 2.0).tan());
        Self {
            fx,
            fy: fx,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
        }
    }

    fn validate(&self) -> Result<(), CameraError> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx > 0.0
            && self.cx < self.width as f64
            && self.cy > 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(CameraError::BadIntrinsics(format!("{self:?}")))
        }
    }
}

impl Default for Intrinsics {
    fn default() -> Self {
        Self::from_hfov(DEFAULT_WIDTH, DEFAULT_HEIGHT, DEFAULT_HFOV)
    }
}

#[derive(Debug, Clone)]
pub struct Camera {
    pub room: String,
    pub role: CameraRole,
    pub position: P3,
    /// World-from-camera rotation.
    pub orientation: UnitQuaternion<f64>,
    pub intrinsics: Intrinsics,
}

impl Camera {
    pub fn new(
        room: &str,
        role: CameraRole,
        position: P3,
        orientation: UnitQuaternion<f64>,
        intrinsics: Intrinsics,
    ) -> Result<Self, CameraError> {
        intrinsics.validate()?;
        Ok(Self { room: room.into(), role, position, orientation, intrinsics })
    }

    /// Camera at `position` aimed at `target`, image upright.
    pub fn looking_at(
        room: &str,
        role: CameraRole,
        position: P3,
        target: P3,
        intrinsics: Intrinsics,
    ) -> Result<Self, CameraError> {
        Self::new(room, role, position, Self::aim(position, target), intrinsics)
    }

    /// Builds the world-from-camera rotation that looks from `position`
    /// toward `target`, keeping the image upright (+z world up).
    fn aim(position: P3, target: P3) -> UnitQuaternion<f64> {
        let forward = (target - position).normalize();
        Self::orientation_from_forward(forward)
    }

    fn orientation_from_forward(forward: V3) -> UnitQuaternion<f64> {
        let world_up = V3::z();
        let right = {
            let r = forward.cross(&world_up);
            if r.norm() < 1e-12 {
                // Looking straight along z: keep +x as right.
                V3::x()
            } else {
                r.normalize()
            }
        };
        let back = -forward;
        let up = back.cross(&right);
        let rot = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[right, up, back]));
        UnitQuaternion::from_rotation_matrix(&rot)
    }

    /// Unit view direction (world space).
    pub fn forward(&self) -> V3 {
        self.orientation * -V3::z()
    }

    pub fn right(&self) -> V3 {
        self.orientation * V3::x()
    }

    pub fn up(&self) -> V3 {
        self.orientation * V3::y()
    }

    /// World point into camera coordinates.
    pub fn to_camera(&self, p: P3) -> P3 {
        self.orientation.inverse() * (p - self.position.coords)
    }

    /// Camera coordinates back to world.
    pub fn to_world(&self, p: P3) -> P3 {
        self.orientation * p + self.position.coords
    }

    /// Projects a world point to pixel coordinates and view depth. Depth is
    /// the distance along the viewing axis; `None` when at or behind the
    /// camera plane.
    pub fn project(&self, p: P3) -> Option<([f64; 2], f64)> {
        let c = self.to_camera(p);
        let depth = -c.z;
        if depth <= 0.0 {
            return None;
        }
        let px = self.intrinsics.fx * c.x / depth + self.intrinsics.cx;
        let py = self.intrinsics.cy - self.intrinsics.fy * c.y / depth;
        Some(([px, py], depth))
    }

    /// Inverse of [`Camera::project`]: pixel coordinates and view depth to a
    /// world point.
    pub fn backproject(&self, px: f64, py: f64, depth: f64) -> P3 {
        let x = (px - self.intrinsics.cx) / self.intrinsics.fx * depth;
        let y = (self.intrinsics.cy - py) / self.intrinsics.fy * depth;
        self.to_world(P3::new(x, y, -depth))
    }
}

/// Two eye-level cameras at the midpoints of the rectangle surrogate's
/// shorter sides (pulled inside by wall thickness + wall offset), facing
/// each other through the rectangle center.
pub fn bootstrap_cameras(
    room: &Room,
    wall_thickness: f64,
    wall_offset: f64,
    eye_height: f64,
    intrinsics: Intrinsics,
) -> Result<[Camera; 2], CameraError> {
    let rect = min_area_rect(&room.polygon);
    // Midpoints of the shorter sides are the endpoints of the longer axis;
    // exact ties keep the u axis (earliest hull edge).
    let (axis, half) = if rect.half_u >= rect.half_v {
        (rect.axis_u, rect.half_u)
    } else {
        (rect.axis_v, rect.half_v)
    };
    let inset = wall_thickness + wall_offset;
    let reach = half - inset;
    if reach <= 0.0 {
        return Err(CameraError::Geom(GeomError::InsetCollapse { distance: inset }));
    }
    let center = P3::new(rect.center.x, rect.center.y, eye_height);
    let make = |sign: f64| -> Result<Camera, CameraError> {
        let position = P3::new(
            rect.center.x + sign * axis.x * reach,
            rect.center.y + sign * axis.y * reach,
            eye_height,
        );
        Camera::new(&room.id, CameraRole::Bootstrap, position, Camera::aim(position, center), intrinsics)
    };
    Ok([make(-1.0)?, make(1.0)?])
}

/// Walks the polygon boundary to the point `s` meters from vertex 0.
fn point_at_arc(poly: &Polygon2D, s: f64) -> P2 {
    let mut remaining = s.rem_euclid(poly.perimeter());
    for i in 0..poly.vertex_count() {
        let len = poly.edge_length(i);
        if remaining <= len {
            let (a, b) = poly.edge(i);
            return a + (b - a) * (remaining / len);
        }
        remaining -= len;
    }
    poly.vertices()[0]
}

fn ring_positions(
    room: &Room,
    wall_thickness: f64,
    wall_offset: f64,
    count: usize,
) -> Result<(Vec<P2>, P2), CameraError> {
    let ring = inset_polygon(&room.polygon, wall_thickness + wall_offset)?;
    let perimeter = ring.perimeter();
    let count = if perimeter < count as f64 * MIN_CAMERA_SPACING {
        ((perimeter / MIN_CAMERA_SPACING).floor() as usize).max(1)
    } else {
        count
    };
    let step = perimeter / count as f64;
    let positions = (0..count).map(|i| point_at_arc(&ring, i as f64 * step)).collect();
    Ok((positions, room.polygon.centroid()))
}

/// Horizontal unit direction from `p` toward `target`, with a fixed
/// fallback when they coincide.
fn toward(p: P2, target: P2) -> V2 {
    let d = target - p;
    if d.norm() < 1e-9 {
        V2::new(1.0, 0.0)
    } else {
        d.normalize()
    }
}

/// Eye-level ring: `count` cameras uniformly spaced by arc length along the
/// wall-offset inset of the room polygon, each facing the centroid
/// horizontally. Count shrinks automatically for small rooms.
pub fn perimeter_cameras(
    room: &Room,
    wall_thickness: f64,
    count: usize,
    wall_offset: f64,
    eye_height: f64,
    intrinsics: Intrinsics,
) -> Result<Vec<Camera>, CameraError> {
    let (positions, centroid) = ring_positions(room, wall_thickness, wall_offset, count)?;
    positions
        .into_iter()
        .map(|p| {
            let position = P3::new(p.x, p.y, eye_height);
            let dir = toward(p, centroid);
            let forward = V3::new(dir.x, dir.y, 0.0);
            Camera::new(
                &room.id,
                CameraRole::Perimeter,
                position,
                Camera::orientation_from_forward(forward),
                intrinsics,
            )
        })
        .collect()
}

/// Elevated ring with the perimeter layout, pitched down toward the
/// centroid: forward z-component is exactly −sin(pitch_down).
pub fn overhead_cameras(
    room: &Room,
    wall_thickness: f64,
    count: usize,
    wall_offset: f64,
    height_fraction: f64,
    pitch_down: f64,
    intrinsics: Intrinsics,
) -> Result<Vec<Camera>, CameraError> {
    let (positions, centroid) = ring_positions(room, wall_thickness, wall_offset, count)?;
    let z = height_fraction * room.ceiling_height;
    positions
        .into_iter()
        .map(|p| {
            let position = P3::new(p.x, p.y, z);
            let dir = toward(p, centroid);
            let (c, s) = (pitch_down.cos(), pitch_down.sin());
            let forward = V3::new(dir.x * c, dir.y * c, -s);
            Camera::new(
                &room.id,
                CameraRole::Overhead,
                position,
                Camera::orientation_from_forward(forward),
                intrinsics,
            )
        })
        .collect()
}

fn min_distance_to_category(scene: &TriMesh, p: P3, category: Category) -> Option<f64> {
    let mut best: Option<f64> = None;
    for f in 0..scene.face_count() {
        if scene.tags()[f].category != category {
            continue;
        }
        let [a, b, c] = scene.triangle_points(f);
        let d = point_triangle_distance(p, a, b, c);
        best = Some(best.map_or(d, |b: f64| b.min(d)));
    }
    best
}

fn nearest_object_point(scene: &TriMesh, p: P3) -> Option<(f64, P3)> {
    let mut best: Option<(f64, P3)> = None;
    for f in 0..scene.face_count() {
        if scene.tags()[f].category != Category::Object {
            continue;
        }
        let [a, b, c] = scene.triangle_points(f);
        let d = point_triangle_distance(p, a, b, c);
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            // Recover the closest point by a small local search over the
            // triangle's barycentric grid; exact enough for direction only.
            let q = closest_point_on_triangle(p, a, b, c);
            best = Some((d, q));
        }
    }
    best
}

/// Closest point on a triangle (Ericson's region method).
fn closest_point_on_triangle(p: P3, a: P3, b: P3, c: P3) -> P3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) <= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

const NUDGE_STEP: f64 = 0.01;
const NUDGE_MAX_STEPS: usize = 1000;

/// Distance along `dir` from `origin` to the first face of `category`.
fn category_hit_distance(scene: &TriMesh, origin: P3, dir: V3, category: Category) -> f64 {
    let faces: Vec<usize> = (0..scene.face_count())
        .filter(|&f| scene.tags()[f].category == category)
        .collect();
    if faces.is_empty() {
        return f64::INFINITY;
    }
    let sub = scene.submesh(&faces);
    crate::geom::raycast(&sub, origin, dir).map_or(f64::INFINITY, |hit| hit.t)
}

/// Moves a camera horizontally away from nearby object geometry until it has
/// `clearance`. When a wall bounds the escape path before that, the camera
/// settles at the midpoint of the object-to-wall gap; when another object
/// bounds it (the camera is ringed in), there is no valid spot and the call
/// fails. The moved camera is re-aimed at `aim` with its pitch preserved;
/// cameras already clear are returned unchanged.
pub fn nudge_away_from_objects(
    cam: &Camera,
    scene: &TriMesh,
    clearance: f64,
    aim: P2,
) -> Result<Camera, CameraError> {
    let Some((d0, nearest)) = nearest_object_point(scene, cam.position) else {
        return Ok(cam.clone());
    };
    if d0 >= clearance {
        return Ok(cam.clone());
    }
    let away = {
        let d = V2::new(cam.position.x - nearest.x, cam.position.y - nearest.y);
        if d.norm() < 1e-9 {
            -toward(P2::new(cam.position.x, cam.position.y), aim)
        } else {
            d.normalize()
        }
    };
    let away3 = V3::new(away.x, away.y, 0.0);
    let object_distance = |p: P3| min_distance_to_category(scene, p, Category::Object).unwrap_or(f64::INFINITY);
    let wall_distance = |p: P3| min_distance_to_category(scene, p, Category::Wall).unwrap_or(f64::INFINITY);
    // Hard bounds of the escape segment: the first object or wall surface
    // straight ahead.
    let object_ahead = category_hit_distance(scene, cam.position, away3, Category::Object);
    let wall_ahead = category_hit_distance(scene, cam.position, away3, Category::Wall);

    let re_aim = |position: P3| -> Camera {
        let pitch_z = cam.forward().z;
        let dir = toward(P2::new(position.x, position.y), aim);
        let horiz = (1.0 - pitch_z * pitch_z).max(0.0).sqrt();
        let forward = V3::new(dir.x * horiz, dir.y * horiz, pitch_z);
        Camera {
            position,
            orientation: Camera::orientation_from_forward(forward),
            ..cam.clone()
        }
    };

    for k in 1..=NUDGE_MAX_STEPS {
        let s = NUDGE_STEP * k as f64;
        if s >= object_ahead {
            // Another object bounds the escape path: boxed in.
            return Err(CameraError::NoFreeSpace);
        }
        let p = cam.position + away3 * s;
        if object_distance(p) >= clearance {
            return Ok(re_aim(p));
        }
        if wall_distance(p) < clearance {
            if object_ahead <= wall_ahead {
                return Err(CameraError::NoFreeSpace);
            }
            // Wall bounds the path first: settle halfway between the object
            // behind and the wall ahead.
            let front = if wall_ahead.is_finite() { wall_ahead } else { s };
            let mid = cam.position + away3 * ((front - d0) / 2.0);
            if object_distance(mid) < NUDGE_STEP {
                return Err(CameraError::NoFreeSpace);
            }
            return Ok(re_aim(mid));
        }
    }
    Err(CameraError::NoFreeSpace)
}

/// Eq.-style rotational similarity: the absolute dot product of the unit
/// quaternions, 1 for identical viewing rotations (double cover included),
/// 0 for maximally distant ones.
pub fn quat_similarity(q1: &nalgebra::Quaternion<f64>, q2: &nalgebra::Quaternion<f64>) -> Result<f64, CameraError> {
    let n1 = q1.norm();
    let n2 = q2.norm();
    if n1 < 1e-12 || n2 < 1e-12 {
        return Err(CameraError::ZeroQuaternion);
    }
    Ok((q1.dot(q2) / (n1 * n2)).abs().min(1.0))
}

/// Greedy synthesis order. `order[i]` is a camera index; `style[i]` (for
/// i ≥ 1) is the schedule position whose image serves as style reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisSchedule {
    pub order: Vec<usize>,
    pub style: Vec<Option<usize>>,
}

/// Schedules all cameras starting from the bootstrap pair: each subsequent
/// slot takes the unscheduled camera with the highest similarity to any
/// scheduled one (ties: lowest camera index), recording that scheduled
/// position as its style reference.
pub fn schedule_synthesis(cameras: &[Camera], bootstrap: [usize; 2]) -> Result<SynthesisSchedule, CameraError> {
    assert!(bootstrap[0] < cameras.len() && bootstrap[1] < cameras.len() && bootstrap[0] != bootstrap[1]);
    let quats: Vec<_> = cameras.iter().map(|c| *c.orientation.quaternion()).collect();
    let mut order = vec![bootstrap[0], bootstrap[1]];
    let mut style: Vec<Option<usize>> = vec![None, Some(0)];
    let mut scheduled = vec![false; cameras.len()];
    scheduled[bootstrap[0]] = true;
    scheduled[bootstrap[1]] = true;

    while order.len() < cameras.len() {
        let mut best: Option<(f64, usize, usize)> = None; // (sim, camera, style position)
        for cam in 0..cameras.len() {
            if scheduled[cam] {
                continue;
            }
            let mut cam_best: Option<(f64, usize)> = None;
            for (pos, &prior) in order.iter().enumerate() {
                let sim = quat_similarity(&quats[cam], &quats[prior])?;
                if cam_best.is_none_or(|(s, _)| sim > s) {
                    cam_best = Some((sim, pos));
                }
            }
            let (sim, pos) = cam_best.expect("order is non-empty");
            if best.is_none_or(|(s, _, _)| sim > s) {
                best = Some((sim, cam, pos));
            }
        }
        let (_, cam, pos) = best.expect("an unscheduled camera exists");
        scheduled[cam] = true;
        order.push(cam);
        style.push(Some(pos));
    }
    Ok(SynthesisSchedule { order, style })
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct CameraDoc {
    room: String,
    role: CameraRole,
    position: [f64; 3],
    quat_wxyz: [f64; 4],
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    #[serde(rename = "W")]
    width: u32,
    #[serde(rename = "H")]
    height: u32,
}

/// One camera per line as compact JSON.
pub fn cameras_to_jsonl(cameras: &[Camera]) -> String {
    let mut out = String::new();
    for cam in cameras {
        let q = cam.orientation.quaternion();
        let doc = CameraDoc {
            room: cam.room.clone(),
            role: cam.role,
            position: [cam.position.x, cam.position.y, cam.position.z],
            quat_wxyz: [q.w, q.i, q.j, q.k],
            fx: cam.intrinsics.fx,
            fy: cam.intrinsics.fy,
            cx: cam.intrinsics.cx,
            cy: cam.intrinsics.cy,
            width: cam.intrinsics.width,
            height: cam.intrinsics.height,
        };
        out.push_str(&serde_json::to_string(&doc).expect("camera serializes"));
        out.push('\n');
    }
    out
}

pub fn cameras_from_jsonl(text: &str) -> Result<Vec<Camera>, CameraError> {
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let doc: CameraDoc = serde_json::from_str(line)
            .map_err(|e| CameraError::BadIntrinsics(format!("bad camera line: {e}")))?;
        let q = nalgebra::Quaternion::new(doc.quat_wxyz[0], doc.quat_wxyz[1], doc.quat_wxyz[2], doc.quat_wxyz[3]);
        if q.norm() < 1e-12 {
            return Err(CameraError::ZeroQuaternion);
        }
        out.push(Camera::new(
            &doc.room,
            doc.role,
            P3::new(doc.position[0], doc.position[1], doc.position[2]),
            UnitQuaternion::from_quaternion(q),
            Intrinsics {
                fx: doc.fx,
                fy: doc.fy,
                cx: doc.cx,
                cy: doc.cy,
                width: doc.width,
                height: doc.height,
            },
        )?);
    }
    Ok(out)
}
