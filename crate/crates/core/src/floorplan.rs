//! Floor-plan documents: parsing, invariants, shared-wall resolution,
//! validation rules, and rejection sampling against a layout provider.
//!
//! A plan is a flat JSON document (`version`, `theme`, `wall_thickness`,
//! `rooms[]`), each room being a counter-clockwise simple polygon with
//! openings (doors, windows, passages) attached to its edges. Parsing
//! reports exact field paths for schema problems, enforces the numeric
//! invariants, and mirrors every door/passage onto the co-located edge of
//! the neighboring room so both sides of a shared wall agree on their
//! openings.

use crate::adapters::LayoutProvider;
use crate::geom::{intersection_area, GeomError, Polygon2D, P2};
use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

/// Document format identifier; the `version` field must match exactly.
pub const LAYOUT_VERSION: &str = "worldmesh-layout/1";

/// Two wall edges are co-located when their endpoints lie within this
/// distance of each other's supporting line (meters).
pub const SHARED_EDGE_LINE_TOL: f64 = 0.01;
/// Minimum collinear overlap for two edges to count as a shared wall.
pub const SHARED_EDGE_MIN_OVERLAP: f64 = 0.1;
/// Rooms whose floor polygons overlap by more than this area are invalid.
pub const ROOM_OVERLAP_MAX: f64 = 1e-4;
/// Slack allowed when checking opening spans against shared-wall overlap.
pub const OPENING_SPAN_TOL: f64 = 0.01;

const WALL_THICKNESS_MIN: f64 = 0.02;
const WALL_THICKNESS_MAX: f64 = 1.0;
const CEILING_MIN: f64 = 2.0;
const CEILING_MAX: f64 = 6.0;
const MIN_ROOM_AREA: f64 = 1.0;
const MIN_PORTAL_WIDTH: f64 = 0.5;
/// Tolerance for duplicate detection when mirroring openings across walls.
const MIRROR_DUP_TOL: f64 = 0.02;
const EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("invariant violated at {path}: {message}")]
    Invariant { path: String, message: String },
    #[error(transparent)]
    Provider(#[from] crate::adapters::AdapterError),
    #[error("no valid layout after {attempts} attempts")]
    ExhaustedAttempts { attempts: u32, rejections: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OpeningKind {
    Door,
    Window,
    Passage,
}

impl OpeningKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OpeningKind::Door => "door",
            OpeningKind::Window => "window",
            OpeningKind::Passage => "passage",
        }
    }

    /// Doors and passages connect rooms; windows never do.
    pub fn is_portal(self) -> bool {
        matches!(self, OpeningKind::Door | OpeningKind::Passage)
    }
}

/// A rectangular cut in a wall, positioned along one polygon edge.
///
/// `offset` is the distance from the edge start to the opening's near jamb,
/// measured along the edge; `sill` and `head` are heights above the floor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Opening {
    pub kind: OpeningKind,
    pub edge: usize,
    pub offset: f64,
    pub width: f64,
    pub sill: f64,
    pub head: f64,
}

#[derive(Debug, Clone)]
pub struct Room {
    pub id: String,
    pub kind: String,
    pub ceiling_height: f64,
    pub polygon: Polygon2D,
    pub openings: Vec<Opening>,
}

impl Room {
    /// World-space endpoints of an opening along its edge.
    pub fn opening_span(&self, o: &Opening) -> (P2, P2) {
        let (a, b) = self.polygon.edge(o.edge);
        let dir = (b - a).normalize();
        (a + dir * o.offset, a + dir * (o.offset + o.width))
    }
}

/// A validated floor plan. Construction enforces every invariant and mirrors
/// doors/passages across shared walls, so holders can rely on the data.
#[derive(Debug, Clone)]
pub struct FloorPlan {
    theme: String,
    wall_thickness: f64,
    rooms: Vec<Room>,
}

/// A collinear overlap between one edge of room `a` and one edge of room
/// `b`. Ranges are arc-length intervals along the respective edges (both
/// sorted ascending); `world` spans the overlap on room `a`'s edge line.
#[derive(Debug, Clone)]
pub struct SharedEdge {
    pub room_a: usize,
    pub edge_a: usize,
    pub room_b: usize,
    pub edge_b: usize,
    pub a_range: (f64, f64),
    pub b_range: (f64, f64),
    pub world: (P2, P2),
}

/// Finds every pair of co-located edges between distinct rooms: edges whose
/// endpoints lie within `line_tol` of each other's supporting line and whose
/// projections overlap by at least `min_overlap` meters.
pub fn shared_edges(rooms: &[Room], line_tol: f64, min_overlap: f64) -> Vec<SharedEdge> {
    let mut out = Vec::new();
    for ra in 0..rooms.len() {
        for rb in (ra + 1)..rooms.len() {
            for ea in 0..rooms[ra].polygon.vertex_count() {
                let (a0, a1) = rooms[ra].polygon.edge(ea);
                let len_a = (a1 - a0).norm();
                let dir_a = (a1 - a0) / len_a;
                let normal_a = crate::geom::V2::new(-dir_a.y, dir_a.x);
                for eb in 0..rooms[rb].polygon.vertex_count() {
                    let (b0, b1) = rooms[rb].polygon.edge(eb);
                    let len_b = (b1 - b0).norm();
                    let dir_b = (b1 - b0) / len_b;
                    let normal_b = crate::geom::V2::new(-dir_b.y, dir_b.x);
                    let off_line_a = ((b0 - a0).dot(&normal_a)).abs().max(((b1 - a0).dot(&normal_a)).abs());
                    let off_line_b = ((a0 - b0).dot(&normal_b)).abs().max(((a1 - b0).dot(&normal_b)).abs());
                    if off_line_a > line_tol || off_line_b > line_tol {
                        continue;
                    }
                    let tb0 = (b0 - a0).dot(&dir_a);
                    let tb1 = (b1 - a0).dot(&dir_a);
                    let lo = tb0.min(tb1).max(0.0);
                    let hi = tb0.max(tb1).min(len_a);
                    if hi - lo < min_overlap {
                        continue;
                    }
                    let w0 = a0 + dir_a * lo;
                    let w1 = a0 + dir_a * hi;
                    let sb0 = (w0 - b0).dot(&dir_b);
                    let sb1 = (w1 - b0).dot(&dir_b);
                    out.push(SharedEdge {
                        room_a: ra,
                        edge_a: ea,
                        room_b: rb,
                        edge_b: eb,
                        a_range: (lo, hi),
                        b_range: (sb0.min(sb1), sb0.max(sb1)),
                        world: (w0, w1),
                    });
                }
            }
        }
    }
    out
}

impl FloorPlan {
    /// Validates all plan invariants, mirrors doors/passages across shared
    /// walls, and returns the finished plan. Error paths use JSON-pointer
    /// style field names (`rooms[2].openings[0].width`).
    pub fn new(theme: String, wall_thickness: f64, mut rooms: Vec<Room>) -> Result<Self, PlanError> {
        let inv = |path: String, message: String| PlanError::Invariant { path, message };
        if theme.trim().is_empty() {
            return Err(inv("theme".into(), "theme must be a non-empty string".into()));
        }
        if !(wall_thickness > WALL_THICKNESS_MIN && wall_thickness < WALL_THICKNESS_MAX) {
            return Err(inv(
                "wall_thickness".into(),
                format!("wall thickness {wall_thickness} outside ({WALL_THICKNESS_MIN}, {WALL_THICKNESS_MAX})"),
            ));
        }
        if rooms.is_empty() {
            return Err(inv("rooms".into(), "plan needs at least one room".into()));
        }
        let mut seen_ids = std::collections::BTreeSet::new();
        for (i, room) in rooms.iter().enumerate() {
            let rp = format!("rooms[{i}]");
            if room.id.trim().is_empty() {
                return Err(inv(format!("{rp}.id"), "room id must be non-empty".into()));
            }
            if !seen_ids.insert(room.id.clone()) {
                return Err(inv(format!("{rp}.id"), format!("duplicate room id {:?}", room.id)));
            }
            if room.kind.trim().is_empty() {
                return Err(inv(format!("{rp}.kind"), "room kind must be non-empty".into()));
            }
            if !(room.ceiling_height > CEILING_MIN && room.ceiling_height < CEILING_MAX) {
                return Err(inv(
                    format!("{rp}.ceiling_height"),
                    format!("ceiling height {} outside ({CEILING_MIN}, {CEILING_MAX})", room.ceiling_height),
                ));
            }
            let area = room.polygon.area();
            if area < MIN_ROOM_AREA - EPS {
                return Err(inv(
                    format!("{rp}.floor_polygon"),
                    format!("room area {area:.4} m^2 is below the 1 m^2 minimum"),
                ));
            }
            for (j, o) in room.openings.iter().enumerate() {
                let op = format!("{rp}.openings[{j}]");
                let n = room.polygon.vertex_count();
                if o.edge >= n {
                    return Err(inv(format!("{op}.edge"), format!("edge index {} out of range for {n} edges", o.edge)));
                }
                let len = room.polygon.edge_length(o.edge);
                if !(o.width > 0.0) {
                    return Err(inv(format!("{op}.width"), format!("opening width {} must be positive", o.width)));
                }
                if o.kind.is_portal() && o.width < MIN_PORTAL_WIDTH - EPS {
                    return Err(inv(
                        format!("{op}.width"),
                        format!("{} width {} is below the {MIN_PORTAL_WIDTH} m minimum", o.kind.as_str(), o.width),
                    ));
                }
                if o.offset < 0.0 {
                    return Err(inv(format!("{op}.offset"), format!("offset {} must be non-negative", o.offset)));
                }
                if o.offset + o.width > len + EPS {
                    return Err(inv(
                        format!("{op}.offset"),
                        format!("opening span [{}, {}] extends past edge length {len}", o.offset, o.offset + o.width),
                    ));
                }
                if o.sill < 0.0 {
                    return Err(inv(format!("{op}.sill"), format!("sill {} must be non-negative", o.sill)));
                }
                if o.head <= o.sill {
                    return Err(inv(format!("{op}.head"), format!("head {} must exceed sill {}", o.head, o.sill)));
                }
                if o.head > room.ceiling_height + EPS {
                    return Err(inv(
                        format!("{op}.head"),
                        format!("head {} exceeds ceiling height {}", o.head, room.ceiling_height),
                    ));
                }
            }
        }

        // Mirror doors and passages onto the co-located edge of the neighbor
        // so a single-sided authored opening carves both walls identically.
        let shared = shared_edges(&rooms, SHARED_EDGE_LINE_TOL, SHARED_EDGE_MIN_OVERLAP);
        let mut additions: Vec<(usize, Opening)> = Vec::new();
        for se in &shared {
            mirror_portals(&rooms, se.room_a, se.edge_a, se.a_range, se.room_b, se.edge_b, &mut additions);
            mirror_portals(&rooms, se.room_b, se.edge_b, se.b_range, se.room_a, se.edge_a, &mut additions);
        }
        for (room_idx, opening) in additions {
            rooms[room_idx].openings.push(opening);
        }

        Ok(Self { theme, wall_thickness, rooms })
    }

    pub fn theme(&self) -> &str {
        &self.theme
    }

    pub fn wall_thickness(&self) -> f64 {
        self.wall_thickness
    }

    pub fn rooms(&self) -> &[Room] {
        &self.rooms
    }

    pub fn room(&self, id: &str) -> Option<(usize, &Room)> {
        self.rooms.iter().enumerate().find(|(_, r)| r.id == id)
    }
}

/// Copies doors/passages from `src`'s edge onto `dst`'s co-located edge,
/// skipping ones the destination already carries within tolerance.
fn mirror_portals(
    rooms: &[Room],
    src: usize,
    src_edge: usize,
    src_range: (f64, f64),
    dst: usize,
    dst_edge: usize,
    additions: &mut Vec<(usize, Opening)>,
) {
    let (a0, a1) = rooms[src].polygon.edge(src_edge);
    let dir_a = (a1 - a0).normalize();
    let (b0, b1) = rooms[dst].polygon.edge(dst_edge);
    let len_b = (b1 - b0).norm();
    let dir_b = (b1 - b0) / len_b;

    for o in &rooms[src].openings {
        if o.edge != src_edge || !o.kind.is_portal() {
            continue;
        }
        let t0 = o.offset;
        let t1 = o.offset + o.width;
        if t0 < src_range.0 - OPENING_SPAN_TOL || t1 > src_range.1 + OPENING_SPAN_TOL {
            continue; // outside the overlap; flagged by validation instead
        }
        let s0 = a0 + dir_a * t0;
        let s1 = a0 + dir_a * t1;
        let u0 = (s0 - b0).dot(&dir_b);
        let u1 = (s1 - b0).dot(&dir_b);
        let mut offset_b = u0.min(u1).max(0.0);
        if offset_b + o.width > len_b {
            offset_b = (len_b - o.width).max(0.0);
        }
        let exists = rooms[dst]
            .openings
            .iter()
            .chain(additions.iter().filter(|(r, _)| *r == dst).map(|(_, o)| o))
            .any(|e| {
                e.edge == dst_edge
                    && e.kind == o.kind
                    && (e.offset - offset_b).abs() <= MIRROR_DUP_TOL
                    && (e.width - o.width).abs() <= MIRROR_DUP_TOL
            });
        if exists {
            continue;
        }
        additions.push((
            dst,
            Opening {
                kind: o.kind,
                edge: dst_edge,
                offset: offset_b,
                width: o.width,
                sill: o.sill,
                head: o.head.min(rooms[dst].ceiling_height),
            },
        ));
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> PlanError {
    PlanError::Schema { path: path.into(), message: message.into() }
}

fn as_object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>, PlanError> {
    v.as_object().ok_or_else(|| schema(path, "expected an object"))
}

fn field<'a>(m: &'a Map<String, Value>, path: &str, key: &str) -> Result<&'a Value, PlanError> {
    m.get(key).ok_or_else(|| schema(join(path, key), "missing field"))
}

fn str_field<'a>(m: &'a Map<String, Value>, path: &str, key: &str) -> Result<&'a str, PlanError> {
    field(m, path, key)?
        .as_str()
        .ok_or_else(|| schema(join(path, key), "expected a string"))
}

fn num_field(m: &Map<String, Value>, path: &str, key: &str) -> Result<f64, PlanError> {
    let v = field(m, path, key)?
        .as_f64()
        .ok_or_else(|| schema(join(path, key), "expected a number"))?;
    if !v.is_finite() {
        return Err(schema(join(path, key), "number must be finite"));
    }
    Ok(v)
}

fn arr_field<'a>(m: &'a Map<String, Value>, path: &str, key: &str) -> Result<&'a Vec<Value>, PlanError> {
    field(m, path, key)?
        .as_array()
        .ok_or_else(|| schema(join(path, key), "expected an array"))
}

fn parse_opening(v: &Value, path: &str) -> Result<Opening, PlanError> {
    let m = as_object(v, path)?;
    let kind = match str_field(m, path, "kind")? {
        "door" => OpeningKind::Door,
        "window" => OpeningKind::Window,
        "passage" => OpeningKind::Passage,
        other => {
            return Err(schema(
                join(path, "kind"),
                format!("unknown opening kind {other:?}, expected door/window/passage"),
            ))
        }
    };
    let edge = field(m, path, "edge")?
        .as_u64()
        .ok_or_else(|| schema(join(path, "edge"), "expected a non-negative integer"))? as usize;
    let sill = if m.contains_key("sill") { num_field(m, path, "sill")? } else { 0.0 };
    Ok(Opening {
        kind,
        edge,
        offset: num_field(m, path, "offset")?,
        width: num_field(m, path, "width")?,
        sill,
        head: num_field(m, path, "head")?,
    })
}

fn parse_room(v: &Value, index: usize) -> Result<Room, PlanError> {
    let path = format!("rooms[{index}]");
    let m = as_object(v, &path)?;
    let id = str_field(m, &path, "id")?.to_string();
    let kind = str_field(m, &path, "kind")?.to_string();
    let ceiling_height = num_field(m, &path, "ceiling_height")?;
    let poly_path = join(&path, "floor_polygon");
    let raw = field(m, &path, "floor_polygon")?
        .as_array()
        .ok_or_else(|| schema(&*poly_path, "expected an array of [x, y] pairs"))?;
    let mut points = Vec::with_capacity(raw.len());
    for (k, pv) in raw.iter().enumerate() {
        let pair = pv
            .as_array()
            .filter(|a| a.len() == 2)
            .ok_or_else(|| schema(format!("{poly_path}[{k}]"), "expected an [x, y] pair"))?;
        let x = pair[0].as_f64().filter(|v| v.is_finite());
        let y = pair[1].as_f64().filter(|v| v.is_finite());
        match (x, y) {
            (Some(x), Some(y)) => points.push(P2::new(x, y)),
            _ => return Err(schema(format!("{poly_path}[{k}]"), "coordinates must be finite numbers")),
        }
    }
    let polygon = Polygon2D::new(points).map_err(|e: GeomError| PlanError::Invariant {
        path: poly_path.clone(),
        message: e.to_string(),
    })?;
    let mut openings = Vec::new();
    if let Some(ov) = m.get("openings") {
        let arr = ov
            .as_array()
            .ok_or_else(|| schema(join(&path, "openings"), "expected an array"))?;
        for (j, o) in arr.iter().enumerate() {
            openings.push(parse_opening(o, &format!("{path}.openings[{j}]"))?);
        }
    }
    Ok(Room { id, kind, ceiling_height, polygon, openings })
}

/// Parses and fully validates a layout document, including opening
/// propagation across shared walls. Returns field-precise errors.
pub fn parse_layout(text: &str) -> Result<FloorPlan, PlanError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| schema("$", format!("invalid JSON: {e}")))?;
    let root = as_object(&value, "$")?;
    let version = str_field(root, "", "version")?;
    if version != LAYOUT_VERSION {
        return Err(schema(
            "version",
            format!("unsupported version {version:?}, expected {LAYOUT_VERSION:?}"),
        ));
    }
    let theme = str_field(root, "", "theme")?.to_string();
    let wall_thickness = num_field(root, "", "wall_thickness")?;
    let rooms_raw = arr_field(root, "", "rooms")?;
    let mut rooms = Vec::with_capacity(rooms_raw.len());
    for (i, rv) in rooms_raw.iter().enumerate() {
        rooms.push(parse_room(rv, i)?);
    }
    FloorPlan::new(theme, wall_thickness, rooms)
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct RoomDoc<'a> {
    id: &'a str,
    kind: &'a str,
    ceiling_height: f64,
    floor_polygon: Vec<[f64; 2]>,
    openings: &'a [Opening],
}

#[derive(Serialize)]
struct LayoutDoc<'a> {
    version: &'a str,
    theme: &'a str,
    wall_thickness: f64,
    rooms: Vec<RoomDoc<'a>>,
}

/// Canonical pretty-printed JSON for a plan; `parse_layout` of the output
/// reproduces the plan exactly (propagation is a no-op on serialized plans
/// because every mirrored opening is already present).
pub fn serialize_layout(plan: &FloorPlan) -> String {
    let doc = LayoutDoc {
        version: LAYOUT_VERSION,
        theme: plan.theme(),
        wall_thickness: plan.wall_thickness(),
        rooms: plan
            .rooms()
            .iter()
            .map(|r| RoomDoc {
                id: &r.id,
                kind: &r.kind,
                ceiling_height: r.ceiling_height,
                floor_polygon: r.polygon.vertices().iter().map(|p| [p.x, p.y]).collect(),
                openings: &r.openings,
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("plan serialization cannot fail");
    s.push('\n');
    s
}

// ---------------------------------------------------------------------------
// Validation rules
// ---------------------------------------------------------------------------

/// Which validation rules to apply. All are on by default; individual rules
/// can be switched off for diagnostics and tests.
#[derive(Debug, Clone, Copy)]
pub struct Rules {
    /// R1: windows must not sit on the shared stretch of a wall.
    pub window_not_shared: bool,
    /// R2: floor polygons of distinct rooms must not overlap.
    pub rooms_disjoint: bool,
    /// R3: the door/passage adjacency graph must connect all rooms.
    pub connected: bool,
    /// R4: doors/passages on shared edges must lie within the overlap.
    pub portal_within_overlap: bool,
    /// R5: openings on a single edge must not overlap each other.
    pub openings_disjoint: bool,
}

impl Default for Rules {
    fn default() -> Self {
        Self {
            window_not_shared: true,
            rooms_disjoint: true,
            connected: true,
            portal_within_overlap: true,
            openings_disjoint: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub rule: &'static str,
    pub message: String,
    pub subjects: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

fn opening_subject(room: &Room, edge: usize, index: usize) -> String {
    format!("room:{}/edge:{edge}/opening:{index}", room.id)
}

/// Checks the five cross-room consistency rules and reports every violation
/// found (it does not stop at the first).
pub fn validate_layout(plan: &FloorPlan, rules: &Rules) -> ValidationReport {
    let rooms = plan.rooms();
    let shared = shared_edges(rooms, SHARED_EDGE_LINE_TOL, SHARED_EDGE_MIN_OVERLAP);
    let mut report = ValidationReport::default();

    // Overlap intervals per (room, edge), from every shared pair touching it.
    let mut coverage: std::collections::BTreeMap<(usize, usize), Vec<(f64, f64)>> =
        std::collections::BTreeMap::new();
    for se in &shared {
        coverage.entry((se.room_a, se.edge_a)).or_default().push(se.a_range);
        coverage.entry((se.room_b, se.edge_b)).or_default().push(se.b_range);
    }

    if rules.window_not_shared {
        for (&(ri, ei), ranges) in &coverage {
            let room = &rooms[ri];
            for (j, o) in room.openings.iter().enumerate() {
                if o.edge != ei || o.kind != OpeningKind::Window {
                    continue;
                }
                let (t0, t1) = (o.offset, o.offset + o.width);
                let hits_shared = ranges
                    .iter()
                    .any(|&(l0, l1)| t1 > l0 + OPENING_SPAN_TOL && t0 < l1 - OPENING_SPAN_TOL);
                if hits_shared {
                    report.violations.push(Violation {
                        rule: "R1",
                        message: format!(
                            "window on room {:?} edge {ei} overlaps a wall shared with another room",
                            room.id
                        ),
                        subjects: vec![opening_subject(room, ei, j)],
                    });
                }
            }
        }
    }

    if rules.rooms_disjoint {
        for a in 0..rooms.len() {
            for b in (a + 1)..rooms.len() {
                let area = intersection_area(&rooms[a].polygon, &rooms[b].polygon);
                if area > ROOM_OVERLAP_MAX {
                    report.violations.push(Violation {
                        rule: "R2",
                        message: format!(
                            "rooms {:?} and {:?} overlap by {area:.6} m^2",
                            rooms[a].id, rooms[b].id
                        ),
                        subjects: vec![format!("room:{}", rooms[a].id), format!("room:{}", rooms[b].id)],
                    });
                }
            }
        }
    }

    if rules.connected && rooms.len() > 1 {
        let mut adj = vec![Vec::new(); rooms.len()];
        for se in &shared {
            let has_portal = rooms[se.room_a].openings.iter().any(|o| {
                o.edge == se.edge_a
                    && o.kind.is_portal()
                    && o.offset >= se.a_range.0 - OPENING_SPAN_TOL
                    && o.offset + o.width <= se.a_range.1 + OPENING_SPAN_TOL
            });
            if has_portal {
                adj[se.room_a].push(se.room_b);
                adj[se.room_b].push(se.room_a);
            }
        }
        let mut seen = vec![false; rooms.len()];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        let unreachable: Vec<String> = rooms
            .iter()
            .zip(&seen)
            .filter(|(_, &s)| !s)
            .map(|(r, _)| format!("room:{}", r.id))
            .collect();
        if !unreachable.is_empty() {
            report.violations.push(Violation {
                rule: "R3",
                message: format!(
                    "rooms not reachable from {:?} through doors/passages: {}",
                    rooms[0].id,
                    unreachable.join(", ")
                ),
                subjects: unreachable,
            });
        }
    }

    if rules.portal_within_overlap {
        for (&(ri, ei), ranges) in &coverage {
            let room = &rooms[ri];
            for (j, o) in room.openings.iter().enumerate() {
                if o.edge != ei || !o.kind.is_portal() {
                    continue;
                }
                let (t0, t1) = (o.offset, o.offset + o.width);
                let contained = ranges
                    .iter()
                    .any(|&(l0, l1)| t0 >= l0 - OPENING_SPAN_TOL && t1 <= l1 + OPENING_SPAN_TOL);
                if !contained {
                    report.violations.push(Violation {
                        rule: "R4",
                        message: format!(
                            "{} on room {:?} edge {ei} at [{t0:.3}, {t1:.3}] falls outside the shared-wall overlap",
                            o.kind.as_str(),
                            room.id
                        ),
                        subjects: vec![opening_subject(room, ei, j)],
                    });
                }
            }
        }
    }

    if rules.openings_disjoint {
        for room in rooms {
            for edge in 0..room.polygon.vertex_count() {
                let mut spans: Vec<(f64, f64, usize)> = room
                    .openings
                    .iter()
                    .enumerate()
                    .filter(|(_, o)| o.edge == edge)
                    .map(|(j, o)| (o.offset, o.offset + o.width, j))
                    .collect();
                spans.sort_by(|a, b| a.0.total_cmp(&b.0));
                for w in spans.windows(2) {
                    let (prev, next) = (&w[0], &w[1]);
                    if next.0 < prev.1 - EPS {
                        report.violations.push(Violation {
                            rule: "R5",
                            message: format!(
                                "openings {} and {} on room {:?} edge {edge} overlap",
                                prev.2, next.2, room.id
                            ),
                            subjects: vec![
                                opening_subject(room, edge, prev.2),
                                opening_subject(room, edge, next.2),
                            ],
                        });
                    }
                }
            }
        }
    }

    report
}

// ---------------------------------------------------------------------------
// Rejection sampling
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct SampledPlan {
    pub plan: FloorPlan,
    /// 1-based index of the attempt that produced the valid plan.
    pub attempts: u32,
    /// One line per rejected parse error or rule violation, for the run log.
    pub rejections: Vec<String>,
}

/// Asks the provider for documents until one parses and passes validation,
/// up to `max_attempts`. Provider failures abort immediately; invalid
/// documents are recorded and sampling continues.
pub fn sample_until_valid(
    provider: &mut dyn LayoutProvider,
    prompt: &str,
    max_attempts: u32,
    rules: &Rules,
) -> Result<SampledPlan, PlanError> {
    let mut rejections = Vec::new();
    for attempt in 1..=max_attempts {
        let text = provider.propose_layout(prompt)?;
        match parse_layout(&text) {
            Err(e) => rejections.push(format!("attempt {attempt}: {e}")),
            Ok(plan) => {
                let report = validate_layout(&plan, rules);
                if report.is_valid() {
                    return Ok(SampledPlan { plan, attempts: attempt, rejections });
                }
                for v in &report.violations {
                    rejections.push(format!("attempt {attempt}: {} {}", v.rule, v.message));
                }
            }
        }
    }
    Err(PlanError::ExhaustedAttempts { attempts: max_attempts, rejections })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapters::ScriptedLayoutProvider;

    fn doc(rooms_json: &str) -> String {
        format!(
            r#"{{"version":"worldmesh-layout/1","theme":"loft","wall_thickness":0.2,"rooms":[{rooms_json}]}}"#
        )
    }

    fn square_room(id: &str, x0: f64, y0: f64, size: f64, openings: &str) -> String {
        format!(
            r#"{{"id":"{id}","kind":"bedroom","ceiling_height":2.7,
                "floor_polygon":[[{x0},{y0}],[{x1},{y0}],[{x1},{y1}],[{x0},{y1}]],
                "openings":[{openings}]}}"#,
            x1 = x0 + size,
            y1 = y0 + size,
        )
    }

    #[test]
    fn minimal_document_parses() {
        let text = doc(&square_room("a", 0.0, 0.0, 4.0, ""));
        let plan = parse_layout(&text).unwrap();
        assert_eq!(plan.theme(), "loft");
        assert_eq!(plan.wall_thickness(), 0.2);
        assert_eq!(plan.rooms().len(), 1);
        let room = &plan.rooms()[0];
        assert_eq!(room.id, "a");
        assert_eq!(room.polygon.vertex_count(), 4);
        assert!((room.polygon.area() - 16.0).abs() < 1e-12);
        assert!(room.openings.is_empty());
    }

    #[test]
    fn missing_field_reports_exact_path() {
        let text = r#"{"version":"worldmesh-layout/1","theme":"t","wall_thickness":0.2,
            "rooms":[{"id":"a","kind":"k","floor_polygon":[[0,0],[4,0],[4,4],[0,4]]}]}"#;
        match parse_layout(text) {
            Err(PlanError::Schema { path, .. }) => assert_eq!(path, "rooms[0].ceiling_height"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_version_is_rejected() {
        let text = doc(&square_room("a", 0.0, 0.0, 4.0, "")).replace("worldmesh-layout/1", "worldmesh-layout/9");
        match parse_layout(&text) {
            Err(PlanError::Schema { path, .. }) => assert_eq!(path, "version"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_thickness_and_ceiling_are_invariant_errors() {
        let text = doc(&square_room("a", 0.0, 0.0, 4.0, "")).replace("\"wall_thickness\":0.2", "\"wall_thickness\":1.2");
        match parse_layout(&text) {
            Err(PlanError::Invariant { path, .. }) => assert_eq!(path, "wall_thickness"),
            other => panic!("expected invariant error, got {other:?}"),
        }
        let text = doc(&square_room("a", 0.0, 0.0, 4.0, "")).replace("2.7", "1.9");
        match parse_layout(&text) {
            Err(PlanError::Invariant { path, .. }) => assert_eq!(path, "rooms[0].ceiling_height"),
            other => panic!("expected invariant error, got {other:?}"),
        }
    }

    #[test]
    fn tiny_room_is_rejected() {
        let text = doc(&square_room("a", 0.0, 0.0, 0.9, ""));
        match parse_layout(&text) {
            Err(PlanError::Invariant { path, message }) => {
                assert_eq!(path, "rooms[0].floor_polygon");
                assert!(message.contains("below the 1 m^2 minimum"), "{message}");
            }
            other => panic!("expected invariant error, got {other:?}"),
        }
    }

    #[test]
    fn clockwise_polygon_is_rejected() {
        let text = doc(
            r#"{"id":"a","kind":"k","ceiling_height":2.7,
                "floor_polygon":[[0,0],[0,4],[4,4],[4,0]]}"#,
        );
        match parse_layout(&text) {
            Err(PlanError::Invariant { path, message }) => {
                assert_eq!(path, "rooms[0].floor_polygon");
                assert!(message.contains("clockwise"), "{message}");
            }
            other => panic!("expected invariant error, got {other:?}"),
        }
    }

    #[test]
    fn opening_outside_edge_is_rejected() {
        let opening = r#"{"kind":"door","edge":1,"offset":3.5,"width":0.9,"sill":0.0,"head":2.1}"#;
        let text = doc(&square_room("a", 0.0, 0.0, 4.0, opening));
        match parse_layout(&text) {
            Err(PlanError::Invariant { path, .. }) => assert_eq!(path, "rooms[0].openings[0].offset"),
            other => panic!("expected invariant error, got {other:?}"),
        }
    }

    #[test]
    fn narrow_door_is_rejected() {
        let opening = r#"{"kind":"door","edge":1,"offset":1.0,"width":0.4,"sill":0.0,"head":2.1}"#;
        let text = doc(&square_room("a", 0.0, 0.0, 4.0, opening));
        match parse_layout(&text) {
            Err(PlanError::Invariant { path, .. }) => assert_eq!(path, "rooms[0].openings[0].width"),
            other => panic!("expected invariant error, got {other:?}"),
        }
    }

    fn two_room_doc(a_openings: &str, b_openings: &str) -> String {
        let a = square_room("a", 0.0, 0.0, 4.0, a_openings);
        let b = square_room("b", 4.0, 0.0, 4.0, b_openings);
        doc(&format!("{a},{b}"))
    }

    #[test]
    fn shared_edge_detection_full_wall() {
        let plan = parse_layout(&two_room_doc("", "")).unwrap();
        let shared = shared_edges(plan.rooms(), SHARED_EDGE_LINE_TOL, SHARED_EDGE_MIN_OVERLAP);
        assert_eq!(shared.len(), 1);
        let se = &shared[0];
        assert_eq!((se.room_a, se.edge_a, se.room_b, se.edge_b), (0, 1, 1, 3));
        assert!((se.a_range.1 - se.a_range.0 - 4.0).abs() < 1e-9);
        assert!((se.b_range.1 - se.b_range.0 - 4.0).abs() < 1e-9);
    }

    #[test]
    fn separated_rooms_share_nothing() {
        let a = square_room("a", 0.0, 0.0, 4.0, "");
        let b = square_room("b", 4.02, 0.0, 4.0, "");
        let plan = parse_layout(&doc(&format!("{a},{b}"))).unwrap();
        let shared = shared_edges(plan.rooms(), SHARED_EDGE_LINE_TOL, SHARED_EDGE_MIN_OVERLAP);
        assert!(shared.is_empty());
    }

    #[test]
    fn door_propagates_to_neighbor_edge() {
        let opening = r#"{"kind":"door","edge":1,"offset":1.5,"width":0.9,"sill":0.0,"head":2.1}"#;
        let plan = parse_layout(&two_room_doc(opening, "")).unwrap();
        let b = &plan.rooms()[1];
        assert_eq!(b.openings.len(), 1);
        let o = &b.openings[0];
        assert_eq!(o.kind, OpeningKind::Door);
        assert_eq!(o.edge, 3);
        // Room b's edge 3 runs from (4,4) to (4,0); the door spans y in
        // [1.5, 2.4], i.e. arc length 1.6 from that edge's start.
        assert!((o.offset - 1.6).abs() < 1e-9, "offset {}", o.offset);
        assert!((o.width - 0.9).abs() < 1e-12);
        // World spans of the two sides must coincide.
        let (a0, a1) = plan.rooms()[0].opening_span(&plan.rooms()[0].openings[0]);
        let (b0, b1) = b.opening_span(o);
        assert!((a0 - b1).norm() < 1e-9 && (a1 - b0).norm() < 1e-9);
    }

    #[test]
    fn round_trip_is_stable() {
        let opening = r#"{"kind":"door","edge":1,"offset":1.5,"width":0.9,"sill":0.0,"head":2.1}"#;
        let plan = parse_layout(&two_room_doc(opening, "")).unwrap();
        let text1 = serialize_layout(&plan);
        let plan2 = parse_layout(&text1).unwrap();
        // Propagation must not duplicate the mirrored door on re-parse.
        assert_eq!(plan2.rooms()[0].openings.len(), 1);
        assert_eq!(plan2.rooms()[1].openings.len(), 1);
        assert_eq!(serialize_layout(&plan2), text1);
    }

    #[test]
    fn window_on_shared_wall_violates_r1() {
        let window = r#"{"kind":"window","edge":1,"offset":1.0,"width":1.2,"sill":0.9,"head":2.0}"#;
        let plan = parse_layout(&two_room_doc(window, "")).unwrap();
        let report = validate_layout(&plan, &Rules::default());
        assert!(report.violations.iter().any(|v| v.rule == "R1"), "{report:?}");
    }

    #[test]
    fn overlapping_rooms_violate_r2() {
        let a = square_room("a", 0.0, 0.0, 4.0, "");
        let b = square_room("b", 3.0, 0.0, 4.0, "");
        let plan = parse_layout(&doc(&format!("{a},{b}"))).unwrap();
        let report = validate_layout(&plan, &Rules { connected: false, ..Rules::default() });
        let r2: Vec<_> = report.violations.iter().filter(|v| v.rule == "R2").collect();
        assert_eq!(r2.len(), 1);
        assert!(r2[0].message.contains("4.0"), "{}", r2[0].message);
    }

    #[test]
    fn unconnected_rooms_violate_r3() {
        let plan = parse_layout(&two_room_doc("", "")).unwrap();
        let report = validate_layout(&plan, &Rules::default());
        let r3: Vec<_> = report.violations.iter().filter(|v| v.rule == "R3").collect();
        assert_eq!(r3.len(), 1);
        assert_eq!(r3[0].subjects, vec!["room:b".to_string()]);
    }

    #[test]
    fn portal_outside_overlap_violates_r4() {
        // Rooms share x=4 only for y in [2, 4]; the door sits at y in [0.2, 1.1].
        let door = r#"{"kind":"door","edge":1,"offset":0.2,"width":0.9,"sill":0.0,"head":2.1}"#;
        let a = square_room("a", 0.0, 0.0, 4.0, door);
        let b = square_room("b", 4.0, 2.0, 4.0, "");
        let plan = parse_layout(&doc(&format!("{a},{b}"))).unwrap();
        // The door is outside the overlap, so it must not propagate...
        assert!(plan.rooms()[1].openings.is_empty());
        // ...and R4 must flag it.
        let rules = Rules { connected: false, ..Rules::default() };
        let report = validate_layout(&plan, &rules);
        let r4: Vec<_> = report.violations.iter().filter(|v| v.rule == "R4").collect();
        assert_eq!(r4.len(), 1);
        assert_eq!(r4[0].subjects, vec!["room:a/edge:1/opening:0".to_string()]);
    }

    #[test]
    fn overlapping_openings_violate_r5() {
        let openings = concat!(
            r#"{"kind":"door","edge":0,"offset":1.0,"width":0.9,"sill":0.0,"head":2.1},"#,
            r#"{"kind":"window","edge":0,"offset":1.5,"width":1.0,"sill":0.9,"head":2.0}"#
        );
        let text = doc(&square_room("a", 0.0, 0.0, 4.0, openings));
        let plan = parse_layout(&text).unwrap();
        let report = validate_layout(&plan, &Rules::default());
        let r5: Vec<_> = report.violations.iter().filter(|v| v.rule == "R5").collect();
        assert_eq!(r5.len(), 1);
    }

    #[test]
    fn rule_toggles_disable_checks() {
        let plan = parse_layout(&two_room_doc("", "")).unwrap();
        let rules = Rules { connected: false, ..Rules::default() };
        assert!(validate_layout(&plan, &rules).is_valid());
    }

    #[test]
    fn three_rooms_with_doors_validate() {
        let door_ab = r#"{"kind":"door","edge":1,"offset":1.5,"width":0.9,"sill":0.0,"head":2.1}"#;
        let door_bc = r#"{"kind":"passage","edge":1,"offset":1.0,"width":1.2,"sill":0.0,"head":2.1}"#;
        let window = r#"{"kind":"window","edge":3,"offset":1.0,"width":1.5,"sill":0.9,"head":2.0}"#;
        let a = square_room("a", 0.0, 0.0, 4.0, &format!("{door_ab},{window}"));
        let b = square_room("b", 4.0, 0.0, 4.0, door_bc);
        let c = square_room("c", 8.0, 0.0, 4.0, "");
        let plan = parse_layout(&doc(&format!("{a},{b},{c}"))).unwrap();
        let report = validate_layout(&plan, &Rules::default());
        assert!(report.is_valid(), "{report:?}");
        // Window sits on room a's left (exterior) wall: no R1.
        assert_eq!(plan.rooms()[1].openings.len(), 2, "mirrored door + authored passage");
        assert_eq!(plan.rooms()[2].openings.len(), 1, "mirrored passage");
    }

    #[test]
    fn sampling_retries_until_valid() {
        let invalid = two_room_doc("", ""); // disconnected -> R3
        let door = r#"{"kind":"door","edge":1,"offset":1.5,"width":0.9,"sill":0.0,"head":2.1}"#;
        let valid = two_room_doc(door, "");
        let mut provider = ScriptedLayoutProvider::new(vec![invalid, valid]);
        let sampled = sample_until_valid(&mut provider, "p", 5, &Rules::default()).unwrap();
        assert_eq!(sampled.attempts, 2);
        assert_eq!(sampled.rejections.len(), 1);
        assert!(sampled.rejections[0].contains("R3"));
    }

    #[test]
    fn sampling_exhaustion_reports_all_rejections() {
        let invalid = two_room_doc("", "");
        let mut provider =
            ScriptedLayoutProvider::new(vec![invalid.clone(), invalid.clone(), "not json".into()]);
        match sample_until_valid(&mut provider, "p", 3, &Rules::default()) {
            Err(PlanError::ExhaustedAttempts { attempts, rejections }) => {
                assert_eq!(attempts, 3);
                assert_eq!(rejections.len(), 3);
                assert!(rejections[2].contains("invalid JSON"));
            }
            other => panic!("expected exhaustion, got {other:?}"),
        }
    }
}
