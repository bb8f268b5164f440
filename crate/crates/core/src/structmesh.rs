//! Structural mesh construction: walls, floor and ceiling slabs, and
//! opening carves, assembled per room into one tagged triangle mesh.
//!
//! Room polygons trace the inner face line of the construction: walls are
//! built inward from each edge, full thickness on exterior walls and half
//! thickness on the shared stretch of party walls, so the two half-walls of
//! adjacent rooms meet exactly at the common edge. Every wall segment is an
//! independently watertight convex prism; where thickness changes along a
//! straight edge the segments step with a small exposed jog face, and at
//! corners they share an exact miter point. Doors, windows, and passages are
//! carved with convex box cutters slightly deeper than the wall so no cut
//! face is coplanar with a wall face.

use crate::floorplan::{shared_edges, FloorPlan, Opening, Room, SharedEdge, SHARED_EDGE_LINE_TOL, SHARED_EDGE_MIN_OVERLAP};
use crate::geom::{mesh_subtract, Category, FaceTag, GeomError, P2, TriMesh, V2};
use thiserror::Error;

/// Thickness of floor and ceiling slabs (meters).
pub const SLAB_THICKNESS: f64 = 0.05;
/// How far opening cutters extend past each wall face (meters), keeping
/// boolean cuts away from exactly coplanar geometry.
pub const CUT_MARGIN: f64 = 1e-3;

const EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum StructError {
    #[error("room {room:?}: wall construction failed: {source}")]
    WallCollapse { room: String, source: GeomError },
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("opening {opening} on room {room:?} does not intersect any wall")]
    OpeningOutsideWall { room: String, opening: usize },
}

/// Shared walls between rooms, using the plan-wide co-location tolerances.
pub fn detect_shared_edges(plan: &FloorPlan) -> Vec<SharedEdge> {
    shared_edges(plan.rooms(), SHARED_EDGE_LINE_TOL, SHARED_EDGE_MIN_OVERLAP)
}

/// One straight wall run: a maximal stretch of a room edge with constant
/// thickness. `outer` lies on the room polygon, `inner` on the offset line
/// facing the room interior; `range` is the arc-length interval along the
/// polygon edge.
#[derive(Debug, Clone)]
pub struct WallSegment {
    pub room: usize,
    pub edge: usize,
    pub sub: usize,
    pub range: (f64, f64),
    pub thickness: f64,
    pub shared: bool,
    pub outer: (P2, P2),
    pub inner: (P2, P2),
}

/// Merges possibly-overlapping intervals, joining ones that touch.
fn merge_intervals(mut iv: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    iv.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (s, e) in iv {
        match out.last_mut() {
            Some(last) if s <= last.1 + EPS => last.1 = last.1.max(e),
            _ => out.push((s, e)),
        }
    }
    out
}

/// Splits every edge of the room into exterior/shared sub-edges and offsets
/// the whole ring inward to get each segment's inner face line.
pub fn room_wall_segments(plan: &FloorPlan, room_idx: usize) -> Result<Vec<WallSegment>, StructError> {
    let room = &plan.rooms()[room_idx];
    let t_full = plan.wall_thickness();
    let t_half = t_full / 2.0;

    let mut shared_by_edge: Vec<Vec<(f64, f64)>> = vec![Vec::new(); room.polygon.vertex_count()];
    for se in detect_shared_edges(plan) {
        if se.room_a == room_idx {
            shared_by_edge[se.edge_a].push(se.a_range);
        } else if se.room_b == room_idx {
            shared_by_edge[se.edge_b].push(se.b_range);
        }
    }

    let mut chain: Vec<(P2, P2)> = Vec::new();
    let mut dist: Vec<f64> = Vec::new();
    let mut meta: Vec<(usize, usize, (f64, f64), bool)> = Vec::new();
    for edge in 0..room.polygon.vertex_count() {
        let (a, b) = room.polygon.edge(edge);
        let len = room.polygon.edge_length(edge);
        let dir = (b - a) / len;
        let mut cuts = vec![0.0];
        let merged = merge_intervals(
            shared_by_edge[edge]
                .iter()
                .map(|&(s, e)| (s.max(0.0), e.min(len)))
                .filter(|&(s, e)| e - s > EPS)
                .collect(),
        );
        for &(s, e) in &merged {
            cuts.push(s);
            cuts.push(e);
        }
        cuts.push(len);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() <= EPS);
        let mut sub = 0;
        for w in cuts.windows(2) {
            let (s, e) = (w[0], w[1]);
            if e - s <= EPS {
                continue;
            }
            let mid = 0.5 * (s + e);
            let shared = merged.iter().any(|&(ms, me)| mid > ms && mid < me);
            // Keep the exact polygon vertices at edge ends so consecutive
            // chain segments connect without rounding gaps.
            let p0 = if s <= EPS { a } else { a + dir * s };
            let p1 = if e >= len - EPS { b } else { a + dir * e };
            chain.push((p0, p1));
            dist.push(if shared { t_half } else { t_full });
            meta.push((edge, sub, (s, e), shared));
            sub += 1;
        }
    }

    let inner = crate::geom::offset_ring(&chain, &dist).map_err(|source| StructError::WallCollapse {
        room: room.id.clone(),
        source,
    })?;

    Ok(meta
        .into_iter()
        .zip(chain)
        .zip(dist)
        .zip(inner)
        .map(|((((edge, sub, range, shared), outer), thickness), inner)| WallSegment {
            room: room_idx,
            edge,
            sub,
            range,
            thickness,
            shared,
            outer,
            inner,
        })
        .collect())
}

/// Builds the room's wall ring as one prism per [`WallSegment`], each a
/// watertight component of the returned mesh.
pub fn build_room_walls(plan: &FloorPlan, room_idx: usize) -> Result<TriMesh, StructError> {
    let room = &plan.rooms()[room_idx];
    let tag = FaceTag::structural(&room.id, Category::Wall);
    let mut mesh = TriMesh::empty();
    for seg in room_wall_segments(plan, room_idx)? {
        let quad = [seg.outer.0, seg.outer.1, seg.inner.1, seg.inner.0];
        let prism = TriMesh::prism_from_plan(&quad, 0.0, room.ceiling_height, tag.clone())
            .map_err(|source| StructError::WallCollapse { room: room.id.clone(), source })?;
        mesh.append(&prism);
    }
    Ok(mesh)
}

/// Floor and ceiling slabs covering the full room polygon: the floor's top
/// face sits at z = 0, the ceiling's underside at the room height.
pub fn build_floor_ceiling(plan: &FloorPlan, room_idx: usize) -> Result<(TriMesh, TriMesh), StructError> {
    let room = &plan.rooms()[room_idx];
    let floor = TriMesh::extrude_polygon(
        &room.polygon,
        -SLAB_THICKNESS,
        0.0,
        FaceTag::structural(&room.id, Category::Floor),
    )?;
    let ceiling = TriMesh::extrude_polygon(
        &room.polygon,
        room.ceiling_height,
        room.ceiling_height + SLAB_THICKNESS,
        FaceTag::structural(&room.id, Category::Ceiling),
    )?;
    Ok((floor, ceiling))
}

/// Convex box cutter for an opening, extruded along the wall's inward
/// direction with [`CUT_MARGIN`] past both faces (and past floor/ceiling
/// when the opening reaches them).
fn opening_cutter(room: &Room, opening: &Opening, thickness: f64, tag: &FaceTag) -> Result<TriMesh, GeomError> {
    let (a, b) = room.polygon.edge(opening.edge);
    let dir = (b - a).normalize();
    let inward = V2::new(-dir.y, dir.x);
    let s0 = opening.offset;
    let s1 = opening.offset + opening.width;
    let depth0 = -CUT_MARGIN;
    let depth1 = thickness + CUT_MARGIN;
    let corner = |s: f64, d: f64| a + dir * s + inward * d;
    let quad = [corner(s0, depth0), corner(s1, depth0), corner(s1, depth1), corner(s0, depth1)];
    let z0 = if opening.sill <= EPS { -CUT_MARGIN } else { opening.sill };
    let z1 = if opening.head >= room.ceiling_height - EPS {
        room.ceiling_height + CUT_MARGIN
    } else {
        opening.head
    };
    TriMesh::prism_from_plan(&quad, z0, z1, tag.clone())
}

/// Carves all of the room's openings out of `walls`. Geometrically
/// duplicated cutters are applied once; a cutter that removes no volume
/// means the opening misses the wall entirely, which is an error.
pub fn carve_openings(walls: TriMesh, plan: &FloorPlan, room_idx: usize) -> Result<TriMesh, StructError> {
    let room = &plan.rooms()[room_idx];
    let tag = FaceTag::structural(&room.id, Category::Wall);
    let mut walls = walls;
    let mut applied: Vec<[i64; 6]> = Vec::new();
    for (j, opening) in room.openings.iter().enumerate() {
        // Cutters always span the full combined wall thickness, so the same
        // box pierces exterior walls and either half of a party wall.
        let cutter = opening_cutter(room, opening, plan.wall_thickness(), &tag)?;
        let (lo, hi) = cutter.aabb().expect("cutter has vertices");
        let key: [i64; 6] = [lo.x, lo.y, lo.z, hi.x, hi.y, hi.z].map(|v| (v * 1e6).round() as i64);
        if applied.contains(&key) {
            continue;
        }
        applied.push(key);
        let before = walls.signed_volume();
        walls = mesh_subtract(&walls, &cutter)?;
        if (walls.signed_volume() - before).abs() < EPS {
            return Err(StructError::OpeningOutsideWall { room: room.id.clone(), opening: j });
        }
    }
    Ok(walls)
}

/// Builds the full structural mesh: per room, carved walls followed by the
/// floor and ceiling slabs. Output is deterministic for a given plan.
pub fn assemble_struct_mesh(plan: &FloorPlan) -> Result<TriMesh, StructError> {
    let mut mesh = TriMesh::empty();
    for room_idx in 0..plan.rooms().len() {
        let walls = carve_openings(build_room_walls(plan, room_idx)?, plan, room_idx)?;
        let (floor, ceiling) = build_floor_ceiling(plan, room_idx)?;
        mesh.append(&walls);
        mesh.append(&floor);
        mesh.append(&ceiling);
    }
    Ok(mesh)
}
