//! Projective texture accumulation onto structural surfaces.
//!
//! Every wall sub-run, floor, and ceiling owns a texel chart: a planar
//! rectangle sampled at a fixed density. Projecting a camera image walks the
//! chart texels, filters them (facing the camera, unoccluded against the
//! rendered depth, the right room, inside the image), and keeps the color
//! from the view with the best incidence angle. The per-texel best cosine is
//! stored as the confidence channel and doubles as the alpha used when
//! condition images blend wall textures over grayscale depth.

use crate::cameras::Camera;
use crate::floorplan::FloorPlan;
use crate::geom::{Category, GeomError, Polygon2D, P2, P3, V3};
use crate::imgio::{self, ImgError};
use crate::render::DepthMap;
use crate::structmesh::{room_wall_segments, StructError};
use image::RgbImage;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Default chart sampling density.
pub const TEXELS_PER_METER: f64 = 64.0;
/// Occlusion tolerance: a texel whose camera-space depth differs from the
/// rendered depth by more than this is hidden behind something (meters).
pub const OCCLUSION_TAU: f64 = 0.10;
/// How far off a chart plane a queried surface point may sit (meters).
const PLANE_TOL: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum TexError {
    #[error("vertex is behind the camera")]
    BehindCamera,
    #[error("dimensions {got_w}x{got_h} do not match camera {want_w}x{want_h}")]
    DimensionMismatch { got_w: usize, got_h: usize, want_w: usize, want_h: usize },
    #[error("malformed atlas data: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] ImgError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Struct(#[from] StructError),
}

/// One planar texel grid: a wall sub-run's inner face, or a floor/ceiling
/// bounding rectangle with a polygon mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub id: String,
    pub room: String,
    pub category: Category,
    /// World position of the texel-grid corner (u = v = 0).
    pub origin: P3,
    /// Unit direction of growing u, in world space.
    pub u_axis: V3,
    /// Unit direction of growing v.
    pub v_axis: V3,
    /// Unit surface normal, pointing into the room.
    pub normal: V3,
    /// Parameter rectangle extent along u (meters).
    pub width_m: f64,
    /// Parameter rectangle extent along v (meters).
    pub height_m: f64,
    /// Texel grid dimensions (cover the rectangle, rounding up).
    pub w: usize,
    pub h: usize,
    /// Floor/ceiling charts mask texels whose center falls outside the room
    /// polygon; `None` means every texel is on the surface.
    pub mask: Option<Vec<bool>>,
    pub rgb: Vec<[u8; 3]>,
    /// Best incidence cosine seen per texel; 0 ⟺ never written. Doubles as
    /// the blend alpha consumed by condition rendering.
    pub confidence: Vec<f32>,
}

impl Chart {
    fn grid(width_m: f64, height_m: f64, tpm: f64) -> (usize, usize) {
        (((width_m * tpm).ceil() as usize).max(1), ((height_m * tpm).ceil() as usize).max(1))
    }

    fn blank(
        id: String,
        room: &str,
        category: Category,
        origin: P3,
        u_axis: V3,
        v_axis: V3,
        normal: V3,
        width_m: f64,
        height_m: f64,
        tpm: f64,
        mask: Option<Vec<bool>>,
    ) -> Chart {
        let (w, h) = Self::grid(width_m, height_m, tpm);
        debug_assert!(mask.as_ref().is_none_or(|m| m.len() == w * h));
        Chart {
            id,
            room: room.into(),
            category,
            origin,
            u_axis,
            v_axis,
            normal,
            width_m,
            height_m,
            w,
            h,
            mask,
            rgb: vec![[0; 3]; w * h],
            confidence: vec![0.0; w * h],
        }
    }

    /// Chart over a wall sub-run's inner face: u along the run, v up.
    fn wall(room: &str, edge: usize, sub: usize, inner: (P2, P2), ceiling: f64, tpm: f64) -> Chart {
        let dir = inner.1 - inner.0;
        let len = dir.norm();
        let u = dir / len;
        // Room polygons wind counter-clockwise, so the interior — and the
        // inner face normal — lie to the edge's left.
        let normal = V3::new(-u.y, u.x, 0.0);
        Chart::blank(
            format!("{room}/wall/{edge}.{sub}"),
            room,
            Category::Wall,
            P3::new(inner.0.x, inner.0.y, 0.0),
            V3::new(u.x, u.y, 0.0),
            V3::z(),
            normal,
            len,
            ceiling,
            tpm,
            None,
        )
    }

    /// Chart over a floor or ceiling: the polygon's bounding rectangle with
    /// outside-polygon texels masked off.
    fn slab(room: &str, poly: &Polygon2D, z: f64, category: Category, tpm: f64) -> Chart {
        let vs = poly.vertices();
        let (mut min_x, mut min_y, mut max_x, mut max_y) = (vs[0].x, vs[0].y, vs[0].x, vs[0].y);
        for p in vs {
            min_x = min_x.min(p.x);
            min_y = min_y.min(p.y);
            max_x = max_x.max(p.x);
            max_y = max_y.max(p.y);
        }
        let (width_m, height_m) = (max_x - min_x, max_y - min_y);
        let (w, h) = Self::grid(width_m, height_m, tpm);
        let mut mask = vec![false; w * h];
        for j in 0..h {
            for i in 0..w {
                let p = P2::new(
                    min_x + (i as f64 + 0.5) / tpm,
                    min_y + (j as f64 + 0.5) / tpm,
                );
                mask[j * w + i] = poly.contains(p);
            }
        }
        let normal = if category == Category::Floor { V3::z() } else { -V3::z() };
        Chart::blank(
            format!("{room}/{}", category.as_str()),
            room,
            category,
            P3::new(min_x, min_y, z),
            V3::x(),
            V3::y(),
            normal,
            width_m,
            height_m,
            tpm,
            Some(mask),
        )
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.w && j < self.h);
        j * self.w + i
    }

    /// World position of the texel's center.
    pub fn texel_center(&self, i: usize, j: usize, tpm: f64) -> P3 {
        self.origin + self.u_axis * ((i as f64 + 0.5) / tpm) + self.v_axis * ((j as f64 + 0.5) / tpm)
    }

    /// Whether the texel lies on the actual surface.
    pub fn on_surface(&self, i: usize, j: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[j * self.w + i])
    }

    /// Number of texels that have received a color.
    pub fn coverage(&self) -> usize {
        self.confidence.iter().filter(|c| **c > 0.0).count()
    }
}

/// The scene's accumulated structural texture state.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureAtlas {
    pub texels_per_meter: f64,
    pub charts: Vec<Chart>,
}

impl TextureAtlas {
    pub fn new(texels_per_meter: f64, charts: Vec<Chart>) -> Self {
        Self { texels_per_meter, charts }
    }

    pub fn empty(texels_per_meter: f64) -> Self {
        Self { texels_per_meter, charts: Vec::new() }
    }

    /// Blank charts for every structural surface of the plan: one per wall
    /// sub-run inner face plus floor and ceiling per room.
    pub fn for_plan(plan: &FloorPlan, texels_per_meter: f64) -> Result<Self, TexError> {
        let mut charts = Vec::new();
        for (idx, room) in plan.rooms().iter().enumerate() {
            for seg in room_wall_segments(plan, idx)? {
                charts.push(Chart::wall(
                    &room.id,
                    seg.edge,
                    seg.sub,
                    seg.inner,
                    room.ceiling_height,
                    texels_per_meter,
                ));
            }
            charts.push(Chart::slab(&room.id, &room.polygon, 0.0, Category::Floor, texels_per_meter));
            charts.push(Chart::slab(
                &room.id,
                &room.polygon,
                room.ceiling_height,
                Category::Ceiling,
                texels_per_meter,
            ));
        }
        Ok(Self { texels_per_meter, charts })
    }

    /// Color and confidence of the texel under a structural surface point.
    pub fn sample(&self, room: &str, category: Category, p: P3) -> Option<([u8; 3], f32)> {
        for chart in &self.charts {
            if chart.room != room || chart.category != category {
                continue;
            }
            let rel = p - chart.origin;
            if rel.dot(&chart.normal).abs() > PLANE_TOL {
                continue;
            }
            let tu = rel.dot(&chart.u_axis);
            let tv = rel.dot(&chart.v_axis);
            if !(-PLANE_TOL..=chart.width_m + PLANE_TOL).contains(&tu)
                || !(-PLANE_TOL..=chart.height_m + PLANE_TOL).contains(&tv)
            {
                continue;
            }
            let i = ((tu * self.texels_per_meter).floor() as isize).clamp(0, chart.w as isize - 1) as usize;
            let j = ((tv * self.texels_per_meter).floor() as isize).clamp(0, chart.h as isize - 1) as usize;
            if !chart.on_surface(i, j) {
                return None;
            }
            let t = chart.index(i, j);
            return Some((chart.rgb[t], chart.confidence[t]));
        }
        None
    }

    /// Total written texels across all charts.
    pub fn coverage(&self) -> usize {
        self.charts.iter().map(Chart::coverage).sum()
    }
}

/// Projects a world point into the camera and returns glTF-convention
/// texture coordinates: u = pixel x / width, v flipped so v = 0 is the
/// image bottom. `None` when the projection falls outside the image.
pub fn vertex_uv(p: P3, cam: &Camera) -> Result<Option<(f64, f64)>, TexError> {
    let ([px, py], _) = cam.project(p).ok_or(TexError::BehindCamera)?;
    let w = cam.intrinsics.width as f64;
    let h = cam.intrinsics.height as f64;
    if !(0.0..=w).contains(&px) || !(0.0..=h).contains(&py) {
        return Ok(None);
    }
    Ok(Some((px / w, 1.0 - py / h)))
}

/// Projects one camera image onto the charts of `room_id`, keeping each
/// texel's best-incidence-angle color. A texel is written when it faces the
/// camera, projects inside the image, and its depth matches the rendered
/// scaffold depth within [`OCCLUSION_TAU`].
pub fn project_image(
    cam: &Camera,
    image: &RgbImage,
    depth: &DepthMap,
    room_id: &str,
    atlas: &mut TextureAtlas,
) -> Result<(), TexError> {
    let (want_w, want_h) = (cam.intrinsics.width as usize, cam.intrinsics.height as usize);
    for (got_w, got_h) in [
        (image.width() as usize, image.height() as usize),
        (depth.width(), depth.height()),
    ] {
        if (got_w, got_h) != (want_w, want_h) {
            return Err(TexError::DimensionMismatch { got_w, got_h, want_w, want_h });
        }
    }
    let tpm = atlas.texels_per_meter;
    for chart in &mut atlas.charts {
        if chart.room != room_id {
            continue;
        }
        for j in 0..chart.h {
            for i in 0..chart.w {
                if !chart.on_surface(i, j) {
                    continue;
                }
                let p = chart.texel_center(i, j, tpm);
                let to_cam = cam.position - p;
                // Facing filter: the surface must look toward the camera.
                if chart.normal.dot(&to_cam) <= 0.0 {
                    continue;
                }
                // In-image filter.
                let Some(([px, py], texel_depth)) = cam.project(p) else {
                    continue;
                };
                if !(0.0..want_w as f64).contains(&px) || !(0.0..want_h as f64).contains(&py) {
                    continue;
                }
                let (xi, yi) = (px as usize, py as usize);
                // Occlusion filter against the rendered scaffold depth.
                let rendered = depth.get(xi, yi).expect("in bounds");
                if !rendered.is_finite() || (texel_depth - rendered as f64).abs() > OCCLUSION_TAU {
                    continue;
                }
                let cos = chart.normal.dot(&to_cam.normalize());
                let t = chart.index(i, j);
                if cos as f32 > chart.confidence[t] {
                    let px = image.get_pixel(xi as u32, yi as u32);
                    chart.rgb[t] = [px.0[0], px.0[1], px.0[2]];
                    chart.confidence[t] = cos as f32;
                }
            }
        }
    }
    Ok(())
}

/// Folds [`project_image`] over schedule-ordered views; each camera projects
/// onto its own room's charts. Coverage never decreases.
pub fn accumulate_views(
    views: &[(Camera, RgbImage, DepthMap)],
    atlas: &mut TextureAtlas,
) -> Result<(), TexError> {
    for (cam, image, depth) in views {
        project_image(cam, image, depth, &cam.room, atlas)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ChartDoc {
    id: String,
    room: String,
    category: String,
    origin: [f64; 3],
    u_axis: [f64; 3],
    v_axis: [f64; 3],
    normal: [f64; 3],
    width_m: f64,
    height_m: f64,
    w: usize,
    h: usize,
    masked: bool,
}

#[derive(Serialize, Deserialize)]
struct AtlasDoc {
    texels_per_meter: f64,
    charts: Vec<ChartDoc>,
}

fn chart_stem(id: &str) -> String {
    id.replace('/', "_")
}

fn v3_arr(v: V3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

impl TextureAtlas {
    /// Writes the atlas as one color PNG, one 8-bit confidence PNG, one
    /// lossless confidence grid, and (for masked charts) one mask PNG per
    /// chart, plus a chart manifest.
    pub fn save(&self, dir: &Path) -> Result<(), TexError> {
        std::fs::create_dir_all(dir).map_err(ImgError::from)?;
        let mut docs = Vec::new();
        for chart in &self.charts {
            let stem = chart_stem(&chart.id);
            let (w, h) = (chart.w as u32, chart.h as u32);
            let mut rgb = RgbImage::new(w, h);
            let mut conf_png = image::GrayImage::new(w, h);
            for j in 0..chart.h {
                for i in 0..chart.w {
                    let t = chart.index(i, j);
                    rgb.put_pixel(i as u32, j as u32, image::Rgb(chart.rgb[t]));
                    let c = (chart.confidence[t].clamp(0.0, 1.0) * 255.0).round() as u8;
                    conf_png.put_pixel(i as u32, j as u32, image::Luma([c]));
                }
            }
            imgio::write_rgb_png(&dir.join(format!("{stem}.png")), &rgb)?;
            imgio::write_gray_png(&dir.join(format!("{stem}.conf.png")), &conf_png)?;
            let grid = DepthMap::from_data(chart.w, chart.h, chart.confidence.clone())
                .expect("confidence length matches grid");
            imgio::write_depth_f32(&dir.join(format!("{stem}.conf.f32d")), &grid)?;
            if let Some(mask) = &chart.mask {
                let mut m = image::GrayImage::new(w, h);
                for j in 0..chart.h {
                    for i in 0..chart.w {
                        m.put_pixel(i as u32, j as u32, image::Luma([if mask[j * chart.w + i] { 255 } else { 0 }]));
                    }
                }
                imgio::write_gray_png(&dir.join(format!("{stem}.mask.png")), &m)?;
            }
            docs.push(ChartDoc {
                id: chart.id.clone(),
                room: chart.room.clone(),
                category: chart.category.as_str().to_string(),
                origin: [chart.origin.x, chart.origin.y, chart.origin.z],
                u_axis: v3_arr(chart.u_axis),
                v_axis: v3_arr(chart.v_axis),
                normal: v3_arr(chart.normal),
                width_m: chart.width_m,
                height_m: chart.height_m,
                w: chart.w,
                h: chart.h,
                masked: chart.mask.is_some(),
            });
        }
        let doc = AtlasDoc { texels_per_meter: self.texels_per_meter, charts: docs };
        let text = serde_json::to_string_pretty(&doc).expect("atlas manifest serializes");
        std::fs::write(dir.join("charts.json"), text + "\n").map_err(ImgError::from)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, TexError> {
        let text = std::fs::read_to_string(dir.join("charts.json")).map_err(ImgError::from)?;
        let doc: AtlasDoc =
            serde_json::from_str(&text).map_err(|e| TexError::Malformed(format!("charts.json: {e}")))?;
        let mut charts = Vec::new();
        for cd in doc.charts {
            let stem = chart_stem(&cd.id);
            let category = Category::parse(&cd.category)
                .ok_or_else(|| TexError::Malformed(format!("{}: bad category {}", cd.id, cd.category)))?;
            let rgb_img = imgio::read_rgb_png(&dir.join(format!("{stem}.png")))?;
            let conf = imgio::read_depth_f32(&dir.join(format!("{stem}.conf.f32d")))?;
            if (rgb_img.width() as usize, rgb_img.height() as usize) != (cd.w, cd.h)
                || (conf.width(), conf.height()) != (cd.w, cd.h)
            {
                return Err(TexError::Malformed(format!("{}: grid size mismatch", cd.id)));
            }
            let mut rgb = vec![[0u8; 3]; cd.w * cd.h];
            for j in 0..cd.h {
                for i in 0..cd.w {
                    let p = rgb_img.get_pixel(i as u32, j as u32);
                    rgb[j * cd.w + i] = [p.0[0], p.0[1], p.0[2]];
                }
            }
            let mask = if cd.masked {
                let m = imgio::read_gray_png(&dir.join(format!("{stem}.mask.png")))?;
                if (m.width() as usize, m.height() as usize) != (cd.w, cd.h) {
                    return Err(TexError::Malformed(format!("{}: mask size mismatch", cd.id)));
                }
                Some((0..cd.w * cd.h).map(|t| m.as_raw()[t] > 127).collect())
            } else {
                None
            };
            charts.push(Chart {
                id: cd.id,
                room: cd.room,
                category,
                origin: P3::new(cd.origin[0], cd.origin[1], cd.origin[2]),
                u_axis: V3::new(cd.u_axis[0], cd.u_axis[1], cd.u_axis[2]),
                v_axis: V3::new(cd.v_axis[0], cd.v_axis[1], cd.v_axis[2]),
                normal: V3::new(cd.normal[0], cd.normal[1], cd.normal[2]),
                width_m: cd.width_m,
                height_m: cd.height_m,
                w: cd.w,
                h: cd.h,
                mask,
                rgb,
                confidence: conf.data().to_vec(),
            });
        }
        Ok(Self { texels_per_meter: doc.texels_per_meter, charts })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cameras::{CameraRole, Intrinsics};
    use crate::floorplan::parse_layout;
    use crate::geom::{raycast, FaceTag, TriMesh};
    use crate::render::render_depth;
    use image::{Rgb, RgbImage};
    use nalgebra::UnitQuaternion;
    use rand::{Rng, SeedableRng};

    const HFOV_90: f64 = std::f64::consts::FRAC_PI_2;

    fn identity_cam(position: P3, w: u32, h: u32) -> Camera {
        Camera::new(
            "r",
            CameraRole::Perimeter,
            position,
            UnitQuaternion::identity(),
            Intrinsics::from_hfov(w, h, HFOV_90),
        )
        .unwrap()
    }

    fn solid(w: u32, h: u32, rgb: [u8; 3]) -> RgbImage {
        RgbImage::from_pixel(w, h, Rgb(rgb))
    }

    fn bare_wall_chart(id: &str, origin: P3, u_axis: V3, normal: V3, width_m: f64, height_m: f64, tpm: f64) -> Chart {
        let w = (width_m * tpm).ceil() as usize;
        let h = (height_m * tpm).ceil() as usize;
        Chart {
            id: id.into(),
            room: "r".into(),
            category: Category::Wall,
            origin,
            u_axis,
            v_axis: V3::z(),
            normal,
            width_m,
            height_m,
            w,
            h,
            mask: None,
            rgb: vec![[0; 3]; w * h],
            confidence: vec![0.0; w * h],
        }
    }

    fn wall_box() -> TriMesh {
        TriMesh::box_from_aabb(
            P3::new(-5.0, -3.2, -5.0),
            P3::new(5.0, -3.0, 5.0),
            FaceTag::structural("r", Category::Wall),
        )
    }

    #[test]
    fn uv_known_values() {
        let cam = identity_cam(P3::new(0.0, 0.0, 0.0), 1376, 768);
        assert!((cam.intrinsics.fx - 688.0).abs() < 1e-9, "90-degree fov gives fx = W/2");
        // Optical-axis point.
        let (u, v) = vertex_uv(P3::new(0.0, 0.0, -2.0), &cam).unwrap().unwrap();
        assert!((u - 0.5).abs() < 1e-12 && (v - 0.5).abs() < 1e-12);
        // Camera-space (1, 0, depth 2) lands at pixel 1032.
        let (u, v) = vertex_uv(P3::new(1.0, 0.0, -2.0), &cam).unwrap().unwrap();
        assert!((u - 0.75).abs() < 1e-12, "got u = {u}");
        assert!((v - 0.5).abs() < 1e-12);
        // Pixel (0, 0) is the top-left corner: v flips to 1.
        let corner = cam.backproject(0.0, 0.0, 2.0);
        let (u, v) = vertex_uv(corner, &cam).unwrap().unwrap();
        assert!(u.abs() < 1e-9 && (v - 1.0).abs() < 1e-9);
        // Behind the camera.
        assert!(matches!(vertex_uv(P3::new(0.0, 0.0, 2.0), &cam), Err(TexError::BehindCamera)));
        // In front but outside the image.
        let outside = cam.backproject(1400.0, 100.0, 2.0);
        assert_eq!(vertex_uv(outside, &cam).unwrap(), None);
    }

    #[test]
    fn uv_backprojection_roundtrip() {
        let cam = identity_cam(P3::new(0.3, -0.2, 1.1), 1376, 768);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut checked = 0;
        for _ in 0..200 {
            let d = rng.gen_range(0.5..10.0);
            let p = cam.to_world(P3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), -d));
            let Some((u, v)) = vertex_uv(p, &cam).unwrap() else { continue };
            let px = u * 1376.0;
            let py = (1.0 - v) * 768.0;
            let back = cam.backproject(px, py, d);
            assert!((back - p).norm() < 1e-4, "round trip drift {}", (back - p).norm());
            checked += 1;
        }
        assert!(checked > 50);
    }

    #[test]
    fn plan_charts_cover_every_surface() {
        let plan = parse_layout(
            r#"{"version":"worldmesh-layout/1","theme":"t","wall_thickness":0.2,"rooms":[
              {"id":"a","kind":"k","ceiling_height":2.7,
               "floor_polygon":[[0,0],[4,0],[4,3],[0,3]],"openings":[]}]}"#,
        )
        .unwrap();
        let atlas = TextureAtlas::for_plan(&plan, TEXELS_PER_METER).unwrap();
        assert_eq!(atlas.charts.len(), 6, "four walls + floor + ceiling");
        let wall0 = &atlas.charts[0];
        assert_eq!(wall0.id, "a/wall/0.0");
        // Exterior walls inset by the full thickness: edge 0 runs 3.6 m.
        assert!((wall0.width_m - 3.6).abs() < 1e-9);
        assert!((wall0.height_m - 2.7).abs() < 1e-9);
        assert_eq!((wall0.w, wall0.h), (231, 173));
        assert!((wall0.normal - V3::new(0.0, 1.0, 0.0)).norm() < 1e-12, "inner face looks into the room");
        assert!((wall0.origin - P3::new(0.2, 0.2, 0.0)).norm() < 1e-12);
        let floor = atlas.charts.iter().find(|c| c.category == Category::Floor).unwrap();
        assert_eq!((floor.w, floor.h), (256, 192));
        assert!(floor.mask.as_ref().unwrap().iter().all(|m| *m), "rectangular floor has no masked texels");
        let ceiling = atlas.charts.iter().find(|c| c.category == Category::Ceiling).unwrap();
        assert!((ceiling.origin.z - 2.7).abs() < 1e-12);
        assert!((ceiling.normal - V3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn masked_floor_texels_outside_polygon() {
        let plan = parse_layout(
            r#"{"version":"worldmesh-layout/1","theme":"t","wall_thickness":0.2,"rooms":[
              {"id":"a","kind":"k","ceiling_height":2.7,
               "floor_polygon":[[0,0],[4,0],[4,2],[2,2],[2,3],[0,3]],"openings":[]}]}"#,
        )
        .unwrap();
        let atlas = TextureAtlas::for_plan(&plan, 8.0).unwrap();
        let floor = atlas.charts.iter().find(|c| c.category == Category::Floor).unwrap();
        let mask = floor.mask.as_ref().unwrap();
        assert!(mask.iter().any(|m| !*m), "the L-notch must be masked");
        assert!(mask.iter().any(|m| *m));
        // The notch (x > 2, y > 2) is outside the room.
        assert_eq!(atlas.sample("a", Category::Floor, P3::new(3.0, 2.5, 0.0)), None);
        // A point on the wing is a real (if unwritten) floor texel.
        assert_eq!(atlas.sample("a", Category::Floor, P3::new(1.0, 2.5, 0.0)), Some(([0, 0, 0], 0.0)));
    }

    #[test]
    fn facing_filter_excludes_away_pointing_surfaces() {
        let cam = identity_cam(P3::new(0.0, 0.0, 0.0), 344, 192);
        let toward = bare_wall_chart(
            "toward",
            P3::new(-2.0, -3.0, -1.0),
            V3::x(),
            V3::new(0.0, 1.0, 0.0),
            4.0,
            2.0,
            16.0,
        );
        // Slightly farther plane, normal away from the camera; within the
        // occlusion tolerance of the rendered wall, so only the facing
        // filter can reject it.
        let away = bare_wall_chart(
            "away",
            P3::new(-2.0, -3.05, -1.0),
            V3::x(),
            V3::new(0.0, -1.0, 0.0),
            4.0,
            2.0,
            16.0,
        );
        let mut atlas = TextureAtlas::new(16.0, vec![toward, away]);
        let depth = render_depth(&wall_box(), &cam);
        project_image(&cam, &solid(344, 192, [200, 30, 30]), &depth, "r", &mut atlas).unwrap();
        assert!(atlas.charts[0].coverage() > 0, "facing wall receives texels");
        assert_eq!(atlas.charts[1].coverage(), 0, "away-facing chart stays untouched");
        for t in 0..atlas.charts[0].rgb.len() {
            if atlas.charts[0].confidence[t] > 0.0 {
                assert_eq!(atlas.charts[0].rgb[t], [200, 30, 30]);
            }
        }
    }

    #[test]
    fn occlusion_shadow_matches_ray_oracle() {
        let cam = identity_cam(P3::new(0.0, 0.0, 1.35), 344, 192);
        let mut scene = TriMesh::box_from_aabb(
            P3::new(-5.0, -3.2, -3.65),
            P3::new(5.0, -3.0, 6.35),
            FaceTag::structural("r", Category::Wall),
        );
        // A box about a meter in front of the wall, shadowing part of it.
        scene.append(&TriMesh::box_from_aabb(
            P3::new(-0.5, -2.0, 0.6),
            P3::new(0.5, -1.8, 2.1),
            FaceTag::object("r", "crate"),
        ));
        let chart = bare_wall_chart(
            "wall",
            P3::new(-2.0, -3.0, 0.0),
            V3::x(),
            V3::new(0.0, 1.0, 0.0),
            4.0,
            2.7,
            16.0,
        );
        let mut atlas = TextureAtlas::new(16.0, vec![chart]);
        let depth = render_depth(&scene, &cam);
        project_image(&cam, &solid(344, 192, [10, 200, 10]), &depth, "r", &mut atlas).unwrap();

        let chart = &atlas.charts[0];
        let mut shadowed = 0;
        let mut written = 0;
        for j in 0..chart.h {
            for i in 0..chart.w {
                let p = chart.texel_center(i, j, 16.0);
                // Independent statement of the filters: ray through the
                // pixel center the texel projects into, cast against the
                // analytic scene.
                let expect = match cam.project(p) {
                    Some(([px, py], texel_depth))
                        if (0.0..344.0).contains(&px) && (0.0..192.0).contains(&py) =>
                    {
                        let center =
                            cam.backproject(px.floor() + 0.5, py.floor() + 0.5, 1.0);
                        let hit = raycast(&scene, cam.position, center - cam.position);
                        hit.is_some_and(|h| (texel_depth - h.t).abs() <= OCCLUSION_TAU)
                    }
                    _ => false,
                };
                let got = chart.confidence[chart.index(i, j)] > 0.0;
                assert_eq!(got, expect, "texel ({i},{j}) at {p:?}");
                if expect {
                    written += 1;
                } else {
                    shadowed += 1;
                }
            }
        }
        assert!(written > 0 && shadowed > 0, "fixture must exercise both outcomes");
    }

    fn two_room_plan() -> FloorPlan {
        parse_layout(
            r#"{"version":"worldmesh-layout/1","theme":"t","wall_thickness":0.2,"rooms":[
              {"id":"a","kind":"k","ceiling_height":2.7,
               "floor_polygon":[[0,0],[4,0],[4,3],[0,3]],
               "openings":[{"kind":"door","edge":1,"offset":1.0,"width":0.9,"head":2.1}]},
              {"id":"b","kind":"k","ceiling_height":2.7,
               "floor_polygon":[[4,0],[8,0],[8,3],[4,3]],"openings":[]}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn projections_stay_inside_their_room() {
        let plan = two_room_plan();
        let scene = crate::structmesh::assemble_struct_mesh(&plan).unwrap();
        let mut atlas = TextureAtlas::for_plan(&plan, 8.0).unwrap();
        // Camera in room a looking through the door into room b.
        let cam_a = Camera::looking_at(
            "a",
            CameraRole::Perimeter,
            P3::new(2.0, 1.5, 1.6),
            P3::new(4.0, 1.45, 1.1),
            Intrinsics::from_hfov(344, 192, HFOV_90),
        )
        .unwrap();
        let depth = render_depth(&scene, &cam_a);
        project_image(&cam_a, &solid(344, 192, [250, 250, 0]), &depth, "a", &mut atlas).unwrap();
        for chart in &atlas.charts {
            if chart.room == "b" {
                assert_eq!(chart.coverage(), 0, "{} must stay empty", chart.id);
            }
        }
        assert!(atlas.coverage() > 0);

        // A later room-b projection must leave room a's texels bit-identical.
        let room_a_before: Vec<Chart> =
            atlas.charts.iter().filter(|c| c.room == "a").cloned().collect();
        let cam_b = Camera::looking_at(
            "b",
            CameraRole::Perimeter,
            P3::new(6.0, 1.5, 1.6),
            P3::new(4.0, 1.45, 1.1),
            Intrinsics::from_hfov(344, 192, HFOV_90),
        )
        .unwrap();
        let depth_b = render_depth(&scene, &cam_b);
        project_image(&cam_b, &solid(344, 192, [0, 80, 250]), &depth_b, "b", &mut atlas).unwrap();
        let room_a_after: Vec<Chart> =
            atlas.charts.iter().filter(|c| c.room == "a").cloned().collect();
        assert_eq!(room_a_before, room_a_after);
        assert!(atlas.charts.iter().any(|c| c.room == "b" && c.coverage() > 0));
    }

    #[test]
    fn best_incidence_angle_wins() {
        let scene = wall_box();
        let chart = bare_wall_chart(
            "wall",
            P3::new(-2.0, -3.0, 0.0),
            V3::x(),
            V3::new(0.0, 1.0, 0.0),
            4.0,
            2.7,
            16.0,
        );
        let make_cam = |pos: P3| {
            Camera::looking_at(
                "r",
                CameraRole::Perimeter,
                pos,
                P3::new(0.0, -3.0, 1.35),
                Intrinsics::from_hfov(344, 192, HFOV_90),
            )
            .unwrap()
        };
        let oblique = make_cam(P3::new(3.0, 0.0, 1.35));
        let front = make_cam(P3::new(0.0, 0.0, 1.35));
        let d_oblique = render_depth(&scene, &oblique);
        let d_front = render_depth(&scene, &front);

        // The chart texel at the aim point is seen by both cameras.
        let probe = |atlas: &TextureAtlas| {
            let chart = &atlas.charts[0];
            let i = ((2.0) * 16.0) as usize; // u = 2.0 m -> world x = 0
            let j = ((1.35) * 16.0) as usize;
            (chart.rgb[chart.index(i, j)], chart.confidence[chart.index(i, j)])
        };

        let mut a1 = TextureAtlas::new(16.0, vec![chart.clone()]);
        project_image(&oblique, &solid(344, 192, [255, 0, 0]), &d_oblique, "r", &mut a1).unwrap();
        let (_, conf_oblique) = probe(&a1);
        assert!((conf_oblique as f64 - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.01, "45-degree view");
        project_image(&front, &solid(344, 192, [0, 255, 0]), &d_front, "r", &mut a1).unwrap();
        let (rgb, conf) = probe(&a1);
        assert_eq!(rgb, [0, 255, 0], "fronto-parallel color replaces the oblique one");
        assert!(conf > 0.99);

        // Opposite order converges to the same winner.
        let mut a2 = TextureAtlas::new(16.0, vec![chart.clone()]);
        project_image(&front, &solid(344, 192, [0, 255, 0]), &d_front, "r", &mut a2).unwrap();
        project_image(&oblique, &solid(344, 192, [255, 0, 0]), &d_oblique, "r", &mut a2).unwrap();
        assert_eq!(probe(&a2).0, [0, 255, 0]);

        // Re-projecting an identical view changes nothing.
        let snapshot = a1.clone();
        project_image(&front, &solid(344, 192, [0, 255, 0]), &d_front, "r", &mut a1).unwrap();
        assert_eq!(a1, snapshot);
    }

    #[test]
    fn accumulation_is_monotone_and_unions_disjoint_views() {
        let mut scene = wall_box();
        scene.append(&TriMesh::box_from_aabb(
            P3::new(-5.0, 3.0, -5.0),
            P3::new(5.0, 3.2, 5.0),
            FaceTag::structural("r", Category::Wall),
        ));
        let charts = vec![
            bare_wall_chart("south", P3::new(-2.0, -3.0, 0.0), V3::x(), V3::new(0.0, 1.0, 0.0), 4.0, 2.7, 16.0),
            bare_wall_chart("north", P3::new(-2.0, 3.0, 0.0), V3::x(), V3::new(0.0, -1.0, 0.0), 4.0, 2.7, 16.0),
        ];
        let intr = Intrinsics::from_hfov(344, 192, HFOV_90);
        let cam_s =
            Camera::looking_at("r", CameraRole::Perimeter, P3::new(0.0, 0.0, 1.35), P3::new(0.0, -3.0, 1.35), intr)
                .unwrap();
        let cam_n =
            Camera::looking_at("r", CameraRole::Perimeter, P3::new(0.0, 0.0, 1.35), P3::new(0.0, 3.0, 1.35), intr)
                .unwrap();
        let d_s = render_depth(&scene, &cam_s);
        let d_n = render_depth(&scene, &cam_n);

        let mut stepwise = TextureAtlas::new(16.0, charts.clone());
        project_image(&cam_s, &solid(344, 192, [9, 9, 9]), &d_s, "r", &mut stepwise).unwrap();
        let cov_s = stepwise.coverage();
        project_image(&cam_n, &solid(344, 192, [7, 7, 7]), &d_n, "r", &mut stepwise).unwrap();
        let cov_both = stepwise.coverage();
        assert!(cov_s > 0 && cov_both >= cov_s, "coverage never shrinks");

        let mut only_n = TextureAtlas::new(16.0, charts.clone());
        project_image(&cam_n, &solid(344, 192, [7, 7, 7]), &d_n, "r", &mut only_n).unwrap();
        assert_eq!(cov_both, cov_s + only_n.coverage(), "disjoint views add up");

        let mut folded = TextureAtlas::new(16.0, charts);
        accumulate_views(
            &[
                (cam_s, solid(344, 192, [9, 9, 9]), d_s),
                (cam_n, solid(344, 192, [7, 7, 7]), d_n),
            ],
            &mut folded,
        )
        .unwrap();
        assert_eq!(folded, stepwise);
    }

    #[test]
    fn sample_returns_written_texels() {
        let cam = identity_cam(P3::new(0.0, 0.0, 1.35), 344, 192);
        let chart = bare_wall_chart(
            "wall",
            P3::new(-2.0, -3.0, 0.0),
            V3::x(),
            V3::new(0.0, 1.0, 0.0),
            4.0,
            2.7,
            16.0,
        );
        let mut atlas = TextureAtlas::new(16.0, vec![chart]);
        let depth = render_depth(&wall_box(), &cam);
        project_image(&cam, &solid(344, 192, [120, 40, 220]), &depth, "r", &mut atlas).unwrap();
        let chart = &atlas.charts[0];
        let (i, j) = (32, 21);
        let t = chart.index(i, j);
        assert!(chart.confidence[t] > 0.0, "probe texel must be written");
        let center = chart.texel_center(i, j, 16.0);
        let (rgb, conf) = atlas.sample("r", Category::Wall, center).unwrap();
        assert_eq!(rgb, [120, 40, 220]);
        assert_eq!(conf, atlas.charts[0].confidence[t]);
        // Off the rectangle and off the plane.
        assert_eq!(atlas.sample("r", Category::Wall, P3::new(10.0, -3.0, 1.0)), None);
        assert_eq!(atlas.sample("r", Category::Wall, P3::new(0.0, -2.0, 1.0)), None);
        assert_eq!(atlas.sample("other", Category::Wall, center), None);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let cam = identity_cam(P3::new(0.0, 0.0, 0.0), 344, 192);
        let mut atlas = TextureAtlas::empty(16.0);
        let bad = project_image(
            &cam,
            &solid(100, 100, [0, 0, 0]),
            &DepthMap::new(344, 192),
            "r",
            &mut atlas,
        );
        assert!(matches!(bad, Err(TexError::DimensionMismatch { got_w: 100, .. })));
    }

    #[test]
    fn atlas_round_trips_through_disk() {
        let plan = two_room_plan();
        let scene = crate::structmesh::assemble_struct_mesh(&plan).unwrap();
        let mut atlas = TextureAtlas::for_plan(&plan, 8.0).unwrap();
        let cam = Camera::looking_at(
            "a",
            CameraRole::Perimeter,
            P3::new(2.0, 1.5, 1.6),
            P3::new(0.2, 1.5, 1.35),
            Intrinsics::from_hfov(344, 192, HFOV_90),
        )
        .unwrap();
        let depth = render_depth(&scene, &cam);
        project_image(&cam, &solid(344, 192, [33, 99, 166]), &depth, "a", &mut atlas).unwrap();
        assert!(atlas.coverage() > 0);

        let dir = tempfile::tempdir().unwrap();
        atlas.save(dir.path()).unwrap();
        let loaded = TextureAtlas::load(dir.path()).unwrap();
        assert_eq!(loaded, atlas);
    }
}
