//! Binary glTF 2.0 (GLB) export and import.
//!
//! The writer produces a single-buffer GLB with one mesh primitive per
//! distinct face tag group (room, category, object), a flat per-category
//! base color material, and an optional `TEXCOORD_0` channel; a sidecar
//! `<file>.tags.json` records the tag of every primitive so a scene can be
//! reloaded with tags intact. Output is byte-deterministic for equal input.
//!
//! The reader handles the subset of glTF this project writes and consumes:
//! triangle primitives with float positions, u8/u16/u32 indices, optional
//! float UVs, all in one embedded binary buffer. Node transforms are ignored
//! (object poses travel in their own manifest).

use crate::geom::{Category, FaceTag, TriMesh, P3};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GlbError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot export an empty mesh")]
    Empty,
    #[error("malformed GLB: {0}")]
    Malformed(String),
    #[error("unsupported glTF feature: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Geom(#[from] crate::geom::GeomError),
}

/// Sidecar manifest entry: which tag a primitive carries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TagEntry {
    pub primitive: usize,
    pub room: String,
    pub category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
}

fn align4(n: usize) -> usize {
    (n + 3) & !3
}

/// Flat viewer color per category; objects get a stable hue from their id.
fn base_color(tag: &FaceTag) -> [f64; 4] {
    match tag.category {
        Category::Wall => [0.82, 0.80, 0.78, 1.0],
        Category::Floor => [0.55, 0.45, 0.35, 1.0],
        Category::Ceiling => [0.92, 0.92, 0.90, 1.0],
        Category::Object => {
            let id = tag.object.as_deref().unwrap_or("");
            let digest = crate::imgio::sha256_hex(id.as_bytes());
            let channel = |i: usize| {
                let byte = u8::from_str_radix(&digest[2 * i..2 * i + 2], 16).unwrap_or(128);
                0.25 + 0.5 * (byte as f64 / 255.0)
            };
            [channel(0), channel(1), channel(2), 1.0]
        }
    }
}

struct BinBuffer {
    bytes: Vec<u8>,
    views: Vec<Value>,
}

impl BinBuffer {
    fn new() -> Self {
        Self { bytes: Vec::new(), views: Vec::new() }
    }

    /// Appends data as a new buffer view, 4-byte aligned; returns its index.
    fn push_view(&mut self, data: &[u8]) -> usize {
        while self.bytes.len() % 4 != 0 {
            self.bytes.push(0);
        }
        let offset = self.bytes.len();
        self.bytes.extend_from_slice(data);
        self.views.push(json!({
            "buffer": 0,
            "byteOffset": offset,
            "byteLength": data.len(),
        }));
        self.views.len() - 1
    }
}

/// Groups faces by tag in a stable order and writes the GLB plus its tag
/// sidecar. When the mesh carries UVs they are exported as `TEXCOORD_0`.
pub fn export_glb(mesh: &TriMesh, path: &Path) -> Result<(), GlbError> {
    if mesh.face_count() == 0 {
        return Err(GlbError::Empty);
    }

    let mut groups: BTreeMap<(String, &'static str, Option<String>), Vec<usize>> = BTreeMap::new();
    for (f, tag) in mesh.tags().iter().enumerate() {
        let key = (
            tag.room.to_string(),
            tag.category.as_str(),
            tag.object.as_ref().map(|o| o.to_string()),
        );
        groups.entry(key).or_default().push(f);
    }

    let mut bin = BinBuffer::new();
    let mut accessors: Vec<Value> = Vec::new();
    let mut primitives: Vec<Value> = Vec::new();
    let mut materials: Vec<Value> = Vec::new();
    let mut tag_entries: Vec<TagEntry> = Vec::new();

    for (p, ((room, category, object), faces)) in groups.iter().enumerate() {
        let sub = mesh.submesh(faces);
        let positions: Vec<[f32; 3]> = sub
            .vertices()
            .iter()
            .map(|v| [v.x as f32, v.y as f32, v.z as f32])
            .collect();
        let mut min = [f32::INFINITY; 3];
        let mut max = [f32::NEG_INFINITY; 3];
        for p in &positions {
            for k in 0..3 {
                min[k] = min[k].min(p[k]);
                max[k] = max[k].max(p[k]);
            }
        }
        let mut pos_bytes = Vec::with_capacity(positions.len() * 12);
        for p in &positions {
            for k in 0..3 {
                pos_bytes.extend_from_slice(&p[k].to_le_bytes());
            }
        }
        let pos_view = bin.push_view(&pos_bytes);
        let pos_accessor = accessors.len();
        accessors.push(json!({
            "bufferView": pos_view,
            "componentType": 5126,
            "count": positions.len(),
            "type": "VEC3",
            "min": min,
            "max": max,
        }));

        let mut idx_bytes = Vec::with_capacity(sub.face_count() * 12);
        for t in sub.triangles() {
            for &i in t {
                idx_bytes.extend_from_slice(&i.to_le_bytes());
            }
        }
        let idx_view = bin.push_view(&idx_bytes);
        let idx_accessor = accessors.len();
        accessors.push(json!({
            "bufferView": idx_view,
            "componentType": 5125,
            "count": sub.face_count() * 3,
            "type": "SCALAR",
        }));

        let mut attributes = serde_json::Map::new();
        attributes.insert("POSITION".into(), json!(pos_accessor));
        if let Some(uvs) = sub.uvs() {
            let mut uv_bytes = Vec::with_capacity(uvs.len() * 8);
            for uv in uvs {
                uv_bytes.extend_from_slice(&uv[0].to_le_bytes());
                uv_bytes.extend_from_slice(&uv[1].to_le_bytes());
            }
            let uv_view = bin.push_view(&uv_bytes);
            let uv_accessor = accessors.len();
            accessors.push(json!({
                "bufferView": uv_view,
                "componentType": 5126,
                "count": uvs.len(),
                "type": "VEC2",
            }));
            attributes.insert("TEXCOORD_0".into(), json!(uv_accessor));
        }

        let material = materials.len();
        materials.push(json!({
            "name": format!("{room}/{category}{}", object.as_deref().map(|o| format!("/{o}")).unwrap_or_default()),
            "pbrMetallicRoughness": {
                "baseColorFactor": base_color(&sub.tags()[0]),
                "metallicFactor": 0.0,
                "roughnessFactor": 0.9,
            },
        }));

        primitives.push(json!({
            "attributes": Value::Object(attributes),
            "indices": idx_accessor,
            "material": material,
            "mode": 4,
        }));
        tag_entries.push(TagEntry {
            primitive: p,
            room: room.clone(),
            category: category.to_string(),
            object: object.clone(),
        });
    }

    let gltf = json!({
        "asset": {"version": "2.0", "generator": "worldmesh"},
        "scene": 0,
        "scenes": [{"nodes": [0]}],
        "nodes": [{"mesh": 0, "name": "scene"}],
        "meshes": [{"primitives": primitives}],
        "accessors": accessors,
        "bufferViews": bin.views,
        "buffers": [{"byteLength": bin.bytes.len()}],
        "materials": materials,
    });

    let mut json_bytes = serde_json::to_vec(&gltf).expect("glTF JSON serializes");
    while json_bytes.len() % 4 != 0 {
        json_bytes.push(b' ');
    }
    let mut bin_bytes = bin.bytes;
    while bin_bytes.len() % 4 != 0 {
        bin_bytes.push(0);
    }

    let total = 12 + 8 + json_bytes.len() + 8 + bin_bytes.len();
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(b"glTF");
    out.extend_from_slice(&2u32.to_le_bytes());
    out.extend_from_slice(&(total as u32).to_le_bytes());
    out.extend_from_slice(&(json_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(b"JSON");
    out.extend_from_slice(&json_bytes);
    out.extend_from_slice(&(bin_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(b"BIN\0");
    out.extend_from_slice(&bin_bytes);
    std::fs::write(path, out)?;

    let sidecar = serde_json::to_string_pretty(&tag_entries).expect("tag manifest serializes");
    std::fs::write(tag_sidecar_path(path), sidecar + "\n")?;
    Ok(())
}

pub fn tag_sidecar_path(glb_path: &Path) -> std::path::PathBuf {
    let mut os = glb_path.as_os_str().to_owned();
    os.push(".tags.json");
    std::path::PathBuf::from(os)
}

/// One imported primitive: triangles with welded vertices and optional UVs.
#[derive(Debug, Clone)]
pub struct GlbPrimitive {
    pub positions: Vec<P3>,
    pub triangles: Vec<[u32; 3]>,
    pub uvs: Option<Vec<[f32; 2]>>,
}

fn get_usize(v: &Value, key: &str) -> Result<usize, GlbError> {
    v.get(key)
        .and_then(Value::as_u64)
        .map(|n| n as usize)
        .ok_or_else(|| GlbError::Malformed(format!("missing integer field {key:?}")))
}

struct Reader<'a> {
    doc: &'a Value,
    bin: &'a [u8],
}

impl<'a> Reader<'a> {
    fn accessor_bytes(&self, accessor_idx: usize) -> Result<(&'a [u8], &'a Value), GlbError> {
        let accessor = self
            .doc
            .get("accessors")
            .and_then(|a| a.get(accessor_idx))
            .ok_or_else(|| GlbError::Malformed(format!("accessor {accessor_idx} missing")))?;
        if accessor.get("sparse").is_some() {
            return Err(GlbError::Unsupported("sparse accessors".into()));
        }
        let view_idx = get_usize(accessor, "bufferView")?;
        let view = self
            .doc
            .get("bufferViews")
            .and_then(|v| v.get(view_idx))
            .ok_or_else(|| GlbError::Malformed(format!("bufferView {view_idx} missing")))?;
        if view.get("byteStride").and_then(Value::as_u64).is_some_and(|s| s != 0) {
            return Err(GlbError::Unsupported("strided buffer views".into()));
        }
        let offset = view.get("byteOffset").and_then(Value::as_u64).unwrap_or(0) as usize
            + accessor.get("byteOffset").and_then(Value::as_u64).unwrap_or(0) as usize;
        let length = get_usize(view, "byteLength")?;
        let end = get_usize(view, "byteOffset").unwrap_or(0) + length;
        if end > self.bin.len() {
            return Err(GlbError::Malformed("buffer view beyond binary chunk".into()));
        }
        Ok((&self.bin[offset..end], accessor))
    }

    fn read_vec3_f32(&self, accessor_idx: usize) -> Result<Vec<[f32; 3]>, GlbError> {
        let (bytes, accessor) = self.accessor_bytes(accessor_idx)?;
        if get_usize(accessor, "componentType")? != 5126 {
            return Err(GlbError::Unsupported("non-float positions".into()));
        }
        let count = get_usize(accessor, "count")?;
        if bytes.len() < count * 12 {
            return Err(GlbError::Malformed("position data truncated".into()));
        }
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            let at = |k: usize| {
                let o = i * 12 + k * 4;
                f32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"))
            };
            out.push([at(0), at(1), at(2)]);
        }
        Ok(out)
    }

    fn read_vec2_f32(&self, accessor_idx: usize) -> Result<Vec<[f32; 2]>, GlbError> {
        let (bytes, accessor) = self.accessor_bytes(accessor_idx)?;
        if get_usize(accessor, "componentType")? != 5126 {
            return Err(GlbError::Unsupported("non-float UVs".into()));
        }
        let count = get_usize(accessor, "count")?;
        if bytes.len() < count * 8 {
            return Err(GlbError::Malformed("uv data truncated".into()));
        }
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            let at = |k: usize| {
                let o = i * 8 + k * 4;
                f32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"))
            };
            out.push([at(0), at(1)]);
        }
        Ok(out)
    }

    fn read_indices(&self, accessor_idx: usize) -> Result<Vec<u32>, GlbError> {
        let (bytes, accessor) = self.accessor_bytes(accessor_idx)?;
        let count = get_usize(accessor, "count")?;
        let component = get_usize(accessor, "componentType")?;
        let mut out = Vec::with_capacity(count);
        match component {
            5121 => {
                for i in 0..count.min(bytes.len()) {
                    out.push(bytes[i] as u32);
                }
            }
            5123 => {
                if bytes.len() < count * 2 {
                    return Err(GlbError::Malformed("index data truncated".into()));
                }
                for i in 0..count {
                    out.push(u16::from_le_bytes(bytes[i * 2..i * 2 + 2].try_into().expect("2 bytes")) as u32);
                }
            }
            5125 => {
                if bytes.len() < count * 4 {
                    return Err(GlbError::Malformed("index data truncated".into()));
                }
                for i in 0..count {
                    out.push(u32::from_le_bytes(bytes[i * 4..i * 4 + 4].try_into().expect("4 bytes")));
                }
            }
            other => return Err(GlbError::Unsupported(format!("index component type {other}"))),
        }
        if out.len() != count {
            return Err(GlbError::Malformed("index data truncated".into()));
        }
        Ok(out)
    }
}

/// Splits a GLB file into its JSON document and binary chunk.
fn read_chunks(bytes: &[u8]) -> Result<(Value, &[u8]), GlbError> {
    if bytes.len() < 12 || &bytes[0..4] != b"glTF" {
        return Err(GlbError::Malformed("missing glTF magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != 2 {
        return Err(GlbError::Unsupported(format!("glTF version {version}")));
    }
    let mut offset = 12;
    let mut doc: Option<Value> = None;
    let mut bin: &[u8] = &[];
    while offset + 8 <= bytes.len() {
        let len = u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes")) as usize;
        let kind = &bytes[offset + 4..offset + 8];
        let start = offset + 8;
        let end = start + len;
        if end > bytes.len() {
            return Err(GlbError::Malformed("chunk extends past end of file".into()));
        }
        match kind {
            b"JSON" => {
                doc = Some(
                    serde_json::from_slice(&bytes[start..end])
                        .map_err(|e| GlbError::Malformed(format!("bad JSON chunk: {e}")))?,
                );
            }
            b"BIN\0" => bin = &bytes[start..end],
            _ => {}
        }
        offset = end + (align4(end) - end);
    }
    let doc = doc.ok_or_else(|| GlbError::Malformed("no JSON chunk".into()))?;
    if let Some(buffers) = doc.get("buffers").and_then(Value::as_array) {
        if buffers.iter().any(|b| b.get("uri").is_some()) {
            return Err(GlbError::Unsupported("external buffer uri".into()));
        }
    }
    Ok((doc, bin))
}

/// Reads every triangle primitive in the file, welding exactly equal
/// (position, uv) vertices within each primitive.
pub fn read_glb(path: &Path) -> Result<Vec<GlbPrimitive>, GlbError> {
    let bytes = std::fs::read(path)?;
    let (doc, bin) = read_chunks(&bytes)?;
    let reader = Reader { doc: &doc, bin };
    let meshes = doc
        .get("meshes")
        .and_then(Value::as_array)
        .ok_or_else(|| GlbError::Malformed("no meshes".into()))?;
    let mut out = Vec::new();
    for mesh in meshes {
        let prims = mesh
            .get("primitives")
            .and_then(Value::as_array)
            .ok_or_else(|| GlbError::Malformed("mesh without primitives".into()))?;
        for prim in prims {
            if prim.get("mode").and_then(Value::as_u64).unwrap_or(4) != 4 {
                return Err(GlbError::Unsupported("non-triangle primitive mode".into()));
            }
            let attrs = prim
                .get("attributes")
                .ok_or_else(|| GlbError::Malformed("primitive without attributes".into()))?;
            let pos_accessor = get_usize(attrs, "POSITION")?;
            let raw_positions = reader.read_vec3_f32(pos_accessor)?;
            let raw_uvs = match attrs.get("TEXCOORD_0").and_then(Value::as_u64) {
                Some(a) => Some(reader.read_vec2_f32(a as usize)?),
                None => None,
            };
            let raw_indices = match prim.get("indices").and_then(Value::as_u64) {
                Some(a) => reader.read_indices(a as usize)?,
                None => (0..raw_positions.len() as u32).collect(),
            };
            if raw_indices.len() % 3 != 0 {
                return Err(GlbError::Malformed("index count not divisible by 3".into()));
            }

            // Weld exactly-equal vertices so re-imports are index-canonical.
            let mut weld: BTreeMap<([u32; 3], Option<[u32; 2]>), u32> = BTreeMap::new();
            let mut remap = Vec::with_capacity(raw_positions.len());
            let mut positions = Vec::new();
            let mut uvs: Option<Vec<[f32; 2]>> = raw_uvs.as_ref().map(|_| Vec::new());
            for (i, p) in raw_positions.iter().enumerate() {
                let uv = raw_uvs.as_ref().map(|u| u[i]);
                let key = (p.map(f32::to_bits), uv.map(|u| u.map(f32::to_bits)));
                let next = positions.len() as u32;
                let idx = *weld.entry(key).or_insert_with(|| {
                    positions.push(P3::new(p[0] as f64, p[1] as f64, p[2] as f64));
                    if let (Some(list), Some(uv)) = (uvs.as_mut(), uv) {
                        list.push(uv);
                    }
                    next
                });
                remap.push(idx);
            }
            let mut triangles = Vec::with_capacity(raw_indices.len() / 3);
            for t in raw_indices.chunks_exact(3) {
                let fetch = |i: u32| -> Result<u32, GlbError> {
                    remap
                        .get(i as usize)
                        .copied()
                        .ok_or_else(|| GlbError::Malformed(format!("index {i} out of range")))
                };
                triangles.push([fetch(t[0])?, fetch(t[1])?, fetch(t[2])?]);
            }
            out.push(GlbPrimitive { positions, triangles, uvs });
        }
    }
    Ok(out)
}

/// Reloads a mesh written by [`export_glb`], restoring tags from the
/// sidecar manifest.
pub fn read_glb_with_tags(path: &Path) -> Result<TriMesh, GlbError> {
    let primitives = read_glb(path)?;
    let sidecar = std::fs::read_to_string(tag_sidecar_path(path))?;
    let entries: Vec<TagEntry> =
        serde_json::from_str(&sidecar).map_err(|e| GlbError::Malformed(format!("bad tag manifest: {e}")))?;
    if entries.len() != primitives.len() {
        return Err(GlbError::Malformed(format!(
            "tag manifest covers {} primitives, file has {}",
            entries.len(),
            primitives.len()
        )));
    }
    let mut mesh = TriMesh::empty();
    for (prim, entry) in primitives.iter().zip(&entries) {
        let category = Category::parse(&entry.category)
            .ok_or_else(|| GlbError::Malformed(format!("unknown category {:?}", entry.category)))?;
        let tag = match (&entry.object, category) {
            (Some(object), Category::Object) => FaceTag::object(&entry.room, object),
            (None, cat) => FaceTag::structural(&entry.room, cat),
            (Some(_), _) => {
                return Err(GlbError::Malformed("object id on a structural primitive".into()));
            }
        };
        let tags = vec![tag; prim.triangles.len()];
        let part = match &prim.uvs {
            Some(uvs) => {
                TriMesh::with_uvs(prim.positions.clone(), prim.triangles.clone(), tags, Some(uvs.clone()))?
            }
            None => TriMesh::new(prim.positions.clone(), prim.triangles.clone(), tags)?,
        };
        mesh.append(&part);
    }
    Ok(mesh)
}
