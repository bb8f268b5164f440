//! Adapter boundaries to the generative components.
//!
//! Everything that would normally call a model (layout proposals, image
//! synthesis, monocular depth, object reconstruction) goes through one of
//! these traits. Deterministic mocks cover offline runs and tests; command
//! adapters speak a file-directory contract so external tools can be wired
//! in without linking anything.

use crate::geom::GeomError;
use crate::render::DepthMap;
use image::RgbImage;
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("adapter io: {0}")]
    Io(#[from] std::io::Error),
    #[error("adapter returned malformed data: {0}")]
    Malformed(String),
    #[error("adapter exhausted its scripted responses after {0}")]
    Exhausted(usize),
    #[error("adapter command {cmd:?} failed with status {status}")]
    CommandFailed { cmd: String, status: i32 },
    #[error("no stored response for request {0}")]
    NoResponse(String),
    #[error("adapter returned {got_w}x{got_h}, expected {want_w}x{want_h}")]
    DimensionMismatch { got_w: u32, got_h: u32, want_w: u32, want_h: u32 },
    #[error(transparent)]
    Geom(#[from] GeomError),
}

/// Proposes layout documents for a theme prompt.
pub trait LayoutProvider {
    fn propose_layout(&mut self, prompt: &str) -> Result<String, AdapterError>;
}

/// Replays a fixed list of documents, in order.
pub struct ScriptedLayoutProvider {
    docs: Vec<String>,
    next: usize,
}

impl ScriptedLayoutProvider {
    pub fn new(docs: Vec<String>) -> Self {
        Self { docs, next: 0 }
    }
}

impl LayoutProvider for ScriptedLayoutProvider {
    fn propose_layout(&mut self, _prompt: &str) -> Result<String, AdapterError> {
        let i = self.next;
        self.next += 1;
        self.docs
            .get(i)
            .cloned()
            .ok_or(AdapterError::Exhausted(self.docs.len()))
    }
}

/// Reads layout documents from a directory in file-name order.
pub struct DirLayoutProvider {
    files: Vec<PathBuf>,
    next: usize,
}

impl DirLayoutProvider {
    pub fn new(dir: &Path) -> Result<Self, AdapterError> {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().map_or(false, |x| x == "json"))
            .collect();
        files.sort();
        Ok(Self { files, next: 0 })
    }
}

impl LayoutProvider for DirLayoutProvider {
    fn propose_layout(&mut self, _prompt: &str) -> Result<String, AdapterError> {
        let i = self.next;
        self.next += 1;
        match self.files.get(i) {
            Some(p) => Ok(std::fs::read_to_string(p)?),
            None => Err(AdapterError::Exhausted(self.files.len())),
        }
    }
}

/// Invokes a command with the prompt on stdin; stdout is the document.
pub struct CommandLayoutProvider {
    pub cmd: String,
}

impl LayoutProvider for CommandLayoutProvider {
    fn propose_layout(&mut self, prompt: &str) -> Result<String, AdapterError> {
        use std::io::Write;
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.cmd)
            .stdin(std::process::Stdio::piped())
            .stdout(std::process::Stdio::piped())
            .spawn()?;
        child.stdin.as_mut().expect("piped stdin").write_all(prompt.as_bytes())?;
        let out = child.wait_with_output()?;
        if !out.status.success() {
            return Err(AdapterError::CommandFailed {
                cmd: self.cmd.clone(),
                status: out.status.code().unwrap_or(-1),
            });
        }
        String::from_utf8(out.stdout).map_err(|e| AdapterError::Malformed(e.to_string()))
    }
}

/// One synthesis request: the condition render, an optional style reference,
/// and the filled prompt. Seed and attempt let generators vary retries.
pub struct ImageRequest<'a> {
    pub condition: &'a RgbImage,
    pub style: Option<&'a RgbImage>,
    pub prompt: &'a str,
    pub camera_id: &'a str,
    pub seed: u64,
    pub attempt: u32,
}

pub trait ImageGenerator {
    fn generate(&mut self, req: &ImageRequest) -> Result<RgbImage, AdapterError>;
}

/// Returns the condition image unchanged. The offline default: fully
/// deterministic and dimensionally exact.
pub struct EchoImageGenerator;

impl ImageGenerator for EchoImageGenerator {
    fn generate(&mut self, req: &ImageRequest) -> Result<RgbImage, AdapterError> {
        Ok(req.condition.clone())
    }
}

/// Serves pre-rendered images from a directory in file-name order.
pub struct DirImageGenerator {
    files: Vec<PathBuf>,
    next: usize,
}

impl DirImageGenerator {
    pub fn new(dir: &Path) -> Result<Self, AdapterError> {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().map_or(false, |x| x == "png"))
            .collect();
        files.sort();
        Ok(Self { files, next: 0 })
    }
}

impl ImageGenerator for DirImageGenerator {
    fn generate(&mut self, req: &ImageRequest) -> Result<RgbImage, AdapterError> {
        let i = self.next;
        self.next += 1;
        let path = self.files.get(i).ok_or(AdapterError::Exhausted(self.files.len()))?;
        let img = crate::imgio::read_rgb_png(path).map_err(|e| AdapterError::Malformed(e.to_string()))?;
        if img.width() != req.condition.width() || img.height() != req.condition.height() {
            return Err(AdapterError::DimensionMismatch {
                got_w: img.width(),
                got_h: img.height(),
                want_w: req.condition.width(),
                want_h: req.condition.height(),
            });
        }
        Ok(img)
    }
}

/// File-directory command contract: for each request a fresh directory is
/// populated with condition.png, style.png (when present) and prompt.txt;
/// the command is invoked as `<cmd> <request_dir> <response_png>` and must
/// write the generated image to the response path.
pub struct CommandImageGenerator {
    pub cmd: String,
    pub workdir: PathBuf,
    counter: u64,
}

impl CommandImageGenerator {
    pub fn new(cmd: String, workdir: PathBuf) -> Self {
        Self { cmd, workdir, counter: 0 }
    }
}

impl ImageGenerator for CommandImageGenerator {
    fn generate(&mut self, req: &ImageRequest) -> Result<RgbImage, AdapterError> {
        self.counter += 1;
        let dir = self.workdir.join(format!("req_{:06}_{}", self.counter, req.attempt));
        std::fs::create_dir_all(&dir)?;
        crate::imgio::write_rgb_png(&dir.join("condition.png"), req.condition)
            .map_err(|e| AdapterError::Malformed(e.to_string()))?;
        if let Some(style) = req.style {
            crate::imgio::write_rgb_png(&dir.join("style.png"), style)
                .map_err(|e| AdapterError::Malformed(e.to_string()))?;
        }
        std::fs::write(dir.join("prompt.txt"), req.prompt)?;
        std::fs::write(dir.join("seed.txt"), format!("{} {}", req.seed, req.attempt))?;
        let response = dir.join("response.png");
        let status = Command::new("sh")
            .arg("-c")
            .arg(format!("{} {} {}", self.cmd, dir.display(), response.display()))
            .status()?;
        if !status.success() {
            return Err(AdapterError::CommandFailed {
                cmd: self.cmd.clone(),
                status: status.code().unwrap_or(-1),
            });
        }
        let img = crate::imgio::read_rgb_png(&response)
            .map_err(|e| AdapterError::Malformed(e.to_string()))?;
        if img.width() != req.condition.width() || img.height() != req.condition.height() {
            return Err(AdapterError::DimensionMismatch {
                got_w: img.width(),
                got_h: img.height(),
                want_w: req.condition.width(),
                want_h: req.condition.height(),
            });
        }
        Ok(img)
    }
}

pub trait DepthEstimator {
    fn estimate(&mut self, image: &RgbImage) -> Result<DepthMap, AdapterError>;
}

fn image_key(image: &RgbImage) -> [u8; 32] {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(image.width().to_le_bytes());
    h.update(image.height().to_le_bytes());
    h.update(image.as_raw());
    h.finalize().into()
}

/// Returns depth maps previously stored under the exact pixel content of the
/// query image. Used to echo scaffold depth back during offline runs.
#[derive(Default)]
pub struct StoredDepthEstimator {
    maps: HashMap<[u8; 32], DepthMap>,
}

impl StoredDepthEstimator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn store(&mut self, image: &RgbImage, depth: DepthMap) {
        self.maps.insert(image_key(image), depth);
    }
}

impl DepthEstimator for StoredDepthEstimator {
    fn estimate(&mut self, image: &RgbImage) -> Result<DepthMap, AdapterError> {
        self.maps
            .get(&image_key(image))
            .cloned()
            .ok_or_else(|| AdapterError::NoResponse(format!("image {:02x?}", &image_key(image)[..4])))
    }
}

/// Constant depth everywhere: edge-free, so verification always fails.
pub struct ConstantDepthEstimator {
    pub value: f32,
}

impl DepthEstimator for ConstantDepthEstimator {
    fn estimate(&mut self, image: &RgbImage) -> Result<DepthMap, AdapterError> {
        Ok(DepthMap::constant(image.width() as usize, image.height() as usize, self.value))
    }
}

/// Command contract: `<cmd> <image_png> <depth_out>`; the output is the raw
/// f32 depth format from [`crate::imgio`].
pub struct CommandDepthEstimator {
    pub cmd: String,
    pub workdir: PathBuf,
    counter: u64,
}

impl CommandDepthEstimator {
    pub fn new(cmd: String, workdir: PathBuf) -> Self {
        Self { cmd, workdir, counter: 0 }
    }
}

impl DepthEstimator for CommandDepthEstimator {
    fn estimate(&mut self, image: &RgbImage) -> Result<DepthMap, AdapterError> {
        self.counter += 1;
        std::fs::create_dir_all(&self.workdir)?;
        let img_path = self.workdir.join(format!("depth_req_{:06}.png", self.counter));
        let out_path = self.workdir.join(format!("depth_resp_{:06}.f32d", self.counter));
        crate::imgio::write_rgb_png(&img_path, image)
            .map_err(|e| AdapterError::Malformed(e.to_string()))?;
        let status = Command::new("sh")
            .arg("-c")
            .arg(format!("{} {} {}", self.cmd, img_path.display(), out_path.display()))
            .status()?;
        if !status.success() {
            return Err(AdapterError::CommandFailed {
                cmd: self.cmd.clone(),
                status: status.code().unwrap_or(-1),
            });
        }
        let depth = crate::imgio::read_depth_f32(&out_path)
            .map_err(|e| AdapterError::Malformed(e.to_string()))?;
        if depth.width() != image.width() as usize || depth.height() != image.height() as usize {
            return Err(AdapterError::DimensionMismatch {
                got_w: depth.width() as u32,
                got_h: depth.height() as u32,
                want_w: image.width(),
                want_h: image.height(),
            });
        }
        Ok(depth)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_provider_in_order_then_exhausts() {
        let mut p = ScriptedLayoutProvider::new(vec!["a".into(), "b".into()]);
        assert_eq!(p.propose_layout("x").unwrap(), "a");
        assert_eq!(p.propose_layout("x").unwrap(), "b");
        assert!(matches!(p.propose_layout("x"), Err(AdapterError::Exhausted(2))));
    }

    #[test]
    fn stored_depth_round_trip() {
        let img = RgbImage::from_pixel(4, 2, image::Rgb([7, 8, 9]));
        let mut est = StoredDepthEstimator::new();
        est.store(&img, DepthMap::constant(4, 2, 3.5));
        let d = est.estimate(&img).unwrap();
        assert_eq!(d.get(3, 1), Some(3.5));
        let other = RgbImage::from_pixel(4, 2, image::Rgb([1, 1, 1]));
        assert!(est.estimate(&other).is_err());
    }
}
