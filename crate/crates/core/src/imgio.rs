//! Image and depth-map file I/O plus content hashing.
//!
//! PNG handles color and preview output; depth maps use a tiny raw format
//! (`F32D` magic, little-endian dimensions, row-major f32 values) so that
//! no-hit sentinels and full precision survive a round trip.

use crate::render::DepthMap;
use image::{GrayImage, RgbImage};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImgError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
    #[error("bad file format: {0}")]
    Format(String),
}

const DEPTH_MAGIC: &[u8; 4] = b"F32D";

pub fn write_rgb_png(path: &Path, img: &RgbImage) -> Result<(), ImgError> {
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn read_rgb_png(path: &Path) -> Result<RgbImage, ImgError> {
    Ok(image::open(path)?.to_rgb8())
}

pub fn write_gray_png(path: &Path, img: &GrayImage) -> Result<(), ImgError> {
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn read_gray_png(path: &Path) -> Result<GrayImage, ImgError> {
    Ok(image::open(path)?.to_luma8())
}

pub fn write_depth_f32(path: &Path, depth: &DepthMap) -> Result<(), ImgError> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(DEPTH_MAGIC)?;
    w.write_all(&(depth.width() as u32).to_le_bytes())?;
    w.write_all(&(depth.height() as u32).to_le_bytes())?;
    for v in depth.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_depth_f32(path: &Path) -> Result<DepthMap, ImgError> {
    let file = std::fs::File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DEPTH_MAGIC {
        return Err(ImgError::Format(format!("bad magic {magic:?}")));
    }
    let mut n = [0u8; 4];
    r.read_exact(&mut n)?;
    let width = u32::from_le_bytes(n) as usize;
    r.read_exact(&mut n)?;
    let height = u32::from_le_bytes(n) as usize;
    let count = width
        .checked_mul(height)
        .ok_or_else(|| ImgError::Format("dimension overflow".into()))?;
    let mut data = vec![0f32; count];
    let mut buf = [0u8; 4];
    for v in data.iter_mut() {
        r.read_exact(&mut buf)?;
        *v = f32::from_le_bytes(buf);
    }
    DepthMap::from_data(width, height, data)
        .ok_or_else(|| ImgError::Format("dimension/data mismatch".into()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        use std::fmt::Write as _;
        let _ = write!(s, "{b:02x}");
    }
    s
}

pub fn sha256_file(path: &Path) -> Result<String, ImgError> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_round_trip_preserves_values_and_no_hit() {
        let dir = tempfile::tempdir().unwrap();
        let mut d = DepthMap::new(3, 2);
        d.set(0, 0, 1.25);
        d.set(2, 1, 9.5);
        let path = dir.path().join("d.f32d");
        write_depth_f32(&path, &d).unwrap();
        let back = read_depth_f32(&path).unwrap();
        assert_eq!(back.width(), 3);
        assert_eq!(back.height(), 2);
        assert_eq!(back.get(0, 0), Some(1.25));
        assert_eq!(back.get(2, 1), Some(9.5));
        assert!(back.get(1, 0).unwrap().is_infinite());
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = RgbImage::from_fn(5, 4, |x, y| image::Rgb([x as u8, y as u8, 200]));
        let path = dir.path().join("i.png");
        write_rgb_png(&path, &img).unwrap();
        let back = read_rgb_png(&path).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn sha256_known_value() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
