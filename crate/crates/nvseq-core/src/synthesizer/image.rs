//! Grayscale frame images and binary PGM I/O.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major grayscale raster with intensities in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct FrameImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl FrameImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::ShapeMismatch {
                context: "FrameImage::new",
                left: vec![width, height],
                right: vec![pixels.len()],
            });
        }
        if !pixels.iter().all(|p| p.is_finite() && (0.0..=1.0).contains(p)) {
            return Err(Error::Data("FrameImage pixels must lie in [0,1]".into()));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0.0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.pixels[y * self.width + x] = v.clamp(0.0, 1.0);
    }

    /// Clamps a raw buffer into a valid image.
    pub fn from_raw_clamped(width: usize, height: usize, raw: &[f64]) -> Result<Self> {
        if raw.len() != width * height {
            return Err(Error::ShapeMismatch {
                context: "FrameImage::from_raw_clamped",
                left: vec![width, height],
                right: vec![raw.len()],
            });
        }
        let pixels = raw.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(Self {
            width,
            height,
            pixels,
        })
    }
}

/// Writes binary PGM ("P5", maxval 255).
pub fn write_pgm(img: &FrameImage, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(img.pixels.len() + 32);
    write!(out, "P5\n{} {}\n255\n", img.width, img.height)?;
    out.extend(img.pixels.iter().map(|&v| (v * 255.0).round() as u8));
    fs::write(path, out)?;
    Ok(())
}

pub fn read_pgm(path: &Path) -> Result<FrameImage> {
    let bytes = fs::read(path)?;
    let header_err = |msg: &str| Error::Data(format!("{}: {msg}", path.display()));
    // P5 <ws> width <ws> height <ws> maxval <single ws> data
    let mut fields = Vec::new();
    let mut pos = 0usize;
    while fields.len() < 4 && pos < bytes.len() {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| header_err("bad header"))?);
    }
    if fields.len() != 4 || fields[0] != "P5" {
        return Err(header_err("expected binary PGM (P5)"));
    }
    let width: usize = fields[1].parse().map_err(|_| header_err("bad width"))?;
    let height: usize = fields[2].parse().map_err(|_| header_err("bad height"))?;
    let maxval: usize = fields[3].parse().map_err(|_| header_err("bad maxval"))?;
    if maxval != 255 {
        return Err(header_err("maxval must be 255"));
    }
    pos += 1; // the single whitespace after maxval
    let data = &bytes[pos..];
    if data.len() != width * height {
        return Err(header_err("pixel data length mismatch"));
    }
    let pixels = data.iter().map(|&b| b as f64 / 255.0).collect();
    FrameImage::new(width, height, pixels)
}

/// Writes a frame sequence as `frame_%05d.pgm` plus an `index.txt` listing
/// the frame order with the fps on the first line.
pub fn write_sequence(frames: &[FrameImage], fps: f64, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut index = format!("fps={fps}\n");
    for (i, frame) in frames.iter().enumerate() {
        let name = format!("frame_{i:05}.pgm");
        write_pgm(frame, &dir.join(&name))?;
        index.push_str(&name);
        index.push('\n');
    }
    fs::write(dir.join("index.txt"), index)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_roundtrip_is_quantization_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        let img = FrameImage::new(
            3,
            2,
            vec![0.0, 0.5, 1.0, 0.25, 0.75, 0.125],
        )
        .unwrap();
        write_pgm(&img, &path).unwrap();
        let back = read_pgm(&path).unwrap();
        assert_eq!(back.width(), 3);
        assert_eq!(back.height(), 2);
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
        // a second write-read cycle is bit-stable
        let path2 = dir.path().join("b.pgm");
        write_pgm(&back, &path2).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        assert!(FrameImage::new(1, 1, vec![1.5]).is_err());
        assert!(FrameImage::new(1, 1, vec![-0.1]).is_err());
        assert!(FrameImage::new(2, 1, vec![0.5]).is_err());
    }

    #[test]
    fn sequence_writes_index() {
        let dir = tempfile::tempdir().unwrap();
        let frames = vec![FrameImage::zeros(4, 4), FrameImage::zeros(4, 4)];
        write_sequence(&frames, 25.0, dir.path()).unwrap();
        let index = fs::read_to_string(dir.path().join("index.txt")).unwrap();
        assert_eq!(index, "fps=25\nframe_00000.pgm\nframe_00001.pgm\n");
        assert!(dir.path().join("frame_00001.pgm").exists());
    }
}
