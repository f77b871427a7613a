//! In-memory images and depth maps with their file formats.
//!
//! Colour images are 8-bit RGB PNG. Depth maps use a raw container: the
//! magic `SVDP`, then width, height and plane count as `u32` LE, then each
//! plane as `width·height` `f32` LE values in row-major order. Plane 0 is
//! the expected depth, plane 1 the opacity.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major RGB image with interleaved channels in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}x{height} RGB image",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Channel-mean grayscale, row-major.
    pub fn grayscale(&self) -> Vec<f64> {
        self.data.chunks_exact(3).map(|p| (p[0] + p[1] + p[2]) / 3.0).collect()
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|v| quantize(*v)).collect()
    }
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Expected depth and opacity per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    pub opacity: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            depth: vec![0.0; width * height],
            opacity: vec![0.0; width * height],
        }
    }
}

fn png_err(e: impl std::fmt::Display) -> Error {
    Error::Png(e.to_string())
}

fn encode_png(w: impl Write, width: usize, height: usize, color: png::ColorType, data: &[u8]) -> Result<()> {
    let mut enc = png::Encoder::new(w, width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(png_err)?;
    writer.write_image_data(data).map_err(png_err)?;
    writer.finish().map_err(png_err)
}

pub fn write_png(path: &Path, image: &Image) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    encode_png(file, image.width, image.height, png::ColorType::Rgb, &image.to_rgb8())
}

/// Reads any 8- or 16-bit PNG, converting to RGB in `[0, 1]`.
pub fn read_png(path: &Path) -> Result<Image> {
    let mut decoder = png::Decoder::new(BufReader::new(File::open(path)?));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(png_err)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Png("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = info.color_type.samples();
    let mut data = Vec::with_capacity(w * h * 3);
    for row in buf[..info.buffer_size()].chunks_exact(info.line_size) {
        for px in row[..w * channels].chunks_exact(channels) {
            let rgb = match channels {
                1 | 2 => [px[0]; 3],
                _ => [px[0], px[1], px[2]],
            };
            data.extend(rgb.iter().map(|v| *v as f64 / 255.0));
        }
    }
    Image::from_data(w, h, data)
}

const DEPTH_MAGIC: &[u8; 4] = b"SVDP";

pub fn write_depth(path: &Path, map: &DepthMap) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(DEPTH_MAGIC)?;
    for v in [map.width as u32, map.height as u32, 2] {
        w.write_all(&v.to_le_bytes())?;
    }
    for plane in [&map.depth, &map.opacity] {
        for v in plane.iter() {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_depth(path: &Path) -> Result<DepthMap> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[..4] != DEPTH_MAGIC {
        return Err(Error::invalid("depth file", "missing SVDP header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (width, height, planes) = (word(4), word(8), word(12));
    let n = width * height;
    if planes != 2 || bytes.len() != 16 + 4 * n * planes {
        return Err(Error::invalid("depth file", "payload does not match header"));
    }
    let plane = |p: usize| -> Vec<f64> {
        bytes[16 + 4 * n * p..16 + 4 * n * (p + 1)]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect()
    };
    Ok(DepthMap {
        width,
        height,
        depth: plane(0),
        opacity: plane(1),
    })
}

/// Grayscale preview: near is bright, far is dark, pixels with opacity
/// below 0.5 are black. Returns the depth range mapped to `[1, 0]`.
pub fn write_depth_preview(path: &Path, map: &DepthMap) -> Result<(f64, f64)> {
    let visible = || {
        map.depth
            .iter()
            .zip(&map.opacity)
            .filter(|(_, o)| **o >= 0.5)
            .map(|(d, _)| *d)
    };
    let lo = visible().fold(f64::INFINITY, f64::min);
    let hi = visible().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 0.0) };
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pixels: Vec<u8> = map
        .depth
        .iter()
        .zip(&map.opacity)
        .map(|(d, o)| {
            if *o >= 0.5 {
                quantize(1.0 - 0.8 * (d - lo) / span)
            } else {
                0
            }
        })
        .collect();
    let file = BufWriter::new(File::create(path)?);
    encode_png(file, map.width, map.height, png::ColorType::Grayscale, &pixels)?;
    Ok((lo, hi))
}
