//! Square conductivity images on [−1,1]² and the EITIMG interchange format:
//! a JSON header next to a raw little-endian f32 payload, row-major with row 0
//! at y = +1 (top) and column 0 at x = −1.

use crate::error::{EitError, Result};
use crate::io::write_atomic;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const IMAGE_SIZE: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct ConductivityImage {
    pub size: usize,
    /// Row-major, S/m.
    pub values: Vec<f64>,
}

impl ConductivityImage {
    pub fn constant(size: usize, value: f64) -> Self {
        Self { size, values: vec![value; size * size] }
    }

    pub fn from_values(size: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != size * size {
            return Err(EitError::DimensionMismatch(format!("{} values for {size}x{size}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EitError::InvalidArgument("image values must be finite".into()));
        }
        Ok(Self { size, values })
    }

    /// Pixel spacing h_z = 2/(size − 1).
    pub fn step(&self) -> f64 {
        2.0 / (self.size - 1) as f64
    }

    pub fn pixel_center(&self, row: usize, col: usize) -> [f64; 2] {
        let h = self.step();
        [-1.0 + col as f64 * h, 1.0 - row as f64 * h]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.size + col]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Sum of absolute forward differences (anisotropic total variation).
    pub fn total_variation(&self) -> f64 {
        let n = self.size;
        let mut tv = 0.0;
        for r in 0..n {
            for c in 0..n {
                if c + 1 < n {
                    tv += (self.get(r, c + 1) - self.get(r, c)).abs();
                }
                if r + 1 < n {
                    tv += (self.get(r + 1, c) - self.get(r, c)).abs();
                }
            }
        }
        tv
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridExtent {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EitimgHeader {
    pub width: usize,
    pub height: usize,
    pub dtype: String,
    pub grid: GridExtent,
    pub units: String,
    /// Payload file name, relative to the header's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
}

/// Default payload location: the header path with extension `.f32`.
pub fn payload_path(header: &Path) -> PathBuf {
    header.with_extension("f32")
}

pub fn write_eitimg(img: &ConductivityImage, header_path: &Path) -> Result<()> {
    let payload = payload_path(header_path);
    let header = EitimgHeader {
        width: img.size,
        height: img.size,
        dtype: "f32le".into(),
        grid: GridExtent { xmin: -1.0, xmax: 1.0, ymin: -1.0, ymax: 1.0 },
        units: "S/m".into(),
        payload: payload.file_name().map(|n| n.to_string_lossy().into_owned()),
    };
    let bytes: Vec<u8> = img.values.iter().flat_map(|v| (*v as f32).to_le_bytes()).collect();
    write_atomic(&payload, &bytes)?;
    let mut json = serde_json::to_string_pretty(&header)?;
    json.push('\n');
    write_atomic(header_path, json.as_bytes())
}

pub fn read_eitimg(header_path: &Path) -> Result<ConductivityImage> {
    let header: EitimgHeader = serde_json::from_str(&std::fs::read_to_string(header_path)?)?;
    if header.dtype != "f32le" {
        return Err(EitError::Format(format!("unsupported dtype {:?}", header.dtype)));
    }
    if header.width != header.height || header.width < 2 {
        return Err(EitError::Format("only square images are supported".into()));
    }
    let payload = match &header.payload {
        Some(name) => header_path.parent().unwrap_or(Path::new(".")).join(name),
        None => payload_path(header_path),
    };
    let bytes = std::fs::read(&payload)?;
    let n = header.width * header.height;
    if bytes.len() != 4 * n {
        return Err(EitError::Format(format!("payload has {} bytes, expected {}", bytes.len(), 4 * n)));
    }
    let values = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
    ConductivityImage::from_values(header.width, values)
        .map_err(|e| EitError::Format(format!("{}: {e}", header_path.display())))
}

/// Greyscale PNG, linearly stretched between the image min and max. With
/// `clip_disc`, pixels outside the unit disc are painted black.
pub fn render_png(img: &ConductivityImage, path: &Path, clip_disc: bool) -> Result<()> {
    let (lo, hi) = (img.min(), img.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let n = img.size as u32;
    let buf = ::image::GrayImage::from_fn(n, n, |x, y| {
        let (r, c) = (y as usize, x as usize);
        let p = img.pixel_center(r, c);
        if clip_disc && p[0].hypot(p[1]) > 1.0 {
            return ::image::Luma([0u8]);
        }
        let v = ((img.get(r, c) - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8;
        ::image::Luma([v])
    });
    let mut bytes = Vec::new();
    buf.write_to(&mut std::io::Cursor::new(&mut bytes), ::image::ImageFormat::Png)
        .map_err(|e| EitError::Image(e.to_string()))?;
    write_atomic(path, &bytes)
}
