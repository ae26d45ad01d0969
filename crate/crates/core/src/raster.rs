//! Core raster value types (RGB images, binary masks, pixel boxes) and
//! PNG/JPEG decode plus PNG encode.
//!
//! Every other module operates on these types. All of them are plain
//! immutable values after construction and safe to share across workers.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from image file decode/encode.
#[derive(Debug, Error)]
pub enum RasterError {
    #[error("file not found: {path}")]
    FileNotFound { path: PathBuf },
    #[error("failed to decode {path}: {source}")]
    Decode {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Row-major 8-bit RGB raster. Pixel data is stored as a flat
/// `[r, g, b, r, g, b, ...]` buffer of length `width * height * 3`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl RgbImage {
    /// Builds an image from a raw RGB buffer. Panics if the buffer length
    /// does not equal `width * height * 3` or a dimension is zero.
    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be >= 1");
        assert_eq!(
            data.len(),
            width as usize * height as usize * 3,
            "pixel buffer length must be width * height * 3"
        );
        Self {
            width,
            height,
            data,
        }
    }

    /// Solid-color image.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for _ in 0..width as usize * height as usize {
            data.extend_from_slice(&rgb);
        }
        Self::from_raw(width, height, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = self.index(x, y);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = self.index(x, y);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Raw row-major RGB bytes.
    pub fn raw(&self) -> &[u8] {
        &self.data
    }

    fn index(&self, x: u32, y: u32) -> usize {
        assert!(x < self.width && y < self.height, "pixel out of bounds");
        (y as usize * self.width as usize + x as usize) * 3
    }
}

/// Per-pixel boolean raster, row-major, same dimensions as the image it
/// was derived from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    /// All-false mask.
    pub fn new(width: u32, height: u32) -> Self {
        assert!(width >= 1 && height >= 1, "mask dimensions must be >= 1");
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width as usize * height as usize);
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[self.index(x, y)]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let i = self.index(x, y);
        self.bits[i] = value;
    }

    /// Number of true bits.
    pub fn count_true(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Sets every bit inside `bx` (clipped to the mask extent) to true.
    pub fn fill_box(&mut self, bx: &PixelBox) {
        let x_end = bx.x_max.min(self.width);
        let y_end = bx.y_max.min(self.height);
        for y in bx.y_min..y_end {
            for x in bx.x_min..x_end {
                let i = self.index(x, y);
                self.bits[i] = true;
            }
        }
    }

    /// In-place union with another mask of identical dimensions.
    pub fn union_with(&mut self, other: &BinaryMask) {
        assert_eq!((self.width, self.height), (other.width, other.height));
        for (a, b) in self.bits.iter_mut().zip(other.bits.iter()) {
            *a |= *b;
        }
    }

    fn index(&self, x: u32, y: u32) -> usize {
        assert!(x < self.width && y < self.height, "bit out of bounds");
        y as usize * self.width as usize + x as usize
    }
}

/// Axis-aligned box in pixel coordinates, inclusive min / exclusive max.
/// `width = x_max - x_min`, so a single pixel at (3,4) is (3,4,4,5).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl PixelBox {
    /// Panics unless `x_min < x_max` and `y_min < y_max`.
    pub fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Self {
        assert!(x_min < x_max && y_min < y_max, "degenerate pixel box");
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn width(&self) -> u32 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> u32 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    /// True when the box lies fully inside a `width x height` raster.
    pub fn fits_in(&self, width: u32, height: u32) -> bool {
        self.x_max <= width && self.y_max <= height
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }
}

/// Intersection-over-union of two boxes; 0 when disjoint, 1 when identical.
pub fn iou(a: &PixelBox, b: &PixelBox) -> f64 {
    let ix_min = a.x_min.max(b.x_min);
    let iy_min = a.y_min.max(b.y_min);
    let ix_max = a.x_max.min(b.x_max);
    let iy_max = a.y_max.min(b.y_max);
    if ix_min >= ix_max || iy_min >= iy_max {
        return 0.0;
    }
    let inter = (ix_max - ix_min) as u64 * (iy_max - iy_min) as u64;
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

/// Decodes a PNG or JPEG file into an `RgbImage` at its native dimensions.
pub fn load_image(path: &Path) -> Result<RgbImage, RasterError> {
    if !path.exists() {
        return Err(RasterError::FileNotFound {
            path: path.to_path_buf(),
        });
    }
    let decoded = image::open(path).map_err(|source| RasterError::Decode {
        path: path.to_path_buf(),
        source,
    })?;
    let rgb = decoded.into_rgb8();
    let (width, height) = rgb.dimensions();
    Ok(RgbImage::from_raw(width, height, rgb.into_raw()))
}

/// Encodes an image as PNG. Lossless: `load_image` of the written file
/// reproduces the input bit-exactly.
pub fn save_image(img: &RgbImage, path: &Path) -> Result<(), RasterError> {
    image::save_buffer(
        path,
        img.raw(),
        img.width(),
        img.height(),
        image::ColorType::Rgb8,
    )
    .map_err(|err| match err {
        image::ImageError::IoError(source) => RasterError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => RasterError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(other),
        },
    })
}
