//! Rasters, ROI polygons, sliding windows and patch extraction.

mod polygon;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use polygon::RoiPolygon;

/// 8-bit image, row-major, channels interleaved (`(y * width + x) * channels + c`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || !(channels == 1 || channels == 3) {
            return Err(invalid(format!(
                "raster {width}x{height}x{channels} is not a grayscale or RGB image"
            )));
        }
        if data.len() != width * height * channels {
            return Err(invalid(format!(
                "raster {width}x{height}x{channels} needs {} bytes, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Self {
        Self::new(width, height, channels, vec![value; width * height * channels])
            .expect("valid dimensions")
    }

    /// Quantizes a `[0, 1]` grayscale field (row-major) to 8 bits.
    pub fn from_unit_gray(width: usize, height: usize, values: &[f64]) -> Result<Self> {
        let data = values
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        Self::new(width, height, 1, data)
    }

    pub fn pixel(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }
}

/// Square window with its top-left corner at `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Window {
    pub x: usize,
    pub y: usize,
    pub size: usize,
}

impl Window {
    pub fn center(&self) -> (f64, f64) {
        let h = self.size as f64 / 2.0;
        (self.x as f64 + h, self.y as f64 + h)
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.size > 0 && self.x + self.size <= width && self.y + self.size <= height
    }
}

/// Normalized pixels of one window, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub pixels: Vec<f64>,
    pub size: usize,
    pub channels: usize,
    pub source: Option<Window>,
}

impl Patch {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    /// Inverse of the normalization in [`extract_patch`].
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels.iter().map(|v| (v * 255.0).round() as u8).collect()
    }

    /// Rotates counter-clockwise by `quarter_turns * 90°`.
    pub fn rotated(&self, quarter_turns: u32) -> Patch {
        let (s, ch) = (self.size, self.channels);
        let mut px = self.pixels.clone();
        for _ in 0..quarter_turns % 4 {
            let mut next = vec![0.0; px.len()];
            for r in 0..s {
                for c in 0..s {
                    // CCW: new(r, c) = old(c, s-1-r)
                    let src = (c * s + (s - 1 - r)) * ch;
                    let dst = (r * s + c) * ch;
                    next[dst..dst + ch].copy_from_slice(&px[src..src + ch]);
                }
            }
            px = next;
        }
        Patch {
            pixels: px,
            size: s,
            channels: ch,
            source: self.source,
        }
    }
}

/// Every stride-lattice window that fits in the image and whose center lies
/// inside `roi`, in row-major order.
pub fn slide_windows(
    width: usize,
    height: usize,
    roi: &RoiPolygon,
    size: usize,
    stride: usize,
) -> Result<Vec<Window>> {
    if size == 0 || size > width.min(height) {
        return Err(invalid(format!(
            "window size {size} does not fit a {width}x{height} image"
        )));
    }
    if stride == 0 {
        return Err(invalid("stride must be at least 1"));
    }
    let mut out = Vec::new();
    for y in (0..=height - size).step_by(stride) {
        for x in (0..=width - size).step_by(stride) {
            let w = Window { x, y, size };
            let (cx, cy) = w.center();
            if roi.contains(cx, cy) {
                out.push(w);
            }
        }
    }
    Ok(out)
}

/// Reads the window's pixels, dividing by 255.
pub fn extract_patch(image: &Raster, w: Window) -> Result<Patch> {
    if !w.fits(image.width, image.height) {
        return Err(invalid(format!(
            "window {w:?} leaves the {}x{} image",
            image.width, image.height
        )));
    }
    let ch = image.channels;
    let mut pixels = Vec::with_capacity(w.size * w.size * ch);
    for y in w.y..w.y + w.size {
        let start = (y * image.width + w.x) * ch;
        pixels.extend(
            image.data[start..start + w.size * ch]
                .iter()
                .map(|&b| f64::from(b) / 255.0),
        );
    }
    Ok(Patch {
        pixels,
        size: w.size,
        channels: ch,
        source: Some(w),
    })
}

/// `{-size/4, 0, +size/4}²`.
pub fn default_translations(size: usize) -> Vec<(i64, i64)> {
    let d = (size / 4) as i64;
    let steps = [-d, 0, d];
    let mut out = Vec::with_capacity(9);
    for &dy in &steps {
        for &dx in &steps {
            out.push((dx, dy));
        }
    }
    out.dedup();
    out
}

pub const DEFAULT_ROTATIONS: [u32; 4] = [0, 90, 180, 270];

#[derive(Debug, Clone, PartialEq)]
pub struct Augmentation {
    pub patches: Vec<Patch>,
    /// Translations that would have left the image, times the rotation count.
    pub skipped: usize,
}

/// Rotations × translations of the seed window: each combination shifts the
/// window, re-extracts it and rotates the patch.
pub fn augment_target(
    image: &Raster,
    seed: Window,
    rotations: &[u32],
    translations: &[(i64, i64)],
) -> Result<Augmentation> {
    if let Some(bad) = rotations.iter().find(|a| **a % 90 != 0 || **a >= 360) {
        return Err(invalid(format!(
            "rotation {bad}° is not one of 0, 90, 180, 270"
        )));
    }
    if !seed.fits(image.width, image.height) {
        return Err(invalid(format!("seed window {seed:?} leaves the image")));
    }
    let mut patches = Vec::with_capacity(rotations.len() * translations.len());
    let mut skipped = 0;
    for &angle in rotations {
        for &(dx, dy) in translations {
            let x = seed.x as i64 + dx;
            let y = seed.y as i64 + dy;
            if x < 0 || y < 0 {
                skipped += 1;
                continue;
            }
            let w = Window {
                x: x as usize,
                y: y as usize,
                size: seed.size,
            };
            if !w.fits(image.width, image.height) {
                skipped += 1;
                continue;
            }
            patches.push(extract_patch(image, w)?.rotated(angle / 90));
        }
    }
    Ok(Augmentation { patches, skipped })
}
