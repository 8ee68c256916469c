//! File formats.
//!
//! - Annotation / truth JSON: `{"image", "roi", "seed_window", "boxes"?}`.
//! - Detections CSV: `x,y,size,score,iteration_detected`, scores with 6 decimals.
//! - Model checkpoint JSON: `{"magic": "TGGM-CHECKPOINT", "version": 1, "model": {...}}`.
//! - 8-bit PNG images and grid overlays.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{BBox, GridReport};
use crate::model::TggmModel;
use crate::trainer::ScoredWindow;
use crate::windowing::{Raster, RoiPolygon, Window};

pub const CHECKPOINT_MAGIC: &str = "TGGM-CHECKPOINT";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const CSV_HEADER: [&str; 5] = ["x", "y", "size", "score", "iteration_detected"];

/// ROI annotation consumed by the detector; synthetic truth files add `boxes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotations {
    /// Image path, relative to the annotation file unless absolute.
    pub image: String,
    pub roi: RoiPolygon,
    pub seed_window: Window,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub boxes: Vec<BBox>,
}

impl Annotations {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let a: Annotations = serde_json::from_str(&text)?;
        if a.seed_window.size == 0 {
            return Err(Error::Format("seed_window.size must be positive".into()));
        }
        Ok(a)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn image_path(&self, annotation_path: &Path) -> std::path::PathBuf {
        let p = Path::new(&self.image);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            annotation_path
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .join(p)
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn decode_png(bytes: &[u8]) -> Result<Raster> {
    let img = image::load_from_memory(bytes)?;
    let raster = match img {
        DynamicImage::ImageLuma8(g) => Raster::new(g.width() as usize, g.height() as usize, 1, g.into_raw())?,
        DynamicImage::ImageRgb8(c) => Raster::new(c.width() as usize, c.height() as usize, 3, c.into_raw())?,
        other if other.color().has_color() => {
            let c = other.to_rgb8();
            Raster::new(c.width() as usize, c.height() as usize, 3, c.into_raw())?
        }
        other => {
            let g = other.to_luma8();
            Raster::new(g.width() as usize, g.height() as usize, 1, g.into_raw())?
        }
    };
    Ok(raster)
}

pub fn load_png(path: &Path) -> Result<Raster> {
    decode_png(&fs::read(path)?)
}

pub fn encode_png(raster: &Raster) -> Result<Vec<u8>> {
    let (w, h) = (raster.width as u32, raster.height as u32);
    let img = match raster.channels {
        1 => DynamicImage::ImageLuma8(
            GrayImage::from_raw(w, h, raster.data.clone()).expect("raster dimensions are validated"),
        ),
        _ => DynamicImage::ImageRgb8(
            RgbImage::from_raw(w, h, raster.data.clone()).expect("raster dimensions are validated"),
        ),
    };
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn save_png(path: &Path, raster: &Raster) -> Result<()> {
    fs::write(path, encode_png(raster)?)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
struct CsvRow {
    x: usize,
    y: usize,
    size: usize,
    score: f64,
    iteration_detected: usize,
}

/// Detected windows as CSV. Windows without an iteration are skipped.
pub fn write_detections_csv<W: Write>(out: W, detections: &[ScoredWindow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for d in detections {
        let Some(it) = d.iteration_detected else { continue };
        w.write_record([
            d.window.x.to_string(),
            d.window.y.to_string(),
            d.window.size.to_string(),
            format!("{:.6}", d.score),
            it.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_detections_csv<R: Read>(input: R) -> Result<Vec<ScoredWindow>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Format(format!(
            "detections CSV header must be {}",
            CSV_HEADER.join(",")
        )));
    }
    let mut out = Vec::new();
    for row in r.deserialize::<CsvRow>() {
        let row = row.map_err(|e| Error::Format(e.to_string()))?;
        if row.size == 0 {
            return Err(Error::Format("window size must be positive".into()));
        }
        out.push(ScoredWindow {
            window: Window {
                x: row.x,
                y: row.y,
                size: row.size,
            },
            score: row.score,
            iteration_detected: Some(row.iteration_detected),
        });
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    magic: String,
    version: u32,
    model: TggmModel,
}

pub fn save_checkpoint(path: &Path, model: &TggmModel) -> Result<()> {
    write_json(
        path,
        &Checkpoint {
            magic: CHECKPOINT_MAGIC.into(),
            version: CHECKPOINT_VERSION,
            model: model.clone(),
        },
    )
}

pub fn load_checkpoint(path: &Path) -> Result<TggmModel> {
    let ck: Checkpoint = read_json(path)?;
    if ck.magic != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!("not a TGGM checkpoint (magic {:?})", ck.magic)));
    }
    if ck.version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {}", ck.version)));
    }
    ck.model.validate()?;
    Ok(ck.model)
}

pub const TP_COLOR: [u8; 3] = [0, 200, 0];
pub const FP_COLOR: [u8; 3] = [220, 0, 0];
pub const FN_COLOR: [u8; 3] = [0, 90, 255];

/// Tints grid cells over the image: green true positives, red false
/// positives, blue false negatives.
pub fn render_overlay(image: &Raster, report: &GridReport) -> Raster {
    let (w, h) = (image.width, image.height);
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            let base = if image.channels == 1 {
                [image.pixel(x, y, 0); 3]
            } else {
                [image.pixel(x, y, 0), image.pixel(x, y, 1), image.pixel(x, y, 2)]
            };
            let (r, c) = (y / report.grid_size, x / report.grid_size);
            let tint = match (report.gt_mask.get(r, c), report.pred_mask.get(r, c)) {
                (true, true) => Some(TP_COLOR),
                (false, true) => Some(FP_COLOR),
                (true, false) => Some(FN_COLOR),
                (false, false) => None,
            };
            let px = match tint {
                Some(t) => {
                    let edge = x % report.grid_size == 0 || y % report.grid_size == 0;
                    if edge {
                        t
                    } else {
                        [0, 1, 2].map(|k| ((u16::from(base[k]) + u16::from(t[k])) / 2) as u8)
                    }
                }
                None => base,
            };
            data.extend(px);
        }
    }
    Raster::new(w, h, 3, data).expect("same dimensions as the source")
}

/// RGB8 view of an overlay for callers that want an `image` buffer.
pub fn to_rgb_image(raster: &Raster) -> Option<RgbImage> {
    if raster.channels != 3 {
        return None;
    }
    let mut img = RgbImage::new(raster.width as u32, raster.height as u32);
    for (i, px) in img.pixels_mut().enumerate() {
        *px = Rgb([raster.data[3 * i], raster.data[3 * i + 1], raster.data[3 * i + 2]]);
    }
    Some(img)
}
