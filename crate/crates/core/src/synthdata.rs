//! Seeded synthetic overhead scenes with exact target boxes.
//!
//! Targets are bright axis-aligned rectangles placed inside the ROI by
//! rejection sampling; distractors are bars or blobs scattered over the whole
//! image. Pixel noise is additive Gaussian, clipped to `[0, 1]`, and the
//! result is quantized to 8-bit grayscale.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::evaluation::BBox;
use crate::trainer::{AugmentationSpec, TrainConfig};
use crate::windowing::{Raster, RoiPolygon, Window, DEFAULT_ROTATIONS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Background {
    Flat { level: f64 },
    /// Vertical two-tone stripes: `level` for the first half of each period,
    /// `level + amplitude` for the second.
    Stripes { level: f64, amplitude: f64, period: usize },
}

impl Background {
    fn value(&self, x: usize) -> f64 {
        match *self {
            Background::Flat { level } => level,
            Background::Stripes {
                level,
                amplitude,
                period,
            } => {
                if (x % period) < period / 2 {
                    level
                } else {
                    level + amplitude
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub count: usize,
    pub size_min: usize,
    pub size_max: usize,
    pub intensity_min: f64,
    pub intensity_max: f64,
    /// Minimum gap in pixels between any two target rectangles.
    pub min_separation: usize,
    /// Snap target corners to multiples of this many pixels (0 disables).
    #[serde(default)]
    pub align: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistractorShape {
    Bar,
    Blob,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistractorSpec {
    pub count: usize,
    pub shape: DistractorShape,
    pub intensity_min: f64,
    pub intensity_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub background: Background,
    pub roi: RoiPolygon,
    pub targets: TargetSpec,
    pub distractors: DistractorSpec,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(invalid("scene dimensions must be positive"));
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let t = &self.targets;
        if t.size_min == 0 || t.size_min > t.size_max {
            return Err(invalid("target size range is empty"));
        }
        if !unit(t.intensity_min) || !unit(t.intensity_max) || t.intensity_min > t.intensity_max {
            return Err(invalid("target intensity range must lie inside [0, 1]"));
        }
        let d = &self.distractors;
        if !unit(d.intensity_min) || !unit(d.intensity_max) || d.intensity_min > d.intensity_max {
            return Err(invalid("distractor intensity range must lie inside [0, 1]"));
        }
        match self.background {
            Background::Flat { level } if !unit(level) => {
                return Err(invalid("background level must lie inside [0, 1]"))
            }
            Background::Stripes {
                level,
                amplitude,
                period,
            } if !unit(level) || !unit(level + amplitude) || period < 2 => {
                return Err(invalid("stripe levels must lie inside [0, 1] with period >= 2"))
            }
            _ => {}
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(invalid("noise sigma must be finite and non-negative"));
        }
        if !self.roi.within_bounds(self.width, self.height) {
            return Err(invalid("ROI leaves the image"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneTruth {
    pub image: Raster,
    pub target_boxes: Vec<BBox>,
    pub roi: RoiPolygon,
}

fn separated(a: &BBox, b: &BBox, gap: f64) -> bool {
    a.right() + gap <= b.x || b.right() + gap <= a.x || a.bottom() + gap <= b.y || b.bottom() + gap <= a.y
}

fn box_in_roi(b: &BBox, roi: &RoiPolygon) -> bool {
    [
        (b.x, b.y),
        (b.right(), b.y),
        (b.x, b.bottom()),
        (b.right(), b.bottom()),
        (b.x + 0.5 * b.width, b.y + 0.5 * b.height),
    ]
    .iter()
    .all(|&(x, y)| roi.contains(x, y))
}

/// Renders the scene described by `spec`.
pub fn generate_scene(spec: &SceneSpec) -> Result<SceneTruth> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, h) = (spec.width, spec.height);
    let (bx0, by0, bx1, by1) = spec.roi.bounding_box();
    let t = &spec.targets;
    let attempts = 10 * t.count.max(1);

    let mut boxes: Vec<BBox> = Vec::with_capacity(t.count);
    let mut intensities = Vec::with_capacity(t.count);
    for n in 0..t.count {
        let mut placed = false;
        for _ in 0..attempts {
            let size = rng.random_range(t.size_min..=t.size_max);
            let lo_x = bx0.max(0.0).floor() as usize;
            let lo_y = by0.max(0.0).floor() as usize;
            let hi_x = (bx1.min(w as f64) as usize).saturating_sub(size);
            let hi_y = (by1.min(h as f64) as usize).saturating_sub(size);
            if hi_x < lo_x || hi_y < lo_y {
                break;
            }
            let mut x = rng.random_range(lo_x..=hi_x);
            let mut y = rng.random_range(lo_y..=hi_y);
            if t.align > 1 {
                x = x / t.align * t.align;
                y = y / t.align * t.align;
            }
            let b = BBox::new(x as f64, y as f64, size as f64, size as f64);
            if x + size > w || y + size > h || !box_in_roi(&b, &spec.roi) {
                continue;
            }
            if boxes.iter().all(|o| separated(o, &b, t.min_separation as f64)) {
                boxes.push(b);
                intensities.push(rng.random_range(t.intensity_min..=t.intensity_max));
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Capacity(format!(
                "could not place target {} of {} after {attempts} attempts",
                n + 1,
                t.count
            )));
        }
    }

    let mut field: Vec<f64> = (0..h)
        .flat_map(|_| (0..w).map(|x| spec.background.value(x)))
        .collect();

    let d = &spec.distractors;
    let d_attempts = 10 * d.count.max(1);
    for n in 0..d.count {
        let mut placed = false;
        for _ in 0..d_attempts {
            let level = rng.random_range(d.intensity_min..=d.intensity_max);
            let (bw, bh) = match d.shape {
                DistractorShape::Bar => {
                    let long = rng.random_range(20..=32usize);
                    let thin = rng.random_range(2..=3usize);
                    if rng.random_bool(0.5) {
                        (long, thin)
                    } else {
                        (thin, long)
                    }
                }
                DistractorShape::Blob => {
                    let r = rng.random_range(3..=6usize);
                    (2 * r + 1, 2 * r + 1)
                }
            };
            if bw > w || bh > h {
                break;
            }
            let x = rng.random_range(0..=w - bw);
            let y = rng.random_range(0..=h - bh);
            let b = BBox::new(x as f64, y as f64, bw as f64, bh as f64);
            if !boxes.iter().all(|o| separated(o, &b, 2.0)) {
                continue;
            }
            let (cx, cy, r) = (x as f64 + bw as f64 / 2.0, y as f64 + bh as f64 / 2.0, bw as f64 / 2.0);
            for py in y..y + bh {
                for px in x..x + bw {
                    let inside = match d.shape {
                        DistractorShape::Bar => true,
                        DistractorShape::Blob => {
                            let (dx, dy) = (px as f64 + 0.5 - cx, py as f64 + 0.5 - cy);
                            dx * dx + dy * dy <= r * r
                        }
                    };
                    if inside {
                        field[py * w + px] = level;
                    }
                }
            }
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::Capacity(format!(
                "could not place distractor {} of {} after {d_attempts} attempts",
                n + 1,
                d.count
            )));
        }
    }

    for (b, &level) in boxes.iter().zip(&intensities) {
        for py in b.y as usize..b.bottom() as usize {
            for px in b.x as usize..b.right() as usize {
                field[py * w + px] = level;
            }
        }
    }

    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma).map_err(|e| invalid(e.to_string()))?;
        for v in &mut field {
            *v += normal.sample(&mut rng);
        }
    }

    Ok(SceneTruth {
        image: Raster::from_unit_gray(w, h, &field)?,
        target_boxes: boxes,
        roi: spec.roi.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Textured,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub spec: SceneSpec,
    pub truth: SceneTruth,
    pub seed_window: Window,
    pub config: TrainConfig,
}

pub const BENCHMARK_SEED: u64 = 7;
pub const BENCHMARK_WINDOW: usize = 16;

/// Scene spec of a named benchmark.
pub fn benchmark_spec(difficulty: Difficulty) -> SceneSpec {
    let roi = RoiPolygon::new(vec![
        [48.0, 24.0],
        [208.0, 24.0],
        [240.0, 128.0],
        [208.0, 232.0],
        [48.0, 232.0],
        [16.0, 128.0],
    ])
    .expect("static polygon is simple");
    let targets = TargetSpec {
        count: 12,
        size_min: 16,
        size_max: 16,
        intensity_min: 0.80,
        intensity_max: 0.90,
        min_separation: 16,
        align: 16,
    };
    let (background, distractors) = match difficulty {
        Difficulty::Easy => (
            Background::Flat { level: 0.25 },
            DistractorSpec {
                count: 0,
                shape: DistractorShape::Bar,
                intensity_min: 0.5,
                intensity_max: 0.6,
            },
        ),
        Difficulty::Textured => (
            Background::Stripes {
                level: 0.25,
                amplitude: 0.1,
                period: 8,
            },
            DistractorSpec {
                count: 8,
                shape: DistractorShape::Bar,
                intensity_min: 0.5,
                intensity_max: 0.6,
            },
        ),
    };
    SceneSpec {
        width: 256,
        height: 256,
        background,
        roi,
        targets,
        distractors,
        noise_sigma: 0.02,
        seed: BENCHMARK_SEED,
    }
}

/// Training configuration for the desk-scale benchmarks.
///
/// Seed augmentation uses rotations only: shifted copies would teach the
/// target cluster that half-covered windows are targets.
pub fn benchmark_config() -> TrainConfig {
    TrainConfig {
        hidden_width: 64,
        augmentation: AugmentationSpec {
            rotations: DEFAULT_ROTATIONS.to_vec(),
            translations: Some(vec![(0, 0)]),
        },
        seed: BENCHMARK_SEED,
        ..TrainConfig::default()
    }
}

/// Scene, seed window (the first target) and training config of a benchmark.
pub fn make_benchmark(difficulty: Difficulty) -> Result<Benchmark> {
    let spec = benchmark_spec(difficulty);
    let truth = generate_scene(&spec)?;
    let first = truth.target_boxes[0];
    let seed_window = Window {
        x: first.x as usize,
        y: first.y as usize,
        size: BENCHMARK_WINDOW,
    };
    Ok(Benchmark {
        spec,
        truth,
        seed_window,
        config: benchmark_config(),
    })
}
