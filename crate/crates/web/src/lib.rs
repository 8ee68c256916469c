//! Browser demo over the `tggm` detector.
//!
//! [`Session`] is plain Rust so it can be tested natively; the wasm build
//! wraps it as `TggmDemo` for `www/index.html`. Results cross the boundary
//! as JSON strings and RGBA byte buffers.

use serde::Serialize;

use tggm::evaluation::{grid_ground_truth, grid_predictions, prf};
use tggm::io::render_overlay;
use tggm::synthdata::{benchmark_config, benchmark_spec, generate_scene, Difficulty, SceneTruth, BENCHMARK_WINDOW};
use tggm::trainer::{run, ScoredWindow, StopReason, TrainConfig};
use tggm::{BBox, Raster, RoiPolygon, Window};

#[derive(Debug, Serialize)]
struct TruthView<'a> {
    width: usize,
    height: usize,
    boxes: &'a [BBox],
    roi: &'a RoiPolygon,
    seed_window: Window,
}

#[derive(Debug, Serialize)]
struct DetectView<'a> {
    stop_reason: StopReason,
    newly_detected: Vec<usize>,
    windows: &'a [ScoredWindow],
}

#[derive(Debug, Serialize)]
struct ReportView {
    grid_size: usize,
    precision: f64,
    recall: f64,
    f1: f64,
    tp: usize,
    fp: usize,
    #[serde(rename = "fn")]
    fn_: usize,
}

/// One synthetic scene plus the most recent detection run over it.
#[derive(Debug, Clone)]
pub struct Session {
    truth: SceneTruth,
    seed_window: Window,
    config: TrainConfig,
    detections: Vec<ScoredWindow>,
}

fn rgba(raster: &Raster) -> Vec<u8> {
    let mut out = Vec::with_capacity(raster.width * raster.height * 4);
    for px in raster.data.chunks(raster.channels) {
        match *px {
            [g] => out.extend([g, g, g, 255]),
            [r, g, b] => out.extend([r, g, b, 255]),
            _ => unreachable!("rasters have 1 or 3 channels"),
        }
    }
    out
}

impl Session {
    /// Renders the named benchmark (`"easy"` or `"textured"`) with `seed`
    /// driving both the scene and training.
    pub fn new(difficulty: &str, seed: u64) -> Result<Self, String> {
        let difficulty = match difficulty {
            "easy" => Difficulty::Easy,
            "textured" => Difficulty::Textured,
            other => return Err(format!("unknown benchmark {other:?}")),
        };
        let mut spec = benchmark_spec(difficulty);
        spec.seed = seed;
        let truth = generate_scene(&spec).map_err(|e| e.to_string())?;
        let first = truth.target_boxes[0];
        let seed_window = Window {
            x: first.x as usize,
            y: first.y as usize,
            size: BENCHMARK_WINDOW,
        };
        let config = TrainConfig {
            seed,
            ..benchmark_config()
        };
        Ok(Self {
            truth,
            seed_window,
            config,
            detections: Vec::new(),
        })
    }

    pub fn width(&self) -> usize {
        self.truth.image.width
    }

    pub fn height(&self) -> usize {
        self.truth.image.height
    }

    pub fn scene_rgba(&self) -> Vec<u8> {
        rgba(&self.truth.image)
    }

    /// `{width, height, boxes, roi, seed_window}`.
    pub fn truth_json(&self) -> String {
        serde_json::to_string(&TruthView {
            width: self.width(),
            height: self.height(),
            boxes: &self.truth.target_boxes,
            roi: &self.truth.roi,
            seed_window: self.seed_window,
        })
        .expect("plain data serializes")
    }

    /// Runs the detector and returns `{stop_reason, newly_detected, windows}`
    /// where `windows` lists the detected windows only.
    pub fn detect(&mut self, epochs_per_iteration: usize, max_iterations: usize) -> Result<String, String> {
        let config = TrainConfig {
            epochs_per_iteration,
            max_iterations,
            ..self.config.clone()
        };
        let out = run(&self.truth.image, &self.truth.roi, self.seed_window, &config).map_err(|e| e.to_string())?;
        self.detections = out.result.detections();
        Ok(serde_json::to_string(&DetectView {
            stop_reason: out.result.stop_reason,
            newly_detected: out.result.history.iter().map(|r| r.newly_detected).collect(),
            windows: &self.detections,
        })
        .expect("plain data serializes"))
    }

    fn report(&self, grid_size: usize) -> Result<tggm::GridReport, String> {
        let (w, h) = (self.width(), self.height());
        let windows: Vec<Window> = self.detections.iter().map(|d| d.window).collect();
        let gt = grid_ground_truth(&self.truth.target_boxes, w, h, grid_size).map_err(|e| e.to_string())?;
        let pred = grid_predictions(&windows, w, h, grid_size).map_err(|e| e.to_string())?;
        prf(&gt, &pred).map_err(|e| e.to_string())
    }

    /// Grid metrics of the latest detections: `{grid_size, precision, recall, f1, tp, fp, fn}`.
    pub fn evaluate(&self, grid_size: usize) -> Result<String, String> {
        let r = self.report(grid_size)?;
        Ok(serde_json::to_string(&ReportView {
            grid_size,
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
            tp: r.tp,
            fp: r.fp,
            fn_: r.fn_,
        })
        .expect("plain data serializes"))
    }

    /// Scene with true-positive, false-positive and missed cells tinted.
    pub fn overlay_rgba(&self, grid_size: usize) -> Result<Vec<u8>, String> {
        Ok(rgba(&render_overlay(&self.truth.image, &self.report(grid_size)?)))
    }
}

#[cfg(target_arch = "wasm32")]
mod bindings {
    use wasm_bindgen::prelude::*;

    use super::Session;

    #[wasm_bindgen]
    pub struct TggmDemo {
        inner: Session,
    }

    #[wasm_bindgen]
    impl TggmDemo {
        #[wasm_bindgen(constructor)]
        pub fn new(difficulty: &str, seed: u64) -> Result<TggmDemo, JsError> {
            Session::new(difficulty, seed)
                .map(|inner| TggmDemo { inner })
                .map_err(|e| JsError::new(&e))
        }

        pub fn width(&self) -> usize {
            self.inner.width()
        }

        pub fn height(&self) -> usize {
            self.inner.height()
        }

        pub fn scene_rgba(&self) -> Vec<u8> {
            self.inner.scene_rgba()
        }

        pub fn truth_json(&self) -> String {
            self.inner.truth_json()
        }

        pub fn detect(&mut self, epochs_per_iteration: usize, max_iterations: usize) -> Result<String, JsError> {
            self.inner
                .detect(epochs_per_iteration, max_iterations)
                .map_err(|e| JsError::new(&e))
        }

        pub fn evaluate(&self, grid_size: usize) -> Result<String, JsError> {
            self.inner.evaluate(grid_size).map_err(|e| JsError::new(&e))
        }

        pub fn overlay_rgba(&self, grid_size: usize) -> Result<Vec<u8>, JsError> {
            self.inner.overlay_rgba(grid_size).map_err(|e| JsError::new(&e))
        }
    }
}
