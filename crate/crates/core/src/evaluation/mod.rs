//! Grid-level scoring, IoU, non-max suppression and average precision.

mod detection;
mod grid;

use serde::{Deserialize, Serialize};

use crate::windowing::Window;

pub use detection::{average_precision, iou, nms, Scored};
pub use grid::{grid_ground_truth, grid_predictions, prf, GridMask, GridReport};

/// Axis-aligned box in pixels, top-left anchored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, width: f64, height: f64) -> Self {
        debug_assert!(width > 0.0 && height > 0.0, "degenerate box");
        Self {
            x,
            y,
            width,
            height,
        }
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn right(&self) -> f64 {
        self.x + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.height
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.right().min(other.right()) - self.x.max(other.x);
        let h = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }
}

impl From<Window> for BBox {
    fn from(w: Window) -> Self {
        BBox::new(w.x as f64, w.y as f64, w.size as f64, w.size as f64)
    }
}
