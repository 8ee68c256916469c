use serde::{Deserialize, Serialize};

use super::BBox;
use crate::error::{invalid, Result};
use crate::windowing::Window;

/// Boolean occupancy of non-overlapping `grid_size` cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridMask {
    pub grid_size: usize,
    pub rows: usize,
    pub cols: usize,
    /// Row-major, `rows * cols` entries.
    pub cells: Vec<bool>,
}

impl GridMask {
    pub fn empty(width: usize, height: usize, grid_size: usize) -> Self {
        let rows = height.div_ceil(grid_size);
        let cols = width.div_ceil(grid_size);
        Self {
            grid_size,
            rows,
            cols,
            cells: vec![false; rows * cols],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.cols + col]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    /// Cell rectangle, clipped to the image.
    pub fn cell_box(&self, row: usize, col: usize, width: usize, height: usize) -> BBox {
        let g = self.grid_size;
        let x0 = col * g;
        let y0 = row * g;
        let x1 = (x0 + g).min(width);
        let y1 = (y0 + g).min(height);
        BBox::new(x0 as f64, y0 as f64, (x1 - x0) as f64, (y1 - y0) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub grid_size: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub gt_mask: GridMask,
    pub pred_mask: GridMask,
}

fn mark(boxes: &[BBox], width: usize, height: usize, grid_size: usize) -> Result<GridMask> {
    if grid_size == 0 {
        return Err(invalid("grid size must be at least 1"));
    }
    let mut mask = GridMask::empty(width, height, grid_size);
    for b in boxes {
        let half_box = 0.5 * b.area();
        // Only cells the box can touch.
        let c0 = (b.x.max(0.0) / grid_size as f64).floor() as usize;
        let r0 = (b.y.max(0.0) / grid_size as f64).floor() as usize;
        let c1 = ((b.right() / grid_size as f64).ceil() as usize).min(mask.cols);
        let r1 = ((b.bottom() / grid_size as f64).ceil() as usize).min(mask.rows);
        for r in r0..r1 {
            for c in c0..c1 {
                let cell = mask.cell_box(r, c, width, height);
                let overlap = b.intersection_area(&cell);
                if overlap > 0.0 && (overlap >= half_box || overlap >= 0.5 * cell.area()) {
                    mask.cells[r * mask.cols + c] = true;
                }
            }
        }
    }
    Ok(mask)
}

/// A cell is positive if some box covers at least half the box or half the
/// (clipped) cell.
pub fn grid_ground_truth(boxes: &[BBox], width: usize, height: usize, grid_size: usize) -> Result<GridMask> {
    mark(boxes, width, height, grid_size)
}

/// Same rule with detected windows in place of boxes.
pub fn grid_predictions(
    detected: &[Window],
    width: usize,
    height: usize,
    grid_size: usize,
) -> Result<GridMask> {
    let boxes: Vec<BBox> = detected.iter().map(|&w| BBox::from(w)).collect();
    mark(&boxes, width, height, grid_size)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Cellwise confusion counts. Empty denominators give precision/recall 1.
pub fn prf(gt: &GridMask, pred: &GridMask) -> Result<GridReport> {
    if gt.rows != pred.rows || gt.cols != pred.cols || gt.grid_size != pred.grid_size {
        return Err(invalid(format!(
            "mask shapes differ: {}x{}@{} vs {}x{}@{}",
            gt.rows, gt.cols, gt.grid_size, pred.rows, pred.cols, pred.grid_size
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&g, &p) in gt.cells.iter().zip(&pred.cells) {
        match (g, p) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(GridReport {
        grid_size: gt.grid_size,
        precision,
        recall,
        f1,
        tp,
        fp,
        fn_,
        gt_mask: gt.clone(),
        pred_mask: pred.clone(),
    })
}
