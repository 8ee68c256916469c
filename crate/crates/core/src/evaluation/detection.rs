use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::BBox;

/// A box with a detection score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub bbox: BBox,
    pub score: f64,
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Score descending, then lower x, then lower y.
fn priority(a: &Scored, b: &Scored) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.bbox.x.total_cmp(&b.bbox.x))
        .then(a.bbox.y.total_cmp(&b.bbox.y))
}

/// Greedy non-max suppression; drops boxes with IoU above `threshold`
/// against an already kept, higher-priority box.
pub fn nms(candidates: &[Scored], threshold: f64) -> Vec<Scored> {
    let mut order: Vec<Scored> = candidates.to_vec();
    order.sort_by(priority);
    let mut kept: Vec<Scored> = Vec::new();
    for c in order {
        if kept.iter().all(|k| iou(&k.bbox, &c.bbox) <= threshold) {
            kept.push(c);
        }
    }
    kept
}

/// All-points interpolated AP with greedy one-to-one matching.
pub fn average_precision(detections: &[Scored], gt: &[BBox], iou_threshold: f64) -> f64 {
    if gt.is_empty() {
        log::warn!("average precision requested with no ground truth; reporting 0");
        return 0.0;
    }
    if detections.is_empty() {
        return 0.0;
    }
    let mut order: Vec<&Scored> = detections.iter().collect();
    order.sort_by(|a, b| priority(a, b));

    let mut matched = vec![false; gt.len()];
    let mut tp = 0usize;
    let mut points = Vec::with_capacity(order.len());
    for (i, d) in order.iter().enumerate() {
        let best = gt
            .iter()
            .enumerate()
            .filter(|(j, _)| !matched[*j])
            .map(|(j, g)| (j, iou(&d.bbox, g)))
            .filter(|(_, v)| *v >= iou_threshold)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        if let Some((j, _)) = best {
            matched[j] = true;
            tp += 1;
        }
        points.push((tp as f64 / gt.len() as f64, tp as f64 / (i + 1) as f64));
    }

    // Precision envelope, integrated over recall steps.
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for k in 0..points.len() {
        let (recall, _) = points[k];
        if recall > prev_recall {
            let envelope = points[k..].iter().map(|p| p.1).fold(0.0, f64::max);
            ap += (recall - prev_recall) * envelope;
            prev_recall = recall;
        }
    }
    ap
}
