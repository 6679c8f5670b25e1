use serde::{Deserialize, Serialize};

/// Axis-aligned box: top-left corner, extents and a confidence score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64, score: f64) -> Self {
        Self { x, y, w, h, score }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn is_valid(&self) -> bool {
        self.w > 0.0 && self.h > 0.0 && (0.0..=1.0).contains(&self.score) && self.x.is_finite() && self.y.is_finite()
    }
}

/// Regression offsets predicted for an anchor box.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoxDeltas {
    pub dx: f64,
    pub dy: f64,
    pub dw: f64,
    pub dh: f64,
}

/// Applies regression deltas: shifts scale with the anchor extents, extents
/// scale exponentially so they stay positive.
pub fn decode_box(anchor: &BoundingBox, d: &BoxDeltas) -> BoundingBox {
    BoundingBox {
        x: anchor.x + d.dx * anchor.w,
        y: anchor.y + d.dy * anchor.h,
        w: anchor.w * d.dw.exp(),
        h: anchor.h * d.dh.exp(),
        score: anchor.score,
    }
}

/// Inverse of [`decode_box`]: deltas that map `anchor` onto `target`.
pub fn encode_box(anchor: &BoundingBox, target: &BoundingBox) -> BoxDeltas {
    BoxDeltas {
        dx: (target.x - anchor.x) / anchor.w,
        dy: (target.y - anchor.y) / anchor.h,
        dw: (target.w / anchor.w).ln(),
        dh: (target.h / anchor.h).ln(),
    }
}

/// Intersection over union, in `[0, 1]`.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Greedy non-maximum suppression.
///
/// Boxes are visited by descending score (ties keep input order); a box is
/// kept unless its IoU with an already kept box exceeds `iou_threshold`.
pub fn nms(boxes: &[BoundingBox], iou_threshold: f64) -> Vec<BoundingBox> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| boxes[b].score.total_cmp(&boxes[a].score));
    let mut kept: Vec<BoundingBox> = Vec::new();
    for i in order {
        let candidate = &boxes[i];
        if kept.iter().all(|k| iou(k, candidate) <= iou_threshold) {
            kept.push(*candidate);
        }
    }
    kept
}

/// Index-returning variant of [`nms`], used to carry side data (landmarks)
/// alongside the boxes.
pub fn nms_indices(boxes: &[BoundingBox], iou_threshold: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| boxes[b].score.total_cmp(&boxes[a].score));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept.iter().all(|&k| iou(&boxes[k], &boxes[i]) <= iou_threshold) {
            kept.push(i);
        }
    }
    kept
}
