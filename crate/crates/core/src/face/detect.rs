//! Three-stage cascade: sliding-window proposals on an image pyramid,
//! refinement on 24×24 crops, then scoring, box regression and landmarks on
//! 48×48 crops.

use super::boxes::{decode_box, nms, nms_indices, BoundingBox, BoxDeltas};
use super::embed::center_scale;
use super::image::{crop_resize, resize_matrix};
use super::weights::ConvNet;
use super::{FaceError, GrayImage, Landmarks, StageWeights, VerifyConfig};
use crate::neural_kernel::{sigmoid, Matrix};

/// Face probability below which the final stage rejects a box.
pub const FACE_PROBABILITY_CUTOFF: f64 = 0.5;

/// Upper bound on proposals handed from the first stage to the second.
pub const MAX_PROPOSALS: usize = 64;

const PNET_WINDOW: usize = 12;
const RNET_INPUT: usize = 24;
const ONET_INPUT: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub landmarks: Landmarks,
}

/// Level dimensions `(width, height)`: level 0 is the input, each next level
/// is `⌊α·prev⌋`, stopping before the smaller side drops under `min_face`.
pub fn pyramid_dims(width: usize, height: usize, alpha: f64, min_face: usize) -> Result<Vec<(usize, usize)>, FaceError> {
    if !(alpha > 0.0 && alpha < 1.0) || min_face < PNET_WINDOW {
        return Err(FaceError::InvalidConfig(format!("pyramid alpha={alpha} min_face={min_face}")));
    }
    if width.min(height) < min_face {
        return Err(FaceError::ImageTooSmall { width, height, min_face });
    }
    let mut dims = vec![(width, height)];
    loop {
        let (w, h) = *dims.last().unwrap();
        let next = ((alpha * w as f64).floor() as usize, (alpha * h as f64).floor() as usize);
        if next.0.min(next.1) < min_face {
            return Ok(dims);
        }
        dims.push(next);
    }
}

fn pyramid_matrices(m: &Matrix, alpha: f64, min_face: usize) -> Result<Vec<Matrix>, FaceError> {
    let dims = pyramid_dims(m.cols(), m.rows(), alpha, min_face)?;
    let mut levels = vec![m.clone()];
    for &(w, h) in &dims[1..] {
        let next = resize_matrix(levels.last().unwrap(), h, w);
        levels.push(next);
    }
    Ok(levels)
}

/// Image pyramid with bilinear resampling of each level from the previous.
pub fn build_pyramid(img: &GrayImage, alpha: f64, min_face: usize) -> Result<Vec<GrayImage>, FaceError> {
    Ok(pyramid_matrices(&img.to_matrix(), alpha, min_face)?
        .iter()
        .map(GrayImage::from_matrix_clamped)
        .collect())
}

fn deltas(v: &[f64]) -> BoxDeltas {
    BoxDeltas { dx: v[0], dy: v[1], dw: v[2], dh: v[3] }
}

fn finite_box(b: &BoundingBox) -> bool {
    b.is_valid() && b.w.is_finite() && b.h.is_finite()
}

/// First-stage score and deltas for every 12×12 window of `level` at the
/// given stride, as `(row, col, score, deltas)`.
pub fn pnet_windows(
    pnet: &ConvNet,
    level: &Matrix,
    stride: usize,
) -> Result<Vec<(usize, usize, f64, BoxDeltas)>, FaceError> {
    let mut out = Vec::new();
    if level.rows() < PNET_WINDOW || level.cols() < PNET_WINDOW {
        return Ok(out);
    }
    let spec = pnet.spec();
    if stride == spec.stride() {
        // Fully convolutional: with windows aligned to the pooling grid the
        // feature window of each 12×12 crop is a slice of the whole-level map.
        let maps = pnet.feature_maps(level)?;
        let side = spec.output_side(PNET_WINDOW);
        let rows = (level.rows() - PNET_WINDOW) / stride + 1;
        let cols = (level.cols() - PNET_WINDOW) / stride + 1;
        let mut features = Vec::with_capacity(maps.len() * side * side);
        for i in 0..rows {
            for j in 0..cols {
                features.clear();
                for m in &maps {
                    for r in i..i + side {
                        for c in j..j + side {
                            features.push(m.get(r, c));
                        }
                    }
                }
                let heads = pnet.heads_from_features(&features)?;
                out.push((i * stride, j * stride, sigmoid(heads[0][0]), deltas(&heads[1])));
            }
        }
    } else {
        let mut window = Matrix::zeros(PNET_WINDOW, PNET_WINDOW);
        for r0 in (0..=level.rows() - PNET_WINDOW).step_by(stride) {
            for c0 in (0..=level.cols() - PNET_WINDOW).step_by(stride) {
                for r in 0..PNET_WINDOW {
                    for c in 0..PNET_WINDOW {
                        window.set(r, c, level.get(r0 + r, c0 + c));
                    }
                }
                let heads = pnet.forward(&window)?;
                out.push((r0, c0, sigmoid(heads[0][0]), deltas(&heads[1])));
            }
        }
    }
    Ok(out)
}

/// Runs the cascade on a globally prewhitened copy of `img`.
pub fn detect_faces(img: &GrayImage, weights: &StageWeights, cfg: &VerifyConfig) -> Result<Vec<Detection>, FaceError> {
    cfg.validate()?;
    let whitened = center_scale(&img.to_matrix());
    let levels = pyramid_matrices(&whitened, cfg.pyramid_alpha, cfg.min_face)?;

    let mut proposals = Vec::new();
    for level in &levels {
        let sx = level.cols() as f64 / whitened.cols() as f64;
        let sy = level.rows() as f64 / whitened.rows() as f64;
        let mut level_boxes = Vec::new();
        for (r, c, score, d) in pnet_windows(&weights.pnet, level, cfg.pnet_stride)? {
            if score < cfg.pnet_score_min {
                continue;
            }
            let anchor = BoundingBox::new(
                c as f64 / sx,
                r as f64 / sy,
                PNET_WINDOW as f64 / sx,
                PNET_WINDOW as f64 / sy,
                score,
            );
            let b = decode_box(&anchor, &d);
            if finite_box(&b) {
                level_boxes.push(b);
            }
        }
        proposals.extend(nms(&level_boxes, cfg.nms_iou));
    }
    let mut proposals = nms(&proposals, cfg.nms_iou);
    proposals.truncate(MAX_PROPOSALS);

    let mut refined = Vec::new();
    for p in &proposals {
        let heads = weights.rnet.forward(&crop_resize(&whitened, p, RNET_INPUT, RNET_INPUT))?;
        let score = sigmoid(heads[0][0]);
        if score < cfg.rnet_score_min {
            continue;
        }
        let b = decode_box(&BoundingBox { score, ..*p }, &deltas(&heads[1]));
        if finite_box(&b) {
            refined.push(b);
        }
    }
    let refined = nms(&refined, cfg.nms_iou);

    let cutoff = cfg.rnet_score_min.max(FACE_PROBABILITY_CUTOFF);
    let mut boxes = Vec::new();
    let mut marks = Vec::new();
    for p in &refined {
        let heads = weights.onet.forward(&crop_resize(&whitened, p, ONET_INPUT, ONET_INPUT))?;
        let score = sigmoid(heads[0][0]);
        if score < cutoff {
            continue;
        }
        let b = decode_box(&BoundingBox { score, ..*p }, &deltas(&heads[1]));
        let l = &heads[2];
        let landmarks = Landmarks {
            points: std::array::from_fn(|k| (p.x + l[2 * k] * p.w, p.y + l[2 * k + 1] * p.h)),
        };
        if finite_box(&b) && landmarks.is_finite() {
            boxes.push(b);
            marks.push(landmarks);
        }
    }
    Ok(nms_indices(&boxes, cfg.nms_iou)
        .into_iter()
        .map(|i| Detection { bbox: boxes[i], landmarks: marks[i] })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pyramid_example() {
        assert_eq!(pyramid_dims(100, 80, 0.5, 12).unwrap(), vec![(100, 80), (50, 40), (25, 20)]);
        assert_eq!(pyramid_dims(20, 20, 0.5, 12).unwrap(), vec![(20, 20)]);
        assert!(matches!(pyramid_dims(11, 40, 0.5, 12), Err(FaceError::ImageTooSmall { .. })));
    }

    #[test]
    fn constant_pyramid_stays_constant() {
        let img = GrayImage::filled(100, 80, 0.3);
        let levels = build_pyramid(&img, 0.5, 12).unwrap();
        assert_eq!(levels.len(), 3);
        assert_eq!((levels[2].width(), levels[2].height()), (25, 20));
        assert!(levels.iter().all(|l| l.pixels().iter().all(|p| (p - 0.3).abs() < 1e-9)));
    }

    #[test]
    fn strided_paths_agree() {
        let weights = StageWeights::random(5);
        let data: Vec<f64> = (0..30 * 26).map(|i| ((i * 37) % 101) as f64 / 100.0 - 0.5).collect();
        let level = Matrix::new(26, 30, data).unwrap();
        let fast = pnet_windows(&weights.pnet, &level, 2).unwrap();
        // stride 4 goes through the per-window path; compare the shared windows
        let slow = pnet_windows(&weights.pnet, &level, 4).unwrap();
        for (r, c, s, d) in slow {
            let f = fast.iter().find(|w| w.0 == r && w.1 == c).unwrap();
            assert_eq!((f.2, f.3), (s, d));
        }
    }

    #[test]
    fn blank_image_is_deterministic() {
        let weights = StageWeights::random(1);
        let cfg = VerifyConfig::default();
        let img = GrayImage::filled(48, 48, 0.5);
        let a = detect_faces(&img, &weights, &cfg).unwrap();
        let b = detect_faces(&img, &weights, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
