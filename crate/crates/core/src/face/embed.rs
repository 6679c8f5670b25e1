use serde::{Deserialize, Serialize};

use super::align::{estimate_alignment_fit, warp};
use super::detect::detect_faces;
use super::image::{crop_resize, resize_matrix};
use super::{FaceError, GrayImage, StageWeights, VerifyConfig};
use crate::neural_kernel::Matrix;

pub const EMBEDDING_DIM: usize = 512;
pub const ALIGNED_SIDE: usize = 160;

/// Pixel standard deviation at or below which an image counts as blank.
pub const MIN_PIXEL_STD: f64 = 1e-6;

/// Alignment is used only when the landmark fit is this tight (RMS pixels in
/// the aligned frame) and the scale is plausible; otherwise the box crop is
/// embedded instead.
pub const MAX_ALIGN_RESIDUAL: f64 = 8.0;
const ALIGN_SCALE_RANGE: (f64, f64) = (0.25, 8.0);

/// Zero-mean, unit-variance copy of `m`.
pub fn prewhiten(m: &Matrix) -> Result<Matrix, FaceError> {
    let mean = m.mean();
    let std = m.std_dev();
    if !(std > MIN_PIXEL_STD) {
        return Err(FaceError::DegenerateImage);
    }
    Ok(m.map(|v| (v - mean) / std))
}

/// Like [`prewhiten`] but a blank image just loses its mean.
pub(crate) fn center_scale(m: &Matrix) -> Matrix {
    prewhiten(m).unwrap_or_else(|_| {
        let mean = m.mean();
        m.map(|v| v - mean)
    })
}

/// Resize to 160×160 and prewhiten.
pub fn preprocess(img: &GrayImage) -> Result<Matrix, FaceError> {
    prewhiten(&resize_matrix(&img.to_matrix(), ALIGNED_SIDE, ALIGNED_SIDE))
}

pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>, FaceError> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm >= 1e-12) || !norm.is_finite() {
        return Err(FaceError::ZeroEmbedding);
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

/// Unit-length 512-d face descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FaceEmbedding {
    values: Vec<f64>,
}

impl FaceEmbedding {
    /// Normalizes an arbitrary 512-d vector.
    pub fn from_raw(raw: &[f64]) -> Result<Self, FaceError> {
        if raw.len() != EMBEDDING_DIM {
            return Err(FaceError::InvalidEmbedding(format!("length {}", raw.len())));
        }
        Ok(Self { values: l2_normalize(raw)? })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl TryFrom<Vec<f64>> for FaceEmbedding {
    type Error = FaceError;

    fn try_from(values: Vec<f64>) -> Result<Self, FaceError> {
        if values.len() != EMBEDDING_DIM || values.iter().any(|v| !v.is_finite()) {
            return Err(FaceError::InvalidEmbedding(format!("length {}", values.len())));
        }
        let norm2: f64 = values.iter().map(|v| v * v).sum();
        if (norm2 - 1.0).abs() > 1e-9 {
            return Err(FaceError::InvalidEmbedding(format!("squared norm {norm2}")));
        }
        Ok(Self { values })
    }
}

impl From<FaceEmbedding> for Vec<f64> {
    fn from(e: FaceEmbedding) -> Self {
        e.values
    }
}

/// Embedding network forward pass followed by L2 normalization.
pub fn embed(preprocessed: &Matrix, weights: &StageWeights) -> Result<FaceEmbedding, FaceError> {
    let heads = weights.embed.forward(preprocessed)?;
    FaceEmbedding::from_raw(&heads[0])
}

pub fn cosine_similarity(a: &FaceEmbedding, b: &FaceEmbedding) -> f64 {
    // exact for identical inputs; sqrt(S)² can land one ulp away from S
    if a.values == b.values {
        return 1.0;
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    let na = a.values.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.values.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceDecision {
    pub accept: bool,
    pub similarity: f64,
}

/// Accepts iff the cosine similarity reaches `cfg.theta`.
pub fn verify(a: &FaceEmbedding, b: &FaceEmbedding, cfg: &VerifyConfig) -> FaceDecision {
    let similarity = cosine_similarity(a, b);
    FaceDecision { accept: similarity >= cfg.theta, similarity }
}

/// Which region of the frame ended up being embedded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedSource {
    /// Detected face warped onto the landmark template.
    Aligned,
    /// Best detection box, unaligned.
    BoxCrop,
    /// No usable detection; the whole frame.
    WholeFrame,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameEmbedding {
    pub embedding: FaceEmbedding,
    pub source: EmbedSource,
    pub detections: usize,
}

/// Detect, align, preprocess and embed one frame.
///
/// Falls back from the aligned face to the detection box and then to the
/// whole frame when a step yields nothing usable.
pub fn embed_frame(img: &GrayImage, weights: &StageWeights, cfg: &VerifyConfig) -> Result<FrameEmbedding, FaceError> {
    let detections = if img.width().min(img.height()) >= cfg.min_face {
        detect_faces(img, weights, cfg)?
    } else {
        Vec::new()
    };
    let count = detections.len();
    if let Some(best) = detections.first() {
        if let Ok(fit) = estimate_alignment_fit(&best.landmarks, &cfg.canonical) {
            let s = fit.transform.s;
            if fit.residual <= MAX_ALIGN_RESIDUAL && s >= ALIGN_SCALE_RANGE.0 && s <= ALIGN_SCALE_RANGE.1 {
                let aligned = warp(img, &fit.transform, ALIGNED_SIDE, ALIGNED_SIDE);
                if let Ok(pre) = preprocess(&aligned) {
                    return Ok(FrameEmbedding {
                        embedding: embed(&pre, weights)?,
                        source: EmbedSource::Aligned,
                        detections: count,
                    });
                }
            }
        }
        let crop = crop_resize(&img.to_matrix(), &best.bbox, ALIGNED_SIDE, ALIGNED_SIDE);
        if let Ok(pre) = prewhiten(&crop) {
            return Ok(FrameEmbedding { embedding: embed(&pre, weights)?, source: EmbedSource::BoxCrop, detections: count });
        }
    }
    let pre = preprocess(img)?;
    Ok(FrameEmbedding { embedding: embed(&pre, weights)?, source: EmbedSource::WholeFrame, detections: count })
}
