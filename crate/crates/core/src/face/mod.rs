//! Face verification: pyramid, three-stage detection cascade, landmark
//! alignment, prewhitening, 512-d embedding and cosine-threshold decision.
//!
//! Stage weights are pluggable. The default weights are seeded random
//! values, so the pipeline is deterministic but makes no accuracy claim.

mod align;
mod boxes;
mod detect;
mod embed;
mod image;
mod weights;

use serde::{Deserialize, Serialize};

pub use align::{estimate_alignment, estimate_alignment_fit, warp, AlignmentFit, Landmarks, SimilarityTransform};
pub use boxes::{decode_box, encode_box, iou, nms, nms_indices, BoundingBox, BoxDeltas};
pub use detect::{build_pyramid, detect_faces, pnet_windows, pyramid_dims, Detection, FACE_PROBABILITY_CUTOFF, MAX_PROPOSALS};
pub use embed::{
    cosine_similarity, embed, embed_frame, l2_normalize, preprocess, prewhiten, verify, EmbedSource, FaceDecision,
    FaceEmbedding, FrameEmbedding, ALIGNED_SIDE, EMBEDDING_DIM, MAX_ALIGN_RESIDUAL, MIN_PIXEL_STD,
};
pub use image::{crop_resize, decode_pgm_stream, resize, resize_matrix, GrayImage};
pub use weights::{ConvNet, ConvSpec, NetSpec, StageWeights, Tensor, EMBED, ONET, PNET, RNET};

#[derive(Debug, thiserror::Error)]
pub enum FaceError {
    #[error("ImageTooSmall: {width}x{height} image, minimum side {min_face}")]
    ImageTooSmall { width: usize, height: usize, min_face: usize },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("PGM decode error: {0}")]
    Pgm(String),
    #[error("DegenerateLandmarks: landmark points are coincident")]
    DegenerateLandmarks,
    #[error("invalid transform: {0}")]
    InvalidTransform(String),
    #[error("DegenerateImage: pixel standard deviation is ~0")]
    DegenerateImage,
    #[error("ZeroEmbedding: embedding norm is ~0")]
    ZeroEmbedding,
    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),
    #[error("weights file: {0}")]
    WeightsFormat(String),
    #[error("invalid face config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Kernel(#[from] crate::neural_kernel::KernelError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    /// Cosine-similarity acceptance threshold.
    pub theta: f64,
    pub pnet_score_min: f64,
    pub rnet_score_min: f64,
    pub nms_iou: f64,
    pub pyramid_alpha: f64,
    pub min_face: usize,
    /// Sliding-window step of the first stage, in pixels.
    pub pnet_stride: usize,
    /// Template the detected landmarks are aligned to (160×160 frame).
    pub canonical: Landmarks,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            theta: 0.5,
            pnet_score_min: 0.6,
            rnet_score_min: 0.7,
            nms_iou: 0.5,
            pyramid_alpha: 0.5,
            min_face: 12,
            pnet_stride: 2,
            canonical: Landmarks::CANONICAL_160,
        }
    }
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<(), FaceError> {
        let open01 = |v: f64| v > 0.0 && v < 1.0;
        let ok = (-1.0..=1.0).contains(&self.theta)
            && open01(self.pnet_score_min)
            && open01(self.rnet_score_min)
            && (0.0..=1.0).contains(&self.nms_iou)
            && open01(self.pyramid_alpha)
            && self.min_face >= 12
            && self.pnet_stride >= 1
            && self.canonical.is_finite();
        if ok {
            Ok(())
        } else {
            Err(FaceError::InvalidConfig(format!("{self:?}")))
        }
    }
}
