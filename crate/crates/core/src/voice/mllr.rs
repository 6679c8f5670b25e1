//! Mean-only adaptation `μ_k ← W·μ_k` with `W = C·S⁻¹`.

use nalgebra::{DMatrix, DVector};

use super::gmm::GmmModel;
use super::VoiceError;

/// Ratio of smallest to largest eigenvalue of `S` below which the ridge
/// term is added.
const CONDITION_FLOOR: f64 = 1e-12;

/// Adapted model plus the transform that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct MllrAdaptation {
    pub model: GmmModel,
    pub transform: DMatrix<f64>,
    pub regularized: bool,
}

/// `S = (1/N)·Σ x xᵀ` over the adaptation frames.
pub fn second_moment(frames: &[Vec<f64>], d: usize) -> DMatrix<f64> {
    let mut s = DMatrix::<f64>::zeros(d, d);
    for x in frames {
        let v = DVector::from_column_slice(x);
        s += &v * v.transpose();
    }
    s / frames.len() as f64
}

/// `C = Σ_k π_k μ_k μ_kᵀ + σ̄² I`, with `σ̄²` the weight-averaged variance
/// (averaged over dimensions as well).
pub fn model_moment(model: &GmmModel) -> DMatrix<f64> {
    let d = model.dim();
    let mut c = DMatrix::<f64>::zeros(d, d);
    let mut mean_var = 0.0;
    for ((w, mu), var) in model.weights.iter().zip(&model.means).zip(&model.variances) {
        let v = DVector::from_column_slice(mu);
        c += (&v * v.transpose()) * *w;
        mean_var += w * var.iter().sum::<f64>() / d as f64;
    }
    for i in 0..d {
        c[(i, i)] += mean_var;
    }
    c
}

pub fn adapt_mllr_features(model: &GmmModel, frames: &[Vec<f64>]) -> Result<MllrAdaptation, VoiceError> {
    let d = model.dim();
    if frames.len() < d {
        return Err(VoiceError::InsufficientAudio { frames: frames.len(), need: d });
    }
    if let Some(bad) = frames.iter().find(|x| x.len() != d) {
        return Err(VoiceError::DimensionMismatch { expected: d, got: bad.len() });
    }
    let s = second_moment(frames, d);
    let c = model_moment(model);
    let eig = s.clone().symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e.abs())));
    let well_conditioned = hi > 0.0 && lo / hi > CONDITION_FLOOR;
    let direct = if well_conditioned { s.clone().try_inverse() } else { None };
    let (inverse, regularized) = match direct {
        Some(inv) => (inv, false),
        None => {
            let lambda = 1e-6 * s.trace() / d as f64;
            let ridge = &s + DMatrix::<f64>::identity(d, d) * lambda;
            let inv = if lambda > 0.0 { ridge.try_inverse() } else { None };
            (inv.ok_or(VoiceError::SingularStatistics)?, true)
        }
    };
    let w = &c * inverse;
    if w.iter().any(|v| !v.is_finite()) {
        return Err(VoiceError::SingularStatistics);
    }
    let means = model
        .means
        .iter()
        .map(|mu| (&w * DVector::from_column_slice(mu)).iter().copied().collect())
        .collect();
    let adapted = GmmModel { weights: model.weights.clone(), means, variances: model.variances.clone() };
    Ok(MllrAdaptation { model: adapted, transform: w, regularized })
}
