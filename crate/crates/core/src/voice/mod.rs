//! Speaker authentication: acoustic features, diagonal GMMs trained by EM,
//! per-user enrollment, likelihood scoring and MLLR mean adaptation.

mod audio;
mod features;
mod gmm;
mod mllr;
mod speaker;

pub use audio::AudioSignal;
pub use features::{
    dct_ii, dct_matrix, delta, delta_features, formants, hamming, hz_to_mel, lpc, lpc_roots, mel_filterbank,
    mel_to_hz, pitch_period, quarter_wave_resonance, spectral_shape, FeatureConfig, FeatureExtractor, FeatureVector,
    LOG_FLOOR,
};
pub use gmm::{
    em_fit, em_fit_observed, log_sum_exp, responsibilities, select_k, Criterion, EmOptions, EmStep, GmmFit, GmmModel,
    Selection, VARIANCE_FLOOR,
};
pub use mllr::{adapt_mllr_features, model_moment, second_moment, MllrAdaptation};
pub use speaker::{
    authenticate, authenticate_features, decide, enroll, enroll_features, recording_features, score, score_features,
    AuthConfig, EnrollConfig, EnrollmentDb, KPolicy, VoiceDecision, VoiceEnrollment,
};

/// MLLR adaptation from recordings.
pub fn adapt_mllr(
    model: &GmmModel,
    adaptation: &[AudioSignal],
    fx: &FeatureExtractor,
) -> Result<MllrAdaptation, VoiceError> {
    adapt_mllr_features(model, &recording_features(adaptation, fx)?)
}

#[derive(Debug, thiserror::Error)]
pub enum VoiceError {
    #[error("SignalTooShort: {len} samples, frame needs {frame_len}")]
    SignalTooShort { len: usize, frame_len: usize },
    #[error("TooFewFrames: {got} frames, need {need}")]
    TooFewFrames { got: usize, need: usize },
    #[error("DegenerateFrame: frame has no energy")]
    DegenerateFrame,
    #[error("DimensionMismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("TooFewPoints: {got} points for {need} components")]
    TooFewPoints { got: usize, need: usize },
    #[error("InsufficientAudio: {frames} usable frames, need {need}")]
    InsufficientAudio { frames: usize, need: usize },
    #[error("DuplicateUser: {0} is already enrolled")]
    DuplicateUser(String),
    #[error("EmptyDatabase: no enrolled users")]
    EmptyDatabase,
    #[error("SingularStatistics: adaptation statistics cannot be inverted")]
    SingularStatistics,
    #[error("UnsupportedFormat: {0}")]
    UnsupportedFormat(String),
    #[error("FeatureConfigMismatch: {0} was enrolled under a different feature config")]
    FeatureConfigMismatch(String),
    #[error("sample rate {got} Hz does not match the configured {expected} Hz")]
    SampleRateMismatch { expected: u32, got: u32 },
    #[error("invalid audio: {0}")]
    InvalidAudio(String),
    #[error("invalid voice config: {0}")]
    InvalidConfig(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("corrupt enrollment data: {0}")]
    Corrupt(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
