//! Per-user GMM enrollment, utterance scoring and threshold decisions.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::gmm::{em_fit, select_k, Criterion, EmOptions, GmmModel};
use super::{AudioSignal, FeatureConfig, FeatureExtractor, VoiceError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum KPolicy {
    Fixed { k: usize },
    Select { candidates: Vec<usize>, criterion: Criterion },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnrollConfig {
    pub k_policy: KPolicy,
    pub min_frames: usize,
    pub em: EmOptions,
}

impl Default for EnrollConfig {
    fn default() -> Self {
        Self {
            k_policy: KPolicy::Select { candidates: vec![1, 2, 4], criterion: Criterion::Bic },
            min_frames: 50,
            em: EmOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuthConfig {
    /// Acceptance threshold on the per-frame average log-likelihood.
    pub tau: f64,
    pub min_frames: usize,
}

impl Default for AuthConfig {
    fn default() -> Self {
        Self { tau: -100.0, min_frames: 10 }
    }
}

/// A user's voice model plus how it was trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiceEnrollment {
    pub user_id: String,
    pub k: usize,
    pub dim: usize,
    pub model: GmmModel,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub frames: usize,
    pub feature_config: FeatureConfig,
}

/// Modeling vectors of several recordings, each framed separately.
/// Recordings too short to yield frames contribute nothing.
pub fn recording_features(recordings: &[AudioSignal], fx: &FeatureExtractor) -> Result<Vec<Vec<f64>>, VoiceError> {
    let mut out = Vec::new();
    for r in recordings {
        match fx.model_vectors(r) {
            Ok(v) => out.extend(v),
            Err(VoiceError::SignalTooShort { .. } | VoiceError::TooFewFrames { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Trains a user model from modeling vectors.
pub fn enroll_features(
    user_id: &str,
    features: &[Vec<f64>],
    feature_config: &FeatureConfig,
    cfg: &EnrollConfig,
) -> Result<VoiceEnrollment, VoiceError> {
    if features.len() < cfg.min_frames.max(1) {
        return Err(VoiceError::InsufficientAudio { frames: features.len(), need: cfg.min_frames.max(1) });
    }
    let (k, fit) = match &cfg.k_policy {
        KPolicy::Fixed { k } => (*k, em_fit(features, *k, &cfg.em)?),
        KPolicy::Select { candidates, criterion } => {
            let sel = select_k(features, candidates, *criterion, &cfg.em)?;
            (sel.k, sel.fit)
        }
    };
    Ok(VoiceEnrollment {
        user_id: user_id.to_string(),
        k,
        dim: fit.model.dim(),
        model: fit.model,
        log_likelihood: fit.log_likelihood,
        iterations: fit.iterations,
        frames: features.len(),
        feature_config: feature_config.clone(),
    })
}

pub fn enroll(
    user_id: &str,
    recordings: &[AudioSignal],
    feature_config: &FeatureConfig,
    cfg: &EnrollConfig,
) -> Result<VoiceEnrollment, VoiceError> {
    let fx = FeatureExtractor::new(feature_config)?;
    let features = recording_features(recordings, &fx)?;
    enroll_features(user_id, &features, feature_config, cfg)
}

/// Sum by recursive halving. Splitting exactly at the midpoint makes the sum
/// of `v ‖ v` exactly twice the sum of `v`.
fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}

/// Per-frame average of the frame log-likelihoods.
pub fn score_features(model: &GmmModel, frames: &[Vec<f64>]) -> Result<f64, VoiceError> {
    if frames.is_empty() {
        return Err(VoiceError::InsufficientAudio { frames: 0, need: 1 });
    }
    let lls = frames.iter().map(|x| model.log_likelihood(x)).collect::<Result<Vec<_>, _>>()?;
    Ok(pairwise_sum(&lls) / frames.len() as f64)
}

pub fn score(model: &GmmModel, sample: &AudioSignal, fx: &FeatureExtractor) -> Result<f64, VoiceError> {
    score_features(model, &fx.model_vectors(sample)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiceDecision {
    /// The best-scoring user when `L_max > τ`.
    pub accepted_user: Option<String>,
    pub best_user: String,
    pub best_score: f64,
    pub scores: BTreeMap<String, f64>,
}

/// Max-then-threshold rule: argmax over users (ties go to the
/// lexicographically smallest id), accepted iff `L_max > τ`.
pub fn decide(scores: BTreeMap<String, f64>, tau: f64) -> Result<VoiceDecision, VoiceError> {
    let mut best: Option<(&String, f64)> = None;
    for (user, &s) in &scores {
        if best.map_or(true, |(_, b)| s > b) {
            best = Some((user, s));
        }
    }
    let (user, best_score) = best.ok_or(VoiceError::EmptyDatabase)?;
    let best_user = user.clone();
    Ok(VoiceDecision {
        accepted_user: (best_score > tau).then(|| best_user.clone()),
        best_user,
        best_score,
        scores,
    })
}

/// Scores `sample` against every enrolled user.
pub fn authenticate(
    sample: &AudioSignal,
    db: &EnrollmentDb,
    fx: &FeatureExtractor,
    cfg: &AuthConfig,
) -> Result<VoiceDecision, VoiceError> {
    if db.is_empty() {
        return Err(VoiceError::EmptyDatabase);
    }
    let frames = recording_features(std::slice::from_ref(sample), fx)?;
    authenticate_features(&frames, db, fx.config(), cfg)
}

pub fn authenticate_features(
    frames: &[Vec<f64>],
    db: &EnrollmentDb,
    feature_config: &FeatureConfig,
    cfg: &AuthConfig,
) -> Result<VoiceDecision, VoiceError> {
    if db.is_empty() {
        return Err(VoiceError::EmptyDatabase);
    }
    if frames.len() < cfg.min_frames.max(1) {
        return Err(VoiceError::InsufficientAudio { frames: frames.len(), need: cfg.min_frames.max(1) });
    }
    let mut scores = BTreeMap::new();
    for e in db.iter() {
        if &e.feature_config != feature_config {
            return Err(VoiceError::FeatureConfigMismatch(e.user_id.clone()));
        }
        scores.insert(e.user_id.clone(), score_features(&e.model, frames)?);
    }
    decide(scores, cfg.tau)
}

/// User id → voice enrollment, optionally mirrored to one JSON file per
/// user in a directory.
#[derive(Debug, Default)]
pub struct EnrollmentDb {
    dir: Option<PathBuf>,
    entries: BTreeMap<String, VoiceEnrollment>,
}

impl EnrollmentDb {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(dir: &Path) -> Result<Self, VoiceError> {
        std::fs::create_dir_all(dir)?;
        let mut entries = BTreeMap::new();
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for p in paths {
            let e: VoiceEnrollment = serde_json::from_slice(&std::fs::read(&p)?)
                .map_err(|err| VoiceError::Corrupt(format!("{}: {err}", p.display())))?;
            e.model.validate()?;
            entries.insert(e.user_id.clone(), e);
        }
        Ok(Self { dir: Some(dir.to_path_buf()), entries })
    }

    fn file_for(dir: &Path, user_id: &str) -> PathBuf {
        // user ids are hex-ish; encode anything else to keep names portable
        let safe: String = user_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        dir.join(format!("{safe}.json"))
    }

    /// Adds or (with `replace`) overwrites a user's model.
    pub fn insert(&mut self, enrollment: VoiceEnrollment, replace: bool) -> Result<(), VoiceError> {
        if !replace && self.entries.contains_key(&enrollment.user_id) {
            return Err(VoiceError::DuplicateUser(enrollment.user_id));
        }
        if let Some(dir) = &self.dir {
            let json = serde_json::to_vec_pretty(&enrollment).expect("enrollment serializes");
            let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
            std::io::Write::write_all(&mut tmp, &json)?;
            tmp.persist(Self::file_for(dir, &enrollment.user_id)).map_err(|e| VoiceError::Io(e.error))?;
        }
        self.entries.insert(enrollment.user_id.clone(), enrollment);
        Ok(())
    }

    pub fn remove(&mut self, user_id: &str) -> Result<Option<VoiceEnrollment>, VoiceError> {
        let removed = self.entries.remove(user_id);
        if removed.is_some() {
            if let Some(dir) = &self.dir {
                std::fs::remove_file(Self::file_for(dir, user_id))?;
            }
        }
        Ok(removed)
    }

    pub fn get(&self, user_id: &str) -> Option<&VoiceEnrollment> {
        self.entries.get(user_id)
    }

    pub fn contains(&self, user_id: &str) -> bool {
        self.entries.contains_key(user_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &VoiceEnrollment> {
        self.entries.values()
    }
}
