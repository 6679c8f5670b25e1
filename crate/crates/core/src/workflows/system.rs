use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::write_atomic;
use super::paraphrase::generate_paraphrase;
use super::profiles::{FaceProfile, FaceProfiles};
use super::session::{LoginSession, Stage};
use super::vault::{RetrievalCost, Retrieved, Vault};
use super::{derive_user_id, SystemConfig, WorkflowError};
use crate::calibrate::{equal_error_threshold, Calibration};
use crate::consensus::{record_win, round_seed, select_index, MinerProfile};
use crate::content_store::EncryptionKey;
use crate::face::{cosine_similarity, decode_pgm_stream, embed_frame, verify, FaceEmbedding, GrayImage, StageWeights};
use crate::ledger::{Address, TxHash};
use crate::voice::{
    authenticate_features, enroll_features, recording_features, score_features, AudioSignal, EnrollmentDb, FeatureExtractor,
};

pub const CONFIG_FILE: &str = "config.json";
const MINERS_FILE: &str = "miners.json";
const SESSION_LOG: &str = "sessions.jsonl";
const KEY_FILE: &str = "store.key";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonalInfo {
    pub name: String,
    pub date_of_birth: String,
    pub email: String,
    pub phone_number: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistrationRequest {
    #[serde(flatten)]
    pub info: PersonalInfo,
    pub audio_path: PathBuf,
    /// A PGM file (one or more frames) or a directory of `.pgm` files.
    pub video_path: PathBuf,
}

impl RegistrationRequest {
    pub fn validate(&self) -> Result<(), WorkflowError> {
        let i = &self.info;
        for (field, v) in [("name", &i.name), ("date_of_birth", &i.date_of_birth), ("phone_number", &i.phone_number)] {
            if v.trim().is_empty() {
                return Err(WorkflowError::InvalidRequest(format!("{field} is empty")));
            }
        }
        if !i.email.contains('@') {
            return Err(WorkflowError::InvalidRequest(format!("email {:?} has no '@'", i.email)));
        }
        Ok(())
    }

    pub fn user_id(&self) -> String {
        derive_user_id(&self.info.name, &self.info.date_of_birth, &self.info.email, &self.info.phone_number)
    }
}

/// Points in registration after which a fault can be injected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaultPoint {
    AudioStored,
    VideoStored,
    RecordStored,
    VoiceEnrolled,
    FaceStored,
    MinersUpdated,
}

impl FaultPoint {
    pub const ALL: [FaultPoint; 6] = [
        FaultPoint::AudioStored,
        FaultPoint::VideoStored,
        FaultPoint::RecordStored,
        FaultPoint::VoiceEnrolled,
        FaultPoint::FaceStored,
        FaultPoint::MinersUpdated,
    ];
}

/// A labelled calibration sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Probe {
    /// User the media belongs to.
    pub owner: String,
    pub frame: Option<PathBuf>,
    pub audio: Option<PathBuf>,
}

/// Calibrated face (θ) and voice (τ) thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    pub face: Calibration,
    pub voice: Calibration,
}

/// Ungated face and voice scores of one probe, for calibration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialScores {
    pub similarity: f64,
    pub voice_scores: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct SessionLine<'a> {
    timestamp_ms: u128,
    #[serde(flatten)]
    session: &'a LoginSession,
}

/// All persistent state of one deployment, rooted at a data directory.
pub struct System {
    root: PathBuf,
    cfg: SystemConfig,
    vault: Vault,
    voices: EnrollmentDb,
    faces: FaceProfiles,
    miners: Mutex<Vec<MinerProfile>>,
    weights: StageWeights,
    fx: FeatureExtractor,
    fault: Option<FaultPoint>,
    sessions: AtomicU64,
}

impl std::fmt::Debug for System {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("System")
            .field("root", &self.root)
            .field("height", &self.vault.ledger().height())
            .field("users", &self.voices.len())
            .finish()
    }
}

fn read_media(path: &Path) -> Result<Vec<u8>, WorkflowError> {
    std::fs::read(path).map_err(|source| WorkflowError::MediaUnreadable { path: path.to_path_buf(), source })
}

/// Video bytes: the file itself, or the sorted `.pgm` files of a directory
/// concatenated into one stream.
fn read_video(path: &Path) -> Result<Vec<u8>, WorkflowError> {
    if !path.is_dir() {
        return read_media(path);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|source| WorkflowError::MediaUnreadable { path: path.to_path_buf(), source })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("pgm"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(WorkflowError::InvalidRequest(format!("{} contains no .pgm frames", path.display())));
    }
    let mut out = Vec::new();
    for f in files {
        out.extend(read_media(&f)?);
    }
    Ok(out)
}

fn first_frame(bytes: &[u8]) -> Result<GrayImage, WorkflowError> {
    decode_pgm_stream(bytes)?
        .into_iter()
        .next()
        .ok_or_else(|| WorkflowError::InvalidRequest("video has no frames".into()))
}

fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl System {
    /// Opens `root`, using `<root>/config.json` when present and defaults
    /// otherwise. `FBT_SEED` is applied on top.
    pub fn open(root: &Path) -> Result<Self, WorkflowError> {
        let path = root.join(CONFIG_FILE);
        let mut cfg = if path.exists() { SystemConfig::load(&path)? } else { SystemConfig::default() };
        cfg.apply_env_seed()?;
        Self::open_with(root, cfg)
    }

    pub fn open_with(root: &Path, cfg: SystemConfig) -> Result<Self, WorkflowError> {
        cfg.validate()?;
        std::fs::create_dir_all(root)?;
        let key = if cfg.encrypt_at_rest { Some(Self::load_key(root, &cfg)?) } else { None };
        let vault = Vault::open(root, cfg.storage_mode, key)?;
        let voices = EnrollmentDb::open(&root.join("voice"))?;
        let faces = FaceProfiles::open(&root.join("faces"))?;
        let miners_path = root.join(MINERS_FILE);
        let miners = if miners_path.exists() {
            serde_json::from_slice(&std::fs::read(&miners_path)?)
                .map_err(|e| WorkflowError::Corrupt(format!("{}: {e}", miners_path.display())))?
        } else {
            cfg.miners.clone()
        };
        let weights = match &cfg.weights_path {
            Some(p) => StageWeights::load(p)?,
            None => StageWeights::random(cfg.weights_seed),
        };
        let fx = FeatureExtractor::new(&cfg.feature)?;
        Ok(Self {
            root: root.to_path_buf(),
            cfg,
            vault,
            voices,
            faces,
            miners: Mutex::new(miners),
            weights,
            fx,
            fault: None,
            sessions: AtomicU64::new(0),
        })
    }

    fn load_key(root: &Path, cfg: &SystemConfig) -> Result<EncryptionKey, WorkflowError> {
        let path = cfg.key_file.clone().unwrap_or_else(|| root.join(KEY_FILE));
        if path.exists() {
            return Ok(EncryptionKey::from_hex(&std::fs::read_to_string(&path)?)?);
        }
        if cfg.key_file.is_some() {
            return Err(WorkflowError::InvalidConfig(format!("key file {} does not exist", path.display())));
        }
        let key = EncryptionKey::generate();
        write_atomic(&path, hex::encode(key.as_bytes()).as_bytes())?;
        Ok(key)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    /// Replaces the decision thresholds (after calibration).
    pub fn set_thresholds(&mut self, theta: f64, tau: f64) {
        self.cfg.verify.theta = theta;
        self.cfg.auth.tau = tau;
    }

    pub fn vault(&self) -> &Vault {
        &self.vault
    }

    pub fn voices(&self) -> &EnrollmentDb {
        &self.voices
    }

    pub fn faces(&self) -> &FaceProfiles {
        &self.faces
    }

    pub fn weights(&self) -> &StageWeights {
        &self.weights
    }

    pub fn miners(&self) -> Vec<MinerProfile> {
        self.miners.lock().expect("miner lock poisoned").clone()
    }

    /// Makes the next registrations fail right after `point`.
    pub fn inject_fault(&mut self, point: Option<FaultPoint>) {
        self.fault = point;
    }

    pub fn is_registered(&self, user_id: &str) -> bool {
        self.vault.ledger().has_user(user_id)
    }

    fn check_fault(&self, point: FaultPoint) -> Result<(), WorkflowError> {
        if self.fault == Some(point) {
            return Err(WorkflowError::InjectedFault(point));
        }
        Ok(())
    }

    fn save_miners(&self, miners: &[MinerProfile]) -> Result<(), WorkflowError> {
        let json = serde_json::to_vec_pretty(miners).map_err(|e| WorkflowError::Corrupt(e.to_string()))?;
        write_atomic(&self.root.join(MINERS_FILE), &json)
    }

    /// Stores media, anchors the user record through a consensus round,
    /// and enrolls the voice model and reference face.
    ///
    /// Everything that can fail is computed before the first write; any
    /// later failure undoes the writes made so far, and the ledger append
    /// comes last.
    pub fn register(&mut self, req: &RegistrationRequest) -> Result<(String, TxHash), WorkflowError> {
        req.validate()?;
        let audio_bytes = read_media(&req.audio_path)?;
        let video_bytes = read_video(&req.video_path)?;
        self.register_bytes(&req.info, &audio_bytes, &video_bytes)
    }

    pub fn register_bytes(
        &mut self,
        info: &PersonalInfo,
        audio_bytes: &[u8],
        video_bytes: &[u8],
    ) -> Result<(String, TxHash), WorkflowError> {
        let user_id = derive_user_id(&info.name, &info.date_of_birth, &info.email, &info.phone_number);
        if self.is_registered(&user_id) || self.voices.contains(&user_id) || self.faces.contains(&user_id) {
            return Err(WorkflowError::DuplicateUser(user_id));
        }

        let audio = AudioSignal::from_wav_bytes(audio_bytes)?;
        if audio.sample_rate() != self.cfg.feature.sample_rate {
            return Err(crate::voice::VoiceError::SampleRateMismatch {
                expected: self.cfg.feature.sample_rate,
                got: audio.sample_rate(),
            }
            .into());
        }
        let frame = first_frame(video_bytes)?;
        let features = recording_features(std::slice::from_ref(&audio), &self.fx)?;
        let enrollment = enroll_features(&user_id, &features, &self.cfg.feature, &self.cfg.enroll)?;
        let face = embed_frame(&frame, &self.weights, &self.cfg.verify)?;

        let mut miners = self.miners();
        let height = self.vault.ledger().height();
        let winner = select_index(&miners, &self.cfg.consensus, &round_seed(self.cfg.seed, height))?;
        let sender = Address::derive(&miners[winner].miner_id);
        let previous_miners = miners.clone();
        record_win(&mut miners, winner);

        let fault = self.fault;
        let mut hook = |p: FaultPoint| if fault == Some(p) { Err(WorkflowError::InjectedFault(p)) } else { Ok(()) };
        let staged = self.vault.stage(&user_id, info, audio_bytes, video_bytes, &mut hook)?;

        let mut undo_voice = false;
        let mut undo_face = false;
        let mut undo_miners = false;
        let result = (|| -> Result<TxHash, WorkflowError> {
            self.voices.insert(enrollment, false)?;
            undo_voice = true;
            self.check_fault(FaultPoint::VoiceEnrolled)?;
            self.faces.insert(FaceProfile {
                user_id: user_id.clone(),
                video_cid: staged.record.video_cid,
                source: face.source,
                embedding: face.embedding,
            })?;
            undo_face = true;
            self.check_fault(FaultPoint::FaceStored)?;
            self.save_miners(&miners)?;
            undo_miners = true;
            self.check_fault(FaultPoint::MinersUpdated)?;
            self.vault.commit(&staged, sender, now_secs(), height)
        })();

        match result {
            Ok(hash) => {
                *self.miners.lock().expect("miner lock poisoned") = miners;
                Ok((user_id, hash))
            }
            Err(e) => {
                if undo_miners {
                    self.save_miners(&previous_miners)?;
                }
                if undo_face {
                    self.faces.remove(&user_id)?;
                }
                if undo_voice {
                    self.voices.remove(&user_id)?;
                }
                self.vault.rollback(&staged)?;
                Err(e)
            }
        }
    }

    /// Full chain walk: user index → transaction → user record → media.
    pub fn retrieve_record(&self, user_id: &str) -> Result<Retrieved, WorkflowError> {
        self.vault.retrieve(user_id)
    }

    pub fn retrieve_counted(&self, user_id: &str) -> Result<(Retrieved, RetrievalCost), WorkflowError> {
        self.vault.retrieve_counted(user_id)
    }

    /// Reference embedding for `record`: the cached one when it was computed
    /// from the same video, otherwise recomputed from the retrieved video.
    fn reference_embedding(&self, retrieved: &Retrieved) -> Result<FaceEmbedding, WorkflowError> {
        match self.faces.get(&retrieved.record.user_id) {
            Some(p) if p.video_cid == retrieved.record.video_cid => Ok(p.embedding.clone()),
            _ => Ok(embed_frame(&first_frame(&retrieved.video)?, &self.weights, &self.cfg.verify)?.embedding),
        }
    }

    fn load_voice(&self, path: &Path) -> Result<Vec<Vec<f64>>, WorkflowError> {
        let audio = AudioSignal::from_wav_bytes(&read_media(path)?)?;
        Ok(recording_features(std::slice::from_ref(&audio), &self.fx)?)
    }

    fn load_frame(&self, path: &Path) -> Result<GrayImage, WorkflowError> {
        first_frame(&read_media(path)?)
    }

    /// Video check, then (only if it passes) the paraphrase and voice check.
    /// Access requires both checks and the voice argmax to be the claimed
    /// user. Every session is appended to the session log.
    pub fn login(&self, user_id: &str, video_frame_path: &Path, voice_path: &Path) -> Result<LoginSession, WorkflowError> {
        let mut s = LoginSession::new(
            user_id,
            video_frame_path.to_path_buf(),
            voice_path.to_path_buf(),
            self.cfg.verify.theta,
            self.cfg.auth.tau,
        );
        s.step("chain_walk");
        let retrieved = self.retrieve_record(user_id)?;
        let reference = self.reference_embedding(&retrieved)?;

        s.step("video_verify");
        let live = embed_frame(&self.load_frame(video_frame_path)?, &self.weights, &self.cfg.verify)?;
        let face = verify(&live.embedding, &reference, &self.cfg.verify);
        s.similarity = Some(face.similarity);
        if !face.accept {
            s.deny(format!("face similarity {:.6} below theta {}", face.similarity, self.cfg.verify.theta));
            self.log_session(&s)?;
            return Ok(s);
        }
        s.advance(Stage::VoicePending);

        let n = self.sessions.fetch_add(1, Ordering::Relaxed);
        let seed = self.cfg.seed ^ u64::from_be_bytes(retrieved.tx_hash.0[..8].try_into().expect("8 bytes")) ^ n;
        s.paraphrase = Some(generate_paraphrase(seed));

        s.step("voice_authenticate");
        let frames = self.load_voice(voice_path)?;
        let decision = authenticate_features(&frames, &self.voices, &self.cfg.feature, &self.cfg.auth)?;
        s.likelihood = decision.scores.get(user_id).copied();
        s.best_user = Some(decision.best_user.clone());
        s.best_score = Some(decision.best_score);
        match decision.accepted_user.as_deref() {
            Some(u) if u == user_id => s.advance(Stage::Granted),
            Some(u) => s.deny(format!("voice matches {u}, not the claimed user")),
            None => s.deny(format!(
                "voice score {:.6} not above tau {}",
                decision.best_score, self.cfg.auth.tau
            )),
        }
        self.log_session(&s)?;
        Ok(s)
    }

    fn log_session(&self, s: &LoginSession) -> Result<(), WorkflowError> {
        let ts = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis());
        let mut line = serde_json::to_vec(&SessionLine { timestamp_ms: ts, session: s })
            .map_err(|e| WorkflowError::Corrupt(e.to_string()))?;
        line.push(b'\n');
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(self.root.join(SESSION_LOG))?;
        f.write_all(&line)?;
        Ok(())
    }

    /// Face similarity against `user_id`'s reference and voice scores
    /// against every enrolled user, without gating or logging.
    pub fn score_trial(&self, user_id: &str, video_frame_path: &Path, voice_path: &Path) -> Result<TrialScores, WorkflowError> {
        let retrieved = self.retrieve_record(user_id)?;
        let reference = self.reference_embedding(&retrieved)?;
        let live = embed_frame(&self.load_frame(video_frame_path)?, &self.weights, &self.cfg.verify)?;
        let frames = self.load_voice(voice_path)?;
        let decision = authenticate_features(&frames, &self.voices, &self.cfg.feature, &self.cfg.auth)?;
        Ok(TrialScores { similarity: verify(&live.embedding, &reference, &self.cfg.verify).similarity, voice_scores: decision.scores })
    }

    /// Equal-error thresholds from labelled probes. Every probe is scored
    /// against every enrolled user; it is genuine for its owner and an
    /// imposter for everyone else.
    pub fn calibrate(&self, probes: &[Probe]) -> Result<Thresholds, WorkflowError> {
        let users: Vec<String> = self.voices.iter().map(|e| e.user_id.clone()).collect();
        if users.is_empty() {
            return Err(crate::voice::VoiceError::EmptyDatabase.into());
        }
        let mut references = BTreeMap::new();
        for u in &users {
            references.insert(u.clone(), self.reference_embedding(&self.retrieve_record(u)?)?);
        }
        let (mut face_genuine, mut face_imposter) = (Vec::new(), Vec::new());
        let (mut voice_genuine, mut voice_imposter) = (Vec::new(), Vec::new());
        for probe in probes {
            if let Some(frame) = &probe.frame {
                let live = embed_frame(&self.load_frame(frame)?, &self.weights, &self.cfg.verify)?.embedding;
                for (u, reference) in &references {
                    let sim = cosine_similarity(&live, reference);
                    if *u == probe.owner { face_genuine.push(sim) } else { face_imposter.push(sim) }
                }
            }
            if let Some(audio) = &probe.audio {
                let frames = self.load_voice(audio)?;
                for e in self.voices.iter() {
                    let score = score_features(&e.model, &frames)?;
                    if e.user_id == probe.owner { voice_genuine.push(score) } else { voice_imposter.push(score) }
                }
            }
        }
        let cal = |g: &[f64], i: &[f64], what: &str| {
            equal_error_threshold(g, i).map_err(|e| WorkflowError::InvalidRequest(format!("{what} calibration: {e}")))
        };
        Ok(Thresholds {
            face: cal(&face_genuine, &face_imposter, "face")?,
            voice: cal(&voice_genuine, &voice_imposter, "voice")?,
        })
    }

    pub fn session_log_path(&self) -> PathBuf {
        self.root.join(SESSION_LOG)
    }
}
