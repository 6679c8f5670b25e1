//! Registration, login and record retrieval over one data directory.
//!
//! Data directory layout:
//!
//! ```text
//! <root>/config.json        SystemConfig (optional)
//! <root>/store/objects/     content-addressed blobs
//! <root>/ledger/            chain.jsonl, users.jsonl
//! <root>/voice/             one voice enrollment JSON per user
//! <root>/faces/             one reference face embedding JSON per user
//! <root>/miners.json        miner profiles with their consecutive-block counts
//! <root>/sessions.jsonl     login session log
//! <root>/store.key          generated key when encryption is on and no key file is configured
//! ```

mod config;
mod paraphrase;
mod profiles;
mod session;
mod system;
mod vault;

use std::path::PathBuf;

use sha2::{Digest, Sha256};

pub use config::{StorageMode, SystemConfig, ENV_SEED};
pub use paraphrase::{generate_paraphrase, PARAPHRASE_WORDS, WORD_LIST};
pub use profiles::{FaceProfile, FaceProfiles};
pub use session::{LoginSession, Stage};
pub use system::{FaultPoint, PersonalInfo, Probe, RegistrationRequest, System, Thresholds, TrialScores, CONFIG_FILE};
pub use vault::{decode_payload, encode_payload, Retrieved, RetrievalCost, Staged, Vault};

use crate::consensus::ConsensusError;
use crate::content_store::StoreError;
use crate::face::FaceError;
use crate::ledger::LedgerError;
use crate::voice::VoiceError;

#[derive(Debug, thiserror::Error)]
pub enum WorkflowError {
    #[error("DuplicateUser: {0} is already registered")]
    DuplicateUser(String),
    #[error("UnknownUser: {0} is not registered")]
    UnknownUser(String),
    #[error("InvalidRequest: {0}")]
    InvalidRequest(String),
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("MediaUnreadable: {path}: {source}")]
    MediaUnreadable { path: PathBuf, source: std::io::Error },
    #[error("InjectedFault: registration aborted at {0:?}")]
    InjectedFault(FaultPoint),
    #[error("Corrupt: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Ledger(LedgerError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error(transparent)]
    Face(#[from] FaceError),
    #[error(transparent)]
    Voice(VoiceError),
    #[error("Io: {0}")]
    Io(#[from] std::io::Error),
}

impl From<LedgerError> for WorkflowError {
    fn from(e: LedgerError) -> Self {
        match e {
            LedgerError::UnknownUser(u) => WorkflowError::UnknownUser(u),
            other => WorkflowError::Ledger(other),
        }
    }
}

impl From<VoiceError> for WorkflowError {
    fn from(e: VoiceError) -> Self {
        match e {
            VoiceError::DuplicateUser(u) => WorkflowError::DuplicateUser(u),
            other => WorkflowError::Voice(other),
        }
    }
}

impl WorkflowError {
    /// Short error kind, as printed by the command line.
    pub fn kind(&self) -> String {
        let text = self.to_string();
        match text.split_once(':') {
            Some((head, _)) if !head.contains(' ') => head.to_string(),
            _ => "Error".to_string(),
        }
    }
}

/// `"u-"` followed by the first 16 hex digits of the SHA-256 of the
/// NUL-separated personal fields.
pub fn derive_user_id(name: &str, date_of_birth: &str, email: &str, phone_number: &str) -> String {
    let mut h = Sha256::new();
    for (i, field) in [name, date_of_birth, email, phone_number].iter().enumerate() {
        if i > 0 {
            h.update([0u8]);
        }
        h.update(field.as_bytes());
    }
    format!("u-{}", &hex::encode(h.finalize())[..16])
}
