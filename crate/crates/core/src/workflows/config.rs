use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::WorkflowError;
use crate::consensus::{ConsensusParams, MinerProfile};
use crate::face::VerifyConfig;
use crate::voice::{AuthConfig, EnrollConfig, FeatureConfig};

/// Environment variable that overrides every seed in the configuration.
pub const ENV_SEED: &str = "FBT_SEED";

/// Where user media lives relative to the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StorageMode {
    /// Media and the user record in the content store; the transaction
    /// carries only the record's digest.
    CidAnchor,
    /// Record and media embedded in the transaction itself.
    OnchainPayload,
}

impl StorageMode {
    pub fn as_str(self) -> &'static str {
        match self {
            StorageMode::CidAnchor => "cid_anchor",
            StorageMode::OnchainPayload => "onchain_payload",
        }
    }
}

impl std::str::FromStr for StorageMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cid_anchor" => Ok(StorageMode::CidAnchor),
            "onchain_payload" => Ok(StorageMode::OnchainPayload),
            other => Err(format!("unknown storage mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemConfig {
    pub verify: VerifyConfig,
    pub auth: AuthConfig,
    pub feature: FeatureConfig,
    pub enroll: EnrollConfig,
    pub consensus: ConsensusParams,
    /// Initial miner set, used when the data directory has no miner state yet.
    pub miners: Vec<MinerProfile>,
    pub storage_mode: StorageMode,
    pub encrypt_at_rest: bool,
    /// File holding the 32-byte key as hex. Without one, a key is generated
    /// into the data directory on first use.
    pub key_file: Option<PathBuf>,
    /// Seed for consensus rounds and paraphrases.
    pub seed: u64,
    /// Seed of the random face-stage weights when no weights file is given.
    pub weights_seed: u64,
    pub weights_path: Option<PathBuf>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            verify: VerifyConfig::default(),
            auth: AuthConfig::default(),
            feature: FeatureConfig::default(),
            enroll: EnrollConfig::default(),
            consensus: ConsensusParams::default(),
            miners: (0..3)
                .map(|i| MinerProfile::new(format!("miner-{i}"), 10.0, 10.0, 10.0, 100.0))
                .collect(),
            storage_mode: StorageMode::CidAnchor,
            encrypt_at_rest: false,
            key_file: None,
            seed: 0,
            weights_seed: 0,
            weights_path: None,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<(), WorkflowError> {
        let invalid = |e: String| WorkflowError::InvalidConfig(e);
        self.verify.validate().map_err(|e| invalid(e.to_string()))?;
        self.feature.validate().map_err(|e| invalid(e.to_string()))?;
        self.consensus.validate().map_err(|e| invalid(e.to_string()))?;
        for m in &self.miners {
            m.validate().map_err(|e| invalid(e.to_string()))?;
        }
        if self.miners.is_empty() {
            return Err(invalid("at least one miner is required".into()));
        }
        if !self.auth.tau.is_finite() {
            return Err(invalid("auth.tau must be finite".into()));
        }
        Ok(())
    }

    /// Sets every seed to `seed`.
    pub fn override_seeds(&mut self, seed: u64) {
        self.seed = seed;
        self.weights_seed = seed;
        self.enroll.em.seed = seed;
    }

    /// Applies `FBT_SEED` when it is set.
    pub fn apply_env_seed(&mut self) -> Result<(), WorkflowError> {
        if let Ok(v) = std::env::var(ENV_SEED) {
            let seed = v
                .trim()
                .parse()
                .map_err(|_| WorkflowError::InvalidConfig(format!("{ENV_SEED}={v:?} is not an unsigned integer")))?;
            self.override_seeds(seed);
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, WorkflowError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| WorkflowError::InvalidConfig(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<(), WorkflowError> {
        let json = serde_json::to_vec_pretty(self).map_err(|e| WorkflowError::InvalidConfig(e.to_string()))?;
        write_atomic(path, &json)
    }
}

/// Writes via a temp file in the same directory and renames over `path`.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), WorkflowError> {
    use std::io::Write;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
