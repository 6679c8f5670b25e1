use std::path::PathBuf;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    VideoPending,
    VoicePending,
    Granted,
    Denied,
}

impl Stage {
    /// Video gates voice: the only moves are VideoPending → VoicePending →
    /// Granted/Denied and VideoPending → Denied.
    pub fn can_move_to(self, next: Stage) -> bool {
        matches!(
            (self, next),
            (Stage::VideoPending, Stage::VoicePending)
                | (Stage::VideoPending, Stage::Denied)
                | (Stage::VoicePending, Stage::Granted)
                | (Stage::VoicePending, Stage::Denied)
        )
    }

    pub fn is_final(self) -> bool {
        matches!(self, Stage::Granted | Stage::Denied)
    }
}

/// One login attempt and everything it measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoginSession {
    pub user_id: String,
    pub video_frame_path: PathBuf,
    pub voice_path: PathBuf,
    /// Shown to the user once the face check passes.
    pub paraphrase: Option<String>,
    pub stage: Stage,
    /// Stage that failed, for denied sessions.
    pub denied_at: Option<Stage>,
    pub reason: Option<String>,
    pub similarity: Option<f64>,
    pub theta: f64,
    /// Claimed user's voice score.
    pub likelihood: Option<f64>,
    pub best_user: Option<String>,
    pub best_score: Option<f64>,
    pub tau: f64,
    pub transitions: Vec<Stage>,
    /// Steps executed, in order.
    pub trace: Vec<String>,
}

impl LoginSession {
    pub(crate) fn new(user_id: &str, video_frame_path: PathBuf, voice_path: PathBuf, theta: f64, tau: f64) -> Self {
        Self {
            user_id: user_id.to_string(),
            video_frame_path,
            voice_path,
            paraphrase: None,
            stage: Stage::VideoPending,
            denied_at: None,
            reason: None,
            similarity: None,
            theta,
            likelihood: None,
            best_user: None,
            best_score: None,
            tau,
            transitions: vec![Stage::VideoPending],
            trace: Vec::new(),
        }
    }

    pub(crate) fn advance(&mut self, next: Stage) {
        assert!(self.stage.can_move_to(next), "illegal stage transition {:?} -> {next:?}", self.stage);
        self.stage = next;
        self.transitions.push(next);
    }

    pub(crate) fn deny(&mut self, reason: String) {
        self.denied_at = Some(self.stage);
        self.reason = Some(reason);
        self.advance(Stage::Denied);
    }

    pub fn granted(&self) -> bool {
        self.stage == Stage::Granted
    }

    pub(crate) fn step(&mut self, name: &str) {
        self.trace.push(name.to_string());
    }
}
