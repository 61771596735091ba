//! Session wire format.
//!
//! Every message is one JSON text frame: `{"seq": n, "kind": K, "payload": {...}}`.
//! `seq` strictly increases per direction within a session.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cues::{AudioEvent, CueStyle, MarkerState, Urgency};
use crate::engine::{EngineSettings, RunMetrics, TraceEvent};
use crate::scene::{Point2, SceneSpec, Severity};

pub const PROTOCOL_SCHEMA_VERSION: u32 = 1;
/// Largest inbound frame accepted, in bytes.
pub const MAX_FRAME_BYTES: usize = 64 * 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<B> {
    pub seq: u64,
    #[serde(flatten)]
    pub body: B,
}

/// Engine settings for a live session (a run configuration without an agent).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SessionConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(flatten)]
    pub engine: EngineSettings,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum ClientMessage {
    SessionStart {
        scene_id: String,
        #[serde(default)]
        config: Option<SessionConfig>,
    },
    GazeInput {
        t: f64,
        x: f64,
        y: f64,
        #[serde(default = "default_true")]
        valid: bool,
    },
    SessionEnd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerView {
    pub index: usize,
    pub position: Point2,
    pub state: MarkerState,
    pub urgency: Urgency,
    pub style: CueStyle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionPhase {
    Waiting,
    Running,
    Ended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStartAck {
    pub schema_version: u32,
    pub session_id: String,
    pub scene: SceneSpec,
    pub markers: Vec<MarkerView>,
    pub tick_hz: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub tick: u64,
    pub t: f64,
    pub phase: SessionPhase,
    pub tor_active: bool,
    pub markers: Vec<MarkerView>,
    pub gaze: Option<Point2>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorCode {
    SceneNotFound,
    CapacityExceeded,
    SessionClosed,
    MalformedMessage,
    InvalidConfig,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum ServerMessage {
    SessionStart(SessionStartAck),
    StateSnapshot(StateSnapshot),
    CueEventMsg { event: TraceEvent },
    AudioEventMsg { event: AudioEvent },
    SessionEnd { metrics: RunMetrics, replay_token: String },
    Error { code: ErrorCode, message: String },
}

impl ServerMessage {
    /// Routes an engine event to its message kind.
    pub fn from_event(event: TraceEvent) -> Self {
        match event {
            TraceEvent::Audio(a) => ServerMessage::AudioEventMsg { event: a },
            other => ServerMessage::CueEventMsg { event: other },
        }
    }

    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        ServerMessage::Error { code, message: message.into() }
    }
}

/// One entry of the `GET /scenes` listing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSummary {
    pub id: String,
    pub duration_s: f64,
    pub severity: Severity,
    pub object_count: usize,
}

impl From<&SceneSpec> for SceneSummary {
    fn from(s: &SceneSpec) -> Self {
        Self { id: s.id.clone(), duration_s: s.duration_s, severity: s.hazard.severity, object_count: s.objects.len() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneListing {
    pub schema_version: u32,
    pub scenes: Vec<SceneSummary>,
}

/// Parses and validates one inbound frame.
pub fn decode_client_message(text: &str) -> Result<Envelope<ClientMessage>, ProtocolError> {
    if text.len() > MAX_FRAME_BYTES {
        return Err(ProtocolError::Malformed(format!("frame larger than {MAX_FRAME_BYTES} bytes")));
    }
    let env: Envelope<ClientMessage> =
        serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    if let ClientMessage::GazeInput { t, x, y, valid } = env.body {
        if !(t.is_finite() && x.is_finite() && y.is_finite()) {
            return Err(ProtocolError::Malformed("gaze values must be finite".into()));
        }
        if valid && !Point2::new(x, y).in_unit_square() {
            return Err(ProtocolError::Malformed(format!("gaze coordinate ({x}, {y}) out of range")));
        }
    }
    if let ClientMessage::SessionStart { config: Some(cfg), .. } = &env.body {
        cfg.engine.validate().map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    }
    Ok(env)
}

pub fn decode_server_message(text: &str) -> Result<Envelope<ServerMessage>, ProtocolError> {
    serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))
}

pub fn encode<B: Serialize>(seq: u64, body: B) -> String {
    serde_json::to_string(&Envelope { seq, body }).expect("protocol messages always serialize")
}
