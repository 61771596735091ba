//! Transport-independent live session: latest-sample-wins gaze intake on top
//! of an [`Engine`], with snapshot and event output per tick.

use thiserror::Error;

use crate::cues::{style_for, CueMachine, MarkerState, Urgency};
use crate::engine::{Engine, EngineError, TraceEvent};
use crate::gaze::GazeSample;
use crate::harness::{RunConfig, RunOutput};
use crate::planner::PlannedTrajectory;
use crate::protocol::{
    ErrorCode, MarkerView, ServerMessage, SessionConfig, SessionPhase, SessionStartAck, StateSnapshot,
    PROTOCOL_SCHEMA_VERSION,
};
use crate::scene::{Point2, SceneSpec};

/// A sample older than this many ticks is consumed as invalid.
pub const STALE_TICKS: u64 = 3;
pub const SNAPSHOT_HZ: u32 = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("scene not found: {0}")]
    SceneNotFound(String),
    #[error("session capacity exceeded")]
    CapacityExceeded,
    #[error("session closed")]
    SessionClosed,
    #[error("malformed message: {0}")]
    MalformedMessage(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl SessionError {
    pub fn code(&self) -> ErrorCode {
        match self {
            SessionError::SceneNotFound(_) => ErrorCode::SceneNotFound,
            SessionError::CapacityExceeded => ErrorCode::CapacityExceeded,
            SessionError::SessionClosed => ErrorCode::SessionClosed,
            SessionError::MalformedMessage(_) => ErrorCode::MalformedMessage,
            SessionError::Engine(EngineError::Config(_)) => ErrorCode::InvalidConfig,
            SessionError::Engine(_) => ErrorCode::Internal,
        }
    }

    pub fn to_message(&self) -> ServerMessage {
        ServerMessage::error(self.code(), self.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Inbox {
    point: Point2,
    valid: bool,
    received_tick: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TickOutput {
    pub events: Vec<TraceEvent>,
    pub snapshot: Option<StateSnapshot>,
    /// The engine reached its end on this tick.
    pub finished: bool,
}

#[derive(Debug, Clone)]
pub struct Session {
    id: String,
    config: SessionConfig,
    engine: Engine,
    phase: SessionPhase,
    inbox: Option<Inbox>,
    last_inbound_seq: Option<u64>,
    last_gaze: Option<Point2>,
    snapshot_every: u64,
}

fn pending_markers(plan: &PlannedTrajectory, urgency: Urgency) -> Vec<MarkerView> {
    plan.points()
        .into_iter()
        .skip(1)
        .enumerate()
        .map(|(index, position)| MarkerView { index, position, state: MarkerState::Pending, urgency, style: style_for(urgency) })
        .collect()
}

fn marker_views(machine: &CueMachine) -> Vec<MarkerView> {
    machine
        .markers()
        .iter()
        .map(|m| MarkerView { index: m.index, position: m.position, state: m.state, urgency: m.urgency, style: style_for(m.urgency) })
        .collect()
}

impl Session {
    /// Creates a session in the Waiting phase and its start acknowledgment.
    pub fn open(id: impl Into<String>, scene: &SceneSpec, config: SessionConfig) -> Result<(Self, SessionStartAck), SessionError> {
        let id = id.into();
        let engine = Engine::new(scene.clone(), config.engine)?;
        let preview = engine.preview_trajectory()?;
        let ack = SessionStartAck {
            schema_version: PROTOCOL_SCHEMA_VERSION,
            session_id: id.clone(),
            scene: scene.clone(),
            markers: pending_markers(&preview, Urgency::Low),
            tick_hz: config.engine.tick_hz,
        };
        let snapshot_every = u64::from((config.engine.tick_hz / SNAPSHOT_HZ).max(1));
        Ok((
            Self {
                id,
                config,
                engine,
                phase: SessionPhase::Waiting,
                inbox: None,
                last_inbound_seq: None,
                last_gaze: None,
                snapshot_every,
            },
            ack,
        ))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn phase(&self) -> SessionPhase {
        self.phase
    }

    pub fn tick_hz(&self) -> u32 {
        self.config.engine.tick_hz
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    /// Checks that inbound `seq` values strictly increase.
    pub fn accept_seq(&mut self, seq: u64) -> Result<(), SessionError> {
        if self.last_inbound_seq.is_some_and(|last| seq <= last) {
            return Err(SessionError::MalformedMessage(format!("seq {seq} is not increasing")));
        }
        self.last_inbound_seq = Some(seq);
        Ok(())
    }

    /// Stores the newest gaze sample; the first one starts the session clock.
    pub fn ingest_gaze(&mut self, x: f64, y: f64, valid: bool) -> Result<(), SessionError> {
        if self.phase == SessionPhase::Ended {
            return Err(SessionError::SessionClosed);
        }
        let point = Point2::new(x, y);
        if !(x.is_finite() && y.is_finite()) || (valid && !point.in_unit_square()) {
            return Err(SessionError::MalformedMessage(format!("gaze coordinate ({x}, {y}) out of range")));
        }
        self.inbox = Some(Inbox { point, valid, received_tick: self.engine.tick_index() });
        if self.phase == SessionPhase::Waiting {
            self.phase = SessionPhase::Running;
        }
        Ok(())
    }

    fn current_sample(&self) -> GazeSample {
        let now = self.engine.now();
        match self.inbox {
            Some(inbox) if self.engine.tick_index() - inbox.received_tick <= STALE_TICKS && inbox.valid => {
                GazeSample::new(now, inbox.point)
            }
            Some(inbox) => GazeSample::invalid(now, inbox.point),
            None => GazeSample::invalid(now, self.engine.scene().distraction_point),
        }
    }

    /// Runs one engine tick while Running; a no-op otherwise.
    pub fn tick(&mut self) -> Result<TickOutput, SessionError> {
        if self.phase != SessionPhase::Running || self.engine.is_finished() {
            return Ok(TickOutput::default());
        }
        let sample = self.current_sample();
        if sample.valid {
            self.last_gaze = Some(sample.point);
        }
        let tick = self.engine.tick_index();
        let events = self.engine.tick(sample)?;
        let finished = self.engine.is_finished();
        let snapshot = (tick.is_multiple_of(self.snapshot_every) || finished).then(|| self.snapshot());
        Ok(TickOutput { events, snapshot, finished })
    }

    pub fn snapshot(&self) -> StateSnapshot {
        let markers = match self.engine.cue_machine() {
            Some(machine) => marker_views(machine),
            None => Vec::new(),
        };
        StateSnapshot {
            tick: self.engine.tick_index(),
            t: self.engine.now(),
            phase: if self.engine.is_finished() { SessionPhase::Ended } else { self.phase },
            tor_active: self.engine.hud().tor_active,
            markers,
            gaze: self.last_gaze,
        }
    }

    /// Ends the session; the returned run carries the full event log and gaze trace.
    pub fn close(&mut self) -> Result<RunOutput, SessionError> {
        if self.phase == SessionPhase::Ended {
            return Err(SessionError::SessionClosed);
        }
        self.phase = SessionPhase::Ended;
        Ok(RunOutput {
            config: RunConfig {
                scene_id: self.engine.scene().id.clone(),
                agent: None,
                seed: self.config.seed,
                engine: self.config.engine,
            },
            metrics: self.engine.metrics(),
            events: self.engine.events().to_vec(),
            gaze: self.engine.gaze_trace().to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cues::CueEvent;
    use crate::scene::{HazardSpec, Severity};

    fn scene() -> SceneSpec {
        SceneSpec {
            id: "bare".into(),
            duration_s: 10.0,
            hazard: HazardSpec { position: Point2::new(0.8, 0.5), severity: Severity::Medium },
            distraction_point: Point2::new(0.2, 0.8),
            objects: vec![],
        }
    }

    #[test]
    fn open_acknowledges_pending_markers() {
        let (session, ack) = Session::open("s1", &scene(), SessionConfig::default()).unwrap();
        assert_eq!(session.phase(), SessionPhase::Waiting);
        assert_eq!(ack.markers.len(), 1);
        assert!(ack.markers.iter().all(|m| m.state == MarkerState::Pending));
        assert_eq!(ack.tick_hz, 60);
    }

    #[test]
    fn waiting_session_does_not_tick() {
        let (mut session, _) = Session::open("s1", &scene(), SessionConfig::default()).unwrap();
        assert_eq!(session.tick().unwrap(), TickOutput::default());
        assert_eq!(session.engine().tick_index(), 0);
    }

    #[test]
    fn out_of_range_gaze_keeps_session_open() {
        let (mut session, _) = Session::open("s1", &scene(), SessionConfig::default()).unwrap();
        assert!(matches!(session.ingest_gaze(1.4, 0.5, true), Err(SessionError::MalformedMessage(_))));
        assert_eq!(session.phase(), SessionPhase::Waiting);
        session.ingest_gaze(0.2, 0.8, true).unwrap();
        assert_eq!(session.phase(), SessionPhase::Running);
    }

    #[test]
    fn seq_must_increase() {
        let (mut session, _) = Session::open("s1", &scene(), SessionConfig::default()).unwrap();
        session.accept_seq(1).unwrap();
        session.accept_seq(5).unwrap();
        assert!(session.accept_seq(5).is_err());
    }

    #[test]
    fn stale_samples_become_invalid_and_escalation_continues() {
        let (mut session, _) = Session::open("s1", &scene(), SessionConfig::default()).unwrap();
        session.ingest_gaze(0.2, 0.8, true).unwrap();
        let mut escalations = Vec::new();
        for _ in 0..200 {
            let out = session.tick().unwrap();
            escalations.extend(out.events.into_iter().filter_map(|e| match e {
                TraceEvent::Cue(CueEvent::UrgencyChanged { t, .. }) => Some(t),
                _ => None,
            }));
        }
        let gaze = session.engine().gaze_trace();
        assert!(gaze[..=3].iter().all(|s| s.valid));
        assert!(gaze[4..].iter().all(|s| !s.valid));
        // TOR at 0.5 s, Medium two seconds later
        assert_eq!(escalations, [2.5]);
    }

    #[test]
    fn snapshots_at_ten_hertz() {
        let (mut session, _) = Session::open("s1", &scene(), SessionConfig::default()).unwrap();
        session.ingest_gaze(0.2, 0.8, true).unwrap();
        let count = (0..60).filter(|_| session.tick().unwrap().snapshot.is_some()).count();
        assert_eq!(count, 10);
    }

    #[test]
    fn close_twice_fails() {
        let (mut session, _) = Session::open("s1", &scene(), SessionConfig::default()).unwrap();
        let run = session.close().unwrap();
        assert!(!run.metrics.completed);
        assert_eq!(session.close(), Err(SessionError::SessionClosed));
        assert_eq!(session.ingest_gaze(0.5, 0.5, true), Err(SessionError::SessionClosed));
    }
}
