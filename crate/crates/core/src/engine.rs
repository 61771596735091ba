//! Fixed-tick takeover engine.
//!
//! One [`Engine`] runs one scenario: it builds the fused saliency map and
//! waypoints up front, collects warm-up gaze until the takeover request
//! fires, plans the cue trajectory from the measured initial fixation and
//! then advances the cue state machine once per tick. Logical time is
//! always `tick / tick_hz`; nothing here reads a wall clock.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cues::{self, AudioEvent, CueError, CueEvent, CueMachine, DwellTracker, EscalationConfig, Urgency};
use crate::gaze::{
    detect_fixation, detect_target_fixation, FixationConfig, FixationTracker, GazeSample, HudView,
    TargetFixationConfig, TIME_EPS,
};
use crate::planner::{plan_trajectory, replan_on_deviation, PlanError, PlannedTrajectory, PlannerConfig};
use crate::saliency::{base_saliency, extract_waypoints, fuse_hazard_prior, SaliencyConfig, SaliencyError, Waypoint};
use crate::scene::{Point2, SceneSpec};

/// Gaze farther than this from the distraction point counts as a fixation break.
pub const BREAK_RADIUS: f64 = 0.08;
pub const DEFAULT_TICK_HZ: u32 = 60;
pub const DEFAULT_WARMUP_S: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Saliency(#[from] SaliencyError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Cue(#[from] CueError),
    #[error("engine already finished")]
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Guidance {
    /// Cue trajectory shown; the run ends when the hazard marker is acquired.
    #[default]
    Guided,
    /// No cues; the run ends when gaze dwells on the hazard unaided.
    Unguided,
}

/// Engine parameters shared by headless runs and live sessions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineSettings {
    pub escalation: EscalationConfig,
    pub saliency: SaliencyConfig,
    pub fixation: FixationConfig,
    pub target_fixation: TargetFixationConfig,
    pub planner: PlannerConfig,
    pub tick_hz: u32,
    pub warmup_s: f64,
    pub guidance: Guidance,
}

impl Default for EngineSettings {
    fn default() -> Self {
        Self {
            escalation: EscalationConfig::default(),
            saliency: SaliencyConfig::default(),
            fixation: FixationConfig::default(),
            target_fixation: TargetFixationConfig::default(),
            planner: PlannerConfig::default(),
            tick_hz: DEFAULT_TICK_HZ,
            warmup_s: DEFAULT_WARMUP_S,
            guidance: Guidance::Guided,
        }
    }
}

impl EngineSettings {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.tick_hz == 0 {
            return Err(EngineError::Config("tick_hz must be > 0".into()));
        }
        if !(self.warmup_s >= 0.0 && self.warmup_s.is_finite()) {
            return Err(EngineError::Config("warmup_s must be >= 0".into()));
        }
        if !(self.fixation.min_fix_duration_s >= 0.0 && self.fixation.disp_threshold >= 0.0) {
            return Err(EngineError::Config("fixation thresholds must be >= 0".into()));
        }
        self.escalation.validate().map_err(EngineError::Config)?;
        self.saliency.validate().map_err(EngineError::Config)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum EngineEvent {
    /// The takeover request fires: initial focus measured, trajectory planned.
    TakeoverRequested { t: f64, initial_focus: Point2, trajectory: PlannedTrajectory },
    /// A trajectory was replanned after a deviation.
    TrajectoryReplanned { t: f64, trajectory: PlannedTrajectory },
    /// Gaze has stayed on one spot for the target-fixation duration.
    TargetFixation { t: f64, centroid: Point2, duration_s: f64 },
    /// Unguided runs: gaze dwelt on the hazard.
    HazardFound { t: f64 },
    RunEnded { t: f64, completed: bool },
}

impl EngineEvent {
    pub fn t(&self) -> f64 {
        match self {
            EngineEvent::TakeoverRequested { t, .. }
            | EngineEvent::TrajectoryReplanned { t, .. }
            | EngineEvent::TargetFixation { t, .. }
            | EngineEvent::HazardFound { t }
            | EngineEvent::RunEnded { t, .. } => *t,
        }
    }
}

/// One entry in a run's ordered event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "channel", content = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Engine(EngineEvent),
    Cue(CueEvent),
    Audio(AudioEvent),
}

impl TraceEvent {
    pub fn t(&self) -> f64 {
        match self {
            TraceEvent::Engine(e) => e.t(),
            TraceEvent::Cue(e) => e.t(),
            TraceEvent::Audio(a) => a.t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EscalationCounts {
    pub medium: u32,
    pub high: u32,
}

/// Outcome measures of one run. Times are seconds after the takeover request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub initial_focus: Option<Point2>,
    pub t_break_s: Option<f64>,
    pub t_hazard_s: Option<f64>,
    pub t_target_fixation_s: Option<f64>,
    pub waypoints_acquired: usize,
    pub planned_stops: usize,
    pub escalations: EscalationCounts,
    pub replans: u32,
    pub gaze_path_length: f64,
    pub planned_length: f64,
    pub completed: bool,
}

#[derive(Debug, Clone)]
enum Phase {
    Warmup,
    Guided { machine: CueMachine, plan: PlannedTrajectory },
    Unguided { watch: DwellTracker },
    /// Keeps the final cue state of guided runs for snapshots and metrics.
    Done { last: Option<(CueMachine, PlannedTrajectory)> },
}

#[derive(Debug, Clone)]
pub struct Engine {
    scene: SceneSpec,
    settings: EngineSettings,
    waypoints: Vec<Waypoint>,
    tick: u64,
    tor_tick: u64,
    end_tick: u64,
    warmup: Vec<GazeSample>,
    phase: Phase,
    fixation: FixationTracker,
    target_flagged: bool,
    last_valid: Option<Point2>,
    gaze: Vec<GazeSample>,
    log: Vec<TraceEvent>,
    metrics: RunMetrics,
}

impl Engine {
    pub fn new(scene: SceneSpec, settings: EngineSettings) -> Result<Self, EngineError> {
        settings.validate()?;
        let sal = &settings.saliency;
        let base = base_saliency(&scene, sal.grid_width, sal.grid_height)?;
        let fused = fuse_hazard_prior(&base, scene.hazard.position, sal.sigma_h)?;
        let waypoints = extract_waypoints(&fused, &scene, &sal.waypoints);
        if waypoints.len() > settings.planner.max_exact {
            return Err(PlanError::TooManyWaypoints { count: waypoints.len(), max: settings.planner.max_exact }.into());
        }
        let hz = f64::from(settings.tick_hz);
        let tor_tick = (settings.warmup_s * hz - TIME_EPS).ceil().max(0.0) as u64;
        let end_tick = (scene.duration_s * hz + TIME_EPS).floor() as u64;
        Ok(Self {
            waypoints,
            tick: 0,
            tor_tick,
            end_tick,
            warmup: Vec::new(),
            phase: Phase::Warmup,
            fixation: FixationTracker::new(settings.fixation),
            target_flagged: false,
            last_valid: None,
            gaze: Vec::new(),
            log: Vec::new(),
            metrics: RunMetrics {
                initial_focus: None,
                t_break_s: None,
                t_hazard_s: None,
                t_target_fixation_s: None,
                waypoints_acquired: 0,
                planned_stops: 0,
                escalations: EscalationCounts::default(),
                replans: 0,
                gaze_path_length: 0.0,
                planned_length: 0.0,
                completed: false,
            },
            scene,
            settings,
        })
    }

    pub fn scene(&self) -> &SceneSpec {
        &self.scene
    }

    pub fn settings(&self) -> &EngineSettings {
        &self.settings
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    /// Index of the next tick to run.
    pub fn tick_index(&self) -> u64 {
        self.tick
    }

    /// Logical time of the next tick.
    pub fn now(&self) -> f64 {
        self.time_of(self.tick)
    }

    pub fn time_of(&self, tick: u64) -> f64 {
        tick as f64 / f64::from(self.settings.tick_hz)
    }

    pub fn tor_time(&self) -> f64 {
        self.time_of(self.tor_tick)
    }

    pub fn is_finished(&self) -> bool {
        matches!(self.phase, Phase::Done { .. })
    }

    pub fn cue_machine(&self) -> Option<&CueMachine> {
        match &self.phase {
            Phase::Guided { machine, .. } | Phase::Done { last: Some((machine, _)) } => Some(machine),
            _ => None,
        }
    }

    pub fn trajectory(&self) -> Option<&PlannedTrajectory> {
        match &self.phase {
            Phase::Guided { plan, .. } | Phase::Done { last: Some((_, plan)) } => Some(plan),
            _ => None,
        }
    }

    /// What the driver sees at the start of the next tick.
    pub fn hud(&self) -> HudView {
        HudView {
            tor_active: !matches!(self.phase, Phase::Warmup),
            active: self.cue_machine().and_then(CueMachine::active_cue),
        }
    }

    /// Trajectory the HUD would show if the driver were still at the distraction point.
    pub fn preview_trajectory(&self) -> Result<PlannedTrajectory, EngineError> {
        Ok(plan_trajectory(self.scene.distraction_point, &self.waypoints, self.scene.hazard.position, &self.settings.planner)?)
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.log
    }

    pub fn gaze_trace(&self) -> &[GazeSample] {
        &self.gaze
    }

    pub fn metrics(&self) -> RunMetrics {
        let mut m = self.metrics.clone();
        if let Some(machine) = self.cue_machine() {
            m.waypoints_acquired = machine.acquired_stops();
        }
        m
    }

    /// Runs one tick with the gaze sample observed during it and returns the
    /// events it produced (also appended to the run log).
    pub fn tick(&mut self, sample: GazeSample) -> Result<Vec<TraceEvent>, EngineError> {
        if self.is_finished() {
            return Err(EngineError::Finished);
        }
        let now = self.now();
        let mut out = Vec::new();
        self.gaze.push(sample);

        if matches!(self.phase, Phase::Warmup) {
            self.warmup.push(sample);
            self.fixation.push(sample);
            if self.tick >= self.tor_tick {
                self.fire_takeover(now, &mut out)?;
            }
        } else {
            self.track_gaze(&sample, now, &mut out);
            self.advance_cues(&sample, now, &mut out)?;
        }

        if !self.is_finished() && self.tick >= self.end_tick {
            self.finish(now, false, &mut out);
        }
        self.tick += 1;
        self.log.extend(out.iter().cloned());
        Ok(out)
    }

    fn fire_takeover(&mut self, now: f64, out: &mut Vec<TraceEvent>) -> Result<(), EngineError> {
        let focus = detect_fixation(&self.warmup, &self.settings.fixation)
            .ok()
            .flatten()
            .map(|f| f.centroid)
            .unwrap_or(self.scene.distraction_point);
        self.metrics.initial_focus = Some(focus);
        let hazard = self.scene.hazard.position;
        let plan = plan_trajectory(focus, &self.waypoints, hazard, &self.settings.planner)?;
        self.metrics.planned_stops = plan.stops.len();
        self.metrics.planned_length = plan.total_length;
        out.push(TraceEvent::Engine(EngineEvent::TakeoverRequested {
            t: now,
            initial_focus: focus,
            trajectory: plan.clone(),
        }));
        self.phase = match self.settings.guidance {
            Guidance::Guided => {
                let (machine, init) = cues::init_cues(&plan, self.scene.hazard.severity, now);
                push_step(out, init.events, init.audio);
                Phase::Guided { machine, plan }
            }
            Guidance::Unguided => Phase::Unguided { watch: DwellTracker::default() },
        };
        Ok(())
    }

    fn track_gaze(&mut self, sample: &GazeSample, now: f64, out: &mut Vec<TraceEvent>) {
        let since_tor = now - self.tor_time();
        if let Some(fix) = self.fixation.push(*sample) {
            if !self.target_flagged && detect_target_fixation(&fix, &self.settings.target_fixation) {
                self.target_flagged = true;
                self.metrics.t_target_fixation_s = Some(since_tor);
                out.push(TraceEvent::Engine(EngineEvent::TargetFixation {
                    t: now,
                    centroid: fix.centroid,
                    duration_s: fix.duration_s,
                }));
            }
        } else {
            self.target_flagged = false;
        }
        if !sample.valid {
            return;
        }
        if self.metrics.t_break_s.is_none() && sample.point.distance(&self.scene.distraction_point) > BREAK_RADIUS {
            self.metrics.t_break_s = Some(since_tor);
        }
        if let Some(prev) = self.last_valid {
            self.metrics.gaze_path_length += prev.distance(&sample.point);
        }
        self.last_valid = Some(sample.point);
    }

    fn advance_cues(&mut self, sample: &GazeSample, now: f64, out: &mut Vec<TraceEvent>) -> Result<(), EngineError> {
        let since_tor = now - self.tor_time();
        let hazard = self.scene.hazard.position;
        let esc = self.settings.escalation;
        let mut completed = false;
        match &mut self.phase {
            Phase::Guided { machine, plan } => {
                let step = machine.step(sample, now, &esc)?;
                let mut replan_at = None;
                for e in &step.events {
                    match e {
                        CueEvent::UrgencyChanged { urgency: Urgency::Medium, .. } => self.metrics.escalations.medium += 1,
                        CueEvent::UrgencyChanged { urgency: Urgency::High, .. } => self.metrics.escalations.high += 1,
                        CueEvent::Deviation { gaze, .. } => replan_at = Some(*gaze),
                        CueEvent::Complete { .. } => completed = true,
                        _ => {}
                    }
                }
                push_step(out, step.events, step.audio);
                if let Some(new_p0) = replan_at {
                    let remaining = machine.remaining_stops();
                    let next = replan_on_deviation(plan, new_p0, &remaining, hazard, &self.settings.planner)?;
                    if let Some(ev) = machine.apply_replan(&next.stops, now)? {
                        self.metrics.replans += 1;
                        out.push(TraceEvent::Engine(EngineEvent::TrajectoryReplanned { t: now, trajectory: next.clone() }));
                        out.push(TraceEvent::Cue(ev));
                        *plan = next;
                    }
                }
            }
            Phase::Unguided { watch } => {
                if watch.update(sample, now, hazard, esc.acquire_radius, esc.dwell_s) {
                    out.push(TraceEvent::Engine(EngineEvent::HazardFound { t: now }));
                    completed = true;
                }
            }
            Phase::Warmup | Phase::Done { .. } => {}
        }
        if completed {
            self.metrics.t_hazard_s = Some(since_tor);
            self.finish(now, true, out);
        }
        Ok(())
    }

    fn finish(&mut self, now: f64, completed: bool, out: &mut Vec<TraceEvent>) {
        self.metrics.completed = completed;
        if let Some(machine) = self.cue_machine() {
            self.metrics.waypoints_acquired = machine.acquired_stops();
        }
        out.push(TraceEvent::Engine(EngineEvent::RunEnded { t: now, completed }));
        let last = match std::mem::replace(&mut self.phase, Phase::Done { last: None }) {
            Phase::Guided { machine, plan } => Some((machine, plan)),
            _ => None,
        };
        self.phase = Phase::Done { last };
    }
}

fn push_step(out: &mut Vec<TraceEvent>, events: Vec<CueEvent>, audio: Vec<AudioEvent>) {
    out.extend(events.into_iter().map(TraceEvent::Cue));
    out.extend(audio.into_iter().map(TraceEvent::Audio));
}
