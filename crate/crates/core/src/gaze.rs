//! Gaze samples, dispersion-threshold fixation detection, and synthetic
//! driver agents that stand in for a human during headless runs.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cues::Urgency;
use crate::rng;
use crate::scene::{Point2, SceneSpec};

/// Tolerance for comparing tick-derived times against configured durations.
pub const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GazeError {
    #[error("gaze samples out of order at index {index}")]
    UnorderedSamples { index: usize },
    #[error("gaze trace line {line}: {reason}")]
    Trace { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    pub t: f64,
    pub point: Point2,
    pub valid: bool,
}

impl GazeSample {
    pub fn new(t: f64, point: Point2) -> Self {
        Self { t, point, valid: true }
    }

    pub fn invalid(t: f64, point: Point2) -> Self {
        Self { t, point, valid: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixationConfig {
    pub min_fix_duration_s: f64,
    pub disp_threshold: f64,
}

impl Default for FixationConfig {
    fn default() -> Self {
        Self { min_fix_duration_s: 0.1, disp_threshold: 0.03 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetFixationConfig {
    pub target_fix_duration_s: f64,
    /// Used by callers to associate a fixation with a point of interest.
    pub radius: f64,
}

impl Default for TargetFixationConfig {
    fn default() -> Self {
        Self { target_fix_duration_s: 2.0, radius: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixationState {
    pub centroid: Point2,
    pub start_t: f64,
    pub duration_s: f64,
    /// x-span plus y-span of the member points.
    pub dispersion: f64,
}

#[derive(Debug, Clone, Copy)]
struct Span {
    min_x: f64,
    max_x: f64,
    min_y: f64,
    max_y: f64,
}

impl Span {
    fn new(p: Point2) -> Self {
        Self { min_x: p.x, max_x: p.x, min_y: p.y, max_y: p.y }
    }

    fn include(&mut self, p: Point2) {
        self.min_x = self.min_x.min(p.x);
        self.max_x = self.max_x.max(p.x);
        self.min_y = self.min_y.min(p.y);
        self.max_y = self.max_y.max(p.y);
    }

    fn dispersion(&self) -> f64 {
        (self.max_x - self.min_x) + (self.max_y - self.min_y)
    }
}

fn check_order(samples: &[GazeSample]) -> Result<(), GazeError> {
    match samples.windows(2).position(|w| w[1].t < w[0].t) {
        Some(i) => Err(GazeError::UnorderedSamples { index: i + 1 }),
        None => Ok(()),
    }
}

fn fixation_of(members: &[&GazeSample], dispersion: f64) -> FixationState {
    let n = members.len() as f64;
    let sx: f64 = members.iter().map(|s| s.point.x).sum();
    let sy: f64 = members.iter().map(|s| s.point.y).sum();
    let start_t = members[0].t;
    FixationState {
        centroid: Point2::new(sx / n, sy / n),
        start_t,
        duration_s: members[members.len() - 1].t - start_t,
        dispersion,
    }
}

/// Longest fixation ending at the last valid sample of `window`, if any.
///
/// Invalid samples are ignored. The fixation is the maximal suffix whose
/// dispersion stays within `disp_threshold`; it qualifies when its duration
/// reaches `min_fix_duration_s`.
pub fn detect_fixation(window: &[GazeSample], cfg: &FixationConfig) -> Result<Option<FixationState>, GazeError> {
    check_order(window)?;
    let valid: Vec<&GazeSample> = window.iter().filter(|s| s.valid).collect();
    let Some(tail) = valid.last() else {
        return Ok(None);
    };
    let mut span = Span::new(tail.point);
    let mut start = valid.len() - 1;
    let mut dispersion = 0.0;
    while start > 0 {
        let mut next = span;
        next.include(valid[start - 1].point);
        if next.dispersion() > cfg.disp_threshold {
            break;
        }
        span = next;
        dispersion = span.dispersion();
        start -= 1;
    }
    let members = &valid[start..];
    let fix = fixation_of(members, dispersion);
    Ok((fix.duration_s + TIME_EPS >= cfg.min_fix_duration_s).then_some(fix))
}

/// Full I-DT segmentation of a stream into fixations (invalid samples ignored).
pub fn segment_fixations(stream: &[GazeSample], cfg: &FixationConfig) -> Result<Vec<FixationState>, GazeError> {
    check_order(stream)?;
    let valid: Vec<&GazeSample> = stream.iter().filter(|s| s.valid).collect();
    let n = valid.len();
    let mut out = Vec::new();
    let mut start = 0;
    // first index whose time reaches start + min duration; monotone in `start`
    let mut min_end = 0;
    while start < n {
        min_end = min_end.max(start);
        while min_end < n && valid[min_end].t - valid[start].t + TIME_EPS < cfg.min_fix_duration_s {
            min_end += 1;
        }
        if min_end >= n {
            break;
        }
        let mut span = Span::new(valid[start].point);
        for s in &valid[start + 1..=min_end] {
            span.include(s.point);
        }
        if span.dispersion() > cfg.disp_threshold {
            start += 1;
            continue;
        }
        let mut end = min_end;
        while end + 1 < n {
            let mut next = span;
            next.include(valid[end + 1].point);
            if next.dispersion() > cfg.disp_threshold {
                break;
            }
            span = next;
            end += 1;
        }
        out.push(fixation_of(&valid[start..=end], span.dispersion()));
        start = end + 1;
    }
    Ok(out)
}

/// Streaming form of [`detect_fixation`]: keeps only the maximal in-threshold
/// suffix of valid samples.
#[derive(Debug, Clone, Default)]
pub struct FixationTracker {
    cfg: FixationConfig,
    suffix: std::collections::VecDeque<GazeSample>,
}

impl FixationTracker {
    pub fn new(cfg: FixationConfig) -> Self {
        Self { cfg, suffix: Default::default() }
    }

    /// Adds a sample (ignored when invalid) and returns the fixation ending at it.
    pub fn push(&mut self, sample: GazeSample) -> Option<FixationState> {
        if !sample.valid {
            return self.current();
        }
        self.suffix.push_back(sample);
        // scan back from the tail to find where the maximal suffix starts
        let mut span = Span::new(sample.point);
        let mut keep = 1;
        for s in self.suffix.iter().rev().skip(1) {
            let mut next = span;
            next.include(s.point);
            if next.dispersion() > self.cfg.disp_threshold {
                break;
            }
            span = next;
            keep += 1;
        }
        let drop = self.suffix.len() - keep;
        self.suffix.drain(..drop);
        self.current()
    }

    pub fn current(&self) -> Option<FixationState> {
        if self.suffix.is_empty() {
            return None;
        }
        let members: Vec<&GazeSample> = self.suffix.iter().collect();
        let mut span = Span::new(members[0].point);
        members.iter().for_each(|s| span.include(s.point));
        let fix = fixation_of(&members, span.dispersion());
        (fix.duration_s + TIME_EPS >= self.cfg.min_fix_duration_s).then_some(fix)
    }
}

/// Target fixation: a fixation held for at least `target_fix_duration_s`.
pub fn detect_target_fixation(fix: &FixationState, cfg: &TargetFixationConfig) -> bool {
    fix.duration_s + TIME_EPS >= cfg.target_fix_duration_s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentKind {
    Compliant,
    Distracted,
    NonCompliant,
    RandomScan,
}

impl std::str::FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "compliant" => Ok(Self::Compliant),
            "distracted" => Ok(Self::Distracted),
            "noncompliant" => Ok(Self::NonCompliant),
            "randomscan" => Ok(Self::RandomScan),
            _ => Err(format!("unknown agent kind '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GazeAgentConfig {
    pub kind: AgentKind,
    pub reaction_latency_s: f64,
    pub saccade_speed: f64,
    pub landing_noise_sigma: f64,
    pub seed: u64,
}

impl GazeAgentConfig {
    pub fn defaults_for(kind: AgentKind, seed: u64) -> Self {
        let reaction_latency_s = match kind {
            AgentKind::Distracted => 0.8,
            _ => 0.25,
        };
        Self { kind, reaction_latency_s, saccade_speed: 3.0, landing_noise_sigma: 0.01, seed }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.reaction_latency_s >= 0.0 && self.reaction_latency_s.is_finite()) {
            return Err("agent.reaction_latency_s must be >= 0".into());
        }
        if !(self.saccade_speed > 0.0 && self.saccade_speed.is_finite()) {
            return Err("agent.saccade_speed must be > 0".into());
        }
        if !(self.landing_noise_sigma >= 0.0 && self.landing_noise_sigma.is_finite()) {
            return Err("agent.landing_noise_sigma must be >= 0".into());
        }
        Ok(())
    }
}

/// The marker currently shown on the HUD, as the driver perceives it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveCue {
    pub index: usize,
    pub position: Point2,
    pub urgency: Urgency,
}

/// What the HUD shows at the start of a tick.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HudView {
    /// Takeover request has fired (warm-up is over).
    pub tor_active: bool,
    pub active: Option<ActiveCue>,
}

/// Anything that yields one gaze sample per engine tick.
pub trait GazeSource {
    fn sample(&mut self, now: f64, hud: &HudView) -> GazeSample;
}

const SCAN_FIXATION_S: f64 = 0.5;

#[derive(Debug, Clone, Copy)]
enum Motion {
    Hold,
    Waiting { start_at: f64, target: Point2 },
    Saccade { from: Point2, to: Point2, start_t: f64 },
    ScanDwell { until: f64 },
}

/// Synthetic driver. Owns its PRNG streams; advanced only by the tick loop.
#[derive(Debug, Clone)]
pub struct GazeAgent {
    cfg: GazeAgentConfig,
    distraction: Point2,
    scan_targets: Vec<Point2>,
    position: Point2,
    motion: Motion,
    /// (marker index, marker position) of the cue the agent is responding to.
    stimulus: Option<(usize, Point2)>,
    choice_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
}

impl GazeAgent {
    pub fn new(cfg: GazeAgentConfig, scene: &SceneSpec) -> Self {
        Self {
            cfg,
            distraction: scene.distraction_point,
            scan_targets: scene.objects.iter().map(|o| o.centroid).collect(),
            position: scene.distraction_point,
            motion: Motion::Hold,
            stimulus: None,
            choice_rng: rng::stream(cfg.seed, rng::STREAM_AGENT),
            noise_rng: rng::stream(cfg.seed, rng::STREAM_NOISE),
        }
    }

    pub fn config(&self) -> &GazeAgentConfig {
        &self.cfg
    }

    pub fn position(&self) -> Point2 {
        self.position
    }

    fn landing_point(&mut self, target: Point2) -> Point2 {
        let zx: f64 = self.noise_rng.sample(StandardNormal);
        let zy: f64 = self.noise_rng.sample(StandardNormal);
        let s = self.cfg.landing_noise_sigma;
        Point2::new(target.x + s * zx, target.y + s * zy).clamped()
    }

    /// Advances the current saccade to `now`; returns true when it has landed.
    fn advance_saccade(&mut self, now: f64) -> bool {
        let Motion::Saccade { from, to, start_t } = self.motion else {
            return false;
        };
        let dist = from.distance(&to);
        let travelled = self.cfg.saccade_speed * (now - start_t).max(0.0);
        if travelled + TIME_EPS >= dist {
            self.position = to;
            true
        } else {
            let f = travelled / dist;
            self.position = Point2::new(from.x + (to.x - from.x) * f, from.y + (to.y - from.y) * f).clamped();
            false
        }
    }

    fn respond_to_cues(&mut self, now: f64, hud: &HudView) {
        let wants = |cue: &ActiveCue| match self.cfg.kind {
            AgentKind::Compliant => true,
            AgentKind::Distracted => cue.urgency == Urgency::High,
            _ => false,
        };
        if let Some(cue) = hud.active.filter(wants) {
            let key = (cue.index, cue.position);
            if self.stimulus != Some(key) {
                self.stimulus = Some(key);
                self.motion = Motion::Waiting { start_at: now + self.cfg.reaction_latency_s, target: cue.position };
            }
        }
        if let Motion::Waiting { start_at, target } = self.motion {
            if now + TIME_EPS >= start_at {
                let to = self.landing_point(target);
                self.motion = Motion::Saccade { from: self.position, to, start_t: start_at };
            }
        }
        if self.advance_saccade(now) {
            self.motion = Motion::Hold;
        }
    }

    fn scan(&mut self, now: f64) {
        if self.scan_targets.is_empty() {
            return;
        }
        loop {
            match self.motion {
                Motion::Hold | Motion::Waiting { .. } => {
                    let k = self.choice_rng.random_range(0..self.scan_targets.len());
                    let to = self.landing_point(self.scan_targets[k]);
                    self.motion = Motion::Saccade { from: self.position, to, start_t: now };
                }
                Motion::Saccade { from, to, start_t } => {
                    if self.advance_saccade(now) {
                        let arrival = start_t + from.distance(&to) / self.cfg.saccade_speed;
                        self.motion = Motion::ScanDwell { until: arrival + SCAN_FIXATION_S };
                    }
                    return;
                }
                Motion::ScanDwell { until } => {
                    if now + TIME_EPS < until {
                        return;
                    }
                    self.motion = Motion::Hold;
                }
            }
        }
    }
}

impl GazeSource for GazeAgent {
    fn sample(&mut self, now: f64, hud: &HudView) -> GazeSample {
        if hud.tor_active {
            match self.cfg.kind {
                AgentKind::Compliant | AgentKind::Distracted => self.respond_to_cues(now, hud),
                AgentKind::RandomScan => self.scan(now),
                AgentKind::NonCompliant => self.position = self.distraction,
            }
        }
        GazeSample::new(now, self.position)
    }
}

/// Plays back a recorded trace: at each tick, the latest sample at or before `now`.
#[derive(Debug, Clone)]
pub struct ReplayAgent {
    samples: Vec<GazeSample>,
    cursor: usize,
    fallback: Point2,
}

impl ReplayAgent {
    pub fn new(samples: Vec<GazeSample>, fallback: Point2) -> Self {
        Self { samples, cursor: 0, fallback }
    }
}

impl GazeSource for ReplayAgent {
    fn sample(&mut self, now: f64, _hud: &HudView) -> GazeSample {
        while self.cursor < self.samples.len() && self.samples[self.cursor].t <= now + TIME_EPS {
            self.cursor += 1;
        }
        match self.cursor.checked_sub(1) {
            Some(i) => self.samples[i],
            None => GazeSample::invalid(now, self.fallback),
        }
    }
}

/// Serializes samples as `t,x,y,valid` lines (valid is `1` or `0`).
pub fn write_gaze_trace(samples: &[GazeSample]) -> String {
    let mut out = String::with_capacity(samples.len() * 32);
    for s in samples {
        out.push_str(&format!("{},{},{},{}\n", s.t, s.point.x, s.point.y, u8::from(s.valid)));
    }
    out
}

/// Parses `t,x,y,valid` lines. Blank lines are skipped; `valid` accepts
/// `1`/`0`/`true`/`false`. Valid samples must lie in the unit square.
pub fn parse_gaze_trace(text: &str) -> Result<Vec<GazeSample>, GazeError> {
    let mut out: Vec<GazeSample> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let err = |reason: &str| GazeError::Trace { line, reason: reason.to_string() };
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        let [t, x, y, valid] = fields[..] else {
            return Err(err("expected 4 fields"));
        };
        let num = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| err("bad number"));
        let (t, x, y) = (num(t)?, num(x)?, num(y)?);
        let valid = match valid {
            "1" | "true" => true,
            "0" | "false" => false,
            _ => return Err(err("bad valid flag")),
        };
        let sample = GazeSample { t, point: Point2::new(x, y), valid };
        if valid && !sample.point.in_unit_square() {
            return Err(err("coordinate out of range"));
        }
        if out.last().is_some_and(|prev| prev.t > t) {
            return Err(err("timestamps decrease"));
        }
        out.push(sample);
    }
    Ok(out)
}
