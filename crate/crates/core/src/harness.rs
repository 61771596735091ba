//! Headless scenario runs, baseline comparison and parameter sweeps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Engine, EngineError, EngineSettings, Guidance, RunMetrics, TraceEvent};
use crate::gaze::{AgentKind, GazeAgent, GazeAgentConfig, GazeSample, GazeSource, ReplayAgent};
use crate::scene::{SceneCatalog, SceneError, SceneSpec};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl RunError {
    /// True for errors caused by bad input rather than a failure while running.
    pub fn is_validation(&self) -> bool {
        match self {
            RunError::Scene(SceneError::Io(_)) => false,
            RunError::Scene(_) | RunError::Config(_) => true,
            RunError::Engine(EngineError::Config(_) | EngineError::Plan(_) | EngineError::Saliency(_)) => true,
            RunError::Engine(_) => false,
        }
    }
}

/// Everything that determines a run. Engine settings are flattened into the
/// top level of the document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scene_id: String,
    /// Synthetic driver; absent for live sessions and trace replays.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<GazeAgentConfig>,
    pub seed: u64,
    #[serde(flatten)]
    pub engine: EngineSettings,
}

impl RunConfig {
    /// Default settings with the agent seeded from `seed`.
    pub fn new(scene_id: impl Into<String>, kind: AgentKind, seed: u64) -> Self {
        Self {
            scene_id: scene_id.into(),
            agent: Some(GazeAgentConfig::defaults_for(kind, seed)),
            seed,
            engine: EngineSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if let Some(agent) = &self.agent {
            agent.validate().map_err(RunError::Config)?;
        }
        self.engine.validate()?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, RunError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub config: RunConfig,
    pub metrics: RunMetrics,
    pub events: Vec<TraceEvent>,
    pub gaze: Vec<GazeSample>,
}

/// Drives an engine to completion with `source` supplying one sample per tick.
pub fn run_with_source(scene: &SceneSpec, cfg: &RunConfig, source: &mut dyn GazeSource) -> Result<RunOutput, RunError> {
    drive(scene, cfg, source, None)
}

fn drive(
    scene: &SceneSpec,
    cfg: &RunConfig,
    source: &mut dyn GazeSource,
    max_ticks: Option<usize>,
) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    if scene.id != cfg.scene_id {
        return Err(RunError::Config(format!("config is for scene '{}', got '{}'", cfg.scene_id, scene.id)));
    }
    let mut engine = Engine::new(scene.clone(), cfg.engine)?;
    while !engine.is_finished() && max_ticks.is_none_or(|m| engine.gaze_trace().len() < m) {
        let hud = engine.hud();
        let sample = source.sample(engine.now(), &hud);
        engine.tick(sample)?;
    }
    Ok(RunOutput {
        config: cfg.clone(),
        metrics: engine.metrics(),
        events: engine.events().to_vec(),
        gaze: engine.gaze_trace().to_vec(),
    })
}

/// Runs `cfg` on `scene` with its synthetic agent.
pub fn run_scene(scene: &SceneSpec, cfg: &RunConfig) -> Result<RunOutput, RunError> {
    let agent_cfg = cfg.agent.ok_or_else(|| RunError::Config("a synthetic agent is required".into()))?;
    let mut agent = GazeAgent::new(agent_cfg, scene);
    run_with_source(scene, cfg, &mut agent)
}

/// Looks the scene up by id and runs it.
pub fn run_scenario(catalog: &SceneCatalog, cfg: &RunConfig) -> Result<RunOutput, RunError> {
    run_scene(catalog.get(&cfg.scene_id)?, cfg)
}

/// Re-runs a recorded gaze trace through the engine, stopping where the trace
/// stops (a session closed early replays to the same tick).
pub fn replay_trace(scene: &SceneSpec, cfg: &RunConfig, trace: Vec<GazeSample>) -> Result<RunOutput, RunError> {
    let ticks = trace.len();
    let mut replay = ReplayAgent::new(trace, scene.distraction_point);
    let mut cfg = cfg.clone();
    cfg.agent = None;
    drive(scene, &cfg, &mut replay, Some(ticks))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub seed: u64,
    pub guided_t_hazard_s: Option<f64>,
    pub unguided_t_hazard_s: Option<f64>,
    pub guided_wins: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub scene_id: String,
    pub rows: Vec<ComparisonRow>,
    /// `None` when the median falls on a run that never reached the hazard.
    pub guided_median_s: Option<f64>,
    pub unguided_median_s: Option<f64>,
    pub guided_win_count: usize,
    pub win_rate: f64,
}

/// Strictly faster; a run that never reaches the hazard is slower than any that does.
fn guided_wins(guided: Option<f64>, unguided: Option<f64>) -> bool {
    match (guided, unguided) {
        (Some(g), Some(u)) => g < u,
        (Some(_), None) => true,
        (None, _) => false,
    }
}

/// Median with unfinished runs ordered after every finished one.
pub fn censored_median(values: &[Option<f64>]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted: Vec<f64> = values.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let m = if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
    m.is_finite().then_some(m)
}

/// Guided (compliant driver with cues) against unguided (random scanning,
/// no cues) on the same scene for seeds `1..=n_seeds`.
pub fn run_baseline_comparison(
    scene: &SceneSpec,
    n_seeds: u64,
    settings: &EngineSettings,
) -> Result<ComparisonSummary, RunError> {
    if n_seeds == 0 {
        return Err(RunError::Config("n_seeds must be >= 1".into()));
    }
    let mut rows = Vec::with_capacity(n_seeds as usize);
    for seed in 1..=n_seeds {
        let mut guided = RunConfig::new(scene.id.clone(), AgentKind::Compliant, seed);
        guided.engine = EngineSettings { guidance: Guidance::Guided, ..*settings };
        let mut unguided = RunConfig::new(scene.id.clone(), AgentKind::RandomScan, seed);
        unguided.engine = EngineSettings { guidance: Guidance::Unguided, ..*settings };
        let g = run_scene(scene, &guided)?.metrics.t_hazard_s;
        let u = run_scene(scene, &unguided)?.metrics.t_hazard_s;
        rows.push(ComparisonRow { seed, guided_t_hazard_s: g, unguided_t_hazard_s: u, guided_wins: guided_wins(g, u) });
    }
    let guided: Vec<_> = rows.iter().map(|r| r.guided_t_hazard_s).collect();
    let unguided: Vec<_> = rows.iter().map(|r| r.unguided_t_hazard_s).collect();
    let wins = rows.iter().filter(|r| r.guided_wins).count();
    Ok(ComparisonSummary {
        scene_id: scene.id.clone(),
        guided_median_s: censored_median(&guided),
        unguided_median_s: censored_median(&unguided),
        guided_win_count: wins,
        win_rate: wins as f64 / rows.len() as f64,
        rows,
    })
}

/// Every scene in `catalog` × every seed in `seeds`, with `template` supplying the rest.
pub fn sweep(
    catalog: &SceneCatalog,
    seeds: std::ops::RangeInclusive<u64>,
    kind: AgentKind,
    template: &EngineSettings,
) -> Result<Vec<RunOutput>, RunError> {
    let mut out = Vec::new();
    for scene in catalog.iter() {
        for seed in seeds.clone() {
            let mut cfg = RunConfig::new(scene.id.clone(), kind, seed);
            cfg.engine = *template;
            out.push(run_scene(scene, &cfg)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_with_censoring() {
        assert_eq!(censored_median(&[Some(3.0), Some(1.0), Some(2.0)]), Some(2.0));
        assert_eq!(censored_median(&[Some(3.0), Some(1.0)]), Some(2.0));
        assert_eq!(censored_median(&[Some(1.0), None, None]), None);
        assert_eq!(censored_median(&[Some(1.0), Some(2.0), None]), Some(2.0));
        assert_eq!(censored_median(&[]), None);
    }

    #[test]
    fn win_rule() {
        assert!(guided_wins(Some(1.0), Some(2.0)));
        assert!(!guided_wins(Some(2.0), Some(2.0)));
        assert!(guided_wins(Some(9.0), None));
        assert!(!guided_wins(None, None));
    }

    #[test]
    fn config_json_is_flat() {
        let cfg = RunConfig::new("s", AgentKind::Compliant, 4);
        let v = serde_json::to_value(&cfg).unwrap();
        assert!(v.get("tick_hz").is_some());
        assert!(v.get("escalation").is_some());
        assert!(v.get("saliency").is_some());
        let back: RunConfig = serde_json::from_value(v).unwrap();
        assert_eq!(back, cfg);
        let partial = RunConfig::from_json(r#"{"scene_id": "s", "seed": 1, "tick_hz": 30}"#).unwrap();
        assert_eq!(partial.engine.tick_hz, 30);
        assert!(RunConfig::from_json(r#"{"scene_id": "s", "seed": 1, "tick_hz": 0}"#).is_err());
    }
}
