//! Gaze-guided attention redirection for takeover requests: scene model,
//! saliency and waypoint extraction, fixation detection, cue planning and
//! escalation, synthetic drivers, and the live-session core.

pub mod cues;
pub mod engine;
pub mod gaze;
pub mod harness;
pub mod planner;
pub mod protocol;
pub mod records;
pub mod rng;
pub mod saliency;
pub mod scene;
pub mod session;

pub use engine::{Engine, EngineSettings, Guidance, RunMetrics, TraceEvent};
pub use harness::{run_scenario, run_scene, RunConfig, RunError, RunOutput};
pub use scene::{load_scene, save_scene, Point2, SceneCatalog, SceneSpec};
