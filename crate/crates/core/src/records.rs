//! Run records (one JSON object per line) and the flat metrics CSV.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{RunMetrics, TraceEvent};
use crate::gaze::write_gaze_trace;
use crate::harness::{RunConfig, RunOutput};

pub const SCHEMA_VERSION: u32 = 1;
pub const RECORDS_FILE: &str = "runs.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";

pub const CSV_COLUMNS: [&str; 17] = [
    "scene_id",
    "agent",
    "guidance",
    "seed",
    "completed",
    "initial_focus_x",
    "initial_focus_y",
    "t_break_s",
    "t_hazard_s",
    "t_target_fixation_s",
    "waypoints_acquired",
    "planned_stops",
    "escalations_medium",
    "escalations_high",
    "replans",
    "gaze_path_length",
    "planned_length",
];

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed run record: {0}")]
    Parse(String),
    #[error("unsupported schema_version {0}")]
    Schema(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub config: RunConfig,
    pub metrics: RunMetrics,
    pub events: Vec<TraceEvent>,
}

impl From<&RunOutput> for RunRecord {
    fn from(run: &RunOutput) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            config: run.config.clone(),
            metrics: run.metrics.clone(),
            events: run.events.clone(),
        }
    }
}

impl RunRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("run records always serialize")
    }

    pub fn from_line(line: &str) -> Result<Self, RecordError> {
        let rec: RunRecord = serde_json::from_str(line).map_err(|e| RecordError::Parse(e.to_string()))?;
        if rec.schema_version != SCHEMA_VERSION {
            return Err(RecordError::Schema(rec.schema_version));
        }
        Ok(rec)
    }
}

pub fn parse_records(text: &str) -> Result<Vec<RunRecord>, RecordError> {
    text.lines().filter(|l| !l.trim().is_empty()).map(RunRecord::from_line).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn metrics_csv(records: &[RunRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).expect("in-memory write");
    for r in records {
        let m = &r.metrics;
        let agent = r.config.agent.map(|a| format!("{:?}", a.kind)).unwrap_or_else(|| "replay".into());
        let focus = m.initial_focus;
        w.write_record([
            r.config.scene_id.clone(),
            agent,
            format!("{:?}", r.config.engine.guidance),
            r.config.seed.to_string(),
            m.completed.to_string(),
            opt(focus.map(|p| p.x)),
            opt(focus.map(|p| p.y)),
            opt(m.t_break_s),
            opt(m.t_hazard_s),
            opt(m.t_target_fixation_s),
            m.waypoints_acquired.to_string(),
            m.planned_stops.to_string(),
            m.escalations.medium.to_string(),
            m.escalations.high.to_string(),
            m.replans.to_string(),
            m.gaze_path_length.to_string(),
            m.planned_length.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

/// Writes `runs.jsonl` and `metrics.csv` into `dir` (created if missing).
pub fn export_results(runs: &[RunOutput], dir: &Path) -> Result<(), RecordError> {
    let records: Vec<RunRecord> = runs.iter().map(RunRecord::from).collect();
    fs::create_dir_all(dir)?;
    let mut lines = String::new();
    for r in &records {
        lines.push_str(&r.to_line());
        lines.push('\n');
    }
    fs::write(dir.join(RECORDS_FILE), lines)?;
    fs::write(dir.join(METRICS_FILE), metrics_csv(&records))?;
    Ok(())
}

/// Writes one run's record and gaze trace as `<stem>.jsonl` / `<stem>.gaze`.
pub fn persist_run(run: &RunOutput, dir: &Path, stem: &str) -> Result<(), RecordError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(format!("{stem}.jsonl")), RunRecord::from(run).to_line() + "\n")?;
    fs::write(dir.join(format!("{stem}.gaze")), write_gaze_trace(&run.gaze))?;
    Ok(())
}
