//! Windshield-plane scene description and scenario document I/O.
//!
//! All positions live in a normalized `[0,1]²` plane with the origin at the
//! top-left corner, `x` growing rightward and `y` growing downward.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("scene not found: {0}")]
    NotFound(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// A point on the normalized windshield plane. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance_sq(&self, other: &Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn in_unit_square(&self) -> bool {
        (0.0..=1.0).contains(&self.x) && (0.0..=1.0).contains(&self.y)
    }

    pub fn clamped(&self) -> Point2 {
        Point2::new(self.x.clamp(0.0, 1.0), self.y.clamp(0.0, 1.0))
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Point2::new(v[0], v[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    pub id: String,
    pub centroid: Point2,
    /// Axis-aligned half size; each component in `(0, 0.5]`.
    pub half_extent: Point2,
    pub salience_weight: f64,
    pub moving: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Severity {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HazardSpec {
    pub position: Point2,
    pub severity: Severity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub id: String,
    pub duration_s: f64,
    pub hazard: HazardSpec,
    pub distraction_point: Point2,
    pub objects: Vec<SceneObject>,
}

impl SceneSpec {
    /// Checks every type invariant and names the first one violated.
    pub fn validate(&self) -> Result<(), SceneError> {
        let fail = |msg: String| Err(SceneError::Validation(msg));
        if self.id.is_empty() {
            return fail("id must not be empty".into());
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return fail("duration_s must be > 0".into());
        }
        if !self.hazard.position.in_unit_square() {
            return fail("hazard.position out of range".into());
        }
        if !self.distraction_point.in_unit_square() {
            return fail("distraction_point out of range".into());
        }
        let mut seen = HashSet::new();
        for (i, obj) in self.objects.iter().enumerate() {
            if obj.id.is_empty() {
                return fail(format!("objects[{i}].id must not be empty"));
            }
            if !seen.insert(obj.id.as_str()) {
                return fail(format!("objects[{i}].id duplicate '{}'", obj.id));
            }
            if !obj.centroid.in_unit_square() {
                return fail(format!("objects[{i}].centroid out of range"));
            }
            let he = obj.half_extent;
            if !(he.x > 0.0 && he.x <= 0.5 && he.y > 0.0 && he.y <= 0.5) {
                return fail(format!("objects[{i}].half_extent out of range"));
            }
            if !(obj.salience_weight > 0.0 && obj.salience_weight <= 1.0) {
                return fail(format!("objects[{i}].salience_weight out of range"));
            }
            // with a centroid inside the unit square the box always intersects it,
            // but keep the check explicit in case the centroid rule ever relaxes
            let c = obj.centroid;
            if c.x + he.x < 0.0 || c.x - he.x > 1.0 || c.y + he.y < 0.0 || c.y - he.y > 1.0 {
                return fail(format!("objects[{i}] bounding box outside the plane"));
            }
        }
        Ok(())
    }

    pub fn object(&self, id: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }
}

/// Parses and validates a scenario document.
pub fn load_scene(bytes: &[u8]) -> Result<SceneSpec, SceneError> {
    let scene: SceneSpec =
        serde_json::from_slice(bytes).map_err(|e| SceneError::Parse(e.to_string()))?;
    scene.validate()?;
    Ok(scene)
}

/// Emits the canonical document: pretty JSON, keys sorted, trailing newline.
pub fn save_scene(scene: &SceneSpec) -> Vec<u8> {
    // serde_json::Value maps are BTreeMap-backed, so going through Value sorts keys.
    let value = serde_json::to_value(scene).expect("scene is always representable");
    let mut out = serde_json::to_vec_pretty(&value).expect("value serializes");
    out.push(b'\n');
    out
}

pub fn load_scene_file(path: &Path) -> Result<SceneSpec, SceneError> {
    let bytes = fs::read(path).map_err(|e| SceneError::Io(format!("{}: {e}", path.display())))?;
    load_scene(&bytes)
}

/// Scenes indexed by id.
#[derive(Debug, Clone, Default)]
pub struct SceneCatalog {
    scenes: BTreeMap<String, SceneSpec>,
}

impl SceneCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads every `*.json` file in `dir`. Fails on the first invalid document.
    pub fn load_dir(dir: &Path) -> Result<Self, SceneError> {
        let mut catalog = Self::new();
        let entries = fs::read_dir(dir).map_err(|e| SceneError::Io(format!("{}: {e}", dir.display())))?;
        let mut paths: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
            .collect();
        paths.sort();
        for path in paths {
            catalog.insert(load_scene_file(&path)?);
        }
        Ok(catalog)
    }

    pub fn insert(&mut self, scene: SceneSpec) {
        self.scenes.insert(scene.id.clone(), scene);
    }

    pub fn get(&self, id: &str) -> Result<&SceneSpec, SceneError> {
        self.scenes.get(id).ok_or_else(|| SceneError::NotFound(id.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &SceneSpec> {
        self.scenes.values()
    }

    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }
}
