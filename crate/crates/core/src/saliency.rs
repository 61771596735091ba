//! Base saliency synthesis, hazard-prior fusion and waypoint extraction.
//!
//! Grids are row-major with cell `(i, j)` (column, row) centered at
//! `((i + 0.5) / width, (j + 0.5) / height)`.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{Point2, SceneSpec};

pub const DEFAULT_GRID: usize = 64;
pub const MIN_GRID: usize = 8;
const MOVING_GAIN: f64 = 1.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SaliencyError {
    #[error("grid {width}x{height} is smaller than {MIN_GRID}x{MIN_GRID}")]
    GridTooSmall { width: usize, height: usize },
    #[error("hazard prior sigma must be positive, got {0}")]
    NonPositiveSigma(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridKind {
    Base,
    Fused,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyGrid {
    width: usize,
    height: usize,
    values: Vec<f64>,
    kind: GridKind,
}

impl SaliencyGrid {
    /// Builds a grid from raw non-negative values and peak-normalizes it.
    ///
    /// Panics if `values.len() != width * height` or any value is negative or NaN.
    pub fn from_raw(width: usize, height: usize, mut values: Vec<f64>, kind: GridKind) -> Self {
        assert_eq!(values.len(), width * height, "value count does not match grid size");
        assert!(values.iter().all(|v| *v >= 0.0), "saliency values must be non-negative");
        peak_normalize(&mut values);
        Self { width, height, values, kind }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.width + i]
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Point2 {
        cell_center(self.width, self.height, i, j)
    }

    /// Cell containing `p`; points on the far edge map into the last cell.
    pub fn cell_of(&self, p: Point2) -> (usize, usize) {
        let i = ((p.x * self.width as f64).floor() as usize).min(self.width - 1);
        let j = ((p.y * self.height as f64).floor() as usize).min(self.height - 1);
        (i, j)
    }

    pub fn value_at(&self, p: Point2) -> f64 {
        let (i, j) = self.cell_of(p);
        self.get(i, j)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    /// Plain-text portable graymap (P2) with 255 gray levels.
    pub fn to_pgm(&self) -> String {
        let mut out = format!("P2\n{} {}\n255\n", self.width, self.height);
        for row in self.values.chunks(self.width) {
            let line: Vec<String> = row
                .iter()
                .map(|v| ((v * 255.0).round().clamp(0.0, 255.0) as u8).to_string())
                .collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }
}

pub fn cell_center(width: usize, height: usize, i: usize, j: usize) -> Point2 {
    Point2::new((i as f64 + 0.5) / width as f64, (j as f64 + 0.5) / height as f64)
}

fn peak_normalize(values: &mut [f64]) {
    let peak = values.iter().copied().fold(0.0, f64::max);
    if peak > 0.0 {
        values.iter_mut().for_each(|v| *v /= peak);
    }
}

/// Sum of isotropic Gaussian blobs, one per object, peak-normalized.
pub fn base_saliency(scene: &SceneSpec, width: usize, height: usize) -> Result<SaliencyGrid, SaliencyError> {
    if width < MIN_GRID || height < MIN_GRID {
        return Err(SaliencyError::GridTooSmall { width, height });
    }
    let blobs: Vec<(Point2, f64, f64)> = scene
        .objects
        .iter()
        .map(|o| {
            let amplitude = o.salience_weight * if o.moving { MOVING_GAIN } else { 1.0 };
            let sigma = o.half_extent.x.max(o.half_extent.y);
            (o.centroid, amplitude, 2.0 * sigma * sigma)
        })
        .collect();
    let mut values = Vec::with_capacity(width * height);
    for j in 0..height {
        for i in 0..width {
            let c = cell_center(width, height, i, j);
            let v: f64 = blobs
                .iter()
                .map(|(center, amp, two_sigma_sq)| amp * (-c.distance_sq(center) / two_sigma_sq).exp())
                .sum();
            values.push(v);
        }
    }
    Ok(SaliencyGrid::from_raw(width, height, values, GridKind::Base))
}

/// Multiplies `base` by a Gaussian prior centered on the hazard and peak-normalizes.
pub fn fuse_hazard_prior(base: &SaliencyGrid, hazard: Point2, sigma_h: f64) -> Result<SaliencyGrid, SaliencyError> {
    if !(sigma_h > 0.0 && sigma_h.is_finite()) {
        return Err(SaliencyError::NonPositiveSigma(sigma_h));
    }
    let two_sigma_sq = 2.0 * sigma_h * sigma_h;
    let (w, h) = (base.width, base.height);
    let values = (0..h)
        .flat_map(|j| (0..w).map(move |i| (i, j)))
        .map(|(i, j)| {
            let prior = (-cell_center(w, h, i, j).distance_sq(&hazard) / two_sigma_sq).exp();
            base.get(i, j) * prior
        })
        .collect();
    Ok(SaliencyGrid::from_raw(w, h, values, GridKind::Fused))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaypointConfig {
    pub tau: f64,
    pub min_sep: f64,
    pub k_max: usize,
    pub hazard_exclusion: f64,
    pub snap_radius: f64,
}

impl Default for WaypointConfig {
    fn default() -> Self {
        Self { tau: 0.35, min_sep: 0.08, k_max: 4, hazard_exclusion: 0.05, snap_radius: 0.04 }
    }
}

/// Everything needed to go from a scene to its waypoint set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaliencyConfig {
    pub grid_width: usize,
    pub grid_height: usize,
    pub sigma_h: f64,
    pub waypoints: WaypointConfig,
}

impl Default for SaliencyConfig {
    fn default() -> Self {
        Self { grid_width: DEFAULT_GRID, grid_height: DEFAULT_GRID, sigma_h: 0.18, waypoints: WaypointConfig::default() }
    }
}

impl SaliencyConfig {
    pub fn validate(&self) -> Result<(), String> {
        let wp = &self.waypoints;
        if self.grid_width < MIN_GRID || self.grid_height < MIN_GRID {
            return Err(format!("saliency grid must be at least {MIN_GRID}x{MIN_GRID}"));
        }
        if !(self.sigma_h > 0.0 && self.sigma_h.is_finite()) {
            return Err("saliency.sigma_h must be > 0".into());
        }
        if !(wp.tau > 0.0 && wp.tau < 1.0) {
            return Err("saliency.waypoints.tau must be in (0, 1)".into());
        }
        if !(wp.min_sep >= 0.0 && wp.hazard_exclusion >= 0.0 && wp.snap_radius >= 0.0) {
            return Err("saliency.waypoints radii must be >= 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub position: Point2,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapped_object_id: Option<String>,
}

/// Cells that are `>=` every 8-neighbour. Plateaus yield several cells; NMS thins them.
pub fn local_maxima(grid: &SaliencyGrid) -> Vec<(usize, usize)> {
    let (w, h) = (grid.width as isize, grid.height as isize);
    let mut out = Vec::new();
    for j in 0..h {
        for i in 0..w {
            let v = grid.get(i as usize, j as usize);
            let is_max = (-1..=1)
                .flat_map(|dj| (-1..=1).map(move |di| (di, dj)))
                .filter(|&(di, dj)| di != 0 || dj != 0)
                .filter_map(|(di, dj)| {
                    let (ni, nj) = (i + di, j + dj);
                    (ni >= 0 && nj >= 0 && ni < w && nj < h).then(|| grid.get(ni as usize, nj as usize))
                })
                .all(|n| v >= n);
            if is_max {
                out.push((i as usize, j as usize));
            }
        }
    }
    out
}

fn snap(scene: &SceneSpec, p: Point2, radius: f64) -> (Point2, Option<String>) {
    let mut best: Option<(f64, &crate::scene::SceneObject)> = None;
    for obj in &scene.objects {
        let d = obj.centroid.distance(&p);
        if d <= radius && best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, obj));
        }
    }
    match best {
        Some((_, obj)) => (obj.centroid, Some(obj.id.clone())),
        None => (p, None),
    }
}

/// Selects high-value regions of the fused grid as trajectory waypoints.
///
/// Candidates are local maxima with value `>= tau`, processed in descending
/// value order (ties by ascending row, then column). Each candidate is
/// snapped to the nearest object centroid within `snap_radius`; it is
/// dropped when its cell center or its snapped position lies within
/// `hazard_exclusion` of the hazard, or when its snapped position is closer
/// than `min_sep` to an already accepted waypoint.
pub fn extract_waypoints(filtered: &SaliencyGrid, scene: &SceneSpec, cfg: &WaypointConfig) -> Vec<Waypoint> {
    let hazard = scene.hazard.position;
    let mut candidates: Vec<(f64, usize, usize)> = local_maxima(filtered)
        .into_iter()
        .map(|(i, j)| (filtered.get(i, j), i, j))
        .filter(|(v, _, _)| *v >= cfg.tau)
        .collect();
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.2.cmp(&b.2)).then(a.1.cmp(&b.1))
    });

    let mut out: Vec<Waypoint> = Vec::new();
    for (score, i, j) in candidates {
        if out.len() >= cfg.k_max {
            break;
        }
        let center = filtered.cell_center(i, j);
        if center.distance(&hazard) <= cfg.hazard_exclusion {
            continue;
        }
        let (position, snapped_object_id) = snap(scene, center, cfg.snap_radius);
        if position.distance(&hazard) <= cfg.hazard_exclusion {
            continue;
        }
        if out.iter().any(|w| w.position.distance(&position) < cfg.min_sep) {
            continue;
        }
        out.push(Waypoint { position, score, snapped_object_id });
    }
    out
}
