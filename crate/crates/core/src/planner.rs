//! Orders waypoints into the shortest gaze path from the current fixation
//! to the hazard, by exhaustive permutation search.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::saliency::Waypoint;
use crate::scene::Point2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("{count} waypoints exceed the exact-search limit of {max}")]
    TooManyWaypoints { count: usize, max: usize },
    #[error("replan waypoints are not a subset of the current stops")]
    UnknownWaypoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub max_exact: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self { max_exact: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedTrajectory {
    pub start: Point2,
    pub stops: Vec<Waypoint>,
    pub terminal: Point2,
    pub total_length: f64,
}

impl PlannedTrajectory {
    /// `start`, every stop, then `terminal`.
    pub fn points(&self) -> Vec<Point2> {
        std::iter::once(self.start)
            .chain(self.stops.iter().map(|w| w.position))
            .chain(std::iter::once(self.terminal))
            .collect()
    }
}

/// Sum of consecutive Euclidean distances, accumulated left to right.
pub fn path_length(start: Point2, stops: &[Point2], terminal: Point2) -> f64 {
    let mut len = 0.0;
    let mut prev = start;
    for p in stops.iter().chain(std::iter::once(&terminal)) {
        len += prev.distance(p);
        prev = *p;
    }
    len
}

/// Total order on waypoints used to break length ties: (y, x), then object id, then score.
fn cmp_waypoint(a: &Waypoint, b: &Waypoint) -> Ordering {
    a.position
        .y
        .total_cmp(&b.position.y)
        .then(a.position.x.total_cmp(&b.position.x))
        .then_with(|| a.snapped_object_id.cmp(&b.snapped_object_id))
        .then(a.score.total_cmp(&b.score))
}

fn cmp_sequence(a: &[&Waypoint], b: &[&Waypoint]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| cmp_waypoint(x, y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

struct Search<'a> {
    waypoints: &'a [Waypoint],
    terminal: Point2,
    used: Vec<bool>,
    order: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
}

impl Search<'_> {
    fn visit(&mut self, at: Point2, len: f64) {
        if let Some((best_len, _)) = &self.best {
            // lengths only grow along a prefix, so a strictly longer prefix can never tie
            if len > *best_len {
                return;
            }
        }
        if self.order.len() == self.waypoints.len() {
            let total = len + at.distance(&self.terminal);
            let better = match &self.best {
                None => true,
                Some((best_len, best)) => match total.partial_cmp(best_len) {
                    Some(Ordering::Less) => true,
                    Some(Ordering::Equal) => {
                        let cand: Vec<_> = self.order.iter().map(|&i| &self.waypoints[i]).collect();
                        let cur: Vec<_> = best.iter().map(|&i| &self.waypoints[i]).collect();
                        cmp_sequence(&cand, &cur) == Ordering::Less
                    }
                    _ => false,
                },
            };
            if better {
                self.best = Some((total, self.order.clone()));
            }
            return;
        }
        for i in 0..self.waypoints.len() {
            if self.used[i] {
                continue;
            }
            let next = self.waypoints[i].position;
            self.used[i] = true;
            self.order.push(i);
            self.visit(next, len + at.distance(&next));
            self.order.pop();
            self.used[i] = false;
        }
    }
}

/// Shortest ordering of all `waypoints` on the path `p0 → … → hazard`.
///
/// Equal-length orderings are resolved toward the lexicographically smallest
/// sequence of positions compared by `(y, x)`, so the result does not depend
/// on the input order.
pub fn plan_trajectory(
    p0: Point2,
    waypoints: &[Waypoint],
    hazard: Point2,
    cfg: &PlannerConfig,
) -> Result<PlannedTrajectory, PlanError> {
    if waypoints.len() > cfg.max_exact {
        return Err(PlanError::TooManyWaypoints { count: waypoints.len(), max: cfg.max_exact });
    }
    let mut search = Search {
        waypoints,
        terminal: hazard,
        used: vec![false; waypoints.len()],
        order: Vec::with_capacity(waypoints.len()),
        best: None,
    };
    search.visit(p0, 0.0);
    let (total_length, order) = search.best.expect("at least the empty ordering exists");
    Ok(PlannedTrajectory {
        start: p0,
        stops: order.into_iter().map(|i| waypoints[i].clone()).collect(),
        terminal: hazard,
        total_length,
    })
}

/// Replans from a new gaze position over the still-unacquired stops.
pub fn replan_on_deviation(
    current: &PlannedTrajectory,
    new_p0: Point2,
    remaining: &[Waypoint],
    hazard: Point2,
    cfg: &PlannerConfig,
) -> Result<PlannedTrajectory, PlanError> {
    if !remaining.iter().all(|w| current.stops.contains(w)) {
        return Err(PlanError::UnknownWaypoint);
    }
    plan_trajectory(new_p0, remaining, hazard, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wp(x: f64, y: f64) -> Waypoint {
        Waypoint { position: Point2::new(x, y), score: 0.5, snapped_object_id: None }
    }

    fn positions(t: &PlannedTrajectory) -> Vec<Point2> {
        t.stops.iter().map(|w| w.position).collect()
    }

    #[test]
    fn no_waypoints_is_direct() {
        let t = plan_trajectory(Point2::new(0.1, 0.5), &[], Point2::new(0.9, 0.5), &PlannerConfig::default()).unwrap();
        assert!(t.stops.is_empty());
        assert_eq!(t.total_length, Point2::new(0.1, 0.5).distance(&Point2::new(0.9, 0.5)));
    }

    #[test]
    fn single_waypoint() {
        let t = plan_trajectory(Point2::new(0.1, 0.5), &[wp(0.4, 0.2)], Point2::new(0.9, 0.5), &PlannerConfig::default())
            .unwrap();
        assert_eq!(positions(&t), [Point2::new(0.4, 0.2)]);
        assert_eq!(t.points().len(), 3);
    }

    #[test]
    fn collinear_waypoints_are_sorted_along_the_line() {
        let wps = [wp(0.3, 0.5), wp(0.7, 0.5), wp(0.5, 0.5)];
        let t = plan_trajectory(Point2::new(0.1, 0.5), &wps, Point2::new(0.9, 0.5), &PlannerConfig::default()).unwrap();
        assert_eq!(positions(&t), [Point2::new(0.3, 0.5), Point2::new(0.5, 0.5), Point2::new(0.7, 0.5)]);
        assert!((t.total_length - 0.8).abs() < 1e-12);
    }

    #[test]
    fn too_many_waypoints() {
        let wps: Vec<_> = (0..9).map(|k| wp(0.1 * k as f64, 0.3)).collect();
        assert_eq!(
            plan_trajectory(Point2::new(0.0, 0.0), &wps, Point2::new(1.0, 1.0), &PlannerConfig::default()),
            Err(PlanError::TooManyWaypoints { count: 9, max: 8 })
        );
    }

    #[test]
    fn symmetric_tie_prefers_smaller_y_then_x() {
        // p0 and h on the vertical axis of symmetry; both orders have equal length
        let (a, b) = (wp(0.3, 0.5), wp(0.7, 0.5));
        let p0 = Point2::new(0.5, 0.1);
        let h = Point2::new(0.5, 0.9);
        let cfg = PlannerConfig::default();
        let t1 = plan_trajectory(p0, &[a.clone(), b.clone()], h, &cfg).unwrap();
        let t2 = plan_trajectory(p0, &[b, a], h, &cfg).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(t1.stops[0].position, Point2::new(0.3, 0.5));
    }

    #[test]
    fn replan_rules() {
        let cfg = PlannerConfig::default();
        let wps = [wp(0.3, 0.5), wp(0.5, 0.2), wp(0.7, 0.6)];
        let (p0, h) = (Point2::new(0.1, 0.5), Point2::new(0.9, 0.5));
        let current = plan_trajectory(p0, &wps, h, &cfg).unwrap();
        let same = replan_on_deviation(&current, p0, &current.stops, h, &cfg).unwrap();
        assert_eq!(same, current);
        let direct = replan_on_deviation(&current, Point2::new(0.2, 0.2), &[], h, &cfg).unwrap();
        assert!(direct.stops.is_empty());
        assert_eq!(
            replan_on_deviation(&current, p0, &[wp(0.0, 0.0)], h, &cfg),
            Err(PlanError::UnknownWaypoint)
        );
    }
}
