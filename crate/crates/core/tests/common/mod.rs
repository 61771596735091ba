//! Brute-force reference implementations and random input generators shared
//! by the integration tests. Nothing here calls into the code under test
//! except to build inputs.

#![allow(dead_code)]

use std::path::PathBuf;

use gazeguide_core::gaze::{FixationState, GazeSample};
use gazeguide_core::saliency::WaypointConfig;
use gazeguide_core::scene::{load_scene_file, HazardSpec, Point2, SceneObject, SceneSpec, Severity};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-9;

pub fn scenes_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenes")
}

pub fn scene(name: &str) -> SceneSpec {
    load_scene_file(&scenes_dir().join(format!("{name}.json"))).expect("bundled scene loads")
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

fn center(w: usize, h: usize, i: usize, j: usize) -> (f64, f64) {
    ((i as f64 + 0.5) / w as f64, (j as f64 + 0.5) / h as f64)
}

/// Elementwise `base · exp(-d²/2σ²)` followed by division by the maximum.
pub fn fuse_oracle(base: &[f64], w: usize, h: usize, hazard: (f64, f64), sigma_h: f64) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for j in 0..h {
        for i in 0..w {
            let c = center(w, h, i, j);
            let d2 = (c.0 - hazard.0).powi(2) + (c.1 - hazard.1).powi(2);
            out[j * w + i] = base[j * w + i] * (-d2 / (2.0 * sigma_h * sigma_h)).exp();
        }
    }
    let max = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max > 0.0 {
        for v in &mut out {
            *v /= max;
        }
    }
    out
}

/// Grid scan: every cell compared against its full 3×3 neighbourhood, then
/// threshold, sort, snap, hazard exclusion and greedy suppression.
pub fn waypoint_oracle(
    grid: &[f64],
    w: usize,
    h: usize,
    scene: &SceneSpec,
    cfg: &WaypointConfig,
) -> Vec<((f64, f64), Option<String>)> {
    let at = |i: i64, j: i64| -> Option<f64> {
        (i >= 0 && j >= 0 && (i as usize) < w && (j as usize) < h).then(|| grid[j as usize * w + i as usize])
    };
    let mut cands = Vec::new();
    for j in 0..h as i64 {
        for i in 0..w as i64 {
            let v = at(i, j).unwrap();
            let mut peak = true;
            for dj in -1..=1 {
                for di in -1..=1 {
                    if (di, dj) != (0, 0) && at(i + di, j + dj).is_some_and(|n| n > v) {
                        peak = false;
                    }
                }
            }
            if peak && v >= cfg.tau {
                cands.push((v, j as usize, i as usize));
            }
        }
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let hz = (scene.hazard.position.x, scene.hazard.position.y);
    let mut kept: Vec<((f64, f64), Option<String>)> = Vec::new();
    for (_, j, i) in cands {
        if kept.len() == cfg.k_max {
            break;
        }
        let c = center(w, h, i, j);
        let mut snapped: Option<(f64, &SceneObject)> = None;
        for o in &scene.objects {
            let d = dist(c, (o.centroid.x, o.centroid.y));
            if d <= cfg.snap_radius && snapped.is_none_or(|(bd, _)| d < bd) {
                snapped = Some((d, o));
            }
        }
        let (pos, id) = match snapped {
            Some((_, o)) => ((o.centroid.x, o.centroid.y), Some(o.id.clone())),
            None => (c, None),
        };
        if dist(c, hz) <= cfg.hazard_exclusion || dist(pos, hz) <= cfg.hazard_exclusion {
            continue;
        }
        if kept.iter().any(|(p, _)| dist(*p, pos) < cfg.min_sep) {
            continue;
        }
        kept.push((pos, id));
    }
    kept
}

fn path_len(start: Point2, stops: &[Point2], end: Point2) -> f64 {
    let mut pts = vec![start];
    pts.extend_from_slice(stops);
    pts.push(end);
    pts.windows(2).fold(0.0, |acc, w| acc + dist((w[0].x, w[0].y), (w[1].x, w[1].y)))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..=p.len() {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

/// Minimum over every ordering, and all orderings attaining it.
pub fn planner_oracle(p0: Point2, stops: &[Point2], hazard: Point2) -> (f64, Vec<Vec<Point2>>) {
    let mut best = f64::INFINITY;
    let mut argmins = Vec::new();
    for perm in permutations(stops.len()) {
        let seq: Vec<Point2> = perm.iter().map(|&i| stops[i]).collect();
        let len = path_len(p0, &seq, hazard);
        if len < best {
            best = len;
            argmins = vec![seq];
        } else if len == best {
            argmins.push(seq);
        }
    }
    (best, argmins)
}

fn span_dispersion(pts: &[&GazeSample]) -> f64 {
    let xs = pts.iter().map(|s| s.point.x);
    let ys = pts.iter().map(|s| s.point.y);
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    (x1 - x0) + (y1 - y0)
}

/// Window-scan I-DT recomputing every window's dispersion from scratch.
pub fn idt_oracle(stream: &[GazeSample], min_dur: f64, thr: f64) -> Vec<FixationState> {
    let v: Vec<&GazeSample> = stream.iter().filter(|s| s.valid).collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < v.len() {
        let Some(mut j) = (i..v.len()).find(|&j| v[j].t - v[i].t + 1e-9 >= min_dur) else {
            break;
        };
        if span_dispersion(&v[i..=j]) > thr {
            i += 1;
            continue;
        }
        while j + 1 < v.len() && span_dispersion(&v[i..=j + 1]) <= thr {
            j += 1;
        }
        let m = &v[i..=j];
        let n = m.len() as f64;
        out.push(FixationState {
            centroid: Point2::new(m.iter().map(|s| s.point.x).sum::<f64>() / n, m.iter().map(|s| s.point.y).sum::<f64>() / n),
            start_t: m[0].t,
            duration_s: m[m.len() - 1].t - m[0].t,
            dispersion: span_dispersion(m),
        });
        i = j + 1;
    }
    out
}

/// Fixation/saccade stream with jitter, dropouts and occasional repeated timestamps.
pub fn random_gaze_stream(rng: &mut ChaCha8Rng, n: usize) -> Vec<GazeSample> {
    let mut out = Vec::with_capacity(n);
    let mut t = 0.0;
    let mut centre = (rng.random::<f64>(), rng.random::<f64>());
    let mut left = 0usize;
    let jitter = [0.002, 0.006, 0.012][rng.random_range(0..3)];
    while out.len() < n {
        if left == 0 {
            centre = (rng.random::<f64>(), rng.random::<f64>());
            left = rng.random_range(1..40);
        }
        left -= 1;
        let p = Point2::new(
            (centre.0 + rng.random_range(-jitter..=jitter)).clamp(0.0, 1.0),
            (centre.1 + rng.random_range(-jitter..=jitter)).clamp(0.0, 1.0),
        );
        let valid = rng.random::<f64>() > 0.05;
        out.push(GazeSample { t, point: p, valid });
        if rng.random::<f64>() > 0.02 {
            t += [1.0 / 60.0, 1.0 / 120.0, 0.02][rng.random_range(0..3)];
        }
    }
    out
}

pub fn random_scene(rng: &mut ChaCha8Rng, id: &str) -> SceneSpec {
    let n = rng.random_range(0..7);
    let pt = |rng: &mut ChaCha8Rng| Point2::new(rng.random(), rng.random());
    let objects = (0..n)
        .map(|k| SceneObject {
            id: format!("o{k}"),
            centroid: pt(rng),
            half_extent: Point2::new(rng.random_range(0.01..0.15), rng.random_range(0.01..0.15)),
            salience_weight: rng.random_range(0.05..=1.0),
            moving: rng.random(),
        })
        .collect();
    let severity = [Severity::Low, Severity::Medium, Severity::High][rng.random_range(0..3)];
    SceneSpec {
        id: id.into(),
        duration_s: 20.0,
        hazard: HazardSpec { position: pt(rng), severity },
        distraction_point: pt(rng),
        objects,
    }
}
