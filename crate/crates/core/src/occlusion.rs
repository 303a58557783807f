//! Bird's-eye-view angular occlusion labelling.
//!
//! Every object's footprint is reduced to the arc of bearings it subtends
//! from the ego origin. Objects are ordered near to far by center range and
//! an object's coverage is the fraction of its arc covered by the union of
//! arcs of strictly closer objects. Height is ignored.
//!
//! [`ray_cast_oracle`] is an independent sampled check of the same quantity
//! that intersects rays with footprint edges instead of comparing arcs.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{normalize_angle, ObjectBox3D, Scene};

pub const DEFAULT_TAU: f64 = 0.7;
pub const MIN_RAYS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OcclusionError {
    #[error("ego inside object {0:?}")]
    EgoInsideObject(String),
    #[error("threshold tau must be in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("ray count must be at least {MIN_RAYS}, got {0}")]
    TooFewRays(usize),
}

/// Arc of bearings subtended by a footprint, `lo <= hi`, `hi - lo < π`.
///
/// `lo` is normalized into `[-π, π)`; `hi` may exceed π when the arc crosses
/// the seam, in which case [`AngularInterval::spans`] splits it in two.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularInterval {
    pub lo: f64,
    pub hi: f64,
}

impl AngularInterval {
    pub fn measure(&self) -> f64 {
        self.hi - self.lo
    }

    /// Non-wrapping sub-intervals inside `[-π, π]`.
    pub fn spans(&self) -> Vec<(f64, f64)> {
        if self.hi <= PI {
            vec![(self.lo, self.hi)]
        } else {
            vec![(self.lo, PI), (-PI, self.hi - 2.0 * PI)]
        }
    }

    pub fn contains(&self, bearing: f64) -> bool {
        let d = normalize_angle(bearing - self.lo);
        let d = if d < 0.0 { d + 2.0 * PI } else { d };
        d <= self.measure()
    }
}

/// Per-object verdict of the angular heuristic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcclusionLabel {
    pub scene_id: String,
    pub object_id: String,
    pub occluded: bool,
    pub coverage: f64,
    pub depth_rank: usize,
}

fn cross2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// True when the origin lies strictly outside the (counter-clockwise) footprint.
fn origin_outside(corners: &[[f64; 2]; 4]) -> bool {
    (0..4).any(|i| {
        let p = corners[i];
        let q = corners[(i + 1) % 4];
        let edge = [q[0] - p[0], q[1] - p[1]];
        cross2(edge, [-p[0], -p[1]]) < 0.0
    })
}

/// Minimal arc covering the bearings of all four footprint corners.
pub fn angular_profile(obj: &ObjectBox3D) -> Result<AngularInterval, OcclusionError> {
    let corners = obj.footprint_corners();
    if !origin_outside(&corners) {
        return Err(OcclusionError::EgoInsideObject(obj.id.clone()));
    }
    // the center lies inside the subtended arc, so offsets from its bearing
    // never wrap
    let mid = obj.center[1].atan2(obj.center[0]);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for [x, y] in corners {
        let d = normalize_angle(y.atan2(x) - mid);
        lo = lo.min(d);
        hi = hi.max(d);
    }
    let start = normalize_angle(mid + lo);
    Ok(AngularInterval {
        lo: start,
        hi: start + (hi - lo),
    })
}

/// Sorted, disjoint union of non-wrapping spans.
pub fn union_spans(mut spans: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    spans.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(spans.len());
    for (lo, hi) in spans {
        match out.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

/// Total overlap between an interval and a disjoint union of spans.
fn covered_measure(target: &AngularInterval, union: &[(f64, f64)]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in target.spans() {
        for &(c, d) in union {
            let lo = a.max(c);
            let hi = b.min(d);
            if hi > lo {
                acc += hi - lo;
            }
        }
    }
    acc
}

/// Angular measure shared by two profiles.
pub fn overlap_measure(a: &AngularInterval, b: &AngularInterval) -> f64 {
    covered_measure(a, &union_spans(b.spans()))
}

/// Groups labels by scene id, preserving their order within each scene.
pub fn group_by_scene(labels: &[OcclusionLabel]) -> BTreeMap<String, Vec<OcclusionLabel>> {
    let mut out: BTreeMap<String, Vec<OcclusionLabel>> = BTreeMap::new();
    for l in labels {
        out.entry(l.scene_id.clone()).or_default().push(l.clone());
    }
    out
}

/// Indices of `objects` ordered near to far, ties broken by id.
fn depth_order(objects: &[ObjectBox3D]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..objects.len()).collect();
    order.sort_by(|&a, &b| {
        let (oa, ob) = (&objects[a], &objects[b]);
        oa.range()
            .partial_cmp(&ob.range())
            .unwrap_or(Ordering::Equal)
            .then_with(|| oa.id.cmp(&ob.id))
    });
    order
}

fn check_tau(tau: f64) -> Result<(), OcclusionError> {
    if tau > 0.0 && tau <= 1.0 {
        Ok(())
    } else {
        Err(OcclusionError::InvalidThreshold(tau))
    }
}

/// Labels every object of `scene`, returned in near-to-far order.
pub fn label_scene(scene: &Scene, tau: f64) -> Result<Vec<OcclusionLabel>, OcclusionError> {
    check_tau(tau)?;
    let profiles = scene
        .objects
        .iter()
        .map(angular_profile)
        .collect::<Result<Vec<_>, _>>()?;
    let order = depth_order(&scene.objects);

    let mut labels = Vec::with_capacity(order.len());
    // spans of every object strictly closer than the current range group
    let mut closer: Vec<(f64, f64)> = Vec::new();
    let mut group_start = 0;
    while group_start < order.len() {
        let range = scene.objects[order[group_start]].range();
        let mut group_end = group_start;
        while group_end < order.len() && scene.objects[order[group_end]].range() == range {
            group_end += 1;
        }
        let union = union_spans(closer.clone());
        for (rank, &idx) in order.iter().enumerate().take(group_end).skip(group_start) {
            let profile = &profiles[idx];
            let coverage = (covered_measure(profile, &union) / profile.measure()).clamp(0.0, 1.0);
            labels.push(OcclusionLabel {
                scene_id: scene.scene_id.clone(),
                object_id: scene.objects[idx].id.clone(),
                occluded: coverage >= tau,
                coverage,
                depth_rank: rank,
            });
        }
        for &idx in &order[group_start..group_end] {
            closer.extend(profiles[idx].spans());
        }
        group_start = group_end;
    }
    Ok(labels)
}

/// Distance along the ray at bearing `theta` to the first footprint edge it
/// hits, if any.
fn ray_hit(theta: f64, corners: &[[f64; 2]; 4]) -> Option<f64> {
    let dir = [theta.cos(), theta.sin()];
    let mut best: Option<f64> = None;
    for i in 0..4 {
        let p = corners[i];
        let q = corners[(i + 1) % 4];
        let e = [q[0] - p[0], q[1] - p[1]];
        let denom = cross2(dir, e);
        if denom.abs() < 1e-15 {
            continue;
        }
        let t = cross2(p, e) / denom;
        let s = cross2(p, dir) / denom;
        if t > 0.0 && (0.0..=1.0).contains(&s) {
            best = Some(best.map_or(t, |b: f64| b.min(t)));
        }
    }
    best
}

/// Sampled reference labelling: `n_rays` rays spread uniformly over each
/// object's arc, blocked when a strictly closer footprint is hit first.
pub fn ray_cast_oracle(scene: &Scene, n_rays: usize, tau: f64) -> Result<Vec<OcclusionLabel>, OcclusionError> {
    check_tau(tau)?;
    if n_rays < MIN_RAYS {
        return Err(OcclusionError::TooFewRays(n_rays));
    }
    let corners: Vec<[[f64; 2]; 4]> = scene.objects.iter().map(|o| o.footprint_corners()).collect();
    let order = depth_order(&scene.objects);
    let mut labels = Vec::with_capacity(order.len());
    for (rank, &idx) in order.iter().enumerate() {
        let target = &scene.objects[idx];
        let profile = angular_profile(target)?;
        let range = target.range();
        let blockers: Vec<usize> = (0..scene.objects.len())
            .filter(|&j| scene.objects[j].range() < range)
            .collect();
        let (mut cast, mut blocked) = (0usize, 0usize);
        for k in 0..n_rays {
            let theta = profile.lo + profile.measure() * (k as f64 + 0.5) / n_rays as f64;
            let Some(t_target) = ray_hit(theta, &corners[idx]) else {
                continue;
            };
            cast += 1;
            if blockers
                .iter()
                .any(|&j| ray_hit(theta, &corners[j]).is_some_and(|t| t < t_target))
            {
                blocked += 1;
            }
        }
        let coverage = if cast == 0 { 0.0 } else { blocked as f64 / cast as f64 };
        labels.push(OcclusionLabel {
            scene_id: scene.scene_id.clone(),
            object_id: target.id.clone(),
            occluded: coverage >= tau,
            coverage,
            depth_rank: rank,
        });
    }
    Ok(labels)
}
