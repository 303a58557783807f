//! Cross-checks generated records against scene ground truth.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{QraError, QraRecord};
use crate::scene::Scene;

static FIRST_NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+(?:\.\d+)?").expect("static regex"));

/// First decimal number in `text` with its byte span.
pub(crate) fn first_number(text: &str) -> Option<(f64, std::ops::Range<usize>)> {
    let m = FIRST_NUMBER.find(text)?;
    Some((m.as_str().parse().ok()?, m.range()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TolerancePolicy {
    pub abs_floor_m: f64,
    pub rel_frac: f64,
    /// Allowed gap between the first number in the answer prose and the
    /// first grounded distance.
    pub text_tolerance_m: f64,
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        TolerancePolicy {
            abs_floor_m: 2.0,
            rel_frac: 0.05,
            text_tolerance_m: 1.0,
        }
    }
}

impl TolerancePolicy {
    pub fn tolerance(&self, true_distance: f64) -> f64 {
        self.abs_floor_m.max(self.rel_frac * true_distance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    CountMismatch,
    DistanceOutOfTolerance,
    UnknownSensor,
    TextDistanceMismatch,
}

impl RejectReason {
    pub const ALL: [RejectReason; 4] = [
        RejectReason::CountMismatch,
        RejectReason::DistanceOutOfTolerance,
        RejectReason::UnknownSensor,
        RejectReason::TextDistanceMismatch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::CountMismatch => "count-mismatch",
            RejectReason::DistanceOutOfTolerance => "distance-out-of-tolerance",
            RejectReason::UnknownSensor => "unknown-sensor",
            RejectReason::TextDistanceMismatch => "text-distance-mismatch",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub record_id: String,
    pub scene_id: String,
    /// Every failed check, in check order.
    pub reasons: Vec<RejectReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub total: usize,
    pub accepted: Vec<String>,
    pub rejected: Vec<Rejection>,
    /// Number of rejected records failing each check.
    pub histogram: BTreeMap<RejectReason, usize>,
}

impl ValidationReport {
    pub fn accepted_count(&self) -> usize {
        self.accepted.len()
    }

    pub fn rejected_count(&self) -> usize {
        self.rejected.len()
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "records:  {}", self.total);
        let _ = writeln!(out, "accepted: {}", self.accepted_count());
        let _ = writeln!(out, "rejected: {}", self.rejected_count());
        for reason in RejectReason::ALL {
            let n = self.histogram.get(&reason).copied().unwrap_or(0);
            let _ = writeln!(out, "  {:<27} {n}", reason.as_str());
        }
        out
    }
}

/// Checks a single record against its scene; an empty result means accept.
pub fn check_record(record: &QraRecord, scene: &Scene, policy: &TolerancePolicy) -> Vec<RejectReason> {
    let g = &record.grounded;
    let mut reasons = Vec::new();
    if !g.is_consistent() {
        reasons.push(RejectReason::CountMismatch);
    }
    let hallucinated = g.grounded_objects.iter().any(|p| {
        !scene.objects.iter().any(|o| {
            let d = o.range();
            o.class_label == p.class && (p.distance_m - d).abs() <= policy.tolerance(d)
        })
    });
    if hallucinated {
        reasons.push(RejectReason::DistanceOutOfTolerance);
    }
    if g.grounded_objects.iter().any(|p| scene.camera(&p.sensor_id).is_none()) {
        reasons.push(RejectReason::UnknownSensor);
    }
    if let (Some(first), Some((said, _))) = (g.grounded_objects.first(), first_number(&record.answer_text)) {
        if (said - first.distance_m).abs() > policy.text_tolerance_m {
            reasons.push(RejectReason::TextDistanceMismatch);
        }
    }
    reasons
}

/// Splits `records` into accepted ids and rejections. A record naming an
/// unknown scene is a hard error.
pub fn validate_dataset(
    records: &[QraRecord],
    scenes: &[Scene],
    policy: &TolerancePolicy,
) -> Result<ValidationReport, QraError> {
    let by_id: HashMap<&str, &Scene> = scenes.iter().map(|s| (s.scene_id.as_str(), s)).collect();
    let verdicts = records
        .par_iter()
        .map(|r| {
            let scene = by_id
                .get(r.scene_id.as_str())
                .ok_or_else(|| QraError::UnknownScene(r.scene_id.clone()))?;
            Ok(check_record(r, scene, policy))
        })
        .collect::<Result<Vec<_>, QraError>>()?;

    let mut report = ValidationReport {
        total: records.len(),
        accepted: Vec::new(),
        rejected: Vec::new(),
        histogram: BTreeMap::new(),
    };
    for (r, reasons) in records.iter().zip(verdicts) {
        if reasons.is_empty() {
            report.accepted.push(r.record_id.clone());
            continue;
        }
        for reason in &reasons {
            *report.histogram.entry(*reason).or_default() += 1;
        }
        report.rejected.push(Rejection {
            record_id: r.record_id.clone(),
            scene_id: r.scene_id.clone(),
            reasons,
        });
    }
    Ok(report)
}
