//! Question-Rationale-Answer records.
//!
//! A record pairs a question with a free-text rationale and an answer made of
//! prose plus a structured [`GroundedAnswer`]. The structured part has a
//! canonical JSON form with fixed key order:
//!
//! ```text
//! {"decision":..,"hazard_level":..,"count":..,"grounded_objects":[
//!   {"type":..,"bbox":[x0,y0,x1,y1],"distance_m":..,"sensor_id":..}]}
//! ```

mod faults;
mod generate;
mod parse;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{ClassLabel, SplitTag};

pub use faults::{inject_faults, FaultKind, InjectedFault, UNKNOWN_SENSOR_ID};
pub use generate::{generate_dataset, generate_records, DecisionPolicy, QraConfig};
pub use parse::{parse_answer, ParseError, ParseMode, ParsedAnswer};
pub use validate::{check_record, validate_dataset, RejectReason, Rejection, TolerancePolicy, ValidationReport};

#[derive(Debug, Error)]
pub enum QraError {
    #[error("unknown scene {0:?}")]
    UnknownScene(String),
    #[error("scene {scene_id:?}: no occlusion label for object {object_id:?}")]
    MissingLabel { scene_id: String, object_id: String },
    #[error("task mix must be non-negative and sum to 1, got {0:?}")]
    InvalidMix([f64; 3]),
    #[error("cannot generate records without scenes")]
    NoScenes,
    #[error(transparent)]
    Occlusion(#[from] crate::occlusion::OcclusionError),
    #[error(transparent)]
    Projection(#[from] crate::projection::ProjectionError),
}

/// The four driving actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Proceed,
    Monitor,
    Yield,
    Stop,
}

impl Decision {
    pub const ALL: [Decision; 4] = [Decision::Proceed, Decision::Monitor, Decision::Yield, Decision::Stop];

    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Proceed => "proceed",
            Decision::Monitor => "monitor",
            Decision::Yield => "yield",
            Decision::Stop => "stop",
        }
    }

    pub fn parse(s: &str) -> Option<Decision> {
        Decision::ALL.into_iter().find(|d| d.as_str() == s)
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HazardLevel {
    None,
    Low,
    Medium,
    High,
}

impl HazardLevel {
    pub const ALL: [HazardLevel; 4] = [
        HazardLevel::None,
        HazardLevel::Low,
        HazardLevel::Medium,
        HazardLevel::High,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HazardLevel::None => "none",
            HazardLevel::Low => "low",
            HazardLevel::Medium => "medium",
            HazardLevel::High => "high",
        }
    }

    pub fn parse(s: &str) -> Option<HazardLevel> {
        HazardLevel::ALL.into_iter().find(|h| h.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Spatial,
    Counting,
    Maneuver,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Spatial, TaskKind::Counting, TaskKind::Maneuver];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Spatial => "spatial",
            TaskKind::Counting => "counting",
            TaskKind::Maneuver => "maneuver",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One object named in an answer: class, 2D box in a named camera and range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedObject {
    #[serde(rename = "type")]
    pub class: ClassLabel,
    /// `[x_min, y_min, x_max, y_max]` in whole pixels.
    pub bbox: [i64; 4],
    pub distance_m: f64,
    pub sensor_id: String,
}

impl GroundedObject {
    pub fn bbox_is_well_ordered(&self) -> bool {
        self.bbox[0] < self.bbox[2] && self.bbox[1] < self.bbox[3]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedAnswer {
    pub decision: Decision,
    pub hazard_level: HazardLevel,
    pub count: u64,
    pub grounded_objects: Vec<GroundedObject>,
}

impl GroundedAnswer {
    /// Compact canonical JSON (fixed key order, no whitespace).
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("grounded answers always serialize")
    }

    pub fn is_consistent(&self) -> bool {
        self.count == self.grounded_objects.len() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QraRecord {
    pub record_id: String,
    pub scene_id: String,
    pub task: TaskKind,
    /// Phrasing variant (0–3) used for question and answer templates.
    pub variant: u8,
    pub question: String,
    pub rationale: String,
    pub answer_text: String,
    pub grounded: GroundedAnswer,
    /// Ground-truth object ids, parallel to `grounded.grounded_objects`.
    pub object_ids: Vec<String>,
    pub split_tag: Option<SplitTag>,
}

impl QraRecord {
    /// The full model-facing output: rationale, answer prose, then the JSON.
    pub fn target_text(&self) -> String {
        let mut out = String::new();
        if !self.rationale.is_empty() {
            out.push_str(&self.rationale);
            out.push('\n');
        }
        out.push_str(&self.answer_text);
        out.push('\n');
        out.push_str(&self.grounded.to_canonical_json());
        out
    }
}
