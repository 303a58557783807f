//! Seeded corruption of generated records, one defect per record, for
//! exercising the validator.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::validate::{first_number, RejectReason};
use super::QraRecord;
use crate::scene::Scene;

pub const UNKNOWN_SENSOR_ID: &str = "s999_camera_unknown";

/// Distance added beyond the farthest object of the scene.
const DISTANCE_FAULT_MARGIN_M: f64 = 30.0;
/// Shift applied to the distance quoted in the answer prose.
const TEXT_FAULT_SHIFT_M: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaultKind {
    /// `count` incremented past the list length.
    BrokenCount,
    /// First grounded distance pushed beyond every object of the scene; the
    /// prose is updated to match.
    FarDistance,
    /// First grounded sensor replaced by one the scene lacks.
    UnknownSensor,
    /// Prose distance shifted away from the JSON value.
    ShiftedText,
}

impl FaultKind {
    pub const ALL: [FaultKind; 4] = [
        FaultKind::BrokenCount,
        FaultKind::FarDistance,
        FaultKind::UnknownSensor,
        FaultKind::ShiftedText,
    ];

    /// The single validator check this fault trips.
    pub fn expected_reason(self) -> RejectReason {
        match self {
            FaultKind::BrokenCount => RejectReason::CountMismatch,
            FaultKind::FarDistance => RejectReason::DistanceOutOfTolerance,
            FaultKind::UnknownSensor => RejectReason::UnknownSensor,
            FaultKind::ShiftedText => RejectReason::TextDistanceMismatch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectedFault {
    pub record_id: String,
    pub kind: FaultKind,
}

/// Corrupts `n` distinct records chosen by `seed`, cycling through the fault
/// kinds. Records without grounded objects always get a broken count.
/// Returns the faults in record order.
///
/// # Panics
/// When `n` exceeds `records.len()`.
pub fn inject_faults(records: &mut [QraRecord], scenes: &[Scene], n: usize, seed: u64) -> Vec<InjectedFault> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = sample(&mut rng, records.len(), n).into_vec();
    chosen.sort_unstable();

    let mut faults = Vec::with_capacity(n);
    for (k, idx) in chosen.into_iter().enumerate() {
        let record = &mut records[idx];
        let quoted = first_number(&record.answer_text);
        let kind = match (record.grounded.grounded_objects.is_empty(), &quoted) {
            (false, Some(_)) => FaultKind::ALL[k % 4],
            _ => FaultKind::BrokenCount,
        };
        match kind {
            FaultKind::BrokenCount => record.grounded.count += 1,
            FaultKind::FarDistance => {
                let farthest = scenes
                    .iter()
                    .find(|s| s.scene_id == record.scene_id)
                    .map(|s| s.objects.iter().map(|o| o.range()).fold(0.0, f64::max))
                    .unwrap_or(0.0);
                let d = (farthest + DISTANCE_FAULT_MARGIN_M).round();
                record.grounded.grounded_objects[0].distance_m = d;
                let (_, span) = quoted.expect("checked above");
                record.answer_text.replace_range(span, &format!("{d:.0}"));
            }
            FaultKind::UnknownSensor => {
                record.grounded.grounded_objects[0].sensor_id = UNKNOWN_SENSOR_ID.to_string();
            }
            FaultKind::ShiftedText => {
                let d = record.grounded.grounded_objects[0].distance_m;
                let (_, span) = quoted.expect("checked above");
                record
                    .answer_text
                    .replace_range(span, &format!("{:.0}", d.round() + TEXT_FAULT_SHIFT_M));
            }
        }
        faults.push(InjectedFault {
            record_id: record.record_id.clone(),
            kind,
        });
    }
    faults
}
