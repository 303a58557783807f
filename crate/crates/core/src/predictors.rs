//! Synthetic predictors for exercising the scorer.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::metrics::Prediction;
use crate::occlusion::OcclusionLabel;
use crate::qra::{Decision, GroundedAnswer, HazardLevel, QraRecord};

fn emit(record: &QraRecord, answer: &GroundedAnswer) -> Prediction {
    let text = format!("{}\n{}", record.rationale, answer.to_canonical_json());
    Prediction::from_text(&record.record_id, text)
}

/// Echoes the reference output of every record.
pub fn oracle(dataset: &[QraRecord]) -> Vec<Prediction> {
    dataset
        .iter()
        .map(|r| Prediction::from_text(&r.record_id, r.target_text()))
        .collect()
}

/// Well-formed answers that never name an object.
pub fn empty(dataset: &[QraRecord]) -> Vec<Prediction> {
    constant(dataset, Decision::Proceed)
}

/// The same decision for every record, with no objects.
pub fn constant(dataset: &[QraRecord], decision: Decision) -> Vec<Prediction> {
    let answer = GroundedAnswer {
        decision,
        hazard_level: HazardLevel::None,
        count: 0,
        grounded_objects: Vec::new(),
    };
    dataset
        .iter()
        .map(|r| {
            Prediction::from_text(
                &r.record_id,
                format!("Nothing stands out.\n{}", answer.to_canonical_json()),
            )
        })
        .collect()
}

/// Reference answers with every distance shifted by `offset_m`.
pub fn offset(dataset: &[QraRecord], offset_m: f64) -> Vec<Prediction> {
    dataset
        .iter()
        .map(|r| {
            let mut a = r.grounded.clone();
            for o in &mut a.grounded_objects {
                o.distance_m = (o.distance_m + offset_m).max(0.0);
            }
            emit(r, &a)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Standard deviation of the Gaussian distance noise.
    pub sigma_m: f64,
    /// Probability of dropping each hidden object from an answer.
    pub dropout: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            sigma_m: 9.0,
            dropout: 0.25,
            seed: 0,
        }
    }
}

/// Reference answers with Gaussian distance noise and random omission of
/// hidden objects. Record `k` draws from its own generator stream.
pub fn noisy(dataset: &[QraRecord], labels: &[OcclusionLabel], cfg: &NoiseConfig) -> Vec<Prediction> {
    let occluded: HashMap<(&str, &str), bool> = labels
        .iter()
        .map(|l| ((l.scene_id.as_str(), l.object_id.as_str()), l.occluded))
        .collect();
    let normal = Normal::new(0.0, cfg.sigma_m).expect("sigma must be finite and non-negative");
    dataset
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k as u64);
            let mut a = r.grounded.clone();
            a.grounded_objects.clear();
            for (obj, id) in r.grounded.grounded_objects.iter().zip(&r.object_ids) {
                let hidden = occluded
                    .get(&(r.scene_id.as_str(), id.as_str()))
                    .copied()
                    .unwrap_or(false);
                if hidden && rng.random_bool(cfg.dropout) {
                    continue;
                }
                let mut o = obj.clone();
                o.distance_m = (o.distance_m + normal.sample(&mut rng)).max(0.0);
                a.grounded_objects.push(o);
            }
            a.count = a.grounded_objects.len() as u64;
            emit(r, &a)
        })
        .collect()
}
