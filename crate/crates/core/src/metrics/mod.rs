//! Scoring of model answers: decision macro-F1, occlusion recall (plain and
//! thresholded), visible-object distance MAE and box mIoU.
//!
//! Every record contributes a [`Tally`] of raw counts and sums. Tallies merge
//! associatively, so the aggregate row is the pooled tally of all records and
//! each task row the pooled tally of that task's records.

mod matching;
mod report;

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::occlusion::OcclusionLabel;
use crate::projection::{iou, project_box, Bbox2D};
use crate::qra::{parse_answer, Decision, GroundedAnswer, ParseMode, QraRecord, TaskKind};
use crate::scene::Scene;

pub use matching::{match_objects, order_cost, pair_cost, quantize_error, MatchPair, MatchResult, DEFAULT_GATE_M};
pub use report::{MetricRow, ScoreReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("prediction for unknown record {0:?}")]
    UnknownRecord(String),
    #[error("record {record_id:?} names unknown scene {scene_id:?}")]
    UnknownScene { record_id: String, scene_id: String },
    #[error("scene {scene_id:?}: no occlusion label for object {object_id:?}")]
    MissingLabel { scene_id: String, object_id: String },
    #[error("thresholds must be finite and non-negative")]
    InvalidThreshold,
}

/// How `Occ.@Xm` is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, Hash)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    /// A match counts only if its distance error is at most X.
    #[default]
    Error,
    /// Recall restricted to hidden objects within X of the ego vehicle.
    Range,
}

impl ThresholdMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ThresholdMode::Error => "error",
            ThresholdMode::Range => "range",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreOptions {
    pub method: String,
    pub threshold_mode: ThresholdMode,
    pub aggregate_threshold_m: f64,
    pub task_threshold_m: f64,
    pub gate_m: f64,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            method: "model".to_string(),
            threshold_mode: ThresholdMode::Error,
            aggregate_threshold_m: 10.0,
            task_threshold_m: 20.0,
            gate_m: DEFAULT_GATE_M,
        }
    }
}

/// Pluggable rationale similarity (for example an embedding-based score).
pub trait TextSimilarity: Send + Sync {
    /// Similarity of `candidate` to `reference` in `[0, 1]`.
    fn similarity(&self, candidate: &str, reference: &str) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum ParseOutcome {
    Parsed { answer: GroundedAnswer },
    Failed { kind: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub record_id: String,
    pub raw_text: String,
    pub parsed: ParseOutcome,
}

impl Prediction {
    /// Parses `raw_text` leniently; failures are kept, not dropped.
    pub fn from_text(record_id: impl Into<String>, raw_text: impl Into<String>) -> Self {
        let raw_text = raw_text.into();
        let parsed = match parse_answer(&raw_text, ParseMode::Lenient) {
            Ok(p) => ParseOutcome::Parsed { answer: p.answer },
            Err(e) => ParseOutcome::Failed {
                kind: e.kind().to_string(),
                message: e.to_string(),
            },
        };
        Prediction {
            record_id: record_id.into(),
            raw_text,
            parsed,
        }
    }

    pub fn answer(&self) -> Option<&GroundedAnswer> {
        match &self.parsed {
            ParseOutcome::Parsed { answer } => Some(answer),
            ParseOutcome::Failed { .. } => None,
        }
    }
}

/// Confusion column for unparseable or missing answers.
const INVALID: usize = 4;

fn decision_index(d: Decision) -> usize {
    Decision::ALL
        .iter()
        .position(|x| *x == d)
        .expect("ALL lists every decision")
}

/// Raw per-record counts; merge is associative.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub records: u64,
    pub parse_failures: u64,
    pub missing: u64,
    /// Rows: ground-truth decision; columns: predicted decision or invalid.
    pub confusion: [[u64; 5]; 4],
    pub occ_total: u64,
    pub occ_matched: u64,
    /// Matched hidden objects within each threshold (error mode).
    pub occ_within: [u64; 2],
    /// Hidden objects, and matched hidden objects, whose range is within
    /// each threshold (range mode).
    pub occ_band_total: [u64; 2],
    pub occ_band_matched: [u64; 2],
    pub vis_err_sum: f64,
    pub vis_pairs: u64,
    pub iou_sum: f64,
    pub iou_count: u64,
    pub sim_sum: f64,
    pub sim_count: u64,
    pub warnings: Vec<String>,
}

impl Tally {
    pub fn merge(mut self, other: Tally) -> Tally {
        self.records += other.records;
        self.parse_failures += other.parse_failures;
        self.missing += other.missing;
        for (row, o) in self.confusion.iter_mut().zip(other.confusion) {
            for (c, oc) in row.iter_mut().zip(o) {
                *c += oc;
            }
        }
        self.occ_total += other.occ_total;
        self.occ_matched += other.occ_matched;
        for t in 0..2 {
            self.occ_within[t] += other.occ_within[t];
            self.occ_band_total[t] += other.occ_band_total[t];
            self.occ_band_matched[t] += other.occ_band_matched[t];
        }
        self.vis_err_sum += other.vis_err_sum;
        self.vis_pairs += other.vis_pairs;
        self.iou_sum += other.iou_sum;
        self.iou_count += other.iou_count;
        self.sim_sum += other.sim_sum;
        self.sim_count += other.sim_count;
        self.warnings.extend(other.warnings);
        self
    }

    /// Macro F1 over the decision classes present in ground truth or
    /// predictions; `None` without any record.
    pub fn decision_f1(&self) -> Option<f64> {
        let mut scores = Vec::new();
        for c in 0..4 {
            let tp = self.confusion[c][c];
            let fp: u64 = (0..4).filter(|&g| g != c).map(|g| self.confusion[g][c]).sum();
            let fn_: u64 = (0..5).filter(|&p| p != c).map(|p| self.confusion[c][p]).sum();
            if tp + fp + fn_ == 0 {
                continue;
            }
            scores.push(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64);
        }
        (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64)
    }

    pub fn occ_recall(&self) -> Option<f64> {
        ratio(self.occ_matched, self.occ_total)
    }

    /// Thresholded recall for threshold slot `t` (0 = aggregate, 1 = task).
    pub fn occ_at(&self, t: usize, mode: ThresholdMode) -> Option<f64> {
        match mode {
            ThresholdMode::Error => ratio(self.occ_within[t], self.occ_total),
            ThresholdMode::Range => ratio(self.occ_band_matched[t], self.occ_band_total[t]),
        }
    }

    pub fn vis_mae(&self) -> Option<f64> {
        (self.vis_pairs > 0).then(|| self.vis_err_sum / self.vis_pairs as f64)
    }

    pub fn miou(&self) -> Option<f64> {
        (self.iou_count > 0).then(|| self.iou_sum / self.iou_count as f64)
    }

    pub fn similarity(&self) -> Option<f64> {
        (self.sim_count > 0).then(|| self.sim_sum / self.sim_count as f64)
    }

    pub fn parse_failure_rate(&self) -> Option<f64> {
        ratio(self.parse_failures, self.records)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Ground-truth context a record is scored against.
pub struct RecordContext<'a> {
    pub scene: &'a Scene,
    /// `object_id → occluded` for every object of the scene.
    pub occluded: &'a HashMap<String, bool>,
}

/// Scores one record. `prediction == None` marks a missing prediction.
pub fn tally_record(
    record: &QraRecord,
    prediction: Option<&Prediction>,
    ctx: &RecordContext,
    opts: &ScoreOptions,
    similarity: Option<&dyn TextSimilarity>,
) -> Tally {
    let mut t = Tally {
        records: 1,
        ..Tally::default()
    };
    let thresholds = [opts.aggregate_threshold_m, opts.task_threshold_m];
    let answer = prediction.and_then(Prediction::answer);
    if prediction.is_none() {
        t.missing = 1;
    }
    let predicted = match answer {
        Some(a) => decision_index(a.decision),
        None => {
            t.parse_failures = 1;
            INVALID
        }
    };
    t.confusion[decision_index(record.grounded.decision)][predicted] += 1;

    let objects = answer.map_or(&[][..], |a| &a.grounded_objects[..]);
    let m = match_objects(objects, &ctx.scene.objects, opts.gate_m);
    let by_gt: HashMap<&str, &MatchPair> = m.pairs.iter().map(|p| (p.gt_id.as_str(), p)).collect();

    for id in &record.object_ids {
        let Some(obj) = ctx.scene.object(id) else { continue };
        let pair = by_gt.get(id.as_str());
        if ctx.occluded[id] {
            t.occ_total += 1;
            let range = obj.range();
            for (k, thr) in thresholds.iter().enumerate() {
                let in_band = range <= *thr;
                t.occ_band_total[k] += u64::from(in_band);
                if let Some(p) = pair {
                    t.occ_within[k] += u64::from(p.error_m <= *thr);
                    t.occ_band_matched[k] += u64::from(in_band);
                }
            }
            t.occ_matched += u64::from(pair.is_some());
        }
        if pair.is_none() {
            // a referenced object nobody boxed scores zero overlap
            t.iou_count += 1;
        }
    }

    for p in &m.pairs {
        if !ctx.occluded[&p.gt_id] {
            t.vis_err_sum += p.error_m;
            t.vis_pairs += 1;
        }
        let pred = &objects[p.pred_index];
        let gt = ctx.scene.object(&p.gt_id).expect("matched against scene objects");
        let Some(cam) = ctx.scene.camera(&pred.sensor_id) else {
            t.iou_count += 1;
            t.warnings.push(format!(
                "record {}: unknown sensor {:?}",
                record.record_id, pred.sensor_id
            ));
            continue;
        };
        let gt_box = match project_box(gt, cam) {
            Ok(b) => b.and_then(|b| Bbox2D::from_pixels(b.to_pixels())),
            Err(e) => {
                t.warnings.push(format!("record {}: {e}", record.record_id));
                None
            }
        };
        let Some(gt_box) = gt_box else { continue };
        t.iou_count += 1;
        if let Some(pb) = Bbox2D::from_pixels(pred.bbox) {
            t.iou_sum += iou(&pb, &gt_box);
        }
    }

    if let (Some(sim), Some(pred)) = (similarity, prediction) {
        t.sim_sum += sim.similarity(&pred.raw_text, &record.target_text());
        t.sim_count += 1;
    }
    t
}

/// Scores `predictions` against `dataset`. Records without a prediction are
/// scored as parse failures and listed in the report.
pub fn score(
    predictions: &[Prediction],
    dataset: &[QraRecord],
    scenes: &[Scene],
    labels: &[OcclusionLabel],
    opts: &ScoreOptions,
    similarity: Option<&dyn TextSimilarity>,
) -> Result<ScoreReport, MetricsError> {
    if [opts.aggregate_threshold_m, opts.task_threshold_m, opts.gate_m]
        .iter()
        .any(|v| !v.is_finite() || *v < 0.0)
    {
        return Err(MetricsError::InvalidThreshold);
    }
    let records: HashMap<&str, &QraRecord> = dataset.iter().map(|r| (r.record_id.as_str(), r)).collect();
    let mut warnings = Vec::new();

    // duplicates keep the lexicographically smallest text so file order is
    // irrelevant
    let mut chosen: BTreeMap<&str, &Prediction> = BTreeMap::new();
    for p in predictions {
        if !records.contains_key(p.record_id.as_str()) {
            return Err(MetricsError::UnknownRecord(p.record_id.clone()));
        }
        match chosen.get(p.record_id.as_str()) {
            Some(prev) => {
                if p.raw_text < prev.raw_text {
                    chosen.insert(&p.record_id, p);
                }
            }
            None => {
                chosen.insert(&p.record_id, p);
            }
        }
    }
    let mut dup_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for p in predictions {
        *dup_counts.entry(p.record_id.as_str()).or_default() += 1;
    }
    for (id, n) in dup_counts.into_iter().filter(|(_, n)| *n > 1) {
        warnings.push(format!("record {id}: {n} predictions, kept one"));
    }

    let scene_by_id: HashMap<&str, &Scene> = scenes.iter().map(|s| (s.scene_id.as_str(), s)).collect();
    let mut occluded: HashMap<&str, HashMap<String, bool>> = HashMap::new();
    for l in labels {
        occluded
            .entry(l.scene_id.as_str())
            .or_default()
            .insert(l.object_id.clone(), l.occluded);
    }
    let empty = HashMap::new();
    for r in dataset {
        let scene = scene_by_id
            .get(r.scene_id.as_str())
            .ok_or_else(|| MetricsError::UnknownScene {
                record_id: r.record_id.clone(),
                scene_id: r.scene_id.clone(),
            })?;
        let map = occluded.get(r.scene_id.as_str()).unwrap_or(&empty);
        if let Some(o) = scene.objects.iter().find(|o| !map.contains_key(&o.id)) {
            return Err(MetricsError::MissingLabel {
                scene_id: r.scene_id.clone(),
                object_id: o.id.clone(),
            });
        }
    }

    let tallies: Vec<(TaskKind, Tally)> = dataset
        .par_iter()
        .map(|r| {
            let ctx = RecordContext {
                scene: scene_by_id[r.scene_id.as_str()],
                occluded: occluded.get(r.scene_id.as_str()).unwrap_or(&empty),
            };
            let pred = chosen.get(r.record_id.as_str()).copied();
            (r.task, tally_record(r, pred, &ctx, opts, similarity))
        })
        .collect();

    let missing: Vec<String> = dataset
        .iter()
        .filter(|r| !chosen.contains_key(r.record_id.as_str()))
        .map(|r| r.record_id.clone())
        .collect();

    let mut aggregate = Tally::default();
    let mut per_task: BTreeMap<TaskKind, Tally> = BTreeMap::new();
    for (task, t) in tallies {
        let entry = per_task.entry(task).or_default();
        *entry = std::mem::take(entry).merge(t.clone());
        aggregate = aggregate.merge(t);
    }
    warnings.append(&mut aggregate.warnings);
    for t in per_task.values_mut() {
        t.warnings.clear();
    }

    Ok(ScoreReport::build(opts, &aggregate, &per_task, missing, warnings))
}
