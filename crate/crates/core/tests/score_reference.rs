//! The scorer against a one-pass reference written from the metric
//! definitions alone: its own answer extraction, subset-DP matching and
//! counters.

use std::collections::HashMap;

use serde_json::Value;

use coopsight_core::metrics::{score, ScoreOptions};
use coopsight_core::occlusion::label_scene;
use coopsight_core::predictors::{self, NoiseConfig};
use coopsight_core::projection::{project_box, Bbox2D};
use coopsight_core::qra::{generate_dataset, QraConfig, QraRecord};
use coopsight_core::scene::{ObjectBox3D, Scene};
use coopsight_core::scenegen::{generate, GenConfig};

struct PredObj {
    class: String,
    bbox: [f64; 4],
    dist: f64,
    sensor: String,
}

/// Best assignment by subset DP, ranked by pair count, then total error in
/// micrometres, then the sum of squared micrometre errors, then
/// `Σ i·(m − j)` so equal errors keep predictions in ground-truth order.
fn best_assignment(pred: &[PredObj], gt: &[ObjectBox3D]) -> Vec<Option<usize>> {
    let cost = |i: usize, j: usize| -> Option<i128> {
        let g = &gt[j];
        let err = (pred[i].dist - (g.center[0] * g.center[0] + g.center[1] * g.center[1]).sqrt()).abs();
        (pred[i].class == g.class_label.as_str() && err <= 20.0).then(|| (err * 1e6).round() as i128)
    };
    type Score = (usize, i128, i128, i128);
    let better = |a: Score, b: Score| (a.0, -a.1, -a.2, -a.3) > (b.0, -b.1, -b.2, -b.3);
    let n = gt.len();
    let full = 1usize << n;
    // value[i][mask]: best score for preds i.. with GT `mask` already taken
    let mut value = vec![vec![(0usize, 0i128, 0i128, 0i128); full]; pred.len() + 1];
    let mut choice = vec![vec![None; full]; pred.len()];
    for i in (0..pred.len()).rev() {
        for mask in 0..full {
            let mut best = value[i + 1][mask];
            for j in 0..n {
                if mask & (1 << j) != 0 {
                    continue;
                }
                if let Some(e) = cost(i, j) {
                    let rest = value[i + 1][mask | (1 << j)];
                    let cand = (rest.0 + 1, rest.1 + e, rest.2 + e * e, rest.3 + (i * (n - j)) as i128);
                    if better(cand, best) {
                        best = cand;
                        choice[i][mask] = Some(j);
                    }
                }
            }
            value[i][mask] = best;
        }
    }
    let mut mask = 0;
    (0..pred.len())
        .map(|i| {
            let pick = choice[i][mask];
            if let Some(j) = pick {
                mask |= 1 << j;
            }
            pick
        })
        .collect()
}

fn area(b: [f64; 4]) -> f64 {
    (b[2] - b[0]).max(0.0) * (b[3] - b[1]).max(0.0)
}

fn box_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let inter = area([a[0].max(b[0]), a[1].max(b[1]), a[2].min(b[2]), a[3].min(b[3])]);
    let union = area(a) + area(b) - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

#[derive(Default)]
struct Counters {
    records: f64,
    failures: f64,
    // [gt][pred], pred 4 = invalid
    confusion: [[f64; 5]; 4],
    hidden: f64,
    hidden_found: f64,
    hidden_close: f64,
    vis_err: f64,
    vis_n: f64,
    iou_sum: f64,
    iou_n: f64,
}

impl Counters {
    fn f1(&self) -> f64 {
        let mut s = Vec::new();
        for c in 0..4 {
            let tp = self.confusion[c][c];
            let col: f64 = (0..4).map(|g| self.confusion[g][c]).sum();
            let row: f64 = self.confusion[c].iter().sum();
            if row + col > 0.0 {
                s.push(2.0 * tp / (row + col));
            }
        }
        s.iter().sum::<f64>() / s.len() as f64
    }
}

const DECISIONS: [&str; 4] = ["proceed", "monitor", "yield", "stop"];

fn reference(
    preds: &HashMap<String, String>,
    records: &[QraRecord],
    scenes: &HashMap<String, Scene>,
    hidden: &HashMap<(String, String), bool>,
    threshold: f64,
    task: Option<&str>,
) -> Counters {
    let mut c = Counters::default();
    for r in records.iter().filter(|r| task.is_none_or(|t| r.task.as_str() == t)) {
        let scene = &scenes[&r.scene_id];
        c.records += 1.0;
        let gt_dec = DECISIONS
            .iter()
            .position(|d| *d == r.grounded.decision.as_str())
            .unwrap();
        let answer: Option<Value> = preds[&r.record_id]
            .lines()
            .last()
            .and_then(|l| serde_json::from_str(l).ok());
        let Some(answer) = answer else {
            c.failures += 1.0;
            c.confusion[gt_dec][4] += 1.0;
            continue;
        };
        let pd = DECISIONS.iter().position(|d| answer["decision"] == *d).unwrap();
        c.confusion[gt_dec][pd] += 1.0;
        let objs: Vec<PredObj> = answer["grounded_objects"]
            .as_array()
            .unwrap()
            .iter()
            .map(|o| PredObj {
                class: o["type"].as_str().unwrap().to_string(),
                bbox: [0, 1, 2, 3].map(|k| o["bbox"][k].as_f64().unwrap()),
                dist: o["distance_m"].as_f64().unwrap(),
                sensor: o["sensor_id"].as_str().unwrap().to_string(),
            })
            .collect();
        let assignment = best_assignment(&objs, &scene.objects);
        let matched_gt: HashMap<usize, usize> = assignment
            .iter()
            .enumerate()
            .filter_map(|(i, j)| j.map(|j| (j, i)))
            .collect();

        for id in &r.object_ids {
            let j = scene.objects.iter().position(|o| &o.id == id).unwrap();
            let is_hidden = hidden[&(r.scene_id.clone(), id.clone())];
            match matched_gt.get(&j) {
                Some(&i) => {
                    if is_hidden {
                        c.hidden += 1.0;
                        c.hidden_found += 1.0;
                        let g = &scene.objects[j];
                        if (objs[i].dist - g.center[0].hypot(g.center[1])).abs() <= threshold {
                            c.hidden_close += 1.0;
                        }
                    }
                }
                None => {
                    c.hidden += f64::from(u8::from(is_hidden));
                    c.iou_n += 1.0;
                }
            }
        }
        for (i, j) in assignment.iter().enumerate() {
            let Some(j) = *j else { continue };
            let g = &scene.objects[j];
            if !hidden[&(r.scene_id.clone(), g.id.clone())] {
                c.vis_err += (objs[i].dist - g.center[0].hypot(g.center[1])).abs();
                c.vis_n += 1.0;
            }
            let Some(cam) = scene.cameras.iter().find(|k| k.sensor_id == objs[i].sensor) else {
                c.iou_n += 1.0;
                continue;
            };
            let Some(gt_box) = project_box(g, cam).unwrap() else {
                continue;
            };
            let px = gt_box.to_pixels().map(|v| v as f64);
            if Bbox2D::new(px[0], px[1], px[2], px[3]).is_none() {
                continue;
            }
            c.iou_n += 1.0;
            c.iou_sum += box_iou(objs[i].bbox, px);
        }
    }
    c
}

fn close(a: Option<f64>, b: f64, what: &str) {
    let a = a.unwrap_or_else(|| panic!("{what}: scorer gave n/a"));
    assert!((a - b).abs() <= 1e-9, "{what}: scorer {a}, reference {b}");
}

#[test]
fn noisy_predictor_matches_reference() {
    let scenes = generate(&GenConfig {
        n_scenes: 60,
        seed: 17,
        ..GenConfig::default()
    })
    .unwrap();
    let labels: Vec<_> = scenes.iter().flat_map(|s| label_scene(s, 0.7).unwrap()).collect();
    let records = generate_dataset(&scenes, &labels, 1500, &QraConfig::default(), 17).unwrap();
    let preds = predictors::noisy(
        &records,
        &labels,
        &NoiseConfig {
            seed: 4,
            ..NoiseConfig::default()
        },
    );
    let report = score(&preds, &records, &scenes, &labels, &ScoreOptions::default(), None).unwrap();

    let text: HashMap<String, String> = preds
        .iter()
        .map(|p| (p.record_id.clone(), p.raw_text.clone()))
        .collect();
    let by_id: HashMap<String, Scene> = scenes.iter().map(|s| (s.scene_id.clone(), s.clone())).collect();
    let hidden: HashMap<(String, String), bool> = labels
        .iter()
        .map(|l| ((l.scene_id.clone(), l.object_id.clone()), l.occluded))
        .collect();

    let rows = std::iter::once((&report.aggregate, None, 10.0))
        .chain(report.tasks.iter().map(|t| (t, Some(t.scope.as_str()), 20.0)));
    for (row, task, thr) in rows {
        let c = reference(&text, &records, &by_id, &hidden, thr, task);
        let scope = &row.scope;
        assert_eq!(row.records as f64, c.records, "{scope}");
        close(row.decision_f1, c.f1(), &format!("{scope} F1"));
        close(row.occ_recall, c.hidden_found / c.hidden, &format!("{scope} Occ"));
        close(row.occ_at, c.hidden_close / c.hidden, &format!("{scope} Occ@{thr}"));
        close(row.miou, c.iou_sum / c.iou_n, &format!("{scope} mIoU"));
        close(
            row.parse_failure_rate,
            c.failures / c.records,
            &format!("{scope} parse failures"),
        );
        match row.vis_mae {
            Some(v) => close(Some(v), c.vis_err / c.vis_n, &format!("{scope} MAE")),
            None => assert_eq!(c.vis_n, 0.0, "{scope} MAE"),
        }
    }
    // the fixture must exercise the interesting paths
    let agg = &report.aggregate;
    assert!(agg.occ_recall.unwrap() < 1.0 && agg.occ_at.unwrap() < agg.occ_recall.unwrap());
    assert!(agg.vis_mae.unwrap() > 0.0);
}
