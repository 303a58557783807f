//! Template-based record generation from scene ground truth.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Decision, GroundedAnswer, GroundedObject, HazardLevel, QraError, QraRecord, TaskKind};
use crate::apportion::largest_remainder;
use crate::occlusion::{angular_profile, group_by_scene, overlap_measure, OcclusionLabel};
use crate::projection::project_box;
use crate::scene::{CardinalSector, ClassLabel, ObjectBox3D, Scene, SectorConvention};
use crate::scenegen::EGO_CAMERA_ID;

/// Range thresholds turning the nearest occluded object into a decision and
/// a hazard tier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecisionPolicy {
    pub stop_within_m: f64,
    pub yield_within_m: f64,
    pub high_within_m: f64,
    pub medium_within_m: f64,
}

impl Default for DecisionPolicy {
    fn default() -> Self {
        DecisionPolicy {
            stop_within_m: 15.0,
            yield_within_m: 30.0,
            high_within_m: 15.0,
            medium_within_m: 40.0,
        }
    }
}

impl DecisionPolicy {
    /// Decision and hazard for the range of the nearest occluded object.
    pub fn decide(&self, nearest_occluded: Option<f64>) -> (Decision, HazardLevel) {
        let Some(r) = nearest_occluded else {
            return (Decision::Proceed, HazardLevel::None);
        };
        let decision = if r <= self.stop_within_m {
            Decision::Stop
        } else if r <= self.yield_within_m {
            Decision::Yield
        } else {
            Decision::Monitor
        };
        let hazard = if r <= self.high_within_m {
            HazardLevel::High
        } else if r <= self.medium_within_m {
            HazardLevel::Medium
        } else {
            HazardLevel::Low
        };
        (decision, hazard)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QraConfig {
    /// Fractions of spatial, counting and maneuver records.
    pub mix: [f64; 3],
    pub policy: DecisionPolicy,
    pub sectors: SectorConvention,
    pub rationale: bool,
    /// Visible objects within this range are grounded in maneuver answers.
    pub maneuver_radius_m: f64,
}

impl Default for QraConfig {
    fn default() -> Self {
        QraConfig {
            mix: [0.3, 0.3, 0.4],
            policy: DecisionPolicy::default(),
            sectors: SectorConvention::NORTH,
            rationale: true,
            maneuver_radius_m: 30.0,
        }
    }
}

impl QraConfig {
    pub fn validate(&self) -> Result<(), QraError> {
        let sum: f64 = self.mix.iter().sum();
        if self.mix.iter().any(|f| !f.is_finite() || *f < 0.0) || (sum - 1.0).abs() > 1e-6 {
            return Err(QraError::InvalidMix(self.mix));
        }
        Ok(())
    }
}

/// Generates `n_records` records over `scenes`. Task counts follow the mix by
/// largest remainder; record `k` is drawn from scene `k mod |scenes|`.
pub fn generate_dataset(
    scenes: &[Scene],
    labels: &[OcclusionLabel],
    n_records: usize,
    cfg: &QraConfig,
    seed: u64,
) -> Result<Vec<QraRecord>, QraError> {
    cfg.validate()?;
    if scenes.is_empty() {
        return Err(QraError::NoScenes);
    }
    let by_scene = group_by_scene(labels);
    let empty = Vec::new();
    let facts = scenes
        .par_iter()
        .map(|s| SceneFacts::new(s, by_scene.get(&s.scene_id).unwrap_or(&empty), cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let tasks = task_schedule(n_records, cfg.mix, seed);
    Ok((0..n_records)
        .into_par_iter()
        .map(|k| {
            let f = &facts[k % facts.len()];
            let mut rng = record_rng(seed, k);
            build_record(f, tasks[k], format!("qra_{k:06}"), cfg, &mut rng)
        })
        .collect())
}

/// Generates `n` records for a single scene.
pub fn generate_records(
    scene: &Scene,
    labels: &[OcclusionLabel],
    n: usize,
    cfg: &QraConfig,
    seed: u64,
) -> Result<Vec<QraRecord>, QraError> {
    cfg.validate()?;
    let facts = SceneFacts::new(scene, labels, cfg)?;
    let tasks = task_schedule(n, cfg.mix, seed);
    Ok((0..n)
        .map(|k| {
            let mut rng = record_rng(seed, k);
            build_record(
                &facts,
                tasks[k],
                format!("{}_qra_{k:04}", scene.scene_id),
                cfg,
                &mut rng,
            )
        })
        .collect())
}

fn record_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64 + 1);
    rng
}

fn task_schedule(n: usize, mix: [f64; 3], seed: u64) -> Vec<TaskKind> {
    let counts = largest_remainder(n, &mix);
    let mut tasks: Vec<TaskKind> = TaskKind::ALL
        .into_iter()
        .zip(counts)
        .flat_map(|(t, c)| std::iter::repeat_n(t, c))
        .collect();
    tasks.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    tasks
}

/// One object as seen by the generator.
struct Fact<'a> {
    obj: &'a ObjectBox3D,
    range: f64,
    occluded: bool,
    sector: CardinalSector,
    /// Closest-overlap occluder among strictly nearer objects.
    occluder: Option<ClassLabel>,
    occluder_visible: bool,
    /// `None` when no camera sees the object.
    grounded: Option<GroundedObject>,
}

struct SceneFacts<'a> {
    scene: &'a Scene,
    /// Sorted near to far.
    objects: Vec<Fact<'a>>,
    decision: Decision,
    hazard: HazardLevel,
    nearest_occluded: Option<f64>,
}

impl<'a> SceneFacts<'a> {
    fn new(scene: &'a Scene, labels: &[OcclusionLabel], cfg: &QraConfig) -> Result<Self, QraError> {
        let by_id: HashMap<&str, &OcclusionLabel> = labels
            .iter()
            .filter(|l| l.scene_id == scene.scene_id)
            .map(|l| (l.object_id.as_str(), l))
            .collect();
        let profiles = scene
            .objects
            .iter()
            .map(angular_profile)
            .collect::<Result<Vec<_>, _>>()?;

        let mut objects = Vec::with_capacity(scene.objects.len());
        for (i, obj) in scene.objects.iter().enumerate() {
            let label = by_id.get(obj.id.as_str()).ok_or_else(|| QraError::MissingLabel {
                scene_id: scene.scene_id.clone(),
                object_id: obj.id.clone(),
            })?;
            let range = obj.range();
            let mut occluder: Option<(usize, f64)> = None;
            for (j, other) in scene.objects.iter().enumerate() {
                if other.range() < range {
                    let shared = overlap_measure(&profiles[i], &profiles[j]);
                    if shared > 0.0 && occluder.is_none_or(|(_, best)| shared > best) {
                        occluder = Some((j, shared));
                    }
                }
            }
            let occluder_visible = occluder
                .and_then(|(j, _)| by_id.get(scene.objects[j].id.as_str()))
                .is_some_and(|l| !l.occluded);
            objects.push(Fact {
                obj,
                range,
                occluded: label.occluded,
                sector: cfg
                    .sectors
                    .sector_of(obj)
                    .expect("objects containing the ego origin are rejected by angular_profile"),
                occluder: occluder.map(|(j, _)| scene.objects[j].class_label),
                occluder_visible,
                grounded: ground(obj, scene, label.occluded)?,
            });
        }
        objects.sort_by(|a, b| a.range.total_cmp(&b.range).then_with(|| a.obj.id.cmp(&b.obj.id)));
        let nearest_occluded = objects.iter().find(|f| f.occluded).map(|f| f.range);
        let (decision, hazard) = cfg.policy.decide(nearest_occluded);
        Ok(SceneFacts {
            scene,
            objects,
            decision,
            hazard,
            nearest_occluded,
        })
    }

    fn hidden(&self) -> impl Iterator<Item = &Fact<'a>> {
        self.objects.iter().filter(|f| f.occluded && f.grounded.is_some())
    }
}

/// Picks the camera with the largest rounded box. Occluded objects prefer
/// infrastructure cameras, visible ones the ego camera.
fn ground(obj: &ObjectBox3D, scene: &Scene, occluded: bool) -> Result<Option<GroundedObject>, QraError> {
    let mut best: Option<(bool, i64, &str, [i64; 4])> = None;
    for cam in &scene.cameras {
        let Some(b) = project_box(obj, cam)? else { continue };
        let px = b.to_pixels();
        let area = (px[2] - px[0]) * (px[3] - px[1]);
        if px[0] >= px[2] || px[1] >= px[3] {
            continue;
        }
        let is_ego = cam.sensor_id == EGO_CAMERA_ID;
        let preferred = is_ego != occluded;
        if best.is_none_or(|(p, a, _, _)| (preferred, area) > (p, a)) {
            best = Some((preferred, area, cam.sensor_id.as_str(), px));
        }
    }
    Ok(best.map(|(_, _, sensor, bbox)| GroundedObject {
        class: obj.class_label,
        bbox,
        distance_m: obj.range(),
        sensor_id: sensor.to_string(),
    }))
}

fn build_record(f: &SceneFacts, task: TaskKind, record_id: String, cfg: &QraConfig, rng: &mut ChaCha8Rng) -> QraRecord {
    let variant = rng.random_range(0..4u8);
    let task = if f.objects.is_empty() { TaskKind::Counting } else { task };
    let (question, rationale, answer_text, chosen) = match task {
        TaskKind::Spatial => spatial(f, variant, rng),
        TaskKind::Counting => counting(f, variant, rng),
        TaskKind::Maneuver => maneuver(f, variant, cfg.maneuver_radius_m),
    };
    let grounded_objects: Vec<GroundedObject> = chosen
        .iter()
        .map(|x| x.grounded.clone().expect("only grounded facts are chosen"))
        .collect();
    QraRecord {
        record_id,
        scene_id: f.scene.scene_id.clone(),
        task,
        variant,
        question,
        rationale: if cfg.rationale { rationale } else { String::new() },
        answer_text,
        grounded: GroundedAnswer {
            decision: f.decision,
            hazard_level: f.hazard,
            count: grounded_objects.len() as u64,
            grounded_objects,
        },
        object_ids: chosen.iter().map(|x| x.obj.id.clone()).collect(),
        split_tag: f.scene.split_tag,
    }
}

type Drafted<'f, 'a> = (String, String, String, Vec<&'f Fact<'a>>);

fn spatial<'f, 'a>(f: &'f SceneFacts<'a>, variant: u8, rng: &mut ChaCha8Rng) -> Drafted<'f, 'a> {
    let hidden: Vec<&Fact> = f.hidden().collect();
    let sector = if !hidden.is_empty() && rng.random_bool(0.7) {
        hidden[rng.random_range(0..hidden.len())].sector
    } else {
        CardinalSector::from_index(rng.random_range(0..8))
    };
    let dir = sector.phrase();
    let chosen: Vec<&Fact> = hidden.into_iter().filter(|x| x.sector == sector).collect();

    let question = match variant {
        0 => format!("Checking for hidden vehicles in the {dir} direction. Are there any?"),
        1 => format!("Is anything hidden from the ego view toward the {dir}?"),
        2 => format!("Are there occluded road users in the {dir} direction?"),
        _ => format!("Scan the {dir} sector: is any object concealed from the ego vehicle?"),
    };

    let Some(first) = chosen.first() else {
        let answer = match variant {
            0 => format!("No, nothing is hidden in the {dir} direction."),
            1 => format!("No. Everything toward the {dir} is in direct view."),
            2 => format!("There are no occluded road users in the {dir}."),
            _ => format!("Negative: no concealed objects in the {dir} sector."),
        };
        let in_view = f.objects.iter().filter(|x| x.sector == sector).count();
        let rationale = if in_view == 0 {
            format!("No objects were detected toward the {dir}.")
        } else {
            format!("Every object toward the {dir} is in direct view of the ego vehicle.")
        };
        return (question, rationale, answer, chosen);
    };

    let cls = first.obj.class_label.as_str();
    let occ = first.occluder.map_or("closer object", ClassLabel::as_str);
    let d = first.range;
    let mut answer = match variant {
        0 => format!("Yes, a {cls} is hidden by a {occ} in the {dir} direction at {d:.0} meters."),
        1 => format!("Yes. A {occ} blocks the view of a {cls} {d:.0} meters away to the {dir}."),
        2 => format!("There is a hidden {cls} at {d:.0} meters in the {dir}, occluded by a {occ}."),
        _ => format!("Affirmative: a {cls} sits {d:.0} meters out in the {dir} direction behind a {occ}."),
    };
    if chosen.len() > 1 {
        let more = count_word(chosen.len() - 1);
        answer.push_str(&format!(
            " {} more hidden {} lie further out.",
            capitalize(&more),
            noun(chosen.len() - 1)
        ));
    }
    let mut rationale = occluded_sentences(&chosen);
    rationale.push_str(&format!(" This {cls} could become a hazard if left unmonitored."));
    (question, rationale, answer, chosen)
}

fn counting<'f, 'a>(f: &'f SceneFacts<'a>, variant: u8, rng: &mut ChaCha8Rng) -> Drafted<'f, 'a> {
    let hidden: Vec<&Fact> = f.hidden().collect();
    let filter =
        (!hidden.is_empty() && rng.random_bool(0.3)).then(|| hidden[rng.random_range(0..hidden.len())].obj.class_label);
    let chosen: Vec<&Fact> = hidden
        .into_iter()
        .filter(|x| filter.is_none_or(|c| x.obj.class_label == c))
        .collect();
    let things = filter.map_or("objects".to_string(), plural);

    let question = match variant {
        0 => format!("How many {things} are hidden from the ego vehicle?"),
        1 => format!("Count the occluded {things} in the scene."),
        2 => format!("What number of {things} cannot be seen from the ego camera?"),
        _ => format!("How many {things} are concealed by closer traffic?"),
    };

    let Some(first) = chosen.first() else {
        let answer = match variant {
            0 => format!("None. No {things} are hidden."),
            1 => format!("Zero occluded {things}."),
            2 => format!("There are no hidden {things}."),
            _ => format!("No {things} are concealed."),
        };
        let rationale = if f.objects.is_empty() {
            "No objects were detected in the scene.".to_string()
        } else {
            "Every detected object is in direct view of the ego vehicle.".to_string()
        };
        return (question, rationale, answer, chosen);
    };

    let n = chosen.len();
    let count = capitalize(&count_word(n));
    let cls = first.obj.class_label.as_str();
    let d = first.range;
    let answer = match variant {
        0 => format!("{count} hidden {}; the nearest is a {cls} at {d:.0} meters.", noun(n)),
        1 => format!("{count} occluded {}, the closest a {cls} {d:.0} meters away.", noun(n)),
        2 => format!("{count} cannot be seen directly. The nearest, a {cls}, is at {d:.0} meters."),
        _ => format!("{count} concealed {}, starting with a {cls} at {d:.0} meters.", noun(n)),
    };
    (question, occluded_sentences(&chosen), answer, chosen)
}

fn maneuver<'f, 'a>(f: &'f SceneFacts<'a>, variant: u8, radius: f64) -> Drafted<'f, 'a> {
    let chosen: Vec<&Fact> = f
        .objects
        .iter()
        .filter(|x| x.grounded.is_some() && (x.occluded || x.range <= radius))
        .collect();
    let question = match variant {
        0 => "What should the ego vehicle do when entering the intersection?",
        1 => "Is it safe to proceed through the intersection?",
        2 => "Choose a driving action for the approach to the intersection.",
        _ => "How should the ego vehicle respond to the current traffic?",
    }
    .to_string();

    let action = capitalize(f.decision.as_str());
    let mut answer = match variant {
        0 => format!("{action}."),
        1 => format!("{action} is the safe choice."),
        2 => format!("Action: {}.", f.decision),
        _ => format!("The vehicle should {}.", f.decision),
    };
    match chosen.first() {
        Some(first) => {
            let state = if first.occluded { "hidden" } else { "visible" };
            answer.push_str(&format!(
                " The nearest relevant object is a {state} {} at {:.0} meters.",
                first.obj.class_label.as_str(),
                first.range
            ));
        }
        None => answer.push_str(" No relevant objects are nearby."),
    }

    let hidden: Vec<&Fact> = chosen.iter().copied().filter(|x| x.occluded).collect();
    let mut rationale = occluded_sentences(&hidden);
    for x in chosen.iter().filter(|x| !x.occluded) {
        push_sentence(
            &mut rationale,
            &format!("A {} is visible at {:.2} meters.", x.obj.class_label.as_str(), x.range),
        );
    }
    let closing = match f.nearest_occluded {
        Some(r) => format!(
            "The nearest hidden object is {r:.2} meters away, so the vehicle should {}.",
            f.decision
        ),
        None => "No hidden objects were found, so the vehicle can proceed.".to_string(),
    };
    push_sentence(&mut rationale, &closing);
    (question, rationale, answer, chosen)
}

fn occluded_sentences(facts: &[&Fact]) -> String {
    let mut out = String::new();
    for x in facts {
        let cls = x.obj.class_label.as_str();
        let [px, py, _] = x.obj.center;
        let s = match x.occluder {
            Some(occ) => {
                let seen = if x.occluder_visible { "is visible" } else { "is closer" };
                format!(
                    "A {} {seen}, but a {cls} at x: {px:.2}, y: {py:.2} is obscured by the {}, detected at {:.2} meters.",
                    occ.as_str(),
                    occ.as_str(),
                    x.range
                )
            }
            None => format!(
                "A {cls} at x: {px:.2}, y: {py:.2} is hidden, detected at {:.2} meters.",
                x.range
            ),
        };
        push_sentence(&mut out, &s);
    }
    out
}

fn push_sentence(out: &mut String, s: &str) {
    if !out.is_empty() {
        out.push(' ');
    }
    out.push_str(s);
}

fn plural(c: ClassLabel) -> String {
    match c {
        ClassLabel::Bus => "buses".to_string(),
        other => format!("{}s", other.as_str()),
    }
}

fn noun(n: usize) -> &'static str {
    if n == 1 {
        "object"
    } else {
        "objects"
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(first) => first.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// English words for counts, so answer prose carries no digits besides
/// distances.
fn count_word(n: usize) -> String {
    const ONES: [&str; 20] = [
        "zero",
        "one",
        "two",
        "three",
        "four",
        "five",
        "six",
        "seven",
        "eight",
        "nine",
        "ten",
        "eleven",
        "twelve",
        "thirteen",
        "fourteen",
        "fifteen",
        "sixteen",
        "seventeen",
        "eighteen",
        "nineteen",
    ];
    const TENS: [&str; 10] = [
        "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
    ];
    match n {
        0..=19 => ONES[n].to_string(),
        20..=99 if n.is_multiple_of(10) => TENS[n / 10].to_string(),
        20..=99 => format!("{}-{}", TENS[n / 10], ONES[n % 10]),
        _ => "many".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::occlusion::label_scene;
    use crate::scene::CameraModel;
    use crate::scenegen::{generate, GenConfig};

    fn fig2_scene() -> Scene {
        let van = ObjectBox3D::new("van", ClassLabel::Van, [14.0, -15.2, 1.1], [5.2, 2.0, 2.2], 0.0).unwrap();
        let car = ObjectBox3D::new("car", ClassLabel::Car, [25.036, -27.326, 0.75], [4.5, 1.8, 1.5], 0.0).unwrap();
        let cam = CameraModel::look_at(
            "s110_camera_basler_south1_8mm",
            1400.0,
            [1920, 1200],
            [30.0, -40.0, 7.0],
            [20.0, -20.0, 0.0],
        )
        .unwrap();
        Scene {
            scene_id: "fig2".into(),
            objects: vec![van, car],
            cameras: vec![cam],
            split_tag: None,
        }
    }

    #[test]
    fn count_words() {
        assert_eq!(count_word(0), "zero");
        assert_eq!(count_word(13), "thirteen");
        assert_eq!(count_word(40), "forty");
        assert_eq!(count_word(57), "fifty-seven");
    }

    #[test]
    fn policy_tiers() {
        let p = DecisionPolicy::default();
        assert_eq!(p.decide(None), (Decision::Proceed, HazardLevel::None));
        assert_eq!(p.decide(Some(37.06)), (Decision::Monitor, HazardLevel::Medium));
        assert_eq!(p.decide(Some(12.0)), (Decision::Stop, HazardLevel::High));
        assert_eq!(p.decide(Some(25.0)), (Decision::Yield, HazardLevel::Medium));
        assert_eq!(p.decide(Some(70.0)), (Decision::Monitor, HazardLevel::Low));
    }

    #[test]
    fn fig2_like_spatial_record() {
        let scene = fig2_scene();
        let labels = label_scene(&scene, 0.7).unwrap();
        assert!(labels.iter().any(|l| l.object_id == "car" && l.occluded));
        let cfg = QraConfig {
            mix: [1.0, 0.0, 0.0],
            sectors: SectorConvention::EAST,
            ..QraConfig::default()
        };
        let records = generate_records(&scene, &labels, 40, &cfg, 1).unwrap();
        let hit = records
            .iter()
            .find(|r| r.variant == 0 && r.grounded.count == 1)
            .expect("some variant-0 record queries the car's sector");
        assert_eq!(
            hit.question,
            "Checking for hidden vehicles in the southeast direction. Are there any?"
        );
        assert_eq!(
            hit.answer_text,
            "Yes, a car is hidden by a van in the southeast direction at 37 meters."
        );
        assert!(hit.rationale.starts_with(
            "A van is visible, but a car at x: 25.04, y: -27.33 is obscured by the van, detected at 37.06 meters."
        ));
        assert_eq!(hit.grounded.decision, Decision::Monitor);
        assert_eq!(hit.grounded.hazard_level, HazardLevel::Medium);
        let g = &hit.grounded.grounded_objects[0];
        assert_eq!(g.class, ClassLabel::Car);
        assert_eq!(g.sensor_id, "s110_camera_basler_south1_8mm");
        assert!((g.distance_m - 37.06).abs() < 0.01);
        assert_eq!(hit.object_ids, vec!["car".to_string()]);
    }

    #[test]
    fn no_occlusion_means_zero_counts() {
        let mut scene = fig2_scene();
        scene.objects.remove(0);
        let labels = label_scene(&scene, 0.7).unwrap();
        let cfg = QraConfig {
            mix: [0.0, 1.0, 0.0],
            ..QraConfig::default()
        };
        for r in generate_records(&scene, &labels, 12, &cfg, 0).unwrap() {
            assert_eq!(r.task, TaskKind::Counting);
            assert_eq!(r.grounded.count, 0);
            assert!(r.grounded.grounded_objects.is_empty());
            assert_eq!(r.grounded.decision, Decision::Proceed);
        }
    }

    #[test]
    fn empty_scene_yields_counting_only() {
        let mut scene = fig2_scene();
        scene.objects.clear();
        let records = generate_records(&scene, &[], 9, &QraConfig::default(), 0).unwrap();
        assert!(records
            .iter()
            .all(|r| r.task == TaskKind::Counting && r.grounded.count == 0));
        assert!(records.iter().all(|r| !r.rationale.is_empty()));
    }

    #[test]
    fn missing_label_is_an_error() {
        let scene = fig2_scene();
        let labels = label_scene(&scene, 0.7).unwrap();
        assert!(matches!(
            generate_records(&scene, &labels[..1], 3, &QraConfig::default(), 0),
            Err(QraError::MissingLabel { .. })
        ));
    }

    #[test]
    fn dataset_mix_and_determinism() {
        let scenes = generate(&GenConfig {
            n_scenes: 20,
            ..GenConfig::default()
        })
        .unwrap();
        let labels: Vec<_> = scenes.iter().flat_map(|s| label_scene(s, 0.7).unwrap()).collect();
        let cfg = QraConfig::default();
        let a = generate_dataset(&scenes, &labels, 1000, &cfg, 3).unwrap();
        let b = generate_dataset(&scenes, &labels, 1000, &cfg, 3).unwrap();
        assert_eq!(a, b);
        let count = |t| a.iter().filter(|r| r.task == t).count();
        assert_eq!(
            (
                count(TaskKind::Spatial),
                count(TaskKind::Counting),
                count(TaskKind::Maneuver)
            ),
            (300, 300, 400)
        );
        for r in &a {
            assert!(r.grounded.is_consistent());
            assert!(!r.rationale.is_empty());
            assert_eq!(r.object_ids.len(), r.grounded.grounded_objects.len());
            assert!(r
                .grounded
                .grounded_objects
                .iter()
                .all(GroundedObject::bbox_is_well_ordered));
        }
        assert!(a.iter().any(|r| r.grounded.count > 0));
        assert!(matches!(
            generate_dataset(
                &scenes,
                &labels,
                10,
                &QraConfig {
                    mix: [0.5, 0.5, 0.5],
                    ..cfg.clone()
                },
                0
            ),
            Err(QraError::InvalidMix(_))
        ));
        assert!(matches!(
            generate_dataset(&[], &labels, 10, &cfg, 0),
            Err(QraError::NoScenes)
        ));
    }

    #[test]
    fn rationale_can_be_switched_off() {
        let scene = fig2_scene();
        let labels = label_scene(&scene, 0.7).unwrap();
        let cfg = QraConfig {
            rationale: false,
            ..QraConfig::default()
        };
        assert!(generate_records(&scene, &labels, 10, &cfg, 0)
            .unwrap()
            .iter()
            .all(|r| r.rationale.is_empty()));
    }
}
