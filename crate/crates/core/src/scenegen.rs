//! Procedural four-way intersection scenes.
//!
//! The ego vehicle sits at the origin on the main road (running along x)
//! and faces an intersection whose center lies [`INTERSECTION_X`] meters
//! ahead. Vehicles are dropped into lanes, vulnerable road users onto the
//! sidewalks, and with probability `occluder_bias` a new object is instead
//! placed in the BEV shadow of an object already in the scene.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::apportion::largest_remainder;
use crate::occlusion::angular_profile;
use crate::scene::{normalize_angle, CameraModel, ClassLabel, ObjectBox3D, Scene, SceneError, SplitTag};

pub const INTERSECTION_X: f64 = 30.0;
pub const MAX_REJECTIONS: usize = 1000;
pub const FOCAL_PX: f64 = 1400.0;
pub const IMAGE_SIZE: [u32; 2] = [1920, 1200];
pub const EGO_CAMERA_ID: &str = "vehicle_camera_basler_16mm";
pub const INFRA_CAMERA_IDS: [&str; 4] = [
    "s110_camera_basler_south1_8mm",
    "s110_camera_basler_south2_8mm",
    "s110_camera_basler_north_8mm",
    "s110_camera_basler_east_8mm",
];

/// Ego footprint `(length, width)` centered on the origin.
const EGO_DIMS: [f64; 2] = [4.6, 1.9];
/// Clearance kept between any two footprints.
const CLEARANCE: f64 = 0.3;
const MIN_RANGE: f64 = 4.0;
/// Leaves room for shadow placements behind the farthest lane positions.
const MAX_RANGE: f64 = 110.0;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("scene too dense: {scene_id} could not place object {object} after {MAX_REJECTIONS} rejections")]
    TooDense { scene_id: String, object: usize },
    #[error("stratified split needs at least 3 scenes, got {0}")]
    TooFewScenes(usize),
    #[error("split fractions must be non-negative and sum to 1, got {0:?}")]
    InvalidFractions([f64; 3]),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub seed: u64,
    pub n_scenes: usize,
    /// Inclusive `[min, max]` object count.
    pub objects_per_scene: [usize; 2],
    pub occluder_bias: f64,
    pub class_mix: BTreeMap<ClassLabel, f64>,
    /// Infrastructure cameras (1–4); the ego camera is always added.
    pub camera_count: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        let class_mix = [
            (ClassLabel::Car, 0.45),
            (ClassLabel::Van, 0.12),
            (ClassLabel::Truck, 0.08),
            (ClassLabel::Bus, 0.05),
            (ClassLabel::Pedestrian, 0.15),
            (ClassLabel::Bicycle, 0.08),
            (ClassLabel::Motorcycle, 0.07),
        ]
        .into_iter()
        .collect();
        GenConfig {
            seed: 0,
            n_scenes: 100,
            objects_per_scene: [4, 10],
            occluder_bias: 0.3,
            class_mix,
            camera_count: 4,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: String| Err(GenError::InvalidConfig(m));
        let [lo, hi] = self.objects_per_scene;
        if lo > hi {
            return bad(format!("objects_per_scene range [{lo}, {hi}] is empty"));
        }
        if !(0.0..=1.0).contains(&self.occluder_bias) {
            return bad(format!("occluder_bias {} outside [0, 1]", self.occluder_bias));
        }
        if self.class_mix.values().any(|p| !p.is_finite() || *p < 0.0) {
            return bad("class_mix has a negative or non-finite weight".into());
        }
        let total: f64 = self.class_mix.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("class_mix sums to {total}, expected 1"));
        }
        if !(1..=4).contains(&self.camera_count) {
            return bad(format!("camera_count {} outside 1..=4", self.camera_count));
        }
        Ok(())
    }
}

/// Generates `config.n_scenes` scenes. Each scene draws from its own stream
/// of the seeded generator, so output is independent of thread count.
pub fn generate(config: &GenConfig) -> Result<Vec<Scene>, GenError> {
    config.validate()?;
    (0..config.n_scenes)
        .into_par_iter()
        .map(|i| generate_scene(config, i))
        .collect()
}

pub fn scene_id(index: usize) -> String {
    format!("scene_{index:05}")
}

pub fn generate_scene(config: &GenConfig, index: usize) -> Result<Scene, GenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let scene_id = scene_id(index);

    let classes: Vec<ClassLabel> = config.class_mix.keys().copied().collect();
    let weights: Vec<f64> = config.class_mix.values().copied().collect();
    let class_dist = WeightedIndex::new(&weights).map_err(|e| GenError::InvalidConfig(format!("class_mix: {e}")))?;

    let cameras = place_cameras(&mut rng, config.camera_count)?;

    let [lo, hi] = config.objects_per_scene;
    let n_objects = rng.random_range(lo..=hi);
    let ego = ego_footprint();
    let mut objects: Vec<ObjectBox3D> = Vec::with_capacity(n_objects);
    let mut inflated: Vec<[[f64; 2]; 4]> = Vec::with_capacity(n_objects);

    for k in 0..n_objects {
        let class = classes[class_dist.sample(&mut rng)];
        let dims = jittered_dims(&mut rng, class);
        let id = format!("obj_{k:02}");
        let shadow = !objects.is_empty() && rng.random_bool(config.occluder_bias);

        let mut placed = None;
        for attempt in 0..MAX_REJECTIONS {
            // a far occluder can leave no room behind it; fall back to a lane
            let (x, y, yaw) = if shadow && attempt < MAX_REJECTIONS / 2 {
                let j = rng.random_range(0..objects.len());
                shadow_pose(&mut rng, &objects[j], dims)
            } else {
                lane_pose(&mut rng, class)
            };
            let Ok(candidate) = ObjectBox3D::new(id.clone(), class, [x, y, dims[2] / 2.0], dims, yaw) else {
                continue;
            };
            let range = candidate.range();
            if !(MIN_RANGE..=MAX_RANGE).contains(&range) {
                continue;
            }
            let grown = inflate(&candidate);
            if footprints_overlap(&grown, &ego) || inflated.iter().any(|f| footprints_overlap(&grown, f)) {
                continue;
            }
            placed = Some((candidate, grown));
            break;
        }
        let Some((obj, grown)) = placed else {
            return Err(GenError::TooDense { scene_id, object: k });
        };
        objects.push(obj);
        inflated.push(grown);
    }

    let scene = Scene {
        scene_id,
        objects,
        cameras,
        split_tag: None,
    };
    scene.validate()?;
    Ok(scene)
}

fn jittered_dims(rng: &mut impl Rng, class: ClassLabel) -> [f64; 3] {
    class.nominal_dims().map(|d| d * rng.random_range(0.93..1.07))
}

/// A road-aligned pose for `class`: vehicles in lanes, pedestrians and
/// cyclists on the sidewalk strips.
fn lane_pose(rng: &mut impl Rng, class: ClassLabel) -> (f64, f64, f64) {
    let vulnerable = matches!(class, ClassLabel::Pedestrian | ClassLabel::Bicycle);
    let main_road = rng.random_bool(0.5);
    let offset = if vulnerable {
        let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        side * rng.random_range(8.5..11.0)
    } else {
        [-3.5, 0.0, 3.5, 7.0][rng.random_range(0..4)]
    };
    let jitter = rng.random_range(-0.05..0.05);
    if main_road {
        let x = rng.random_range(-25.0..80.0);
        let yaw = if offset > 0.0 { PI } else { 0.0 };
        (x, offset, normalize_angle(yaw + jitter))
    } else {
        let y = rng.random_range(-55.0..55.0);
        let yaw = if offset > 0.0 { -FRAC_PI_2 } else { FRAC_PI_2 };
        (INTERSECTION_X + offset, y, normalize_angle(yaw + jitter))
    }
}

/// A pose whose center lies behind `occluder`, inside its angular profile.
fn shadow_pose(rng: &mut impl Rng, occluder: &ObjectBox3D, dims: [f64; 3]) -> (f64, f64, f64) {
    let profile = angular_profile(occluder).expect("generated objects exclude the ego origin");
    let bearing = profile.lo + profile.measure() * rng.random_range(0.25..0.75);
    let far_corner = occluder
        .footprint_corners()
        .iter()
        .map(|p| p[0].hypot(p[1]))
        .fold(0.0, f64::max);
    let half_diag = dims[0].hypot(dims[1]) / 2.0;
    let range = far_corner + half_diag + CLEARANCE + rng.random_range(1.0..12.0);
    let yaw = [0.0, FRAC_PI_2, -PI, -FRAC_PI_2][rng.random_range(0..4)] + rng.random_range(-0.05..0.05);
    (range * bearing.cos(), range * bearing.sin(), normalize_angle(yaw))
}

fn place_cameras(rng: &mut impl Rng, count: usize) -> Result<Vec<CameraModel>, GenError> {
    const CORNERS: [[f64; 2]; 4] = [[-12.0, -12.0], [12.0, -12.0], [12.0, 12.0], [-12.0, 12.0]];
    let center = [INTERSECTION_X, 0.0, 0.0];
    let mut cams = Vec::with_capacity(count + 1);
    for (id, [dx, dy]) in INFRA_CAMERA_IDS.iter().zip(CORNERS).take(count) {
        let height = rng.random_range(5.0..8.0);
        cams.push(CameraModel::look_at(
            *id,
            FOCAL_PX,
            IMAGE_SIZE,
            [INTERSECTION_X + dx, dy, height],
            center,
        )?);
    }
    cams.push(CameraModel::look_at(
        EGO_CAMERA_ID,
        FOCAL_PX,
        IMAGE_SIZE,
        [1.5, 0.0, 1.6],
        [60.0, 0.0, 1.6],
    )?);
    Ok(cams)
}

fn ego_footprint() -> [[f64; 2]; 4] {
    let (hl, hw) = (EGO_DIMS[0] / 2.0 + CLEARANCE, EGO_DIMS[1] / 2.0 + CLEARANCE);
    [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]]
}

fn inflate(obj: &ObjectBox3D) -> [[f64; 2]; 4] {
    let mut grown = obj.clone();
    grown.dims[0] += CLEARANCE;
    grown.dims[1] += CLEARANCE;
    grown.footprint_corners()
}

/// Separating-axis test for two convex quadrilaterals. Touching edges do not
/// count as overlap.
pub fn footprints_overlap(a: &[[f64; 2]; 4], b: &[[f64; 2]; 4]) -> bool {
    for poly in [a, b] {
        for i in 0..4 {
            let p = poly[i];
            let q = poly[(i + 1) % 4];
            let axis = [-(q[1] - p[1]), q[0] - p[0]];
            let project = |pts: &[[f64; 2]; 4]| {
                pts.iter()
                    .map(|v| v[0] * axis[0] + v[1] * axis[1])
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)))
            };
            let (alo, ahi) = project(a);
            let (blo, bhi) = project(b);
            if ahi <= blo || bhi <= alo {
                return false;
            }
        }
    }
    true
}

/// Assigns a split tag to every scene at scene granularity. Per-split counts
/// come from largest-remainder apportionment; membership from a seeded
/// shuffle. Scenes are returned in input order.
pub fn stratified_split(mut scenes: Vec<Scene>, fractions: [f64; 3], seed: u64) -> Result<Vec<Scene>, GenError> {
    if scenes.len() < 3 {
        return Err(GenError::TooFewScenes(scenes.len()));
    }
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !f.is_finite() || *f < 0.0) || (sum - 1.0).abs() > 1e-6 {
        return Err(GenError::InvalidFractions(fractions));
    }
    let counts = largest_remainder(scenes.len(), &fractions);
    let mut order: Vec<usize> = (0..scenes.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut cursor = 0;
    for (tag, count) in SplitTag::ALL.into_iter().zip(counts) {
        for &idx in &order[cursor..cursor + count] {
            scenes[idx].split_tag = Some(tag);
        }
        cursor += count;
    }
    Ok(scenes)
}

/// `scene_id → split` sidecar written next to the scene file.
pub fn split_manifest(scenes: &[Scene]) -> BTreeMap<String, SplitTag> {
    scenes
        .iter()
        .filter_map(|s| s.split_tag.map(|t| (s.scene_id.clone(), t)))
        .collect()
}
