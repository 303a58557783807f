//! Scene model: oriented boxes, calibrated cameras and the scene container.
//!
//! The ego-local frame is x forward, y left, z up, with the ego origin at
//! `(0, 0, 0)`. All lengths are meters and all angles radians.

use std::collections::HashSet;
use std::f64::consts::{FRAC_PI_4, PI, TAU};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when checking that a rotation matrix is orthonormal.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("object {id:?}: {reason}")]
    InvalidObject { id: String, reason: String },
    #[error("camera {sensor_id:?}: {reason}")]
    InvalidCamera { sensor_id: String, reason: String },
    #[error("scene {scene_id:?}: {reason}")]
    InvalidScene { scene_id: String, reason: String },
    #[error("undefined bearing")]
    UndefinedBearing,
}

/// Wraps an angle into `[-π, π)`.
pub fn normalize_angle(angle: f64) -> f64 {
    let wrapped = (angle + PI).rem_euclid(TAU) - PI;
    // rem_euclid can round up to TAU for tiny negative inputs
    if wrapped >= PI {
        wrapped - TAU
    } else {
        wrapped
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Car,
    Van,
    Truck,
    Bus,
    Pedestrian,
    Bicycle,
    Motorcycle,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 7] = [
        ClassLabel::Car,
        ClassLabel::Van,
        ClassLabel::Truck,
        ClassLabel::Bus,
        ClassLabel::Pedestrian,
        ClassLabel::Bicycle,
        ClassLabel::Motorcycle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Car => "car",
            ClassLabel::Van => "van",
            ClassLabel::Truck => "truck",
            ClassLabel::Bus => "bus",
            ClassLabel::Pedestrian => "pedestrian",
            ClassLabel::Bicycle => "bicycle",
            ClassLabel::Motorcycle => "motorcycle",
        }
    }

    pub fn parse(s: &str) -> Option<ClassLabel> {
        ClassLabel::ALL.into_iter().find(|c| c.as_str() == s)
    }

    /// Nominal (length, width, height) in meters.
    pub fn nominal_dims(self) -> [f64; 3] {
        match self {
            ClassLabel::Car => [4.5, 1.8, 1.5],
            ClassLabel::Van => [5.2, 2.0, 2.2],
            ClassLabel::Truck => [8.0, 2.5, 3.2],
            ClassLabel::Bus => [12.0, 2.55, 3.2],
            ClassLabel::Pedestrian => [0.6, 0.6, 1.75],
            ClassLabel::Bicycle => [1.8, 0.6, 1.6],
            ClassLabel::Motorcycle => [2.1, 0.8, 1.5],
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Oriented 3D bounding box in the ego-local frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectBox3D {
    pub id: String,
    pub class_label: ClassLabel,
    /// Box center `(x, y, z)`.
    pub center: [f64; 3],
    /// `(length, width, height)`; length runs along the heading.
    pub dims: [f64; 3],
    /// Heading about +z, in `[-π, π)`.
    pub yaw: f64,
}

impl ObjectBox3D {
    pub fn new(
        id: impl Into<String>,
        class_label: ClassLabel,
        center: [f64; 3],
        dims: [f64; 3],
        yaw: f64,
    ) -> Result<Self, SceneError> {
        let obj = ObjectBox3D {
            id: id.into(),
            class_label,
            center,
            dims,
            yaw,
        };
        obj.validate()?;
        Ok(obj)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let fail = |reason: &str| SceneError::InvalidObject {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.id.is_empty() {
            return Err(fail("empty id"));
        }
        if self.center.iter().any(|v| !v.is_finite()) {
            return Err(fail("non-finite center"));
        }
        if self.dims.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(fail("dims must be finite and positive"));
        }
        if !(-PI..PI).contains(&self.yaw) {
            return Err(fail("yaw outside [-pi, pi)"));
        }
        Ok(())
    }

    /// Ground-plane range from the ego origin to the box center.
    pub fn range(&self) -> f64 {
        self.center[0].hypot(self.center[1])
    }

    /// The four ground-plane corners, counter-clockwise, starting front-left.
    pub fn footprint_corners(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.yaw.sin_cos();
        let hl = self.dims[0] / 2.0;
        let hw = self.dims[1] / 2.0;
        let local = [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]];
        local.map(|[lx, ly]| [self.center[0] + c * lx - s * ly, self.center[1] + s * lx + c * ly])
    }

    /// All eight box corners: the footprint at the bottom face, then the top face.
    pub fn corners_3d(&self) -> [[f64; 3]; 8] {
        let fp = self.footprint_corners();
        let z_lo = self.center[2] - self.dims[2] / 2.0;
        let z_hi = self.center[2] + self.dims[2] / 2.0;
        let mut out = [[0.0; 3]; 8];
        for (i, [x, y]) in fp.into_iter().enumerate() {
            out[i] = [x, y, z_lo];
            out[i + 4] = [x, y, z_hi];
        }
        out
    }
}

/// Ground-plane range from the ego origin to the box center.
pub fn range_to(obj: &ObjectBox3D) -> f64 {
    obj.range()
}

pub fn footprint_corners(obj: &ObjectBox3D) -> [[f64; 2]; 4] {
    obj.footprint_corners()
}

/// Rigid transform from the ego frame into the camera frame:
/// `p_cam = rotation * p_ego + translation`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extrinsics {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

/// Pinhole camera. The camera frame follows the usual optical convention
/// (z along the optical axis, x right, y down).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub sensor_id: String,
    pub intrinsics: [[f64; 3]; 3],
    pub extrinsics: Extrinsics,
    /// `(width_px, height_px)`.
    pub image_size: [u32; 2],
}

impl CameraModel {
    pub fn fx(&self) -> f64 {
        self.intrinsics[0][0]
    }
    pub fn fy(&self) -> f64 {
        self.intrinsics[1][1]
    }
    pub fn cx(&self) -> f64 {
        self.intrinsics[0][2]
    }
    pub fn cy(&self) -> f64 {
        self.intrinsics[1][2]
    }
    pub fn width(&self) -> f64 {
        self.image_size[0] as f64
    }
    pub fn height(&self) -> f64 {
        self.image_size[1] as f64
    }

    /// Builds a camera at `position` (ego frame) looking at `target`, with
    /// world +z as the up hint.
    pub fn look_at(
        sensor_id: impl Into<String>,
        focal_px: f64,
        image_size: [u32; 2],
        position: [f64; 3],
        target: [f64; 3],
    ) -> Result<Self, SceneError> {
        let sensor_id = sensor_id.into();
        let fwd = normalized(sub(target, position));
        let right = normalized(cross(fwd, [0.0, 0.0, 1.0]));
        if fwd.iter().chain(right.iter()).any(|v| !v.is_finite()) {
            return Err(SceneError::InvalidCamera {
                sensor_id,
                reason: "degenerate viewing direction".into(),
            });
        }
        let down = cross(fwd, right);
        let rotation = [right, down, fwd];
        let translation = [-dot(right, position), -dot(down, position), -dot(fwd, position)];
        let cam = CameraModel {
            sensor_id,
            intrinsics: [
                [focal_px, 0.0, image_size[0] as f64 / 2.0],
                [0.0, focal_px, image_size[1] as f64 / 2.0],
                [0.0, 0.0, 1.0],
            ],
            extrinsics: Extrinsics { rotation, translation },
            image_size,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        self.validate_intrinsics()?;
        self.validate_extrinsics()
    }

    pub fn validate_intrinsics(&self) -> Result<(), SceneError> {
        let fail = |reason: String| SceneError::InvalidCamera {
            sensor_id: self.sensor_id.clone(),
            reason,
        };
        let k = &self.intrinsics;
        if k.iter().flatten().any(|v| !v.is_finite()) {
            return Err(fail("non-finite intrinsics".into()));
        }
        if self.fx() <= 0.0 || self.fy() <= 0.0 {
            return Err(fail("focal lengths must be positive".into()));
        }
        if k[0][1] != 0.0 || k[1][0] != 0.0 || k[2] != [0.0, 0.0, 1.0] {
            return Err(fail("intrinsics must be zero-skew pinhole".into()));
        }
        let (w, h) = (self.width(), self.height());
        if !(self.cx() > 0.0 && self.cx() < w) || !(self.cy() > 0.0 && self.cy() < h) {
            return Err(fail(format!(
                "principal point ({}, {}) outside image {}x{}",
                self.cx(),
                self.cy(),
                w,
                h
            )));
        }
        Ok(())
    }

    pub fn validate_extrinsics(&self) -> Result<(), SceneError> {
        let fail = |reason: String| SceneError::InvalidCamera {
            sensor_id: self.sensor_id.clone(),
            reason,
        };
        let r = &self.extrinsics.rotation;
        if r.iter()
            .flatten()
            .chain(self.extrinsics.translation.iter())
            .any(|v| !v.is_finite())
        {
            return Err(fail("non-finite extrinsics".into()));
        }
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                if (dot(r[i], r[j]) - expect).abs() > ROTATION_TOLERANCE {
                    return Err(fail("rotation is not orthonormal".into()));
                }
            }
        }
        let det = dot(r[0], cross(r[1], r[2]));
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(fail(format!("rotation determinant {det} != +1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

impl SplitTag {
    pub const ALL: [SplitTag; 3] = [SplitTag::Train, SplitTag::Val, SplitTag::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
        }
    }
}

/// One benchmark frame. The ego origin is implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub scene_id: String,
    pub objects: Vec<ObjectBox3D>,
    pub cameras: Vec<CameraModel>,
    /// Assigned per scene by the stratified split; `None` before splitting.
    pub split_tag: Option<SplitTag>,
}

impl Scene {
    pub fn validate(&self) -> Result<(), SceneError> {
        let fail = |reason: String| SceneError::InvalidScene {
            scene_id: self.scene_id.clone(),
            reason,
        };
        if self.cameras.is_empty() {
            return Err(fail("scene has no cameras".into()));
        }
        let mut ids = HashSet::new();
        for obj in &self.objects {
            obj.validate()?;
            if !ids.insert(obj.id.as_str()) {
                return Err(fail(format!("duplicate object id {:?}", obj.id)));
            }
        }
        let mut sensors = HashSet::new();
        for cam in &self.cameras {
            cam.validate()?;
            if !sensors.insert(cam.sensor_id.as_str()) {
                return Err(fail(format!("duplicate sensor id {:?}", cam.sensor_id)));
            }
        }
        Ok(())
    }

    pub fn object(&self, id: &str) -> Option<&ObjectBox3D> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn camera(&self, sensor_id: &str) -> Option<&CameraModel> {
        self.cameras.iter().find(|c| c.sensor_id == sensor_id)
    }
}

/// Eight 45° compass sectors centered on the cardinal and intercardinal
/// directions, listed clockwise from north.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CardinalSector {
    N,
    NE,
    E,
    SE,
    S,
    SW,
    W,
    NW,
}

impl CardinalSector {
    pub const ALL: [CardinalSector; 8] = [
        CardinalSector::N,
        CardinalSector::NE,
        CardinalSector::E,
        CardinalSector::SE,
        CardinalSector::S,
        CardinalSector::SW,
        CardinalSector::W,
        CardinalSector::NW,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> CardinalSector {
        CardinalSector::ALL[i % 8]
    }

    /// Lower-case direction word, e.g. "southeast".
    pub fn phrase(self) -> &'static str {
        match self {
            CardinalSector::N => "north",
            CardinalSector::NE => "northeast",
            CardinalSector::E => "east",
            CardinalSector::SE => "southeast",
            CardinalSector::S => "south",
            CardinalSector::SW => "southwest",
            CardinalSector::W => "west",
            CardinalSector::NW => "northwest",
        }
    }

    /// Clockwise distance in sector steps from `self` to `other`.
    pub fn steps_to(self, other: CardinalSector) -> usize {
        (other.index() + 8 - self.index()) % 8
    }
}

/// Maps ego-frame bearings onto compass words.
///
/// `heading` is the compass bearing of the ego +x axis (0 = north,
/// π/2 = east). The default assumes the ego faces north, so +y points west.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SectorConvention {
    pub heading: f64,
}

impl SectorConvention {
    pub const NORTH: SectorConvention = SectorConvention { heading: 0.0 };
    pub const EAST: SectorConvention = SectorConvention {
        heading: std::f64::consts::FRAC_PI_2,
    };

    /// Compass bearing (clockwise from north) of an ego-frame point, in `[0, 2π)`.
    pub fn compass_bearing(&self, x: f64, y: f64) -> Result<f64, SceneError> {
        if x == 0.0 && y == 0.0 {
            return Err(SceneError::UndefinedBearing);
        }
        // y is left, so clockwise-from-forward is atan2(-y, x)
        Ok((self.heading + (-y).atan2(x)).rem_euclid(TAU))
    }

    pub fn sector_of_point(&self, x: f64, y: f64) -> Result<CardinalSector, SceneError> {
        let bearing = self.compass_bearing(x, y)?;
        // boundaries fall into the clockwise-next sector via floor
        let idx = ((bearing + FRAC_PI_4 / 2.0) / FRAC_PI_4).floor() as usize;
        Ok(CardinalSector::from_index(idx))
    }

    pub fn sector_of(&self, obj: &ObjectBox3D) -> Result<CardinalSector, SceneError> {
        self.sector_of_point(obj.center[0], obj.center[1])
    }
}

/// Sector of an object under the default north-facing convention.
pub fn sector_of(obj: &ObjectBox3D) -> Result<CardinalSector, SceneError> {
    SectorConvention::NORTH.sector_of(obj)
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalized(a: [f64; 3]) -> [f64; 3] {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn boxed(x: f64, y: f64, dims: [f64; 3], yaw: f64) -> ObjectBox3D {
        ObjectBox3D::new("o", ClassLabel::Car, [x, y, 0.75], dims, yaw).unwrap()
    }

    fn polygon_area(pts: &[[f64; 2]]) -> f64 {
        let mut acc = 0.0;
        for i in 0..pts.len() {
            let [x0, y0] = pts[i];
            let [x1, y1] = pts[(i + 1) % pts.len()];
            acc += x0 * y1 - x1 * y0;
        }
        acc / 2.0
    }

    #[test]
    fn range_examples() {
        let fig = boxed(25.04, -27.33, [4.5, 1.8, 1.5], 0.0);
        assert!((range_to(&fig) - 37.06).abs() < 0.01);
        assert_eq!(range_to(&boxed(0.0, 0.0, [1.0, 1.0, 1.0], 0.0)), 0.0);
        assert!((range_to(&boxed(3.0, 4.0, [1.0, 1.0, 1.0], 0.0)) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn sector_on_axis_and_origin() {
        assert_eq!(sector_of(&boxed(10.0, 0.0, [1.0; 3], 0.0)).unwrap(), CardinalSector::N);
        assert_eq!(
            sector_of(&boxed(0.0, 0.0, [1.0; 3], 0.0)),
            Err(SceneError::UndefinedBearing)
        );
        // +y is west when facing north
        assert_eq!(
            SectorConvention::NORTH.sector_of_point(0.0, 5.0).unwrap(),
            CardinalSector::W
        );
    }

    #[test]
    fn sample_triplet_is_southeast_in_map_frame() {
        // the sample's coordinates are map-relative with +x east, +y north
        let s = SectorConvention::EAST.sector_of_point(25.04, -27.33).unwrap();
        assert_eq!(s, CardinalSector::SE);
        assert_eq!(s.phrase(), "southeast");
    }

    #[test]
    fn boundary_ties_go_clockwise() {
        // bearing exactly 22.5 degrees from north
        let a = std::f64::consts::PI / 8.0;
        let conv = SectorConvention { heading: a };
        assert_eq!(conv.sector_of_point(1.0, 0.0).unwrap(), CardinalSector::NE);
    }

    #[test]
    fn sector_matches_binning_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let x: f64 = rng.random_range(-100.0..100.0);
            let y: f64 = rng.random_range(-100.0..100.0);
            // oracle: degrees clockwise from north, compared against explicit bins
            let mut deg = (-y).atan2(x).to_degrees();
            if deg < 0.0 {
                deg += 360.0;
            }
            let bins = [
                (337.5, 360.0, CardinalSector::N),
                (0.0, 22.5, CardinalSector::N),
                (22.5, 67.5, CardinalSector::NE),
                (67.5, 112.5, CardinalSector::E),
                (112.5, 157.5, CardinalSector::SE),
                (157.5, 202.5, CardinalSector::S),
                (202.5, 247.5, CardinalSector::SW),
                (247.5, 292.5, CardinalSector::W),
                (292.5, 337.5, CardinalSector::NW),
            ];
            let expect = bins.iter().find(|(lo, hi, _)| deg >= *lo && deg < *hi).unwrap().2;
            assert_eq!(SectorConvention::NORTH.sector_of_point(x, y).unwrap(), expect);
        }
    }

    #[test]
    fn footprint_axis_aligned() {
        let b = boxed(10.0, 0.0, [4.0, 2.0, 1.0], 0.0);
        let c = b.footprint_corners();
        let expect = [[12.0, 1.0], [8.0, 1.0], [8.0, -1.0], [12.0, -1.0]];
        for e in expect {
            assert!(c
                .iter()
                .any(|p| (p[0] - e[0]).abs() < 1e-12 && (p[1] - e[1]).abs() < 1e-12));
        }
        assert!(polygon_area(&c) > 0.0, "corners must be counter-clockwise");
    }

    #[test]
    fn footprint_quarter_turn_swaps_extents() {
        let b = boxed(0.0, 10.0, [4.0, 2.0, 1.0], std::f64::consts::FRAC_PI_2);
        let c = b.footprint_corners();
        let xs: Vec<f64> = c.iter().map(|p| p[0]).collect();
        let ys: Vec<f64> = c.iter().map(|p| p[1]).collect();
        let span = |v: &[f64]| v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
        assert!((span(&xs) - 2.0).abs() < 1e-12);
        assert!((span(&ys) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_boxes() {
        assert!(ObjectBox3D::new("a", ClassLabel::Car, [1.0, 0.0, 0.0], [0.0, 1.0, 1.0], 0.0).is_err());
        assert!(ObjectBox3D::new("a", ClassLabel::Car, [1.0, 0.0, 0.0], [1.0, 1.0, 1.0], PI).is_err());
        assert!(ObjectBox3D::new("a", ClassLabel::Car, [1.0, 0.0, 0.0], [1.0, 1.0, 1.0], -PI).is_ok());
    }

    #[test]
    fn normalize_angle_range() {
        assert_eq!(normalize_angle(PI), -PI);
        assert!((normalize_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!(normalize_angle(-1e-18) < PI);
    }

    #[test]
    fn look_at_camera_is_valid() {
        let cam = CameraModel::look_at("c", 1400.0, [1920, 1200], [10.0, 10.0, 6.0], [25.0, 0.0, 0.0]).unwrap();
        cam.validate().unwrap();
        let mut bad = cam.clone();
        bad.extrinsics.rotation[0][0] *= 1.01;
        assert!(bad.validate_extrinsics().is_err());
        let mut mirrored = cam;
        mirrored.extrinsics.rotation[0] = mirrored.extrinsics.rotation[0].map(|v| -v);
        assert!(mirrored.validate_extrinsics().is_err());
    }

    #[test]
    fn scene_rejects_duplicates_and_no_cameras() {
        let cam = CameraModel::look_at("c", 1400.0, [1920, 1200], [0.0, 0.0, 1.5], [10.0, 0.0, 1.5]).unwrap();
        let o = boxed(10.0, 0.0, [4.0, 2.0, 1.0], 0.0);
        let mut scene = Scene {
            scene_id: "s".into(),
            objects: vec![o.clone(), o],
            cameras: vec![cam],
            split_tag: None,
        };
        assert!(scene.validate().is_err());
        scene.objects.pop();
        assert!(scene.validate().is_ok());
        scene.cameras.clear();
        assert!(scene.validate().is_err());
    }

    proptest! {
        #[test]
        fn range_is_rotation_invariant(x in -80.0f64..80.0, y in -80.0f64..80.0, rot in -PI..PI) {
            let (s, c) = rot.sin_cos();
            let a = boxed(x, y, [1.0; 3], 0.0);
            let b = boxed(c * x - s * y, s * x + c * y, [1.0; 3], 0.0);
            prop_assert!((range_to(&a) - range_to(&b)).abs() < 1e-9);
        }

        #[test]
        fn rotating_45_degrees_moves_one_sector(x in -80.0f64..80.0, y in -80.0f64..80.0) {
            prop_assume!(x.hypot(y) > 1e-3);
            let (s, c) = FRAC_PI_4.sin_cos();
            let a = SectorConvention::NORTH.sector_of_point(x, y).unwrap();
            let b = SectorConvention::NORTH.sector_of_point(c * x - s * y, s * x + c * y).unwrap();
            // counter-clockwise rotation in the ego frame is one step anticlockwise on the compass
            prop_assert_eq!(b.steps_to(a), 1);
        }

        #[test]
        fn footprint_area_and_centroid(
            x in -60.0f64..60.0, y in -60.0f64..60.0,
            l in 0.3f64..15.0, w in 0.3f64..4.0, yaw in -PI..PI,
        ) {
            let b = boxed(x, y, [l, w, 1.5], yaw);
            let c = b.footprint_corners();
            prop_assert!((polygon_area(&c) - l * w).abs() < 1e-9);
            let cx = c.iter().map(|p| p[0]).sum::<f64>() / 4.0;
            let cy = c.iter().map(|p| p[1]).sum::<f64>() / 4.0;
            prop_assert!((cx - x).abs() < 1e-9 && (cy - y).abs() < 1e-9);
        }
    }
}
