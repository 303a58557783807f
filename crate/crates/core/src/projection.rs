//! 3D → 2D grounding: projecting oriented boxes into pinhole cameras.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{CameraModel, ObjectBox3D, SceneError};

/// Depth of the near clipping plane in meters.
pub const NEAR_PLANE: f64 = 0.1;

/// Box edges as index pairs into [`ObjectBox3D::corners_3d`].
const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (3, 0),
    (4, 5),
    (5, 6),
    (6, 7),
    (7, 4),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectionError {
    #[error("camera configuration: {0}")]
    Config(#[from] SceneError),
}

/// Axis-aligned image box in pixels, origin top-left. Coordinates stay real
/// valued; rounding happens only when serializing to a grounded answer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bbox2D {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Bbox2D {
    /// `None` unless the box has positive width and height.
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Option<Self> {
        let ok = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) && x_min < x_max && y_min < y_max;
        ok.then_some(Bbox2D {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn from_pixels(px: [i64; 4]) -> Option<Self> {
        Bbox2D::new(px[0] as f64, px[1] as f64, px[2] as f64, px[3] as f64)
    }

    /// Rounds each coordinate to the nearest pixel.
    pub fn to_pixels(&self) -> [i64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max].map(|v| v.round() as i64)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains_point(&self, u: f64, v: f64) -> bool {
        u >= self.x_min && u <= self.x_max && v >= self.y_min && v <= self.y_max
    }

    /// Intersection with the image rectangle `[0, w] × [0, h]`.
    pub fn clip(&self, width: f64, height: f64) -> Option<Bbox2D> {
        Bbox2D::new(
            self.x_min.max(0.0),
            self.y_min.max(0.0),
            self.x_max.min(width),
            self.y_max.min(height),
        )
    }
}

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &Bbox2D, b: &Bbox2D) -> f64 {
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

struct Pinhole {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
}

impl Pinhole {
    fn new(cam: &CameraModel) -> Result<Self, ProjectionError> {
        cam.validate()?;
        let r = &cam.extrinsics.rotation;
        Ok(Pinhole {
            rotation: Matrix3::new(
                r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
            ),
            translation: Vector3::from(cam.extrinsics.translation),
            fx: cam.fx(),
            fy: cam.fy(),
            cx: cam.cx(),
            cy: cam.cy(),
        })
    }

    fn to_camera(&self, p: [f64; 3]) -> Vector3<f64> {
        self.rotation * Vector3::from(p) + self.translation
    }

    fn pixel(&self, p: &Vector3<f64>) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }
}

/// Projects a single ego-frame point; `None` when it is not in front of the
/// near plane.
pub fn project_point(p: [f64; 3], cam: &CameraModel) -> Result<Option<(f64, f64)>, ProjectionError> {
    let ph = Pinhole::new(cam)?;
    let pc = ph.to_camera(p);
    Ok((pc.z >= NEAR_PLANE).then(|| ph.pixel(&pc)))
}

/// Axis-aligned hull of the projected box after near-plane clipping but
/// before clipping to the image. Coordinates may lie outside the image.
pub fn project_hull(obj: &ObjectBox3D, cam: &CameraModel) -> Result<Option<Bbox2D>, ProjectionError> {
    let ph = Pinhole::new(cam)?;
    let pts: Vec<Vector3<f64>> = obj.corners_3d().iter().map(|&p| ph.to_camera(p)).collect();
    if pts.iter().all(|p| p.z <= 0.0) {
        return Ok(None);
    }

    let mut visible: Vec<Vector3<f64>> = Vec::with_capacity(24);
    for (a, b) in EDGES {
        let (pa, pb) = (pts[a], pts[b]);
        let (ina, inb) = (pa.z >= NEAR_PLANE, pb.z >= NEAR_PLANE);
        if ina {
            visible.push(pa);
        }
        if inb {
            visible.push(pb);
        }
        if ina != inb {
            let t = (NEAR_PLANE - pa.z) / (pb.z - pa.z);
            let mut hit = pa + (pb - pa) * t;
            hit.z = NEAR_PLANE;
            visible.push(hit);
        }
    }
    if visible.is_empty() {
        return Ok(None);
    }

    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in &visible {
        let (u, v) = ph.pixel(p);
        x0 = x0.min(u);
        y0 = y0.min(v);
        x1 = x1.max(u);
        y1 = y1.max(v);
    }
    Ok(Bbox2D::new(x0, y0, x1, y1))
}

/// Loose 2D box of `obj` in `cam`, clipped to the image; `None` when the box
/// is behind the camera or leaves no area inside the image.
pub fn project_box(obj: &ObjectBox3D, cam: &CameraModel) -> Result<Option<Bbox2D>, ProjectionError> {
    Ok(project_hull(obj, cam)?.and_then(|hull| hull.clip(cam.width(), cam.height())))
}
