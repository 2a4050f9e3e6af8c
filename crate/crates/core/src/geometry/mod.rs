//! Pinhole camera model, projection, residuals and viewing-geometry diagnostics.
//!
//! Poses store the world-to-camera rotation together with the camera *center*
//! in world coordinates, so a world point `X` maps into the camera frame as
//! `R * (X - C)`. The equivalent translation vector would be `t = -R * C`; it is
//! never stored.

mod triangulate;

pub use triangulate::{triangulate, triangulation_angle};

use std::collections::HashMap;

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Depths at or below this value violate cheirality.
pub const MIN_DEPTH: f64 = 1e-12;

/// Triangulation angles below this many degrees are flagged as ill-posed.
pub const ILL_POSED_ANGLE_DEG: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("point is behind or on the image plane (camera depth {depth:e})")]
    CheiralityViolation { depth: f64 },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("final state requested before bundle adjustment has run")]
    MissingFinalState,
    #[error("observation references unknown camera `{0}`")]
    UnknownCamera(String),
}

pub type Result<T, E = GeometryError> = std::result::Result<T, E>;

/// Pinhole intrinsics with per-axis focal lengths and zero skew.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn is_valid(&self) -> bool {
        self.fx > 0.0
            && self.fy > 0.0
            && self.cx.is_finite()
            && self.cy.is_finite()
            && self.width >= 1
            && self.height >= 1
    }

    /// Projects a point already expressed in the camera frame.
    #[inline]
    pub fn project_camera_point(&self, p: &Vector3<f64>) -> Result<Vector2<f64>> {
        if p.z <= MIN_DEPTH {
            return Err(GeometryError::CheiralityViolation { depth: p.z });
        }
        Ok(Vector2::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        ))
    }

    /// Normalized image coordinates `((u - cx) / fx, (v - cy) / fy)`.
    #[inline]
    pub fn normalize(&self, pixel: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new((pixel.x - self.cx) / self.fx, (pixel.y - self.cy) / self.fy)
    }

    pub fn contains(&self, pixel: &Vector2<f64>) -> bool {
        pixel.x >= 0.0
            && pixel.y >= 0.0
            && pixel.x < f64::from(self.width)
            && pixel.y < f64::from(self.height)
    }
}

/// Camera orientation and position.
///
/// `rotation` is world-to-camera; `center` is the optical center in world
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    #[serde(with = "quaternion_wxyz")]
    pub rotation: UnitQuaternion<f64>,
    pub center: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: UnitQuaternion<f64>, center: Vector3<f64>) -> Self {
        Self { rotation, center }
    }

    pub fn identity() -> Self {
        Self::new(UnitQuaternion::identity(), Vector3::zeros())
    }

    /// World point to camera frame.
    #[inline]
    pub fn to_camera(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * (point - self.center)
    }

    /// Direction of the optical axis in world coordinates.
    pub fn optical_axis(&self) -> Vector3<f64> {
        self.rotation.inverse() * Vector3::z()
    }
}

/// Serializes quaternions as `{qw, qx, qy, qz}` rather than nalgebra's
/// storage-order array, matching the XML attribute names.
mod quaternion_wxyz {
    use nalgebra::{Quaternion, UnitQuaternion};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Wxyz {
        qw: f64,
        qx: f64,
        qy: f64,
        qz: f64,
    }

    pub fn serialize<S: Serializer>(q: &UnitQuaternion<f64>, s: S) -> Result<S::Ok, S::Error> {
        Wxyz {
            qw: q.w,
            qx: q.i,
            qy: q.j,
            qz: q.k,
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<UnitQuaternion<f64>, D::Error> {
        let q = Wxyz::deserialize(d)?;
        let raw = Quaternion::new(q.qw, q.qx, q.qy, q.qz);
        let norm = raw.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-6 {
            return Err(serde::de::Error::custom(format!(
                "quaternion norm {norm} is not unit"
            )));
        }
        Ok(UnitQuaternion::new_unchecked(raw))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub id: String,
    pub image_ref: String,
    pub intrinsics: Intrinsics,
    pub pose_initial: Pose,
    pub pose_final: Option<Pose>,
}

impl Camera {
    pub fn pose(&self, kind: ResidualKind) -> Result<&Pose> {
        match kind {
            ResidualKind::Initial => Ok(&self.pose_initial),
            ResidualKind::Final => self
                .pose_final
                .as_ref()
                .ok_or(GeometryError::MissingFinalState),
        }
    }
}

/// A tiepoint: where one track was measured in one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub camera_id: String,
    pub pixel: Vector2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: String,
    pub observations: Vec<Observation>,
    pub point_initial: Vector3<f64>,
    pub point_final: Option<Vector3<f64>>,
}

impl Track {
    pub fn point(&self, kind: ResidualKind) -> Result<&Vector3<f64>> {
        match kind {
            ResidualKind::Initial => Ok(&self.point_initial),
            ResidualKind::Final => self
                .point_final
                .as_ref()
                .ok_or(GeometryError::MissingFinalState),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualKind {
    Initial,
    Final,
}

impl ResidualKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ResidualKind::Initial => "initial",
            ResidualKind::Final => "final",
        }
    }
}

impl std::str::FromStr for ResidualKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "initial" => Ok(ResidualKind::Initial),
            "final" => Ok(ResidualKind::Final),
            other => Err(format!(
                "unknown kind `{other}` (expected initial or final)"
            )),
        }
    }
}

/// Reprojection error of one track in one image, pointing from the tiepoint
/// to the reprojected point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRecord {
    pub camera_id: String,
    pub track_id: String,
    pub vector: Vector2<f64>,
    pub length: f64,
    /// Degrees in `[0, 360)`, counter-clockwise from the image +u axis.
    pub angle: f64,
    pub kind: ResidualKind,
}

impl ResidualRecord {
    pub fn from_vector(
        camera_id: impl Into<String>,
        track_id: impl Into<String>,
        vector: Vector2<f64>,
        kind: ResidualKind,
    ) -> Self {
        Self {
            camera_id: camera_id.into(),
            track_id: track_id.into(),
            length: vector.norm(),
            angle: angle_degrees(&vector),
            vector,
            kind,
        }
    }
}

/// `atan2` of a 2-vector mapped into `[0, 360)` degrees. The zero vector maps to 0.
pub fn angle_degrees(v: &Vector2<f64>) -> f64 {
    let mut a = v.y.atan2(v.x).to_degrees();
    if a < 0.0 {
        a += 360.0;
    }
    // -0.0 and the rounding edge just below zero
    if a >= 360.0 || a == 0.0 {
        a = 0.0;
    }
    a
}

pub fn project(camera: &Camera, pose: &Pose, point: &Vector3<f64>) -> Result<Vector2<f64>> {
    camera
        .intrinsics
        .project_camera_point(&pose.to_camera(point))
}

pub fn residual(
    camera: &Camera,
    pose: &Pose,
    point: &Vector3<f64>,
    obs: &Observation,
    track_id: &str,
    kind: ResidualKind,
) -> Result<ResidualRecord> {
    debug_assert_eq!(obs.camera_id, camera.id);
    let projected = project(camera, pose, point)?;
    Ok(ResidualRecord::from_vector(
        camera.id.as_str(),
        track_id,
        projected - obs.pixel,
        kind,
    ))
}

/// Id lookup over a camera slice.
pub fn camera_index(cameras: &[Camera]) -> HashMap<&str, usize> {
    cameras
        .iter()
        .enumerate()
        .map(|(i, c)| (c.id.as_str(), i))
        .collect()
}

/// Every (camera, track) residual of one kind, in track order then
/// observation order.
pub fn residual_records(
    cameras: &[Camera],
    tracks: &[Track],
    kind: ResidualKind,
) -> Result<Vec<ResidualRecord>> {
    let index = camera_index(cameras);
    let mut out = Vec::with_capacity(tracks.iter().map(|t| t.observations.len()).sum());
    for track in tracks {
        let point = track.point(kind)?;
        for obs in &track.observations {
            let cam = index
                .get(obs.camera_id.as_str())
                .map(|&i| &cameras[i])
                .ok_or_else(|| GeometryError::UnknownCamera(obs.camera_id.clone()))?;
            out.push(residual(cam, cam.pose(kind)?, point, obs, &track.id, kind)?);
        }
    }
    Ok(out)
}

/// Sum of squared residual norms over every observation.
pub fn total_reprojection_error(
    cameras: &[Camera],
    tracks: &[Track],
    kind: ResidualKind,
) -> Result<f64> {
    let index = camera_index(cameras);
    let mut total = 0.0;
    for track in tracks {
        let point = track.point(kind)?;
        for obs in &track.observations {
            let cam = index
                .get(obs.camera_id.as_str())
                .map(|&i| &cameras[i])
                .ok_or_else(|| GeometryError::UnknownCamera(obs.camera_id.clone()))?;
            let r = project(cam, cam.pose(kind)?, point)? - obs.pixel;
            total += r.norm_squared();
        }
    }
    Ok(total)
}
