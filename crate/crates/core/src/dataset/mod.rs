//! Camera and track datasets: the two-file XML format, validation, and a
//! seeded synthetic scene generator with ground truth.

mod synthetic;
mod xml;

pub use synthetic::{generate_synthetic, PosePerturbation, SyntheticConfig, Trajectory};
pub use xml::{
    parse_cameras, parse_tracks, read_cameras, serialize, write_cameras, write_tracks, TrackReader,
    TrackWriter,
};

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{triangulation_angle, Camera, Pose, Track, ILL_POSED_ANGLE_DEG};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("schema error at line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("invalid value at line {line}: {message}")]
    Value { line: usize, message: String },
    #[error("duplicate {what} id `{id}` at line {line}")]
    DuplicateId {
        what: &'static str,
        id: String,
        line: usize,
    },
    #[error("track `{track_id}` references unknown camera `{camera_id}` (line {line})")]
    UnknownCameraRef {
        track_id: String,
        camera_id: String,
        line: usize,
    },
    #[error(
        "track `{track_id}` has {count} observation(s); at least 2 are required (line {line})"
    )]
    TooFewObservations {
        track_id: String,
        count: usize,
        line: usize,
    },
    #[error("infeasible synthetic configuration: {0}")]
    InfeasibleConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;

/// Which part of a synthetic trajectory a camera belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Straight,
    Turn,
}

/// True scene state retained by the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// One per camera, in dataset order.
    pub poses: Vec<Pose>,
    /// One per track, in dataset order.
    pub points: Vec<Vector3<f64>>,
    pub segments: Vec<Segment>,
    pub outlier_tracks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub name: String,
    pub cameras: Vec<Camera>,
    pub tracks: Vec<Track>,
    pub ground_truth: Option<GroundTruth>,
}

impl Dataset {
    /// Builds a dataset, checking id uniqueness and camera references.
    pub fn new(name: impl Into<String>, cameras: Vec<Camera>, tracks: Vec<Track>) -> Result<Self> {
        let mut ids = HashSet::new();
        for c in &cameras {
            if !ids.insert(c.id.as_str()) {
                return Err(DatasetError::DuplicateId {
                    what: "camera",
                    id: c.id.clone(),
                    line: 0,
                });
            }
        }
        let mut track_ids = HashSet::new();
        for t in &tracks {
            if !track_ids.insert(t.id.as_str()) {
                return Err(DatasetError::DuplicateId {
                    what: "track",
                    id: t.id.clone(),
                    line: 0,
                });
            }
            if t.observations.len() < 2 {
                return Err(DatasetError::TooFewObservations {
                    track_id: t.id.clone(),
                    count: t.observations.len(),
                    line: 0,
                });
            }
            for o in &t.observations {
                if !ids.contains(o.camera_id.as_str()) {
                    return Err(DatasetError::UnknownCameraRef {
                        track_id: t.id.clone(),
                        camera_id: o.camera_id.clone(),
                        line: 0,
                    });
                }
            }
        }
        Ok(Self {
            name: name.into(),
            cameras,
            tracks,
            ground_truth: None,
        })
    }

    /// Parses a camera document and a track document.
    pub fn from_xml(
        name: impl Into<String>,
        cameras_xml: &[u8],
        tracks_xml: &[u8],
    ) -> Result<Self> {
        let cameras = parse_cameras(cameras_xml)?;
        let tracks = parse_tracks(tracks_xml, &cameras)?;
        Ok(Self {
            name: name.into(),
            cameras,
            tracks,
            ground_truth: None,
        })
    }

    pub fn load(cameras_path: &Path, tracks_path: &Path) -> Result<Self> {
        let cameras = read_cameras(std::io::BufReader::new(std::fs::File::open(cameras_path)?))?.0;
        let reader = TrackReader::new(
            std::io::BufReader::new(std::fs::File::open(tracks_path)?),
            Some(&cameras),
        );
        let tracks = reader.collect::<Result<Vec<_>>>()?;
        let name = cameras_path
            .parent()
            .and_then(|p| p.file_name())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(Self {
            name,
            cameras,
            tracks,
            ground_truth: None,
        })
    }

    pub fn save(&self, cameras_path: &Path, tracks_path: &Path) -> Result<()> {
        let (c, t) = serialize(self);
        std::fs::write(cameras_path, c)?;
        std::fs::write(tracks_path, t)?;
        Ok(())
    }

    pub fn camera(&self, id: &str) -> Option<&Camera> {
        self.cameras.iter().find(|c| c.id == id)
    }

    pub fn track(&self, id: &str) -> Option<&Track> {
        self.tracks.iter().find(|t| t.id == id)
    }

    pub fn observation_count(&self) -> usize {
        self.tracks.iter().map(|t| t.observations.len()).sum()
    }

    /// True once every camera and track carries a final state.
    pub fn has_final_state(&self) -> bool {
        self.cameras.iter().all(|c| c.pose_final.is_some())
            && self.tracks.iter().all(|t| t.point_final.is_some())
    }

    /// Drops every final pose and point.
    pub fn clear_final_state(&mut self) {
        for c in &mut self.cameras {
            c.pose_final = None;
        }
        for t in &mut self.tracks {
            t.point_final = None;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    UnreferencedCamera {
        camera_id: String,
    },
    IllPosedTrack {
        track_id: String,
        angle_deg: f64,
    },
    ObservationOutOfBounds {
        track_id: String,
        camera_id: String,
        pixel: Vector2<f64>,
    },
    UnknownAttribute {
        line: usize,
        element: String,
        attribute: String,
    },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::UnreferencedCamera { camera_id } => {
                write!(f, "camera `{camera_id}` is not observed by any track")
            }
            Warning::IllPosedTrack {
                track_id,
                angle_deg,
            } => write!(
                f,
                "track `{track_id}` has triangulation angle {angle_deg:.3} deg (ill-posed)"
            ),
            Warning::ObservationOutOfBounds {
                track_id,
                camera_id,
                pixel,
            } => write!(
                f,
                "track `{track_id}` observation ({}, {}) lies outside image `{camera_id}`",
                pixel.x, pixel.y
            ),
            Warning::UnknownAttribute {
                line,
                element,
                attribute,
            } => write!(
                f,
                "line {line}: unknown attribute `{attribute}` on <{element}>"
            ),
        }
    }
}

/// Non-fatal problems: unreferenced cameras, ill-posed tracks and
/// out-of-image tiepoints.
pub fn validate(dataset: &Dataset) -> Vec<Warning> {
    let mut warnings = Vec::new();
    let mut referenced: HashMap<&str, bool> = dataset
        .cameras
        .iter()
        .map(|c| (c.id.as_str(), false))
        .collect();
    for t in &dataset.tracks {
        for o in &t.observations {
            if let Some(seen) = referenced.get_mut(o.camera_id.as_str()) {
                *seen = true;
            }
        }
    }
    for c in &dataset.cameras {
        if !referenced[c.id.as_str()] {
            warnings.push(Warning::UnreferencedCamera {
                camera_id: c.id.clone(),
            });
        }
    }
    let index = crate::geometry::camera_index(&dataset.cameras);
    for t in &dataset.tracks {
        let angle = triangulation_angle(t, &dataset.cameras);
        if angle < ILL_POSED_ANGLE_DEG {
            warnings.push(Warning::IllPosedTrack {
                track_id: t.id.clone(),
                angle_deg: angle,
            });
        }
        for o in &t.observations {
            if let Some(&i) = index.get(o.camera_id.as_str()) {
                if !dataset.cameras[i].intrinsics.contains(&o.pixel) {
                    warnings.push(Warning::ObservationOutOfBounds {
                        track_id: t.id.clone(),
                        camera_id: o.camera_id.clone(),
                        pixel: o.pixel,
                    });
                }
            }
        }
    }
    warnings
}
