//! Edit sessions: a base dataset, an append-only log of deletions and
//! restores, and the bundle-adjustment runs recorded along the way.
//!
//! The effective dataset is never stored. It is replayed from the base and
//! the log, so two sessions with the same log agree bit for bit.

mod compare;
mod persist;

pub use compare::{ComparisonReport, GroupDelta};
pub use persist::{load_session, save_session};

use std::collections::{BTreeSet, HashSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bundle_adjust::{run_ba_with_progress, BAConfig, BAResult, BaError, Progress};
use crate::dataset::{self, Dataset, DatasetError, GroundTruth};
use crate::geometry::{triangulate, GeometryError};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown id `{0}`")]
    UnknownId(String),
    #[error("`{0}` is already deleted")]
    AlreadyDeleted(String),
    #[error("`{0}` is not deleted")]
    NotDeleted(String),
    #[error("deleting `{camera_id}` would leave {remaining} camera(s); at least 2 are required")]
    TooFewCamerasRemaining { camera_id: String, remaining: usize },
    #[error("unknown run `{0}`")]
    UnknownRun(String),
    #[error("corrupt session file: {0}")]
    CorruptSessionFile(String),
    #[error(transparent)]
    Ba(#[from] BaError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = SessionError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    DeleteTrack,
    DeleteCamera,
    Restore,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditOp {
    pub kind: EditKind,
    pub target_id: String,
    /// Strictly increasing along the log.
    pub timestamp: u64,
}

/// Where the base dataset lives and the digest of its contents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseRef {
    pub cameras_path: PathBuf,
    pub tracks_path: PathBuf,
    pub digest: String,
}

/// A recorded bundle-adjustment run. Never modified once recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub id: String,
    /// Digest of the dataset the run adjusted.
    pub dataset_digest: String,
    /// Number of log entries applied to the base before the run.
    pub edit_count: usize,
    pub config: BAConfig,
    pub result: BAResult,
}

/// What an edit did to the effective dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditOutcome {
    pub op: EditOp,
    /// Tracks that fell below two observations and were dropped.
    pub cascaded_tracks: Vec<String>,
    /// Cameras no longer observed by any track.
    pub unreferenced_cameras: Vec<String>,
}

/// Input of a run, captured from the session at one point of its log.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedRun {
    pub dataset: Dataset,
    pub digest: String,
    pub edit_count: usize,
}

/// Lowercase hex SHA-256 of the canonical XML serialization of `dataset`.
pub fn dataset_digest(dataset: &Dataset) -> String {
    let (cameras, tracks) = dataset::serialize(dataset);
    let mut h = Sha256::new();
    h.update(&cameras);
    h.update(&tracks);
    hex::encode(h.finalize())
}

/// Deleted ids after replaying a log prefix.
#[derive(Debug, Clone, Default, PartialEq)]
struct EditState {
    tracks: BTreeSet<String>,
    cameras: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct Session {
    base: Dataset,
    base_ref: BaseRef,
    edits: Vec<EditOp>,
    runs: Vec<RunRecord>,
    state: EditState,
    effective: Dataset,
}

impl PartialEq for Session {
    fn eq(&self, other: &Self) -> bool {
        self.base_ref == other.base_ref
            && self.edits == other.edits
            && self.runs == other.runs
            && self.base == other.base
    }
}

impl Session {
    /// Starts an empty session over `base`, recording where it was loaded from.
    pub fn new(
        base: Dataset,
        cameras_path: impl Into<PathBuf>,
        tracks_path: impl Into<PathBuf>,
    ) -> Self {
        let base_ref = BaseRef {
            cameras_path: cameras_path.into(),
            tracks_path: tracks_path.into(),
            digest: dataset_digest(&base),
        };
        let effective = base.clone();
        Self {
            base,
            base_ref,
            edits: Vec::new(),
            runs: Vec::new(),
            state: EditState::default(),
            effective,
        }
    }

    /// Loads the base dataset from its two XML files.
    pub fn open(cameras_path: impl Into<PathBuf>, tracks_path: impl Into<PathBuf>) -> Result<Self> {
        let (c, t) = (cameras_path.into(), tracks_path.into());
        let base = Dataset::load(&c, &t)?;
        Ok(Self::new(base, c, t))
    }

    pub fn base(&self) -> &Dataset {
        &self.base
    }

    pub fn base_ref(&self) -> &BaseRef {
        &self.base_ref
    }

    pub fn edits(&self) -> &[EditOp] {
        &self.edits
    }

    pub fn runs(&self) -> &[RunRecord] {
        &self.runs
    }

    pub fn run(&self, id: &str) -> Result<&RunRecord> {
        self.runs
            .iter()
            .find(|r| r.id == id)
            .ok_or_else(|| SessionError::UnknownRun(id.to_string()))
    }

    pub fn latest_run(&self) -> Option<&RunRecord> {
        self.runs.last()
    }

    /// The base with every logged edit applied.
    pub fn effective(&self) -> &Dataset {
        &self.effective
    }

    pub fn is_track_deleted(&self, id: &str) -> bool {
        self.base.track(id).is_some() && self.effective.track(id).is_none()
    }

    pub fn is_camera_deleted(&self, id: &str) -> bool {
        self.state.cameras.contains(id)
    }

    pub fn delete_track(&mut self, track_id: &str) -> Result<EditOutcome> {
        if self.base.track(track_id).is_none() {
            return Err(SessionError::UnknownId(track_id.to_string()));
        }
        if self.effective.track(track_id).is_none() {
            return Err(SessionError::AlreadyDeleted(track_id.to_string()));
        }
        self.push(EditKind::DeleteTrack, track_id)
    }

    pub fn delete_camera(&mut self, camera_id: &str) -> Result<EditOutcome> {
        if self.base.camera(camera_id).is_none() {
            return Err(SessionError::UnknownId(camera_id.to_string()));
        }
        if self.state.cameras.contains(camera_id) {
            return Err(SessionError::AlreadyDeleted(camera_id.to_string()));
        }
        let remaining = self.effective.cameras.len() - 1;
        if remaining < 2 {
            return Err(SessionError::TooFewCamerasRemaining {
                camera_id: camera_id.to_string(),
                remaining,
            });
        }
        self.push(EditKind::DeleteCamera, camera_id)
    }

    /// Undoes the most recent still-active deletion of `target_id`.
    pub fn restore(&mut self, target_id: &str) -> Result<EditOutcome> {
        if restore_target(&self.edits, &self.state, target_id).is_none() {
            return Err(
                if self.base.track(target_id).is_none() && self.base.camera(target_id).is_none() {
                    SessionError::UnknownId(target_id.to_string())
                } else {
                    SessionError::NotDeleted(target_id.to_string())
                },
            );
        }
        self.push(EditKind::Restore, target_id)
    }

    /// Applies an edit of any kind.
    pub fn apply(&mut self, kind: EditKind, target_id: &str) -> Result<EditOutcome> {
        match kind {
            EditKind::DeleteTrack => self.delete_track(target_id),
            EditKind::DeleteCamera => self.delete_camera(target_id),
            EditKind::Restore => self.restore(target_id),
        }
    }

    fn push(&mut self, kind: EditKind, target_id: &str) -> Result<EditOutcome> {
        let op = EditOp {
            kind,
            target_id: target_id.to_string(),
            timestamp: self.edits.last().map_or(1, |e| e.timestamp + 1),
        };
        step(&mut self.state, &self.edits, &op).map_err(SessionError::CorruptSessionFile)?;
        let before: HashSet<String> = self.effective.tracks.iter().map(|t| t.id.clone()).collect();
        let (effective, cascaded) = materialize(&self.base, &self.state);
        let cascaded_tracks = cascaded
            .into_iter()
            .filter(|id| before.contains(id))
            .collect();
        self.effective = effective;
        self.edits.push(op.clone());
        Ok(EditOutcome {
            op,
            cascaded_tracks,
            unreferenced_cameras: unreferenced_cameras(&self.effective),
        })
    }

    /// Snapshot of the current effective dataset, ready for adjustment.
    pub fn prepare_run(&self) -> Result<PreparedRun> {
        prepare(&self.effective, self.edits.len())
    }

    /// Appends a completed run and returns its id.
    pub fn record_run(
        &mut self,
        prepared: PreparedRun,
        config: BAConfig,
        result: BAResult,
    ) -> String {
        let id = format!("run-{}", self.runs.len() + 1);
        self.runs.push(RunRecord {
            id: id.clone(),
            dataset_digest: prepared.digest,
            edit_count: prepared.edit_count,
            config,
            result,
        });
        id
    }

    pub fn rerun(&mut self, config: &BAConfig) -> Result<String> {
        self.rerun_with_progress(config, |_| true)
    }

    /// Adjusts the effective dataset and records the run. Nothing is recorded
    /// if adjustment fails or is cancelled.
    pub fn rerun_with_progress(
        &mut self,
        config: &BAConfig,
        observer: impl FnMut(&Progress) -> bool,
    ) -> Result<String> {
        let prepared = self.prepare_run()?;
        let result = run_ba_with_progress(&prepared.dataset, config, observer)?;
        Ok(self.record_run(prepared, config.clone(), result))
    }

    /// The dataset `run` adjusted, replayed from the log.
    pub fn run_dataset(&self, run: &RunRecord) -> Result<Dataset> {
        let state = replay(&self.edits[..run.edit_count.min(self.edits.len())])
            .map_err(SessionError::CorruptSessionFile)?;
        let (d, _) = materialize(&self.base, &state);
        Ok(prepare(&d, run.edit_count)?.dataset)
    }

    /// Paired comparison of two recorded runs.
    pub fn compare(&self, run_a: &str, run_b: &str) -> Result<ComparisonReport> {
        let a = self.run(run_a)?;
        let b = self.run(run_b)?;
        Ok(compare::compare(
            a,
            &self.run_dataset(a)?,
            b,
            &self.run_dataset(b)?,
        ))
    }

    #[cfg(test)]
    fn from_parts(
        base: Dataset,
        base_ref: BaseRef,
        edits: Vec<EditOp>,
        runs: Vec<RunRecord>,
    ) -> Result<Self> {
        let state = replay(&edits).map_err(SessionError::CorruptSessionFile)?;
        let (effective, _) = materialize(&base, &state);
        Ok(Self {
            base,
            base_ref,
            edits,
            runs,
            state,
            effective,
        })
    }
}

fn prepare(effective: &Dataset, edit_count: usize) -> Result<PreparedRun> {
    let mut dataset = effective.clone();
    dataset.clear_final_state();
    let index = crate::geometry::camera_index(&dataset.cameras);
    for t in 0..dataset.tracks.len() {
        if dataset.tracks[t]
            .point_initial
            .iter()
            .all(|v| v.is_finite())
        {
            continue;
        }
        let track = &dataset.tracks[t];
        let rays: Vec<_> = track
            .observations
            .iter()
            .map(|o| {
                let c = &dataset.cameras[index[o.camera_id.as_str()]];
                (c, &c.pose_initial, o.pixel)
            })
            .collect();
        let p = triangulate(&rays)?;
        dataset.tracks[t].point_initial = p;
    }
    let digest = dataset_digest(&dataset);
    Ok(PreparedRun {
        dataset,
        digest,
        edit_count,
    })
}

fn unreferenced_cameras(d: &Dataset) -> Vec<String> {
    let seen: HashSet<&str> = d
        .tracks
        .iter()
        .flat_map(|t| t.observations.iter().map(|o| o.camera_id.as_str()))
        .collect();
    d.cameras
        .iter()
        .filter(|c| !seen.contains(c.id.as_str()))
        .map(|c| c.id.clone())
        .collect()
}

/// The log entry a restore of `target` would undo.
fn restore_target(log: &[EditOp], state: &EditState, target: &str) -> Option<EditKind> {
    log.iter()
        .rev()
        .filter(|e| e.target_id == target && e.kind != EditKind::Restore)
        .find(|e| match e.kind {
            EditKind::DeleteTrack => state.tracks.contains(target),
            _ => state.cameras.contains(target),
        })
        .map(|e| e.kind)
}

fn step(state: &mut EditState, log: &[EditOp], op: &EditOp) -> Result<(), String> {
    if let Some(last) = log.last() {
        if op.timestamp <= last.timestamp {
            return Err(format!("edit timestamp {} does not increase", op.timestamp));
        }
    }
    let id = op.target_id.clone();
    let fresh = match op.kind {
        EditKind::DeleteTrack => state.tracks.insert(id),
        EditKind::DeleteCamera => state.cameras.insert(id),
        EditKind::Restore => match restore_target(log, state, &op.target_id) {
            Some(EditKind::DeleteTrack) => state.tracks.remove(&op.target_id),
            Some(_) => state.cameras.remove(&op.target_id),
            None => false,
        },
    };
    if fresh {
        Ok(())
    } else {
        Err(format!(
            "edit {:?} on `{}` has no effect",
            op.kind, op.target_id
        ))
    }
}

fn replay(log: &[EditOp]) -> Result<EditState, String> {
    let mut state = EditState::default();
    for (i, op) in log.iter().enumerate() {
        step(&mut state, &log[..i], op)?;
    }
    Ok(state)
}

/// Applies deleted ids to `base`, returning the result and the tracks dropped
/// for lack of observations.
fn materialize(base: &Dataset, state: &EditState) -> (Dataset, Vec<String>) {
    let keep_cam: Vec<bool> = base
        .cameras
        .iter()
        .map(|c| !state.cameras.contains(&c.id))
        .collect();
    let cameras = base
        .cameras
        .iter()
        .zip(&keep_cam)
        .filter(|(_, &k)| k)
        .map(|(c, _)| c.clone())
        .collect();
    let mut tracks = Vec::with_capacity(base.tracks.len());
    let mut keep_track = Vec::with_capacity(base.tracks.len());
    let mut cascaded = Vec::new();
    for t in &base.tracks {
        if state.tracks.contains(&t.id) {
            keep_track.push(false);
            continue;
        }
        let mut t = t.clone();
        if !state.cameras.is_empty() {
            t.observations
                .retain(|o| !state.cameras.contains(&o.camera_id));
        }
        if t.observations.len() < 2 {
            cascaded.push(t.id);
            keep_track.push(false);
        } else {
            tracks.push(t);
            keep_track.push(true);
        }
    }
    let ground_truth = base.ground_truth.as_ref().map(|g| {
        let live: HashSet<&str> = tracks
            .iter()
            .map(|t: &crate::geometry::Track| t.id.as_str())
            .collect();
        GroundTruth {
            poses: select(&g.poses, &keep_cam),
            points: select(&g.points, &keep_track),
            segments: select(&g.segments, &keep_cam),
            outlier_tracks: g
                .outlier_tracks
                .iter()
                .filter(|id| live.contains(id.as_str()))
                .cloned()
                .collect(),
        }
    });
    (
        Dataset {
            name: base.name.clone(),
            cameras,
            tracks,
            ground_truth,
        },
        cascaded,
    )
}

fn select<T: Clone>(items: &[T], keep: &[bool]) -> Vec<T> {
    items
        .iter()
        .zip(keep)
        .filter(|(_, &k)| k)
        .map(|(x, _)| x.clone())
        .collect()
}
