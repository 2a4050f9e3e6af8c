//! JSON session files: `{base, edits, runs}`.
//!
//! Runs are stored without their residual lists; those are recomputed on
//! load from the replayed dataset and the stored final state, which gives the
//! same values bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{dataset_digest, prepare, BaseRef, EditOp, Result, RunRecord, Session, SessionError};
use crate::bundle_adjust::{BAConfig, BAResult, TerminationReason};
use crate::dataset::Dataset;
use crate::geometry::{residual_records, Pose, ResidualKind};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionFile {
    base: BaseRef,
    edits: Vec<EditOp>,
    runs: Vec<StoredRun>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredRun {
    id: String,
    dataset_digest: String,
    edit_count: usize,
    config: BAConfig,
    cost_trace: Vec<f64>,
    converged: bool,
    termination_reason: TerminationReason,
    iterations: usize,
    poses_final: Vec<Pose>,
    points_final: Vec<Vector3<f64>>,
}

impl From<&RunRecord> for StoredRun {
    fn from(r: &RunRecord) -> Self {
        Self {
            id: r.id.clone(),
            dataset_digest: r.dataset_digest.clone(),
            edit_count: r.edit_count,
            config: r.config.clone(),
            cost_trace: r.result.cost_trace.clone(),
            converged: r.result.converged,
            termination_reason: r.result.termination_reason,
            iterations: r.result.iterations,
            poses_final: r.result.poses_final.clone(),
            points_final: r.result.points_final.clone(),
        }
    }
}

pub fn save_session(session: &Session, path: &Path) -> Result<()> {
    let file = SessionFile {
        base: session.base_ref.clone(),
        edits: session.edits.clone(),
        runs: session.runs.iter().map(StoredRun::from).collect(),
    };
    let json = serde_json::to_vec_pretty(&file)
        .map_err(|e| SessionError::CorruptSessionFile(e.to_string()))?;
    fs::write(path, json)?;
    Ok(())
}

/// Base paths in a session file are relative to the file's directory.
pub(crate) fn resolve(session_path: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        session_path.parent().unwrap_or(Path::new("")).join(p)
    }
}

/// Loads a session, re-reading the base dataset and checking it and every
/// recorded run against their digests.
pub fn load_session(path: &Path) -> Result<Session> {
    let bytes = fs::read(path)?;
    let file: SessionFile = serde_json::from_slice(&bytes)
        .map_err(|e| SessionError::CorruptSessionFile(e.to_string()))?;
    let base = Dataset::load(
        &resolve(path, &file.base.cameras_path),
        &resolve(path, &file.base.tracks_path),
    )?;
    if dataset_digest(&base) != file.base.digest {
        return Err(SessionError::CorruptSessionFile(
            "base dataset does not match the recorded digest".into(),
        ));
    }
    let mut session = Session::new(
        base,
        file.base.cameras_path.clone(),
        file.base.tracks_path.clone(),
    );
    let mut runs = file.runs.into_iter().peekable();
    for i in 0..=file.edits.len() {
        while let Some(run) = runs.next_if(|r| r.edit_count == i) {
            let rec = rebuild_run(&session, run)?;
            session.runs.push(rec);
        }
        let Some(op) = file.edits.get(i) else { break };
        let done = session
            .apply(op.kind, &op.target_id)
            .map_err(|e| SessionError::CorruptSessionFile(format!("edit {}: {e}", i + 1)))?;
        if &done.op != op {
            return Err(SessionError::CorruptSessionFile(format!(
                "edit {} has timestamp {}, expected {}",
                i + 1,
                op.timestamp,
                done.op.timestamp
            )));
        }
    }
    if let Some(run) = runs.next() {
        return Err(SessionError::CorruptSessionFile(format!(
            "run `{}` is out of order or refers to edit {} of {}",
            run.id,
            run.edit_count,
            file.edits.len()
        )));
    }
    Ok(session)
}

fn rebuild_run(session: &Session, run: StoredRun) -> Result<RunRecord> {
    let corrupt = |m: String| SessionError::CorruptSessionFile(format!("run `{}`: {m}", run.id));
    if session.runs.iter().any(|r| r.id == run.id) {
        return Err(corrupt("duplicate run id".into()));
    }
    let prepared = prepare(session.effective(), run.edit_count)?;
    if prepared.digest != run.dataset_digest {
        return Err(corrupt(
            "dataset digest does not match the replayed edit log".into(),
        ));
    }
    let d = &prepared.dataset;
    if run.poses_final.len() != d.cameras.len()
        || run.points_final.len() != d.tracks.len()
        || run.cost_trace.is_empty()
    {
        return Err(corrupt("final state does not fit the dataset".into()));
    }
    let mut result = BAResult {
        poses_final: run.poses_final,
        points_final: run.points_final,
        cost_trace: run.cost_trace,
        converged: run.converged,
        termination_reason: run.termination_reason,
        iterations: run.iterations,
        residuals_initial: Vec::new(),
        residuals_final: Vec::new(),
    };
    let adjusted = result.apply_to(d);
    result.residuals_initial = residual_records(&d.cameras, &d.tracks, ResidualKind::Initial)
        .map_err(|e| corrupt(e.to_string()))?;
    result.residuals_final =
        residual_records(&adjusted.cameras, &adjusted.tracks, ResidualKind::Final)
            .map_err(|e| corrupt(e.to_string()))?;
    Ok(RunRecord {
        id: run.id,
        dataset_digest: run.dataset_digest,
        edit_count: run.edit_count,
        config: run.config,
        result,
    })
}
