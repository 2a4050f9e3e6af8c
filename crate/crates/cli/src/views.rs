//! JSON documents shared by the CLI outputs and the HTTP responses.

use serde::{Deserialize, Serialize};

use vector_core::analysis::{
    angular_concentration, histogram, rank_images, rank_tracks, HistogramData, ImageScore, RankKey,
    TrackScore, DEFAULT_BINS,
};
use vector_core::bundle_adjust::{BAConfig, TerminationReason};
use vector_core::dataset::{validate, Dataset, Warning};
use vector_core::session::{ComparisonReport, RunRecord, Session, SessionError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub id: String,
    pub edit_count: usize,
    pub dataset_digest: String,
    pub config: BAConfig,
    pub iterations: usize,
    pub converged: bool,
    pub termination_reason: TerminationReason,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub initial_rms: f64,
    pub final_rms: f64,
    pub n_observations: usize,
    pub cost_trace: Vec<f64>,
}

impl From<&RunRecord> for RunSummary {
    fn from(r: &RunRecord) -> Self {
        Self {
            id: r.id.clone(),
            edit_count: r.edit_count,
            dataset_digest: r.dataset_digest.clone(),
            config: r.config.clone(),
            iterations: r.result.iterations,
            converged: r.result.converged,
            termination_reason: r.result.termination_reason,
            initial_cost: r.result.initial_cost(),
            final_cost: r.result.final_cost(),
            initial_rms: r.result.initial_rms(),
            final_rms: r.result.final_rms(),
            n_observations: r.result.residuals_final.len(),
            cost_trace: r.result.cost_trace.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub n_cameras: usize,
    pub n_tracks: usize,
    pub n_observations: usize,
}

impl From<&Dataset> for DatasetSummary {
    fn from(d: &Dataset) -> Self {
        Self {
            name: d.name.clone(),
            n_cameras: d.cameras.len(),
            n_tracks: d.tracks.len(),
            n_observations: d.observation_count(),
        }
    }
}

/// Chart data and rankings for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run: RunSummary,
    pub histogram_initial: HistogramData,
    pub histogram_final: HistogramData,
    pub concentration_initial: Option<f64>,
    pub concentration_final: Option<f64>,
    /// Every track, worst final residual first.
    pub tracks: Vec<TrackScore>,
    /// Every image, worst final residual first.
    pub images: Vec<ImageScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub base: DatasetSummary,
    pub effective: DatasetSummary,
    pub warnings: Vec<Warning>,
    pub n_edits: usize,
    pub runs: Vec<RunSummary>,
    pub latest: Option<RunReport>,
    /// First run against the latest one, when there are at least two.
    pub comparison: Option<ComparisonReport>,
}

pub fn run_report(session: &Session, run: &RunRecord) -> Result<RunReport, SessionError> {
    let dataset = session.run_dataset(run)?;
    let r = &run.result;
    let max = r
        .residuals_initial
        .iter()
        .chain(&r.residuals_final)
        .map(|x| x.length)
        .fold(0.0, f64::max);
    let range = (0.0, if max > 0.0 { max } else { 1.0 });
    let rank_err =
        |e: vector_core::analysis::AnalysisError| SessionError::CorruptSessionFile(e.to_string());
    Ok(RunReport {
        run: run.into(),
        histogram_initial: histogram(&r.residuals_initial, DEFAULT_BINS, range)
            .map_err(rank_err)?,
        histogram_final: histogram(&r.residuals_final, DEFAULT_BINS, range).map_err(rank_err)?,
        concentration_initial: angular_concentration(&r.residuals_initial).ok(),
        concentration_final: angular_concentration(&r.residuals_final).ok(),
        tracks: rank_tracks(&dataset, Some(r), RankKey::MaxFinalLength).map_err(rank_err)?,
        images: rank_images(&dataset, Some(r), RankKey::MaxFinalLength).map_err(rank_err)?,
    })
}

pub fn report(session: &Session) -> Result<Report, SessionError> {
    let latest = session
        .latest_run()
        .map(|r| run_report(session, r))
        .transpose()?;
    let comparison = match session.runs() {
        [first, .., last] => Some(session.compare(&first.id, &last.id)?),
        _ => None,
    };
    Ok(Report {
        base: session.base().into(),
        effective: session.effective().into(),
        warnings: validate(session.effective()),
        n_edits: session.edits().len(),
        runs: session.runs().iter().map(RunSummary::from).collect(),
        latest,
        comparison,
    })
}
