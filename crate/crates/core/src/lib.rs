//! Bundle-adjustment error analysis: camera geometry, the two-file XML
//! dataset format, a Levenberg-Marquardt adjuster with a Schur-complement
//! solver, chart data and rankings for residuals, and edit sessions that tie
//! deletions to re-runs and comparisons.

pub mod analysis;
pub mod bundle_adjust;
pub mod dataset;
pub mod geometry;
pub mod session;

pub use nalgebra;

pub use analysis::{
    angular_concentration, apply_filter, histogram, image_summary, radial, rank_images,
    rank_tracks, slope_pairs, AnalysisError, FilterState, HistogramData, ImageScore, ImageSummary,
    RadialData, RankKey, SlopePair, TrackScore,
};
pub use bundle_adjust::{
    align_similarity, run_ba, run_ba_with_progress, BAConfig, BAResult, BaError, Progress,
    Similarity, TerminationReason,
};
pub use dataset::{
    generate_synthetic, Dataset, DatasetError, GroundTruth, SyntheticConfig, Trajectory, Warning,
};
pub use geometry::{
    project, residual, triangulate, Camera, GeometryError, Intrinsics, Observation, Pose,
    ResidualKind, ResidualRecord, Track,
};
pub use session::{
    load_session, save_session, ComparisonReport, EditKind, EditOp, RunRecord, Session,
    SessionError,
};
