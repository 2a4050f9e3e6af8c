//! Chart data and rankings over residual sets: histograms, radial plots,
//! pre/post slope pairs, angular concentration, track and image scores, and
//! the residual filter.

mod filter;

pub use filter::{apply_filter, FilterState};

use std::collections::{BTreeMap, HashMap, HashSet};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle_adjust::BAResult;
use crate::dataset::Dataset;
use crate::geometry::{ResidualKind, ResidualRecord};

pub const DEFAULT_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("no residuals with non-zero length")]
    EmptyInput,
    #[error("final residuals are not available before bundle adjustment")]
    MissingFinalState,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = AnalysisError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramData {
    /// `counts.len() + 1` ascending edges.
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width histogram of residual lengths over `range`.
///
/// Bins are right-exclusive except the last, which includes `range.1`. Lengths
/// outside the range are clamped into the end bins, so the counts always sum
/// to the number of residuals. A well-converged adjustment piles up in the
/// first few bins.
pub fn histogram(
    residuals: &[ResidualRecord],
    n_bins: usize,
    range: (f64, f64),
) -> Result<HistogramData> {
    let (lo, hi) = range;
    if n_bins == 0 {
        return Err(AnalysisError::InvalidArgument("n_bins must be >= 1".into()));
    }
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(AnalysisError::InvalidArgument(format!(
            "histogram range [{lo}, {hi}] is empty"
        )));
    }
    let width = (hi - lo) / n_bins as f64;
    let mut bin_edges: Vec<f64> = (0..=n_bins).map(|i| lo + width * i as f64).collect();
    bin_edges[n_bins] = hi;
    let mut counts = vec![0usize; n_bins];
    for r in residuals {
        counts[bin_of(&bin_edges, r.length)] += 1;
    }
    Ok(HistogramData { bin_edges, counts })
}

fn bin_of(edges: &[f64], x: f64) -> usize {
    let n = edges.len() - 1;
    let (lo, hi) = (edges[0], edges[n]);
    if !(x > lo) {
        return 0;
    }
    if x >= hi {
        return n - 1;
    }
    let guess = (((x - lo) / (hi - lo)) * n as f64).floor() as usize;
    let mut i = guess.min(n - 1);
    // settle against the stored edges so rounding never misplaces an edge value
    while i > 0 && x < edges[i] {
        i -= 1;
    }
    while i + 1 < n && x >= edges[i + 1] {
        i += 1;
    }
    i
}

/// Histogram with [`DEFAULT_BINS`] bins over `[0, max length]`.
pub fn default_histogram(residuals: &[ResidualRecord]) -> HistogramData {
    let max = residuals.iter().map(|r| r.length).fold(0.0, f64::max);
    let hi = if max > 0.0 { max } else { 1.0 };
    histogram(residuals, DEFAULT_BINS, (0.0, hi)).expect("valid default range")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialData {
    /// Residual vectors drawn from the chart origin.
    pub endpoints: Vec<Vector2<f64>>,
    pub max_radius: f64,
}

pub fn radial(residuals: &[ResidualRecord]) -> RadialData {
    RadialData {
        endpoints: residuals.iter().map(|r| r.vector).collect(),
        max_radius: residuals.iter().map(|r| r.length).fold(0.0, f64::max),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopePair {
    pub camera_id: String,
    pub track_id: String,
    pub pre_length: f64,
    pub post_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopePairs {
    pub pairs: Vec<SlopePair>,
    /// Records in either list without a partner in the other.
    pub omitted: usize,
}

/// Joins initial and final residuals on (camera, track), in the order of
/// `initial`.
pub fn slope_pairs(initial: &[ResidualRecord], fin: &[ResidualRecord]) -> SlopePairs {
    let post: HashMap<(&str, &str), f64> = fin
        .iter()
        .map(|r| ((r.camera_id.as_str(), r.track_id.as_str()), r.length))
        .collect();
    let mut matched = HashSet::new();
    let mut pairs = Vec::new();
    for r in initial {
        let key = (r.camera_id.as_str(), r.track_id.as_str());
        if let Some(&post_length) = post.get(&key) {
            matched.insert(key);
            pairs.push(SlopePair {
                camera_id: r.camera_id.clone(),
                track_id: r.track_id.clone(),
                pre_length: r.length,
                post_length,
            });
        }
    }
    let omitted = (initial.len() - pairs.len()) + (post.len() - matched.len());
    SlopePairs { pairs, omitted }
}

/// Mean resultant length of the residual directions: 0 for directions spread
/// evenly around the circle, 1 when all residuals point the same way.
/// Zero-length residuals carry no direction and are skipped.
pub fn angular_concentration(residuals: &[ResidualRecord]) -> Result<f64> {
    let mut sum = Vector2::zeros();
    let mut n = 0usize;
    for r in residuals {
        if r.length > 0.0 {
            sum += r.vector / r.length;
            n += 1;
        }
    }
    if n == 0 {
        return Err(AnalysisError::EmptyInput);
    }
    Ok((sum.norm() / n as f64).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankKey {
    MaxFinalLength,
    MeanFinalLength,
    DeltaRms,
    Concentration,
}

impl std::str::FromStr for RankKey {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "max_final_length" => Ok(Self::MaxFinalLength),
            "mean_final_length" => Ok(Self::MeanFinalLength),
            "delta_rms" => Ok(Self::DeltaRms),
            "concentration" => Ok(Self::Concentration),
            other => Err(format!(
                "unknown rank key `{other}` (expected max_final_length, mean_final_length, delta_rms or concentration)"
            )),
        }
    }
}

/// Per-group error summary shared by track and image rankings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreStats {
    pub n_observations: usize,
    pub max_final_length: f64,
    pub mean_final_length: f64,
    /// RMS after adjustment minus RMS before, over the group's residuals.
    pub delta_rms: f64,
    /// [`angular_concentration`] of the final residuals (0 when all are zero).
    pub concentration: f64,
}

impl ScoreStats {
    fn key(&self, key: RankKey) -> f64 {
        match key {
            RankKey::MaxFinalLength => self.max_final_length,
            RankKey::MeanFinalLength => self.mean_final_length,
            RankKey::DeltaRms => self.delta_rms,
            RankKey::Concentration => self.concentration,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackScore {
    pub track_id: String,
    #[serde(flatten)]
    pub stats: ScoreStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub camera_id: String,
    #[serde(flatten)]
    pub stats: ScoreStats,
}

fn rms_of<'a>(lengths: impl Iterator<Item = &'a ResidualRecord>) -> f64 {
    let (sum, n) = lengths.fold((0.0, 0usize), |(s, n), r| (s + r.length * r.length, n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

fn stats(initial: &[&ResidualRecord], fin: &[&ResidualRecord]) -> ScoreStats {
    let n = fin.len();
    let max_final_length = fin.iter().map(|r| r.length).fold(0.0, f64::max);
    let mean_final_length = if n == 0 {
        0.0
    } else {
        fin.iter().map(|r| r.length).sum::<f64>() / n as f64
    };
    let owned: Vec<ResidualRecord> = fin.iter().map(|r| (*r).clone()).collect();
    ScoreStats {
        n_observations: n,
        max_final_length,
        mean_final_length,
        delta_rms: rms_of(fin.iter().copied()) - rms_of(initial.iter().copied()),
        concentration: angular_concentration(&owned).unwrap_or(0.0),
    }
}

/// Groups paired residuals by `group` and scores each group, restricted to
/// the observations of `dataset`.
fn grouped<'a>(
    dataset: &Dataset,
    result: &'a BAResult,
    group: impl Fn(&ResidualRecord) -> &str,
) -> BTreeMap<String, (Vec<&'a ResidualRecord>, Vec<&'a ResidualRecord>)> {
    let live: HashSet<(&str, &str)> = dataset
        .tracks
        .iter()
        .flat_map(|t| {
            t.observations
                .iter()
                .map(move |o| (o.camera_id.as_str(), t.id.as_str()))
        })
        .collect();
    let mut groups: BTreeMap<String, (Vec<&ResidualRecord>, Vec<&ResidualRecord>)> =
        BTreeMap::new();
    for (records, is_final) in [
        (&result.residuals_initial, false),
        (&result.residuals_final, true),
    ] {
        for r in records {
            if !live.contains(&(r.camera_id.as_str(), r.track_id.as_str())) {
                continue;
            }
            let entry = groups.entry(group(r).to_string()).or_default();
            if is_final {
                entry.1.push(r);
            } else {
                entry.0.push(r);
            }
        }
    }
    // fixed summation order, whatever order the residuals came in
    let by_pair = |r: &&ResidualRecord| (r.camera_id.clone(), r.track_id.clone());
    for (ini, fin) in groups.values_mut() {
        ini.sort_by_key(by_pair);
        fin.sort_by_key(by_pair);
    }
    groups
}

fn sort_desc<T>(items: &mut [T], key: RankKey, stats: impl Fn(&T) -> (&ScoreStats, &str)) {
    items.sort_by(|a, b| {
        let (sa, ia) = stats(a);
        let (sb, ib) = stats(b);
        sb.key(key).total_cmp(&sa.key(key)).then_with(|| ia.cmp(ib))
    });
}

/// Tracks of `dataset` scored from `result` and sorted descending by `key`,
/// ties broken by ascending track id. Under `DeltaRms` the tracks the
/// adjustment made worse come first.
pub fn rank_tracks(
    dataset: &Dataset,
    result: Option<&BAResult>,
    key: RankKey,
) -> Result<Vec<TrackScore>> {
    let result = result.ok_or(AnalysisError::MissingFinalState)?;
    let mut out: Vec<TrackScore> = grouped(dataset, result, |r| r.track_id.as_str())
        .into_iter()
        .filter(|(_, (_, fin))| !fin.is_empty())
        .map(|(track_id, (ini, fin))| TrackScore {
            track_id,
            stats: stats(&ini, &fin),
        })
        .collect();
    sort_desc(&mut out, key, |s| (&s.stats, s.track_id.as_str()));
    Ok(out)
}

/// Like [`rank_tracks`], aggregated per camera.
pub fn rank_images(
    dataset: &Dataset,
    result: Option<&BAResult>,
    key: RankKey,
) -> Result<Vec<ImageScore>> {
    let result = result.ok_or(AnalysisError::MissingFinalState)?;
    let mut out: Vec<ImageScore> = grouped(dataset, result, |r| r.camera_id.as_str())
        .into_iter()
        .filter(|(_, (_, fin))| !fin.is_empty())
        .map(|(camera_id, (ini, fin))| ImageScore {
            camera_id,
            stats: stats(&ini, &fin),
        })
        .collect();
    sort_desc(&mut out, key, |s| (&s.stats, s.camera_id.as_str()));
    Ok(out)
}

/// Everything an image card shows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSummary {
    pub camera_id: String,
    pub histogram_initial: HistogramData,
    pub histogram_final: HistogramData,
    pub radial_initial: RadialData,
    pub radial_final: RadialData,
    pub slopes: SlopePairs,
    pub n_initial: usize,
    pub n_final: usize,
}

/// Chart data for one image. Both histograms share `[0, max length]` so the
/// initial and final bars line up.
pub fn image_summary(camera_id: &str, residuals: &[ResidualRecord]) -> ImageSummary {
    let (initial, fin): (Vec<ResidualRecord>, Vec<ResidualRecord>) = residuals
        .iter()
        .filter(|r| r.camera_id == camera_id)
        .cloned()
        .partition(|r| r.kind == ResidualKind::Initial);
    let max = residuals
        .iter()
        .filter(|r| r.camera_id == camera_id)
        .map(|r| r.length)
        .fold(0.0, f64::max);
    let range = (0.0, if max > 0.0 { max } else { 1.0 });
    ImageSummary {
        camera_id: camera_id.to_string(),
        histogram_initial: histogram(&initial, DEFAULT_BINS, range).expect("valid range"),
        histogram_final: histogram(&fin, DEFAULT_BINS, range).expect("valid range"),
        radial_initial: radial(&initial),
        radial_final: radial(&fin),
        slopes: slope_pairs(&initial, &fin),
        n_initial: initial.len(),
        n_final: fin.len(),
    }
}
