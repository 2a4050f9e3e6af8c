use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::RunRecord;
use crate::dataset::Dataset;

/// Change in final residuals of one track or image between two runs, over
/// the observations both runs share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDelta {
    pub id: String,
    pub n_paired: usize,
    pub rms_a: f64,
    pub rms_b: f64,
    pub delta_rms: f64,
    /// Paired observations whose residual got shorter.
    pub n_improved: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub run_a: String,
    pub run_b: String,
    /// Final total reprojection error of `b` minus that of `a`.
    pub delta_total_error: f64,
    /// Final RMS of `b` minus that of `a`, each over its own observations.
    pub delta_rms: f64,
    pub rms_a: f64,
    pub rms_b: f64,
    /// Observations present in both runs.
    pub n_paired: usize,
    pub paired_rms_a: f64,
    pub paired_rms_b: f64,
    pub paired_delta_rms: f64,
    pub n_improved: usize,
    pub tracks: Vec<GroupDelta>,
    pub images: Vec<GroupDelta>,
    pub removed_tracks: Vec<String>,
    pub added_tracks: Vec<String>,
    pub removed_cameras: Vec<String>,
    pub added_cameras: Vec<String>,
}

#[derive(Default)]
struct Acc {
    n: usize,
    sa: f64,
    sb: f64,
    improved: usize,
}

impl Acc {
    fn add(&mut self, a: f64, b: f64) {
        self.n += 1;
        self.sa += a * a;
        self.sb += b * b;
        if b < a {
            self.improved += 1;
        }
    }

    fn rms(&self) -> (f64, f64) {
        if self.n == 0 {
            (0.0, 0.0)
        } else {
            let n = self.n as f64;
            ((self.sa / n).sqrt(), (self.sb / n).sqrt())
        }
    }

    fn delta(self, id: String) -> GroupDelta {
        let (rms_a, rms_b) = self.rms();
        GroupDelta {
            id,
            n_paired: self.n,
            rms_a,
            rms_b,
            delta_rms: rms_b - rms_a,
            n_improved: self.improved,
        }
    }
}

fn refs(s: &BTreeSet<String>) -> BTreeSet<&str> {
    s.iter().map(|x| x.as_str()).collect()
}

fn difference(a: &BTreeSet<&str>, b: &BTreeSet<&str>) -> Vec<String> {
    a.difference(b).map(|s| s.to_string()).collect()
}

pub(crate) fn compare(
    a: &RunRecord,
    da: &Dataset,
    b: &RunRecord,
    db: &Dataset,
) -> ComparisonReport {
    let post_b: HashMap<(&str, &str), f64> = b
        .result
        .residuals_final
        .iter()
        .map(|r| ((r.camera_id.as_str(), r.track_id.as_str()), r.length))
        .collect();
    let mut all = Acc::default();
    let mut tracks: BTreeMap<&str, Acc> = BTreeMap::new();
    let mut images: BTreeMap<&str, Acc> = BTreeMap::new();
    for r in &a.result.residuals_final {
        if let Some(&lb) = post_b.get(&(r.camera_id.as_str(), r.track_id.as_str())) {
            all.add(r.length, lb);
            tracks.entry(&r.track_id).or_default().add(r.length, lb);
            images.entry(&r.camera_id).or_default().add(r.length, lb);
        }
    }
    let (paired_rms_a, paired_rms_b) = all.rms();
    let (rms_a, rms_b) = (a.result.final_rms(), b.result.final_rms());

    let ids = |d: &'_ Dataset| -> (BTreeSet<String>, BTreeSet<String>) {
        (
            d.tracks.iter().map(|t| t.id.clone()).collect(),
            d.cameras.iter().map(|c| c.id.clone()).collect(),
        )
    };
    let (ta, ca) = ids(da);
    let (tb, cb) = ids(db);
    let (ta, ca, tb, cb) = (refs(&ta), refs(&ca), refs(&tb), refs(&cb));

    ComparisonReport {
        run_a: a.id.clone(),
        run_b: b.id.clone(),
        delta_total_error: b.result.final_cost() - a.result.final_cost(),
        delta_rms: rms_b - rms_a,
        rms_a,
        rms_b,
        n_paired: all.n,
        paired_rms_a,
        paired_rms_b,
        paired_delta_rms: paired_rms_b - paired_rms_a,
        n_improved: all.improved,
        tracks: tracks
            .into_iter()
            .map(|(id, acc)| acc.delta(id.to_string()))
            .collect(),
        images: images
            .into_iter()
            .map(|(id, acc)| acc.delta(id.to_string()))
            .collect(),
        removed_tracks: difference(&ta, &tb),
        added_tracks: difference(&tb, &ta),
        removed_cameras: difference(&ca, &cb),
        added_cameras: difference(&cb, &ca),
    }
}
