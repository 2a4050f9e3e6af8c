use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{AnalysisError, Result};
use crate::geometry::{ResidualKind, ResidualRecord};

pub const MAX_PRECISION: u32 = 12;

/// Residual filter shared by every view.
///
/// `length_range[1]` may be infinite and is written as JSON `null`.
/// `angle_range` is an arc walked counter-clockwise from `start` to `end`, so
/// `[350, 10]` covers 350..360 and 0..10. `None` keeps every angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterState {
    pub kinds: Vec<ResidualKind>,
    #[serde(with = "open_range")]
    pub length_range: [f64; 2],
    pub angle_range: Option<[f64; 2]>,
    pub precision: u32,
    /// Display magnification of residual lines. Never affects membership.
    pub scale: f64,
}

impl Default for FilterState {
    fn default() -> Self {
        Self {
            kinds: vec![ResidualKind::Initial, ResidualKind::Final],
            length_range: [0.0, f64::INFINITY],
            angle_range: None,
            precision: MAX_PRECISION,
            scale: 1.0,
        }
    }
}

impl FilterState {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AnalysisError::InvalidArgument(m));
        let [lo, hi] = self.length_range;
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return bad(format!("length_range [{lo}, {hi}] needs min <= max"));
        }
        if let Some([a, b]) = self.angle_range {
            if !(0.0..360.0).contains(&a) || !(0.0..360.0).contains(&b) {
                return bad(format!("angle_range [{a}, {b}] must lie in [0, 360)"));
            }
        }
        if self.precision > MAX_PRECISION {
            return bad(format!(
                "precision {} exceeds {MAX_PRECISION}",
                self.precision
            ));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return bad(format!("scale must be finite and > 0, got {}", self.scale));
        }
        Ok(())
    }

    /// Whether `r` passes the filter. The filter must be valid.
    pub fn accepts(&self, r: &ResidualRecord) -> bool {
        if !self.kinds.contains(&r.kind) {
            return false;
        }
        let length = round_to(r.length, self.precision);
        if !(self.length_range[0] <= length && length <= self.length_range[1]) {
            return false;
        }
        match self.angle_range {
            None => true,
            Some([start, end]) => {
                let mut angle = round_to(r.angle, self.precision);
                if angle >= 360.0 {
                    angle -= 360.0;
                }
                if start <= end {
                    start <= angle && angle <= end
                } else {
                    angle >= start || angle <= end
                }
            }
        }
    }
}

fn round_to(x: f64, digits: u32) -> f64 {
    let f = 10f64.powi(digits as i32);
    let y = (x * f).round() / f;
    if y.is_finite() {
        y
    } else {
        x
    }
}

/// Records passing `filter`, in input order.
pub fn apply_filter(
    residuals: &[ResidualRecord],
    filter: &FilterState,
) -> Result<Vec<ResidualRecord>> {
    filter.validate()?;
    Ok(residuals
        .iter()
        .filter(|r| filter.accepts(r))
        .cloned()
        .collect())
}

mod open_range {
    use super::*;

    pub fn serialize<S: Serializer>(r: &[f64; 2], s: S) -> std::result::Result<S::Ok, S::Error> {
        let hi = if r[1].is_finite() { Some(r[1]) } else { None };
        (r[0], hi).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<[f64; 2], D::Error> {
        let (lo, hi) = <(f64, Option<f64>)>::deserialize(d)?;
        Ok([lo, hi.unwrap_or(f64::INFINITY)])
    }
}
