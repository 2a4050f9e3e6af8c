use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use super::{BaError, Result};

/// `q = scale * rotation * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
}

impl Similarity {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Rotation3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p * self.scale + self.translation
    }

    /// Root-mean-square distance between transformed `estimated` and `truth`.
    pub fn rms_error(&self, estimated: &[Vector3<f64>], truth: &[Vector3<f64>]) -> f64 {
        let n = estimated.len().max(1) as f64;
        (estimated
            .iter()
            .zip(truth)
            .map(|(p, q)| (self.apply(p) - q).norm_squared())
            .sum::<f64>()
            / n)
            .sqrt()
    }
}

/// Least-squares similarity taking `estimated` onto `truth` (Umeyama's
/// closed form).
pub fn align_similarity(estimated: &[Vector3<f64>], truth: &[Vector3<f64>]) -> Result<Similarity> {
    if estimated.len() != truth.len() {
        return Err(BaError::InvalidInput(format!(
            "{} estimated points but {} truth points",
            estimated.len(),
            truth.len()
        )));
    }
    if estimated.len() < 3 {
        return Err(BaError::DegenerateConfiguration(
            "at least 3 correspondences are required".into(),
        ));
    }
    let n = estimated.len() as f64;
    let mean_p = estimated.iter().sum::<Vector3<f64>>() / n;
    let mean_q = truth.iter().sum::<Vector3<f64>>() / n;

    let mut cov = Matrix3::zeros();
    let mut scatter = Matrix3::zeros();
    let mut var_p = 0.0;
    for (p, q) in estimated.iter().zip(truth) {
        let dp = p - mean_p;
        let dq = q - mean_q;
        cov += dq * dp.transpose();
        scatter += dp * dp.transpose();
        var_p += dp.norm_squared();
    }
    cov /= n;
    var_p /= n;

    let spread = scatter.symmetric_eigenvalues();
    let mut ev: Vec<f64> = spread.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if var_p <= 0.0 || ev[1] <= 1e-12 * ev[0] {
        return Err(BaError::DegenerateConfiguration(
            "points are coincident or collinear".into(),
        ));
    }

    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut s = Matrix3::identity();
    if (u.determinant() * v_t.determinant()) < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let r = u * s * v_t;
    let trace_ds: f64 = (0..3).map(|i| svd.singular_values[i] * s[(i, i)]).sum();
    let scale = trace_ds / var_p;
    let rotation = Rotation3::from_matrix_unchecked(r);
    let translation = mean_q - rotation * mean_p * scale;
    Ok(Similarity {
        scale,
        rotation,
        translation,
    })
}
