//! Damped normal equations solved by eliminating the point blocks (Schur
//! complement), then back-substituting for the points.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Matrix6x3, Vector2, Vector3, Vector6};

use super::problem::{Jacobian, Step};
use super::{BaError, Result};

/// Damping never scales a diagonal entry smaller than this.
const MIN_DIAGONAL: f64 = 1e-12;

/// Undamped `J^T J` and `J^T r` in camera/point block form.
pub(crate) struct NormalEquations {
    n_free: usize,
    u: Vec<Matrix6<f64>>,
    v: Vec<Matrix3<f64>>,
    /// Per observation with a free camera: (camera block, point, W = Jc^T Jp).
    w: Vec<(usize, usize, Matrix6x3<f64>)>,
    /// Indices into `w`, grouped by point.
    w_by_point: Vec<Vec<usize>>,
    g_cam: Vec<Vector6<f64>>,
    g_point: Vec<Vector3<f64>>,
}

impl NormalEquations {
    pub fn build(jac: &Jacobian, residuals: &[Vector2<f64>]) -> Self {
        let mut ne = Self {
            n_free: jac.n_free_cameras,
            u: vec![Matrix6::zeros(); jac.n_free_cameras],
            v: vec![Matrix3::zeros(); jac.n_points],
            w: Vec::with_capacity(jac.blocks.len()),
            w_by_point: vec![Vec::new(); jac.n_points],
            g_cam: vec![Vector6::zeros(); jac.n_free_cameras],
            g_point: vec![Vector3::zeros(); jac.n_points],
        };
        for (b, r) in jac.blocks.iter().zip(residuals) {
            let jp_t = b.d_point.transpose();
            ne.v[b.point] += jp_t * b.d_point;
            ne.g_point[b.point] += jp_t * r;
            if let Some(c) = b.camera {
                let jc_t = b.d_camera.transpose();
                ne.u[c] += jc_t * b.d_camera;
                ne.g_cam[c] += jc_t * r;
                ne.w_by_point[b.point].push(ne.w.len());
                ne.w.push((c, b.point, jc_t * b.d_point));
            }
        }
        ne
    }

    /// Largest absolute gradient component.
    pub fn gradient_max(&self) -> f64 {
        self.g_cam
            .iter()
            .map(|g| g.amax())
            .chain(self.g_point.iter().map(|g| g.amax()))
            .fold(0.0, f64::max)
    }

    /// Solves `(H + lambda * diag(H)) delta = -g`.
    pub fn solve(&self, lambda: f64) -> Result<Step> {
        let damp3 = |m: &Matrix3<f64>| {
            let mut d = *m;
            for i in 0..3 {
                d[(i, i)] += lambda * m[(i, i)].max(MIN_DIAGONAL);
            }
            d
        };
        let v_inv: Vec<Matrix3<f64>> = self
            .v
            .iter()
            .map(|v| {
                damp3(v)
                    .cholesky()
                    .map(|c| c.inverse())
                    .ok_or(BaError::SingularSystem)
            })
            .collect::<Result<_>>()?;

        let n = 6 * self.n_free;
        let mut s = DMatrix::<f64>::zeros(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        for (c, u) in self.u.iter().enumerate() {
            let mut d = *u;
            for i in 0..6 {
                d[(i, i)] += lambda * u[(i, i)].max(MIN_DIAGONAL);
            }
            s.fixed_view_mut::<6, 6>(6 * c, 6 * c).copy_from(&d);
            rhs.fixed_rows_mut::<6>(6 * c).copy_from(&(-self.g_cam[c]));
        }
        for (p, members) in self.w_by_point.iter().enumerate() {
            let vi = &v_inv[p];
            let vi_g = vi * self.g_point[p];
            for &a in members {
                let (ca, _, wa) = &self.w[a];
                let wa_vi = wa * vi;
                let mut row = rhs.fixed_rows_mut::<6>(6 * ca);
                row += wa * vi_g;
                for &b in members {
                    let (cb, _, wb) = &self.w[b];
                    let mut blk = s.fixed_view_mut::<6, 6>(6 * ca, 6 * cb);
                    blk -= wa_vi * wb.transpose();
                }
            }
        }

        let delta_cam = if n == 0 {
            DVector::zeros(0)
        } else {
            s.cholesky().ok_or(BaError::SingularSystem)?.solve(&rhs)
        };
        let cameras: Vec<Vector6<f64>> = (0..self.n_free)
            .map(|c| delta_cam.fixed_rows::<6>(6 * c).into_owned())
            .collect();

        let mut points = Vec::with_capacity(self.v.len());
        for (p, members) in self.w_by_point.iter().enumerate() {
            let mut b = -self.g_point[p];
            for &a in members {
                let (ca, _, wa) = &self.w[a];
                b -= wa.transpose() * cameras[*ca];
            }
            points.push(v_inv[p] * b);
        }
        if cameras.iter().any(|c| !c.iter().all(|x| x.is_finite()))
            || points.iter().any(|p| !p.iter().all(|x| x.is_finite()))
        {
            return Err(BaError::SingularSystem);
        }
        Ok(Step { cameras, points })
    }
}

/// One damped Gauss-Newton step for residuals `r` with Jacobian `jac`, using
/// Marquardt scaling of the diagonal.
pub fn solve_normal_equations(
    jac: &Jacobian,
    residuals: &[Vector2<f64>],
    lambda: f64,
) -> Result<Step> {
    if !(lambda >= 0.0) {
        return Err(BaError::InvalidConfig(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    NormalEquations::build(jac, residuals).solve(lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle_adjust::problem::JacobianBlock;
    use nalgebra::{Matrix2x3, Matrix2x6};

    /// One fixed camera, two points observed through identity-like blocks.
    fn diagonal_problem() -> (Jacobian, Vec<Vector2<f64>>) {
        let blocks = vec![
            JacobianBlock {
                camera: None,
                point: 0,
                d_camera: Matrix2x6::zeros(),
                d_point: Matrix2x3::new(2.0, 0.0, 0.0, 0.0, 3.0, 0.0),
            },
            JacobianBlock {
                camera: None,
                point: 0,
                d_camera: Matrix2x6::zeros(),
                d_point: Matrix2x3::new(0.0, 0.0, 4.0, 0.0, 0.0, 0.0),
            },
        ];
        let r = vec![Vector2::new(1.0, 1.0), Vector2::new(2.0, 0.0)];
        (
            Jacobian {
                blocks,
                n_free_cameras: 0,
                n_points: 1,
            },
            r,
        )
    }

    #[test]
    fn diagonal_system_matches_closed_form() {
        let (j, r) = diagonal_problem();
        // H = diag(4, 9, 16), g = (2, 3, 8)
        for lambda in [0.0, 1e-3, 1.0, 10.0] {
            let step = solve_normal_equations(&j, &r, lambda).unwrap();
            let expected = Vector3::new(
                -2.0 / (4.0 * (1.0 + lambda)),
                -3.0 / (9.0 * (1.0 + lambda)),
                -8.0 / (16.0 * (1.0 + lambda)),
            );
            assert!((step.points[0] - expected).norm() < 1e-14, "{lambda}");
        }
    }

    #[test]
    fn heavy_damping_shrinks_the_step_monotonically() {
        let (j, r) = diagonal_problem();
        let mut last = f64::INFINITY;
        for e in 0..=12 {
            let n = solve_normal_equations(&j, &r, 10f64.powi(e))
                .unwrap()
                .norm();
            assert!(n < last);
            last = n;
        }
        assert!(last < 1e-11);
    }

    #[test]
    fn negative_lambda_is_rejected() {
        let (j, r) = diagonal_problem();
        assert!(solve_normal_equations(&j, &r, -1.0).is_err());
    }
}
