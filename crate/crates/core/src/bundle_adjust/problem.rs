//! Indexing of a dataset into solver form, residual evaluation and the
//! analytic Jacobian.

use nalgebra::{Matrix2x3, Matrix2x6, UnitQuaternion, Vector2, Vector3, Vector6};

use super::{BaError, Result};
use crate::dataset::Dataset;
use crate::geometry::{camera_index, GeometryError, Intrinsics, Pose};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Obs {
    pub camera: usize,
    pub point: usize,
    pub pixel: Vector2<f64>,
}

/// The parameters being optimized: one pose per camera and one point per track.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleState {
    pub poses: Vec<Pose>,
    pub points: Vec<Vector3<f64>>,
}

/// Observation structure of a dataset in index form.
///
/// Free cameras are parameterized by a 6-vector: an axis-angle increment
/// applied on the left of the world-to-camera rotation, followed by a shift of
/// the camera center. Points are parameterized by their 3 coordinates.
#[derive(Debug, Clone)]
pub struct BundleProblem {
    pub(crate) intrinsics: Vec<Intrinsics>,
    pub(crate) obs: Vec<Obs>,
    /// Parameter block of each camera, `None` when the camera is held fixed.
    pub(crate) free_index: Vec<Option<usize>>,
    pub(crate) n_free: usize,
    pub(crate) n_points: usize,
}

impl BundleProblem {
    pub fn new(dataset: &Dataset, fix_first_camera: bool) -> Result<Self> {
        let index = camera_index(&dataset.cameras);
        let mut obs = Vec::with_capacity(dataset.observation_count());
        for (pi, track) in dataset.tracks.iter().enumerate() {
            if !track.point_initial.iter().all(|v| v.is_finite()) {
                return Err(BaError::InvalidInput(format!(
                    "track `{}` has a non-finite initial point",
                    track.id
                )));
            }
            for o in &track.observations {
                let camera = *index
                    .get(o.camera_id.as_str())
                    .ok_or_else(|| GeometryError::UnknownCamera(o.camera_id.clone()))?;
                obs.push(Obs {
                    camera,
                    point: pi,
                    pixel: o.pixel,
                });
            }
        }
        if obs.is_empty() {
            return Err(BaError::EmptyProblem);
        }
        let mut n_free = 0;
        let free_index = (0..dataset.cameras.len())
            .map(|i| {
                if fix_first_camera && i == 0 {
                    None
                } else {
                    n_free += 1;
                    Some(n_free - 1)
                }
            })
            .collect();
        Ok(Self {
            intrinsics: dataset.cameras.iter().map(|c| c.intrinsics).collect(),
            obs,
            free_index,
            n_free,
            n_points: dataset.tracks.len(),
        })
    }

    pub fn initial_state(dataset: &Dataset) -> BundleState {
        BundleState {
            poses: dataset.cameras.iter().map(|c| c.pose_initial).collect(),
            points: dataset.tracks.iter().map(|t| t.point_initial).collect(),
        }
    }

    pub fn n_observations(&self) -> usize {
        self.obs.len()
    }

    pub fn n_free_cameras(&self) -> usize {
        self.n_free
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Reprojection minus tiepoint, one per observation in track order.
    pub fn residuals(&self, state: &BundleState) -> Result<Vec<Vector2<f64>>> {
        self.obs
            .iter()
            .map(|o| {
                let pc = state.poses[o.camera].to_camera(&state.points[o.point]);
                Ok(self.intrinsics[o.camera].project_camera_point(&pc)? - o.pixel)
            })
            .collect()
    }

    /// Sum of squared residual norms, accumulated in observation order.
    pub fn cost(&self, state: &BundleState) -> Result<f64> {
        let mut total = 0.0;
        for o in &self.obs {
            let pc = state.poses[o.camera].to_camera(&state.points[o.point]);
            total +=
                (self.intrinsics[o.camera].project_camera_point(&pc)? - o.pixel).norm_squared();
        }
        Ok(total)
    }

    pub fn jacobian(&self, state: &BundleState) -> Result<Jacobian> {
        let mut blocks = Vec::with_capacity(self.obs.len());
        for o in &self.obs {
            let pose = &state.poses[o.camera];
            let k = &self.intrinsics[o.camera];
            let pc = pose.to_camera(&state.points[o.point]);
            if pc.z <= crate::geometry::MIN_DEPTH {
                return Err(GeometryError::CheiralityViolation { depth: pc.z }.into());
            }
            let iz = 1.0 / pc.z;
            let d_proj = Matrix2x3::new(
                k.fx * iz,
                0.0,
                -k.fx * pc.x * iz * iz,
                0.0,
                k.fy * iz,
                -k.fy * pc.y * iz * iz,
            );
            let r = pose.rotation.to_rotation_matrix().into_inner();
            let d_point = d_proj * r;
            let d_camera = self.free_index[o.camera].map(|_| {
                let mut m = Matrix2x6::zeros();
                // d(Exp(w) pc)/dw at w = 0 is -[pc]x
                m.fixed_view_mut::<2, 3>(0, 0)
                    .copy_from(&(d_proj * -pc.cross_matrix()));
                m.fixed_view_mut::<2, 3>(0, 3).copy_from(&(-d_point));
                m
            });
            blocks.push(JacobianBlock {
                camera: self.free_index[o.camera],
                point: o.point,
                d_camera: d_camera.unwrap_or_else(Matrix2x6::zeros),
                d_point,
            });
        }
        Ok(Jacobian {
            blocks,
            n_free_cameras: self.n_free,
            n_points: self.n_points,
        })
    }

    /// Applies a parameter step to a copy of `state`.
    pub fn apply_step(&self, state: &BundleState, step: &Step) -> BundleState {
        let mut next = state.clone();
        for (cam, free) in self.free_index.iter().enumerate() {
            if let Some(fi) = free {
                next.poses[cam] = apply_camera_delta(&state.poses[cam], &step.cameras[*fi]);
            }
        }
        for (p, d) in next.points.iter_mut().zip(&step.points) {
            *p += d;
        }
        next
    }
}

pub(crate) fn apply_camera_delta(pose: &Pose, delta: &Vector6<f64>) -> Pose {
    let w = Vector3::new(delta[0], delta[1], delta[2]);
    let mut rotation = UnitQuaternion::from_scaled_axis(w) * pose.rotation;
    rotation.renormalize_fast();
    Pose::new(
        rotation,
        pose.center + Vector3::new(delta[3], delta[4], delta[5]),
    )
}

/// Derivatives of one observation's residual.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianBlock {
    /// Free-camera parameter block, `None` for a fixed camera (no camera block).
    pub camera: Option<usize>,
    pub point: usize,
    /// Columns: rotation increment (3), center (3). Zero when `camera` is `None`.
    pub d_camera: Matrix2x6<f64>,
    pub d_point: Matrix2x3<f64>,
}

/// Block-sparse Jacobian: each observation row pair touches only its own
/// camera and point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub blocks: Vec<JacobianBlock>,
    pub n_free_cameras: usize,
    pub n_points: usize,
}

impl Jacobian {
    pub fn n_params(&self) -> usize {
        6 * self.n_free_cameras + 3 * self.n_points
    }

    /// Dense layout: free cameras first, then points.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(2 * self.blocks.len(), self.n_params());
        let point_base = 6 * self.n_free_cameras;
        for (i, b) in self.blocks.iter().enumerate() {
            if let Some(c) = b.camera {
                m.fixed_view_mut::<2, 6>(2 * i, 6 * c)
                    .copy_from(&b.d_camera);
            }
            m.fixed_view_mut::<2, 3>(2 * i, point_base + 3 * b.point)
                .copy_from(&b.d_point);
        }
        m
    }
}

/// A parameter update in block form.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub cameras: Vec<Vector6<f64>>,
    pub points: Vec<Vector3<f64>>,
}

impl Step {
    pub fn norm(&self) -> f64 {
        (self.cameras.iter().map(|c| c.norm_squared()).sum::<f64>()
            + self.points.iter().map(|p| p.norm_squared()).sum::<f64>())
        .sqrt()
    }

    /// Dense layout matching [`Jacobian::to_dense`].
    pub fn to_dense(&self) -> nalgebra::DVector<f64> {
        let mut v = nalgebra::DVector::zeros(6 * self.cameras.len() + 3 * self.points.len());
        for (i, c) in self.cameras.iter().enumerate() {
            v.fixed_rows_mut::<6>(6 * i).copy_from(c);
        }
        let base = 6 * self.cameras.len();
        for (i, p) in self.points.iter().enumerate() {
            v.fixed_rows_mut::<3>(base + 3 * i).copy_from(p);
        }
        v
    }
}
