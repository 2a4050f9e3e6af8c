#![allow(dead_code)]

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use vector_core::dataset::{generate_synthetic, PosePerturbation, SyntheticConfig};
use vector_core::{Camera, Dataset, Intrinsics, Pose};

pub fn intrinsics() -> Intrinsics {
    Intrinsics {
        fx: 900.0,
        fy: 880.0,
        cx: 640.0,
        cy: 480.0,
        width: 1280,
        height: 960,
    }
}

/// A camera at `center` looking along world +z.
pub fn camera(id: &str, center: Vector3<f64>) -> Camera {
    Camera {
        id: id.into(),
        image_ref: format!("{id}.png"),
        intrinsics: intrinsics(),
        pose_initial: Pose::new(UnitQuaternion::identity(), center),
        pose_final: None,
    }
}

/// Projection written out scalar by scalar from the quaternion components.
pub fn project_by_hand(c: &Camera, pose: &Pose, p: &Vector3<f64>) -> Vector2<f64> {
    let q = pose.rotation.quaternion();
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    let r = [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ];
    let d = [
        p.x - pose.center.x,
        p.y - pose.center.y,
        p.z - pose.center.z,
    ];
    let cam: Vec<f64> = (0..3)
        .map(|i| r[i][0] * d[0] + r[i][1] * d[1] + r[i][2] * d[2])
        .collect();
    let k = &c.intrinsics;
    Vector2::new(k.fx * cam[0] / cam[2] + k.cx, k.fy * cam[1] / cam[2] + k.cy)
}

pub fn perturbed(
    n_cameras: usize,
    n_points: usize,
    rotation_deg: f64,
    translation_frac: f64,
) -> SyntheticConfig {
    SyntheticConfig {
        n_cameras,
        n_points,
        pose_perturbation: PosePerturbation {
            rotation_deg,
            translation_frac,
        },
        ..SyntheticConfig::default()
    }
}

pub fn synth(cfg: &SyntheticConfig) -> Dataset {
    generate_synthetic(cfg).unwrap()
}
