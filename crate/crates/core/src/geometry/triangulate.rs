use std::collections::HashSet;

use nalgebra::{DMatrix, Matrix3x4, RowVector4, Vector2, Vector3};

use super::{camera_index, Camera, GeometryError, Pose, Result, Track, MIN_DEPTH};

/// Singular-value ratio above which the DLT null space is not unique.
const DEGENERATE_RATIO: f64 = 1.0 - 1e-9;

/// Linear (DLT) triangulation from two or more calibrated views.
///
/// Each view contributes the two rows `x * P3 - P1` and `y * P3 - P2` of the
/// homogeneous system, written in normalized image coordinates with the world
/// frame re-centered and scaled on the camera centers. The solution is the right
/// singular vector of the smallest singular value.
pub fn triangulate(rays: &[(&Camera, &Pose, Vector2<f64>)]) -> Result<Vector3<f64>> {
    if rays.len() < 2 {
        return Err(GeometryError::DegenerateGeometry(format!(
            "triangulation needs at least 2 views, got {}",
            rays.len()
        )));
    }
    let mut seen = HashSet::with_capacity(rays.len());
    for (cam, _, _) in rays {
        if !seen.insert(cam.id.as_str()) {
            return Err(GeometryError::DegenerateGeometry(format!(
                "camera `{}` appears twice",
                cam.id
            )));
        }
    }

    // Similarity conditioning: X = scale * X' + mean.
    let n = rays.len() as f64;
    let mean = rays.iter().map(|(_, p, _)| p.center).sum::<Vector3<f64>>() / n;
    let spread = (rays
        .iter()
        .map(|(_, p, _)| (p.center - mean).norm_squared())
        .sum::<f64>()
        / n)
        .sqrt();
    let reference = mean.norm().max(1.0);
    if spread <= 1e-12 * reference {
        return Err(GeometryError::DegenerateGeometry(
            "all camera centers coincide (zero baseline)".into(),
        ));
    }
    let scale = spread;

    let mut a = DMatrix::<f64>::zeros(2 * rays.len(), 4);
    for (k, (cam, pose, pixel)) in rays.iter().enumerate() {
        let r = pose.rotation.to_rotation_matrix();
        let r = r.matrix();
        // P' = [R | -R C] * [s I, m; 0, 1] = [s R | R (m - C)]
        let t = r * (mean - pose.center);
        let mut p = Matrix3x4::<f64>::zeros();
        p.fixed_view_mut::<3, 3>(0, 0).copy_from(&(r * scale));
        p.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        let x = cam.intrinsics.normalize(pixel);
        let row_x: RowVector4<f64> = p.row(2) * x.x - p.row(0);
        let row_y: RowVector4<f64> = p.row(2) * x.y - p.row(1);
        a.row_mut(2 * k).copy_from(&row_x);
        a.row_mut(2 * k + 1).copy_from(&row_y);
    }

    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| GeometryError::DegenerateGeometry("SVD did not converge".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sv = |k: usize| svd.singular_values[order[k]];
    let (largest, second_smallest, smallest) = (sv(0), sv(2), sv(3));
    if second_smallest <= 1e-12 * largest || smallest / second_smallest > DEGENERATE_RATIO {
        return Err(GeometryError::DegenerateGeometry(format!(
            "solution not unique (singular values {second_smallest:e}, {smallest:e})"
        )));
    }
    let h = v_t.row(order[3]);
    if h[3].abs() <= 1e-12 * h.norm() {
        return Err(GeometryError::DegenerateGeometry(
            "triangulated point is at infinity".into(),
        ));
    }
    let point = Vector3::new(h[0], h[1], h[2]) / h[3] * scale + mean;

    for (_, pose, _) in rays {
        let depth = pose.to_camera(&point).z;
        if depth <= MIN_DEPTH {
            return Err(GeometryError::CheiralityViolation { depth });
        }
    }
    Ok(point)
}

/// Largest pairwise angle, in degrees, between the viewing rays
/// back-projected through a track's tiepoints from the initial poses.
///
/// Small values mean a short baseline relative to depth and an ill-posed point.
/// The rays come from the tiepoints rather than from `point_initial`, which is
/// itself unreliable when the baseline is short.
pub fn triangulation_angle(track: &Track, cameras: &[Camera]) -> f64 {
    let index = camera_index(cameras);
    let rays: Vec<Vector3<f64>> = track
        .observations
        .iter()
        .filter_map(|o| {
            index
                .get(o.camera_id.as_str())
                .map(|&i| (&cameras[i], o.pixel))
        })
        .map(|(c, px)| {
            let n = c.intrinsics.normalize(&px);
            (c.pose_initial.rotation.inverse() * Vector3::new(n.x, n.y, 1.0)).normalize()
        })
        .collect();
    let mut best = 0.0f64;
    for (i, a) in rays.iter().enumerate() {
        for b in &rays[i + 1..] {
            // atan2 stays accurate for nearly parallel rays, where acos does not
            let angle = a.cross(b).norm().atan2(a.dot(b));
            best = best.max(angle);
        }
    }
    best.to_degrees()
}
