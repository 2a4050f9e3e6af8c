//! Seeded synthetic scenes: a camera flying over a gently rough ground plane.
//!
//! Randomness comes from ChaCha8 seeded with `SyntheticConfig::seed`, so the
//! generated dataset is a pure function of the configuration.

use nalgebra::{Matrix3, Rotation3, Unit, UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetError, GroundTruth, Result, Segment};
use crate::geometry::{triangulate, Camera, Intrinsics, Observation, Pose, Track};

const IMAGE_WIDTH: u32 = 1280;
const IMAGE_HEIGHT: u32 = 960;
const FOCAL: f64 = 900.0;
const ALTITUDE: f64 = 10.0;
/// Angle between the optical axis and straight down.
const TILT_DEG: f64 = 40.0;
/// Distance between consecutive frames on straight legs.
const LEG_STEP: f64 = 2.0;
/// Distance between consecutive frames while turning.
const TURN_STEP: f64 = 0.04;
const LEG_FRAMES: usize = 10;
const TURN_FRAMES: usize = 5;
/// Half-range of the uniform ground relief.
const RELIEF: f64 = 0.5;
/// Tiepoints stay this many pixels inside the image border.
const BORDER: f64 = 16.0;
const MIN_DEPTH: f64 = 0.5;
const MAX_ATTEMPTS_PER_POINT: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trajectory {
    /// One straight pass.
    Straight,
    /// Straight legs joined by near-stationary 90 degree yaw turns.
    SharpTurns,
    /// A circle with the camera looking towards its middle.
    Loop,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PosePerturbation {
    /// Rotation error magnitude, degrees, about a random axis.
    pub rotation_deg: f64,
    /// Center error magnitude as a fraction of the mean camera-to-point distance.
    pub translation_frac: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_cameras: usize,
    pub trajectory: Trajectory,
    pub n_points: usize,
    pub pixel_noise_sigma: f64,
    pub n_outlier_tracks: usize,
    pub outlier_magnitude: f64,
    pub pose_perturbation: PosePerturbation,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_cameras: 20,
            trajectory: Trajectory::Straight,
            n_points: 500,
            pixel_noise_sigma: 0.5,
            n_outlier_tracks: 0,
            outlier_magnitude: 50.0,
            pose_perturbation: PosePerturbation::default(),
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(DatasetError::InfeasibleConfig(m.to_string()));
        if self.n_cameras < 2 && self.n_points > 0 {
            return bad("at least 2 cameras are needed to observe a point twice");
        }
        if !(self.pixel_noise_sigma >= 0.0 && self.pixel_noise_sigma.is_finite()) {
            return bad("pixel_noise_sigma must be finite and >= 0");
        }
        if !(self.outlier_magnitude >= 0.0 && self.outlier_magnitude.is_finite()) {
            return bad("outlier_magnitude must be finite and >= 0");
        }
        let p = &self.pose_perturbation;
        if !(p.rotation_deg >= 0.0 && p.translation_frac >= 0.0)
            || !p.rotation_deg.is_finite()
            || !p.translation_frac.is_finite()
        {
            return bad("pose perturbation must be finite and >= 0");
        }
        if self.n_outlier_tracks > self.n_points {
            return bad("more outlier tracks than points");
        }
        Ok(())
    }
}

fn intrinsics() -> Intrinsics {
    Intrinsics {
        fx: FOCAL,
        fy: FOCAL,
        cx: f64::from(IMAGE_WIDTH) / 2.0,
        cy: f64::from(IMAGE_HEIGHT) / 2.0,
        width: IMAGE_WIDTH,
        height: IMAGE_HEIGHT,
    }
}

/// Camera looking along horizontal direction `look`, tilted down by `TILT_DEG` from nadir.
fn oblique_pose(center: Vector3<f64>, look: Vector2<f64>) -> Pose {
    let (s, c) = TILT_DEG.to_radians().sin_cos();
    let look = Vector3::new(look.x, look.y, 0.0).normalize();
    let z_c = look * s - Vector3::z() * c;
    let x_c = look.cross(&Vector3::z()).normalize();
    let y_c = z_c.cross(&x_c);
    let m = Matrix3::from_rows(&[x_c.transpose(), y_c.transpose(), z_c.transpose()]);
    let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m));
    Pose::new(rotation, center)
}

fn heading(yaw: f64) -> Vector2<f64> {
    Vector2::new(yaw.cos(), yaw.sin())
}

fn trajectory(kind: Trajectory, n: usize) -> Vec<(Pose, Segment)> {
    match kind {
        Trajectory::Straight => (0..n)
            .map(|i| {
                let c = Vector3::new(i as f64 * LEG_STEP, 0.0, ALTITUDE);
                (oblique_pose(c, Vector2::x()), Segment::Straight)
            })
            .collect(),
        Trajectory::SharpTurns => {
            let mut out = Vec::with_capacity(n);
            let mut pos = Vector2::zeros();
            let mut yaw = 0.0f64;
            let mut turn_sign = 1.0;
            let yaw_step = std::f64::consts::FRAC_PI_2 / (TURN_FRAMES + 1) as f64;
            'outer: loop {
                for _ in 0..LEG_FRAMES {
                    if out.len() == n {
                        break 'outer;
                    }
                    let c = Vector3::new(pos.x, pos.y, ALTITUDE);
                    out.push((oblique_pose(c, heading(yaw)), Segment::Straight));
                    pos += heading(yaw) * LEG_STEP;
                }
                for _ in 0..TURN_FRAMES {
                    if out.len() == n {
                        break 'outer;
                    }
                    yaw += turn_sign * yaw_step;
                    pos += heading(yaw) * TURN_STEP;
                    let c = Vector3::new(pos.x, pos.y, ALTITUDE);
                    out.push((oblique_pose(c, heading(yaw)), Segment::Turn));
                }
                yaw += turn_sign * yaw_step;
                // alternate turn direction so the path zig-zags instead of closing
                turn_sign = -turn_sign;
            }
            out
        }
        Trajectory::Loop => {
            let radius = (n as f64 * LEG_STEP / std::f64::consts::TAU).max(2.0 * ALTITUDE);
            (0..n)
                .map(|i| {
                    let theta = i as f64 * std::f64::consts::TAU / n as f64;
                    let c = Vector3::new(radius * theta.cos(), radius * theta.sin(), ALTITUDE);
                    let inward = Vector2::new(-theta.cos(), -theta.sin());
                    (oblique_pose(c, inward), Segment::Straight)
                })
                .collect()
        }
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let n: f64 = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

fn inside(k: &Intrinsics, p: &Vector2<f64>, border: f64) -> bool {
    p.x >= border
        && p.y >= border
        && p.x < f64::from(k.width) - border
        && p.y < f64::from(k.height) - border
}

/// Generates a scene with ground truth, noisy tiepoints, optional gross
/// outliers and perturbed initial poses. Initial points are triangulated
/// from the perturbed poses.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Dataset> {
    config.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let k = intrinsics();
    let frames = trajectory(config.trajectory, config.n_cameras);
    let truth_poses: Vec<Pose> = frames.iter().map(|(p, _)| *p).collect();
    let segments: Vec<Segment> = frames.iter().map(|(_, s)| *s).collect();
    let width = (config.n_cameras.max(1) - 1).to_string().len().max(4);

    // Perturbation magnitudes are relative to the viewing distance at the image center.
    let view_distance = ALTITUDE / TILT_DEG.to_radians().cos();
    let rotation_error = config.pose_perturbation.rotation_deg.to_radians();
    let center_error = config.pose_perturbation.translation_frac * view_distance;
    let initial_poses: Vec<Pose> = truth_poses
        .iter()
        .map(|p| {
            let axis = Unit::new_unchecked(random_unit(&mut rng));
            let delta = UnitQuaternion::from_axis_angle(&axis, rotation_error);
            let shift = random_unit(&mut rng) * center_error;
            Pose::new(delta * p.rotation, p.center + shift)
        })
        .collect();

    let cameras: Vec<Camera> = initial_poses
        .iter()
        .enumerate()
        .map(|(i, pose)| {
            let id = format!("C{i:0width$}");
            Camera {
                image_ref: format!("images/{id}.png"),
                id,
                intrinsics: k,
                pose_initial: *pose,
                pose_final: None,
            }
        })
        .collect();

    let noise = Normal::new(0.0, config.pixel_noise_sigma.max(0.0))
        .map_err(|e| DatasetError::InfeasibleConfig(e.to_string()))?;
    let track_width = (config.n_points.max(1) - 1).to_string().len().max(5);
    let mut tracks = Vec::with_capacity(config.n_points);
    let mut truth_points = Vec::with_capacity(config.n_points);
    let mut attempts = 0usize;
    let budget = MAX_ATTEMPTS_PER_POINT * config.n_points.max(1);
    while tracks.len() < config.n_points {
        attempts += 1;
        if attempts > budget {
            return Err(DatasetError::InfeasibleConfig(format!(
                "only {} of {} points are visible in two or more views",
                tracks.len(),
                config.n_points
            )));
        }
        // seed the point from a random pixel of a random camera
        let seed_cam = rng.random_range(0..truth_poses.len());
        let pose = &truth_poses[seed_cam];
        let u = rng.random_range(BORDER..f64::from(k.width) - BORDER);
        let v = rng.random_range(BORDER..f64::from(k.height) - BORDER);
        let ray = pose.rotation.inverse() * Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
        let relief: f64 = rng.random_range(-RELIEF..RELIEF);
        if ray.z >= -1e-6 {
            continue;
        }
        let t = -pose.center.z / ray.z;
        let mut point = pose.center + ray * t;
        point.z = relief;

        let mut observations = Vec::new();
        for (j, truth) in truth_poses.iter().enumerate() {
            let pc = truth.to_camera(&point);
            if pc.z < MIN_DEPTH {
                continue;
            }
            let Ok(px) = k.project_camera_point(&pc) else {
                continue;
            };
            if !inside(&k, &px, BORDER) {
                continue;
            }
            let noisy = px + Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng));
            observations.push(Observation {
                camera_id: cameras[j].id.clone(),
                pixel: noisy,
            });
        }
        if observations.len() < 2 {
            continue;
        }
        let Ok(point_initial) = triangulate_track(&cameras, &observations) else {
            continue;
        };
        tracks.push(Track {
            id: format!("T{:0track_width$}", tracks.len()),
            observations,
            point_initial,
            point_final: None,
        });
        truth_points.push(point);
    }

    let mut outlier_tracks = Vec::with_capacity(config.n_outlier_tracks);
    let mut order: Vec<usize> = (0..tracks.len()).collect();
    // partial Fisher-Yates: candidate order for outlier injection
    for i in 0..order.len() {
        let j = rng.random_range(i..order.len());
        order.swap(i, j);
    }
    for &ti in &order {
        if outlier_tracks.len() == config.n_outlier_tracks {
            break;
        }
        if let Some(track) =
            displace_one_observation(&mut rng, &cameras, &tracks[ti], config.outlier_magnitude)
        {
            outlier_tracks.push(track.id.clone());
            tracks[ti] = track;
        }
    }
    if outlier_tracks.len() < config.n_outlier_tracks {
        return Err(DatasetError::InfeasibleConfig(format!(
            "could only place {} of {} outlier tracks",
            outlier_tracks.len(),
            config.n_outlier_tracks
        )));
    }
    outlier_tracks.sort();

    let name = format!("synthetic-{:?}-{}", config.trajectory, config.seed).to_lowercase();
    Ok(Dataset {
        name,
        cameras,
        tracks,
        ground_truth: Some(GroundTruth {
            poses: truth_poses,
            points: truth_points,
            segments,
            outlier_tracks,
        }),
    })
}

fn triangulate_track(cameras: &[Camera], observations: &[Observation]) -> Result<Vector3<f64>, ()> {
    let rays: Vec<_> = observations
        .iter()
        .map(|o| {
            // synthetic camera ids are positional
            let cam = cameras.iter().find(|c| c.id == o.camera_id).ok_or(())?;
            Ok((cam, &cam.pose_initial, o.pixel))
        })
        .collect::<Result<_, ()>>()?;
    triangulate(&rays).map_err(|_| ())
}

/// Moves one tiepoint of `track` by `magnitude` pixels in a random direction,
/// staying inside the image, and re-triangulates.
fn displace_one_observation(
    rng: &mut ChaCha8Rng,
    cameras: &[Camera],
    track: &Track,
    magnitude: f64,
) -> Option<Track> {
    let k = intrinsics();
    for _ in 0..32 {
        let oi = rng.random_range(0..track.observations.len());
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let mut t = track.clone();
        let o = &mut t.observations[oi];
        o.pixel += Vector2::new(angle.cos(), angle.sin()) * magnitude;
        if !inside(&k, &o.pixel, 0.0) {
            continue;
        }
        let Ok(p) = triangulate_track(cameras, &t.observations) else {
            continue;
        };
        t.point_initial = p;
        return Some(t);
    }
    None
}
