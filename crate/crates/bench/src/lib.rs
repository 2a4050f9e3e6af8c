//! Fixtures shared by the benchmarks.

use vector_core::dataset::PosePerturbation;
use vector_core::{generate_synthetic, Dataset, SyntheticConfig};

/// A perturbed straight-line scene with 0.5 px noise.
pub fn scene(n_cameras: usize, n_points: usize) -> Dataset {
    generate_synthetic(&SyntheticConfig {
        n_cameras,
        n_points,
        pose_perturbation: PosePerturbation {
            rotation_deg: 2.0,
            translation_frac: 0.05,
        },
        ..SyntheticConfig::default()
    })
    .expect("feasible config")
}
