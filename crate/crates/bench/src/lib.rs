//! Fixtures shared by the criterion benches.

use dynbc_core::{Problem, Shape};

/// Disk with 32 boundary segments and drift, refined `refinement` times.
pub fn disk_problem(refinement: usize) -> Problem {
    Problem::uniform(
        Shape::Disk {
            radius: 1.0,
            n_segments: 32,
        },
        refinement,
        1.0,
        0.5,
        [0.6, 0.8],
        [0.5, 0.0],
        1.0,
        -0.5,
    )
    .expect("valid benchmark problem")
}

pub fn smooth_state(p: &Problem) -> Vec<f64> {
    p.disc.interpolate(|x, y| 1.0 + x - 0.5 * y * y)
}
