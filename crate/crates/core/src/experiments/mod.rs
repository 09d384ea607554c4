//! End-to-end experiment runners: the damped spring (open-loop learning and
//! closed-loop control), the heat equation with a moving source, and the
//! kernel and certification reports. Runners return in-memory results; the
//! command-line front end serializes them.
//!
//! Every configuration field has a default, so an empty configuration
//! reproduces the reference scenario.

mod checks;
mod heat;
mod spring;

pub use checks::{run_certify, run_kernel_check, CertifyConfig, CertifyModel, KernelCheckConfig, KernelCheckResult, KernelRow};
pub use heat::{run_heat_control, HeatExperimentConfig, HeatRun, HeatResult, HeatSnapshot, SourcePath};
pub use spring::{
    run_spring_control, run_spring_open_loop, SpringConfig, SpringControlResult, SpringCost, SpringOpenLoopResult,
    SpringRow,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{argument, Result};

/// Name of the pseudo-random generator behind every noise stream.
pub const NOISE_GENERATOR: &str = "ChaCha8 (rand_chacha), standard normals by ziggurat (rand_distr)";

/// Smallest measurement noise the filters assume; keeps the innovation
/// covariance invertible for noiseless simulations.
pub const MIN_MODEL_NOISE_STD: f64 = 1e-6;

pub fn noise_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn model_noise_std(noise_std: f64) -> f64 {
    noise_std.max(MIN_MODEL_NOISE_STD)
}

pub(crate) fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(argument(msg()))
    }
}

pub(crate) fn rmse(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (a, b) in pairs {
        sum += (a - b) * (a - b);
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}
