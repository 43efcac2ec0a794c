//! Central finite-difference verification of analytic gradients.
//!
//! The loss closure must be deterministic: frozen batch, frozen negatives
//! and frozen global state. A closure that resamples on every call makes
//! the report meaningless.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::params::ParamTensors;

#[derive(Debug, Clone, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    /// Coordinate with the largest error.
    pub worst_index: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradReport {
    pub tensors: Vec<TensorCheck>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub eps: f64,
    pub tolerance: f64,
    /// Coordinates sampled per tensor; smaller tensors are checked fully.
    pub coords_per_tensor: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            tolerance: 1e-4,
            coords_per_tensor: 32,
            seed: 0,
        }
    }
}

/// `|a − n| / max(1, |a|, |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

pub fn finite_difference_check<P, F>(
    mut loss: F,
    params: &P,
    analytic: &P,
    config: GradCheckConfig,
) -> GradReport
where
    P: ParamTensors + Clone,
    F: FnMut(&P) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut probe = params.clone();
    let shapes: Vec<(String, usize)> = params
        .tensors()
        .iter()
        .map(|(n, t)| (n.clone(), t.len()))
        .collect();
    let analytic = analytic.tensors();
    let mut tensors = Vec::new();
    for (ti, (name, len)) in shapes.into_iter().enumerate() {
        if len == 0 {
            continue;
        }
        let coords: Vec<usize> = if len <= config.coords_per_tensor {
            (0..len).collect()
        } else {
            let mut v =
                rand::seq::index::sample(&mut rng, len, config.coords_per_tensor).into_vec();
            v.sort_unstable();
            v
        };
        let mut worst = (0.0f64, 0usize);
        for &i in &coords {
            let orig = params.tensors()[ti].1[i];
            probe.tensors_mut()[ti].1[i] = orig + config.eps;
            let up = loss(&probe);
            probe.tensors_mut()[ti].1[i] = orig - config.eps;
            let down = loss(&probe);
            probe.tensors_mut()[ti].1[i] = orig;
            let numeric = (up - down) / (2.0 * config.eps);
            let err = relative_error(analytic[ti].1[i], numeric);
            // NaN compares false; force it to register as a failure.
            if err > worst.0 || err.is_nan() {
                worst = (if err.is_nan() { f64::INFINITY } else { err }, i);
            }
        }
        tensors.push(TensorCheck {
            name,
            checked: coords.len(),
            max_rel_error: worst.0,
            worst_index: worst.1,
        });
    }
    let max_rel_error = tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max);
    GradReport {
        passed: max_rel_error < config.tolerance,
        tensors,
        max_rel_error,
        tolerance: config.tolerance,
    }
}
