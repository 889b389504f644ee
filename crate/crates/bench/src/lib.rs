//! Shared fixtures for the benchmarks.

use attrition_core::simulator::ensemble;
use attrition_core::{Ensemble, SimConfig};

/// janus5 at the reference coefficients with `runs` runs.
pub fn janus5_ensemble(runs: usize, seed: u64) -> Ensemble {
    let mut cfg = SimConfig::janus5(seed);
    cfg.n_runs = runs;
    ensemble(&cfg).expect("reference config is valid")
}

pub fn rastrigin(x: &[f64]) -> f64 {
    x.iter()
        .map(|v| v * v - 10.0 * (2.0 * std::f64::consts::PI * v).cos() + 10.0)
        .sum()
}
