//! Seeded synthetic battles: Euler–Maruyama integration of the attrition
//! equations with prepoint coefficients.
//!
//! Run `r` of an ensemble draws its noise from a ChaCha8 stream seeded with
//! [`run_seed`]`(master_seed, r)`, so any run can be regenerated on its own
//! and runs can be generated in any order or in parallel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CoefficientSet, ModelSpec, StateVector};
use crate::series::{Ensemble, Trajectory};

/// How a substep applies the noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum StepMode {
    /// `m + g h + z m sqrt(h) xi`, floored.
    #[default]
    Euler,
    /// Exact log-normal update of `X = ln m` with the Ito correction; counts
    /// stay positive.
    LogNormal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub spec: ModelSpec,
    pub theta: CoefficientSet,
    pub initial: StateVector,
    pub n_runs: usize,
    pub n_epochs: usize,
    pub substeps_per_epoch: usize,
    pub master_seed: u64,
    pub count_floor: f64,
    pub mode: StepMode,
}

impl SimConfig {
    /// janus5 at the reference coefficients: 6 runs of 10 five-minute epochs.
    pub fn janus5(master_seed: u64) -> Self {
        Self {
            spec: ModelSpec::janus5(),
            theta: CoefficientSet::janus5_reference(),
            initial: StateVector::janus5_initial(),
            n_runs: 6,
            n_epochs: 10,
            substeps_per_epoch: 10,
            master_seed,
            count_floor: 0.0,
            mode: StepMode::Euler,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_runs < 1 || self.n_epochs < 1 || self.substeps_per_epoch < 1 {
            return Err(Error::Config(format!(
                "runs, epochs and substeps must be >= 1 (got {}, {}, {})",
                self.n_runs, self.n_epochs, self.substeps_per_epoch
            )));
        }
        if !(self.count_floor.is_finite() && self.count_floor >= 0.0) {
            return Err(Error::Config(format!("count floor must be >= 0, got {}", self.count_floor)));
        }
        self.initial.validate(&self.spec)?;
        if !self.theta.conforms_to(&self.spec) {
            return Err(Error::Config("coefficients do not match the model".into()));
        }
        if self.mode == StepMode::LogNormal && self.initial.m.iter().any(|&m| m <= 0.0) {
            return Err(Error::Config("log-normal stepping needs positive initial counts".into()));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer applied to `master_seed ^ (r * golden)`; the stream
/// seed of run `r`.
pub fn run_seed(master_seed: u64, run: u64) -> u64 {
    let mut x = master_seed ^ run.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// One Euler–Maruyama step of length `h`.
pub fn step(
    state: &StateVector,
    theta: &CoefficientSet,
    spec: &ModelSpec,
    h: f64,
    draws: &[f64],
    count_floor: f64,
) -> Result<StateVector> {
    spec.check(&state.m, theta)?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Usage(format!("step length must be positive, got {h}")));
    }
    check_draws(draws, state.dim())?;
    let mut g = vec![0.0; state.dim()];
    let mut m = state.m.clone();
    euler_in_place(spec, theta, &mut m, &mut g, h, draws, count_floor);
    Ok(StateVector::new(state.t + h, m))
}

/// Log-normal step: `ln m' = ln m + (g/m - z^2/2) h + z sqrt(h) xi`.
pub fn step_lognormal(
    state: &StateVector,
    theta: &CoefficientSet,
    spec: &ModelSpec,
    h: f64,
    draws: &[f64],
) -> Result<StateVector> {
    spec.check(&state.m, theta)?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Usage(format!("step length must be positive, got {h}")));
    }
    check_draws(draws, state.dim())?;
    if state.m.iter().any(|&m| m <= 0.0) {
        return Err(Error::Domain("log-normal step needs positive counts".into()));
    }
    let mut g = vec![0.0; state.dim()];
    let mut m = state.m.clone();
    lognormal_in_place(spec, theta, &mut m, &mut g, h, draws);
    Ok(StateVector::new(state.t + h, m))
}

fn check_draws(draws: &[f64], n: usize) -> Result<()> {
    if draws.len() != n {
        return Err(Error::Input(format!("expected {n} noise draws, got {}", draws.len())));
    }
    if draws.iter().any(|d| !d.is_finite()) {
        return Err(Error::Input("noise draw is not finite".into()));
    }
    Ok(())
}

fn euler_in_place(
    spec: &ModelSpec,
    theta: &CoefficientSet,
    m: &mut [f64],
    g: &mut [f64],
    h: f64,
    draws: &[f64],
    floor: f64,
) {
    spec.drift_into(m, theta, g);
    let sqrt_h = h.sqrt();
    for u in 0..m.len() {
        let z = spec.z_of(theta, u);
        let next = m[u] + g[u] * h + z * m[u] * sqrt_h * draws[u];
        m[u] = next.max(floor);
    }
}

fn lognormal_in_place(spec: &ModelSpec, theta: &CoefficientSet, m: &mut [f64], g: &mut [f64], h: f64, draws: &[f64]) {
    spec.drift_into(m, theta, g);
    let sqrt_h = h.sqrt();
    for u in 0..m.len() {
        let z = spec.z_of(theta, u);
        let x = m[u].ln() + (g[u] / m[u] - 0.5 * z * z) * h + z * sqrt_h * draws[u];
        m[u] = x.exp();
    }
}

/// Trajectory of run `run_index`: `n_epochs + 1` states at `t = k dt`.
pub fn run(config: &SimConfig, run_index: usize) -> Result<Trajectory> {
    config.validate()?;
    Ok(run_unchecked(config, run_index))
}

fn run_unchecked(config: &SimConfig, run_index: usize) -> Trajectory {
    let spec = &config.spec;
    let n = spec.n_units();
    let dt = spec.dt();
    let h = dt / config.substeps_per_epoch as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed(config.master_seed, run_index as u64));
    let mut m = config.initial.m.clone();
    let mut g = vec![0.0; n];
    let mut draws = vec![0.0; n];
    let t0 = config.initial.t;
    let mut states = Vec::with_capacity(config.n_epochs + 1);
    states.push(StateVector::new(t0, m.clone()));
    for epoch in 1..=config.n_epochs {
        for _ in 0..config.substeps_per_epoch {
            for d in draws.iter_mut() {
                *d = StandardNormal.sample(&mut rng);
            }
            match config.mode {
                StepMode::Euler => euler_in_place(spec, &config.theta, &mut m, &mut g, h, &draws, config.count_floor),
                StepMode::LogNormal => lognormal_in_place(spec, &config.theta, &mut m, &mut g, h, &draws),
            }
        }
        states.push(StateVector::new(t0 + epoch as f64 * dt, m.clone()));
    }
    Trajectory::new(run_index as u32, states)
}

/// All `n_runs` trajectories. Runs are generated in parallel; the result
/// does not depend on the number of worker threads.
pub fn ensemble(config: &SimConfig) -> Result<Ensemble> {
    use rayon::prelude::*;
    config.validate()?;
    let runs = (0..config.n_runs)
        .into_par_iter()
        .map(|r| run_unchecked(config, r))
        .collect();
    Ok(Ensemble::new(runs))
}
