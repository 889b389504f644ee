//! Adaptive simulated annealing over a bounded box.
//!
//! Candidates come from the very-fast-reannealing generator: each coordinate
//! moves by `y (B - A)` where
//!
//! ```text
//! y = sgn(u - 1/2) T ((1 + 1/T)^|2u - 1| - 1),   u ~ U(0, 1)
//! ```
//!
//! and `T_i(k) = T0_i exp(-c_i k_i^(1/D))`. Acceptance is Metropolis at a
//! separately annealed temperature. Every `reanneal_every` acceptances the
//! per-parameter temperatures are rescaled by the cost sensitivity at the
//! best point, so stiff directions anneal faster than flat ones.
//!
//! Only cost differences enter the accept/reject decisions, the initial
//! acceptance temperature and the reannealing, so shifting the cost by a
//! constant leaves the search path unchanged whenever the shifted
//! differences are exact in floating point.
//!
//! The random stream is ChaCha8 seeded from `AsaConfig::seed`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Cost assigned to an infeasible or non-finite candidate.
pub const INFEASIBLE_COST: f64 = 1e30;

const MAX_REDRAWS: usize = 1000;
const SENSITIVITY_FLOOR: f64 = 1e-12;
const PROBE_COUNT: usize = 10;

/// Default annealing scale for a `dim`-parameter problem,
/// `c = -ln(1e-5) exp(-ln(100) / D)`: temperatures fall to `1e-5 T0` once the
/// annealing index reaches `100`.
pub fn default_annealing_scale(dim: usize) -> f64 {
    -(1e-5f64).ln() * (-(100f64).ln() / dim as f64).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsaConfig {
    /// Initial generating temperature per parameter.
    pub t0_gen: Vec<f64>,
    /// Annealing-scale control per parameter.
    pub c: Vec<f64>,
    /// Annealing-scale control of the acceptance temperature.
    pub c_accept: f64,
    /// `None` derives it from the mean |cost change| of a few probe
    /// candidates around the starting point.
    pub t0_accept: Option<f64>,
    pub reanneal_every: u64,
    pub max_generated: u64,
    pub cost_repeat_eps: f64,
    pub cost_repeat_count: u32,
    pub seed: u64,
    /// Starting point; the box centre when `None`.
    pub initial: Option<Vec<f64>>,
    /// Keep the accept/reject decision sequence and accepted points.
    pub record_history: bool,
}

impl AsaConfig {
    pub fn new(dim: usize, seed: u64) -> Self {
        let c = default_annealing_scale(dim.max(1));
        Self {
            t0_gen: vec![1.0; dim],
            c: vec![c; dim],
            c_accept: c,
            t0_accept: None,
            reanneal_every: 100,
            max_generated: 200_000,
            cost_repeat_eps: 1e-8,
            cost_repeat_count: 8,
            seed,
            initial: None,
            record_history: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.t0_gen.len()
    }

    pub fn validate(&self, bounds: &[(f64, f64)]) -> Result<()> {
        let d = bounds.len();
        if d == 0 {
            return Err(Error::Config("at least one parameter is required".into()));
        }
        if self.t0_gen.len() != d || self.c.len() != d {
            return Err(Error::Config(format!(
                "config is for {} parameters, bounds have {d}",
                self.t0_gen.len()
            )));
        }
        if let Some((i, _)) = bounds
            .iter()
            .enumerate()
            .find(|(_, (a, b))| !(a.is_finite() && b.is_finite() && a < b))
        {
            return Err(Error::Config(format!("bounds of parameter {i} are not a finite interval")));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !self.t0_gen.iter().chain(&self.c).all(|&v| positive(v)) || !positive(self.c_accept) {
            return Err(Error::Config("temperatures and annealing scales must be positive".into()));
        }
        if let Some(t) = self.t0_accept {
            if !positive(t) {
                return Err(Error::Config(format!("acceptance temperature must be positive, got {t}")));
            }
        }
        if self.reanneal_every < 1 || self.max_generated < 1 || self.cost_repeat_count < 1 {
            return Err(Error::Config("budgets and intervals must be >= 1".into()));
        }
        if !positive(self.cost_repeat_eps) {
            return Err(Error::Config("cost_repeat_eps must be positive".into()));
        }
        if let Some(x0) = &self.initial {
            if x0.len() != d || x0.iter().zip(bounds).any(|(x, (a, b))| !(x >= a && x <= b)) {
                return Err(Error::Config("initial point must lie inside the bounds".into()));
            }
        }
        Ok(())
    }
}

/// One step of the generating distribution for a uniform draw `u` at
/// temperature `exp(ln_t)`; the result lies in `[-1, 1]`.
pub fn vfsr_step(u: f64, ln_t: f64) -> f64 {
    let a = (2.0 * u - 1.0).abs();
    if a == 0.0 {
        return 0.0;
    }
    // ln(1 + 1/T) without forming 1/T
    let log_span = if ln_t < -30.0 {
        -ln_t
    } else {
        (-ln_t).exp().ln_1p()
    };
    let y = (ln_t + a * log_span).exp() - ln_t.exp();
    y.min(1.0).copysign(u - 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub generated: u64,
    pub accepted: u64,
    pub best_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Budget,
    CostRepeat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsaResult {
    pub best: Vec<f64>,
    pub best_cost: f64,
    pub generated: u64,
    pub accepted: u64,
    pub rejected: u64,
    /// Cost evaluations including reannealing probes.
    pub evaluations: u64,
    pub trace: Vec<TracePoint>,
    pub termination: Termination,
    /// Accept/reject decisions in order (when recorded).
    pub decisions: Vec<bool>,
    /// Accepted points in order (when recorded).
    pub path: Vec<Vec<f64>>,
}

/// Annealing state. [`minimize`] drives it; the individual steps are public
/// for testing and custom loops.
#[derive(Debug, Clone)]
pub struct AsaState {
    bounds: Vec<(f64, f64)>,
    ln_t0_gen: Vec<f64>,
    c: Vec<f64>,
    c_accept: f64,
    inv_dim: f64,
    pub k_gen: Vec<f64>,
    ln_t0_accept: f64,
    pub k_accept: f64,
    pub current: Vec<f64>,
    pub current_cost: f64,
    pub best: Vec<f64>,
    pub best_cost: f64,
    rng: ChaCha8Rng,
    pub generated: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub evaluations: u64,
    pub trace: Vec<TracePoint>,
    // |cost change| of feasible candidates since the last reanneal
    delta_sum: f64,
    delta_count: u64,
}

fn feasible(cost: f64) -> f64 {
    if cost.is_finite() && cost < INFEASIBLE_COST {
        cost
    } else {
        INFEASIBLE_COST
    }
}

impl AsaState {
    /// Fresh state at `x0` with known cost; acceptance temperature `t0_accept`.
    pub fn new(config: &AsaConfig, bounds: &[(f64, f64)], x0: Vec<f64>, cost0: f64, t0_accept: f64) -> Self {
        Self {
            bounds: bounds.to_vec(),
            ln_t0_gen: config.t0_gen.iter().map(|t| t.ln()).collect(),
            c: config.c.clone(),
            c_accept: config.c_accept,
            inv_dim: 1.0 / bounds.len() as f64,
            k_gen: vec![0.0; bounds.len()],
            ln_t0_accept: t0_accept.ln(),
            k_accept: 0.0,
            best: x0.clone(),
            best_cost: cost0,
            current: x0,
            current_cost: cost0,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            generated: 0,
            accepted: 0,
            rejected: 0,
            evaluations: 1,
            trace: vec![TracePoint {
                generated: 0,
                accepted: 0,
                best_cost: cost0,
            }],
            delta_sum: 0.0,
            delta_count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    /// `ln T_i` at the current annealing index.
    pub fn ln_generating_temperature(&self, i: usize) -> f64 {
        self.ln_t0_gen[i] - self.c[i] * self.k_gen[i].powf(self.inv_dim)
    }

    pub fn generating_temperature(&self, i: usize) -> f64 {
        self.ln_generating_temperature(i).exp()
    }

    pub fn ln_acceptance_temperature(&self) -> f64 {
        self.ln_t0_accept - self.c_accept * self.k_accept.powf(self.inv_dim)
    }

    pub fn acceptance_temperature(&self) -> f64 {
        self.ln_acceptance_temperature().exp()
    }

    /// Draws a candidate around the current point. Each coordinate is
    /// redrawn until it lands in its interval, and clamped after
    /// [`MAX_REDRAWS`] misses.
    pub fn generate_candidate(&mut self) -> Vec<f64> {
        let mut cand = self.current.clone();
        for i in 0..self.dim() {
            let (a, b) = self.bounds[i];
            let ln_t = self.ln_generating_temperature(i);
            let mut x = f64::NAN;
            for _ in 0..MAX_REDRAWS {
                let u: f64 = self.rng.random();
                x = self.current[i] + vfsr_step(u, ln_t) * (b - a);
                if x >= a && x <= b {
                    break;
                }
            }
            cand[i] = x.clamp(a, b);
        }
        self.generated += 1;
        cand
    }

    /// Metropolis decision for `candidate` with cost `cost`. One uniform is
    /// always consumed so the random stream does not depend on the outcome.
    pub fn accept(&mut self, candidate: Vec<f64>, cost: f64) -> bool {
        let cost = feasible(cost);
        let u: f64 = self.rng.random();
        let delta = cost - self.current_cost;
        if cost < INFEASIBLE_COST && self.current_cost < INFEASIBLE_COST {
            self.delta_sum += delta.abs();
            self.delta_count += 1;
        }
        let ok = if cost >= INFEASIBLE_COST && self.current_cost < INFEASIBLE_COST {
            false
        } else if delta <= 0.0 {
            true
        } else {
            let ratio = delta / self.acceptance_temperature();
            u < (-ratio).exp()
        };
        if ok {
            self.current = candidate;
            self.current_cost = cost;
            self.accepted += 1;
            self.k_accept += 1.0;
            self.k_gen.iter_mut().for_each(|k| *k += 1.0);
            if cost < self.best_cost {
                self.best = self.current.clone();
                self.best_cost = cost;
                self.trace.push(TracePoint {
                    generated: self.generated,
                    accepted: self.accepted,
                    best_cost: cost,
                });
            }
        } else {
            self.rejected += 1;
        }
        ok
    }

    /// `|d cost / d x_i|` at the best point by central differences with
    /// step `1e-6 (B_i - A_i)`, one-sided at a bound, floored at `1e-12`.
    pub fn sensitivities<F: FnMut(&[f64]) -> f64>(&mut self, cost_fn: &mut F) -> Vec<f64> {
        let base = self.best.clone();
        (0..self.dim())
            .map(|i| {
                let (a, b) = self.bounds[i];
                let h = 1e-6 * (b - a);
                let mut probe = |x: f64| {
                    let mut p = base.clone();
                    p[i] = x;
                    self.evaluations += 1;
                    let c = cost_fn(&p);
                    (c.is_finite() && c < INFEASIBLE_COST).then_some(c)
                };
                let hi = (base[i] + h).min(b);
                let lo = (base[i] - h).max(a);
                let (f_hi, f_lo) = (
                    if hi > base[i] { probe(hi) } else { Some(self.best_cost) },
                    if lo < base[i] { probe(lo) } else { Some(self.best_cost) },
                );
                match (f_hi, f_lo) {
                    (Some(fh), Some(fl)) if hi > lo => ((fh - fl) / (hi - lo)).abs().max(SENSITIVITY_FLOOR),
                    _ => SENSITIVITY_FLOOR,
                }
            })
            .collect()
    }

    /// Rescales generating temperatures by relative sensitivity and resets
    /// the acceptance temperature scale to the recent mean |cost change|.
    pub fn reanneal<F: FnMut(&[f64]) -> f64>(&mut self, cost_fn: &mut F) {
        let s = self.sensitivities(cost_fn);
        self.reanneal_with(&s);
    }

    /// The temperature update of [`reanneal`](Self::reanneal) for given
    /// sensitivities.
    pub fn reanneal_with(&mut self, sensitivities: &[f64]) {
        let d = self.dim() as f64;
        let s_max = sensitivities.iter().cloned().fold(SENSITIVITY_FLOOR, f64::max);
        for i in 0..self.dim() {
            let s = sensitivities[i].max(SENSITIVITY_FLOOR);
            let ln_t = (self.ln_generating_temperature(i) + (s_max / s).ln()).min(self.ln_t0_gen[i]);
            self.k_gen[i] = ((self.ln_t0_gen[i] - ln_t) / self.c[i]).powf(d);
        }
        if self.delta_count > 0 {
            let scale = self.delta_sum / self.delta_count as f64;
            if scale > 0.0 && scale.is_finite() {
                let ln_t = self.ln_acceptance_temperature().min(scale.ln());
                self.ln_t0_accept = scale.ln();
                self.k_accept = ((self.ln_t0_accept - ln_t) / self.c_accept).powf(d);
            }
        }
        self.delta_sum = 0.0;
        self.delta_count = 0;
    }
}

/// Minimizes `cost_fn` over the box `bounds`.
///
/// Non-finite costs and costs at or above [`INFEASIBLE_COST`] mark a
/// candidate infeasible; it is never accepted from a feasible point. Stops
/// after `max_generated` candidates, or once `cost_repeat_count` consecutive
/// improvements of the best cost are each smaller than `cost_repeat_eps`.
pub fn minimize<F>(mut cost_fn: F, bounds: &[(f64, f64)], config: &AsaConfig) -> Result<AsaResult>
where
    F: FnMut(&[f64]) -> f64,
{
    config.validate(bounds)?;
    let x0 = config
        .initial
        .clone()
        .unwrap_or_else(|| bounds.iter().map(|(a, b)| 0.5 * (a + b)).collect());
    let cost0 = cost_fn(&x0);
    if !cost0.is_finite() || cost0 >= INFEASIBLE_COST {
        return Err(Error::Config(format!("cost at the initial point is not finite ({cost0})")));
    }

    let mut state = AsaState::new(config, bounds, x0, cost0, config.t0_accept.unwrap_or(1.0));
    let mut decisions = Vec::new();
    let mut path = Vec::new();

    if config.t0_accept.is_none() {
        let mut sum = 0.0;
        let mut n = 0;
        for _ in 0..PROBE_COUNT.min(config.max_generated as usize) {
            let cand = state.generate_candidate();
            state.evaluations += 1;
            let c = feasible(cost_fn(&cand));
            if c < INFEASIBLE_COST {
                sum += (c - cost0).abs();
                n += 1;
            }
        }
        let t0 = if n > 0 && sum > 0.0 { sum / n as f64 } else { 1.0 };
        state.ln_t0_accept = t0.ln();
    }

    let mut small_improvements = 0u32;
    let mut termination = Termination::Budget;
    while state.generated < config.max_generated {
        let cand = state.generate_candidate();
        state.evaluations += 1;
        let c = cost_fn(&cand);
        let before = state.best_cost;
        let kept = if config.record_history { Some(cand.clone()) } else { None };
        let ok = state.accept(cand, c);
        if config.record_history {
            decisions.push(ok);
            if ok {
                path.extend(kept);
            }
        }
        if !ok {
            continue;
        }
        if state.best_cost < before {
            if before - state.best_cost < config.cost_repeat_eps {
                small_improvements += 1;
                if small_improvements >= config.cost_repeat_count {
                    termination = Termination::CostRepeat;
                    break;
                }
            } else {
                small_improvements = 0;
            }
        }
        if state.accepted.is_multiple_of(config.reanneal_every) {
            state.reanneal(&mut cost_fn);
        }
    }

    let last = *state.trace.last().expect("trace starts with the initial point");
    if last.generated != state.generated {
        state.trace.push(TracePoint {
            generated: state.generated,
            accepted: state.accepted,
            best_cost: state.best_cost,
        });
    }
    Ok(AsaResult {
        best: state.best,
        best_cost: state.best_cost,
        generated: state.generated,
        accepted: state.accepted,
        rejected: state.rejected,
        evaluations: state.evaluations,
        trace: state.trace,
        termination,
        decisions,
        path,
    })
}
