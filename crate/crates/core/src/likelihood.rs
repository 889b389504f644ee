//! Short-time transition probability and the dynamic cost function.
//!
//! Over one epoch the prepoint (Ito) discretization gives a Gaussian
//! increment with mean `g(M) dt` and covariance `Cov(M) dt`, where
//! `Cov = diag((z^G M^G)^2)` is evaluated at the start of the epoch. Its
//! negative log density is
//!
//! ```text
//! C = L dt + (N/2) ln(2 pi dt) + (1/2) ln det Cov
//! L = (1/2) (Mdot - g)^T Cov^-1 (Mdot - g)
//! ```
//!
//! `C` summed over all transitions is the objective the fitter minimizes.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CoefficientSet, ModelSpec};
use crate::series::{Ensemble, EpochTransition};

/// Prepoint counts at or below this are raised to it before the diffusion
/// is evaluated, keeping the metric invertible near the end of a battle.
pub const DEFAULT_COUNT_FLOOR: f64 = 1e-6;

const LEAF: usize = 16;
const PARALLEL_MIN: usize = 256;

/// Variables the transition density is written in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Coordinates {
    /// Raw unit counts with multiplicative noise.
    #[default]
    M,
    /// `X = ln M`: constant noise `z^G`, drift `g^G / M^G - (z^G)^2 / 2`.
    #[serde(rename = "logM")]
    LogM,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianReport {
    pub lagrangian: f64,
    /// `det Cov` at the prepoint.
    pub sigma: f64,
    pub ln_sigma: f64,
    /// `Mdot - g` (or its log-coordinate analogue).
    pub residual: Vec<f64>,
    /// Variables with nonzero diffusion.
    pub n_active: usize,
    /// Prepoint counts raised to the floor.
    pub clamped: usize,
}

/// Likelihood evaluator for one model.
#[derive(Debug, Clone, Copy)]
pub struct Likelihood<'a> {
    spec: &'a ModelSpec,
    count_floor: f64,
    coordinates: Coordinates,
}

impl<'a> Likelihood<'a> {
    pub fn new(spec: &'a ModelSpec) -> Self {
        Self {
            spec,
            count_floor: DEFAULT_COUNT_FLOOR,
            coordinates: Coordinates::M,
        }
    }

    pub fn with_count_floor(mut self, floor: f64) -> Self {
        self.count_floor = floor;
        self
    }

    pub fn with_coordinates(mut self, coordinates: Coordinates) -> Self {
        self.coordinates = coordinates;
        self
    }

    pub fn spec(&self) -> &ModelSpec {
        self.spec
    }

    pub fn count_floor(&self) -> f64 {
        self.count_floor
    }

    pub fn coordinates(&self) -> Coordinates {
        self.coordinates
    }

    /// Prepoint count used inside the diffusion.
    #[inline]
    pub fn floored(&self, m: f64) -> f64 {
        if m <= self.count_floor {
            self.count_floor
        } else {
            m
        }
    }

    fn degenerate(&self, u: usize, z: f64, m: f64) -> Error {
        Error::DegenerateMetric {
            unit: self.spec.units()[u].name.clone(),
            detail: format!("z = {z}, prepoint count = {m}"),
        }
    }

    /// M-space Lagrangian for a prepoint state and a rate, holding the rate
    /// fixed. This is the function the mechanical quantities differentiate.
    pub fn lagrangian_at(&self, m: &[f64], rate: &[f64], theta: &CoefficientSet) -> Result<LagrangianReport> {
        self.spec.check(m, theta)?;
        if rate.len() != m.len() {
            return Err(Error::Specification("rate and state differ in dimension".into()));
        }
        let n = m.len();
        let mut g = vec![0.0; n];
        self.spec.drift_into(m, theta, &mut g);
        let mut lagrangian = 0.0;
        let mut ln_sigma = 0.0;
        let mut sigma = 1.0;
        let mut clamped = 0;
        let mut n_active = 0;
        let mut residual = Vec::with_capacity(n);
        let mut first_degenerate = None;
        for u in 0..n {
            let z = self.spec.z_of(theta, u);
            if m[u] <= self.count_floor {
                clamped += 1;
            }
            let mu = self.floored(m[u]);
            let var = (z * mu) * (z * mu);
            if var > 0.0 {
                n_active += 1;
            } else if first_degenerate.is_none() {
                first_degenerate = Some(self.degenerate(u, z, mu));
            }
            let d = rate[u] - g[u];
            residual.push(d);
            lagrangian += d * d / (2.0 * var);
            ln_sigma += var.ln();
            sigma *= var;
        }
        if let Some(e) = first_degenerate {
            return Err(e);
        }
        Ok(LagrangianReport {
            lagrangian,
            sigma,
            ln_sigma,
            residual,
            n_active,
            clamped,
        })
    }

    pub fn lagrangian(&self, tr: &EpochTransition, theta: &CoefficientSet) -> Result<LagrangianReport> {
        tr.validate()?;
        match self.coordinates {
            Coordinates::M => self.lagrangian_at(&tr.from.m, &tr.rate(), theta),
            Coordinates::LogM => self.lagrangian_log(tr, theta),
        }
    }

    fn lagrangian_log(&self, tr: &EpochTransition, theta: &CoefficientSet) -> Result<LagrangianReport> {
        let m = &tr.from.m;
        self.spec.check(m, theta)?;
        self.spec.check(&tr.to.m, theta)?;
        for (u, (&a, &b)) in m.iter().zip(&tr.to.m).enumerate() {
            if !(a > 0.0 && b > 0.0) {
                return Err(Error::Domain(format!(
                    "log coordinates need positive counts; {} is {} -> {}",
                    self.spec.units()[u].name,
                    a,
                    b
                )));
            }
        }
        let n = m.len();
        let mut g = vec![0.0; n];
        self.spec.drift_into(m, theta, &mut g);
        let mut lagrangian = 0.0;
        let mut ln_sigma = 0.0;
        let mut sigma = 1.0;
        let mut residual = Vec::with_capacity(n);
        for u in 0..n {
            let z = self.spec.z_of(theta, u);
            let var = z * z;
            if var == 0.0 {
                return Err(self.degenerate(u, z, m[u]));
            }
            let xdot = (tr.to.m[u].ln() - m[u].ln()) / tr.dt;
            let d = xdot - (g[u] / m[u] - 0.5 * var);
            residual.push(d);
            lagrangian += d * d / (2.0 * var);
            ln_sigma += var.ln();
            sigma *= var;
        }
        Ok(LagrangianReport {
            lagrangian,
            sigma,
            ln_sigma,
            residual,
            n_active: n,
            clamped: 0,
        })
    }

    /// `L dt + (N/2) ln(2 pi dt) + (1/2) ln sigma` for one transition.
    pub fn epoch_cost(&self, tr: &EpochTransition, theta: &CoefficientSet) -> Result<f64> {
        let r = self.lagrangian(tr, theta)?;
        Ok(cost_from(&r, tr.from.dim(), tr.dt))
    }

    /// Validated transitions of an ensemble, in canonical order (runs as
    /// given, epochs ascending).
    pub fn prepare(&self, ensemble: &Ensemble) -> Result<Vec<EpochTransition>> {
        let trs = ensemble.transitions(self.spec)?;
        if self.coordinates == Coordinates::LogM {
            if let Some(tr) = trs.iter().find(|tr| tr.from.m.iter().chain(&tr.to.m).any(|&v| v <= 0.0)) {
                return Err(Error::Domain(format!(
                    "log coordinates need positive counts (transition at t = {})",
                    tr.from.t
                )));
            }
        }
        Ok(trs)
    }

    /// Sum of epoch costs over every transition of every run.
    pub fn total_cost(&self, ensemble: &Ensemble, theta: &CoefficientSet) -> Result<f64> {
        let trs = self.prepare(ensemble)?;
        self.cost_of(&trs, theta)
    }

    /// Sum of epoch costs over prepared transitions.
    ///
    /// The reduction is a pairwise tree whose shape depends only on the
    /// number of transitions, so the result is bit-identical whether the
    /// halves run on one thread or many.
    pub fn cost_of(&self, transitions: &[EpochTransition], theta: &CoefficientSet) -> Result<f64> {
        if transitions.is_empty() {
            return Err(Error::Usage("no transitions to evaluate".into()));
        }
        self.spec.check(&transitions[0].from.m, theta)?;
        self.pairwise(transitions, theta)
    }

    fn pairwise(&self, trs: &[EpochTransition], theta: &CoefficientSet) -> Result<f64> {
        if trs.len() <= LEAF {
            return self.leaf(trs, theta);
        }
        let (left, right) = trs.split_at(trs.len() / 2);
        let (a, b) = if trs.len() >= PARALLEL_MIN {
            rayon::join(|| self.pairwise(left, theta), || self.pairwise(right, theta))
        } else {
            (self.pairwise(left, theta), self.pairwise(right, theta))
        };
        Ok(a? + b?)
    }

    fn leaf(&self, trs: &[EpochTransition], theta: &CoefficientSet) -> Result<f64> {
        if self.coordinates == Coordinates::LogM {
            return trs.iter().map(|tr| self.epoch_cost(tr, theta)).sum();
        }
        let n = self.spec.n_units();
        let mut g = vec![0.0; n];
        let mut total = 0.0;
        for tr in trs {
            let m = &tr.from.m;
            self.spec.drift_into(m, theta, &mut g);
            let mut lagrangian = 0.0;
            let mut ln_sigma = 0.0;
            for u in 0..n {
                let z = self.spec.z_of(theta, u);
                let mu = self.floored(m[u]);
                let var = (z * mu) * (z * mu);
                if var <= 0.0 {
                    return Err(self.degenerate(u, z, mu));
                }
                let d = (tr.to.m[u] - m[u]) / tr.dt - g[u];
                lagrangian += d * d / (2.0 * var);
                ln_sigma += var.ln();
            }
            total += lagrangian * tr.dt + 0.5 * n as f64 * (2.0 * PI * tr.dt).ln() + 0.5 * ln_sigma;
        }
        Ok(total)
    }

    /// Number of prepoint counts the floor will raise.
    pub fn clamp_events(&self, transitions: &[EpochTransition]) -> usize {
        transitions
            .iter()
            .map(|tr| tr.from.m.iter().filter(|&&v| v <= self.count_floor).count())
            .sum()
    }
}

fn cost_from(r: &LagrangianReport, n: usize, dt: f64) -> f64 {
    r.lagrangian * dt + 0.5 * n as f64 * (2.0 * PI * dt).ln() + 0.5 * r.ln_sigma
}

/// [`Likelihood::lagrangian`] with the default floor in M coordinates.
pub fn lagrangian(tr: &EpochTransition, theta: &CoefficientSet, spec: &ModelSpec) -> Result<LagrangianReport> {
    Likelihood::new(spec).lagrangian(tr, theta)
}

pub fn epoch_cost(tr: &EpochTransition, theta: &CoefficientSet, spec: &ModelSpec) -> Result<f64> {
    Likelihood::new(spec).epoch_cost(tr, theta)
}

pub fn total_cost(ensemble: &Ensemble, theta: &CoefficientSet, spec: &ModelSpec) -> Result<f64> {
    Likelihood::new(spec).total_cost(ensemble, theta)
}
