//! Maximum-likelihood fitting of a coefficient set to an ensemble.

use crate::asa::{self, AsaConfig, TracePoint, INFEASIBLE_COST};
use crate::error::{Error, Result};
use crate::likelihood::{Coordinates, Likelihood, DEFAULT_COUNT_FLOOR};
use crate::model::{CoefficientSet, ModelSpec};
use crate::refine::refine;
use crate::series::Ensemble;

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub coordinates: Coordinates,
    pub count_floor: f64,
    pub asa: AsaConfig,
    /// Follow the annealing with an exact descent from its best point.
    pub refine: bool,
}

impl FitOptions {
    pub fn new(spec: &ModelSpec, seed: u64) -> Self {
        Self {
            coordinates: Coordinates::M,
            count_floor: DEFAULT_COUNT_FLOOR,
            asa: AsaConfig::new(spec.n_params(), seed),
            refine: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub theta: CoefficientSet,
    pub cost: f64,
    /// Best cost found by the annealing stage alone.
    pub asa_cost: f64,
    pub generated: u64,
    pub accepted: u64,
    /// Per parameter: the fitted value sits within `1e-6` of the interval
    /// width from a bound.
    pub bounds_hit: Vec<bool>,
    /// Prepoint counts raised to the floor.
    pub clamp_events: usize,
    pub n_transitions: usize,
    pub trace: Vec<TracePoint>,
}

/// Rejects data in which some unit never changes: its noise coefficient
/// has no finite maximum-likelihood value.
fn check_identifiable(spec: &ModelSpec, ensemble: &Ensemble) -> Result<()> {
    for (u, unit) in spec.units().iter().enumerate() {
        let moves = ensemble
            .runs
            .iter()
            .any(|r| r.states.windows(2).any(|w| w[0].m[u] != w[1].m[u]));
        if !moves {
            return Err(Error::Degenerate(format!(
                "{} is constant in every run; its noise coefficient cannot be fitted",
                unit.name
            )));
        }
    }
    Ok(())
}

/// Minimizes the summed epoch cost over the spec's parameter box.
pub fn fit(spec: &ModelSpec, ensemble: &Ensemble, options: &FitOptions) -> Result<FitOutcome> {
    let lk = Likelihood::new(spec)
        .with_count_floor(options.count_floor)
        .with_coordinates(options.coordinates);
    let transitions = lk.prepare(ensemble)?;
    check_identifiable(spec, ensemble)?;

    let bounds = spec.param_bounds();
    let cost = |p: &[f64]| {
        let theta = CoefficientSet::from_params(spec, p).expect("parameter count fixed by bounds");
        lk.cost_of(&transitions, &theta).unwrap_or(INFEASIBLE_COST)
    };
    let result = asa::minimize(cost, bounds, &options.asa)?;
    if !result.best_cost.is_finite() || result.best_cost >= INFEASIBLE_COST {
        return Err(Error::Degenerate("no feasible coefficient set found".into()));
    }
    let mut best = result.best.clone();
    let mut best_cost = result.best_cost;
    if options.refine {
        let start = CoefficientSet::from_params(spec, &best)?;
        let refined = refine(&lk, &transitions, &start).to_params();
        let c = cost(&refined);
        if c < best_cost {
            best = refined;
            best_cost = c;
        }
    }
    let bounds_hit = best
        .iter()
        .zip(bounds)
        .map(|(&x, &(a, b))| {
            let tol = 1e-6 * (b - a);
            x - a <= tol || b - x <= tol
        })
        .collect();
    Ok(FitOutcome {
        theta: CoefficientSet::from_params(spec, &best)?,
        cost: best_cost,
        asa_cost: result.best_cost,
        generated: result.generated,
        accepted: result.accepted,
        bounds_hit,
        clamp_events: lk.clamp_events(&transitions),
        n_transitions: transitions.len(),
        trace: result.trace,
    })
}
