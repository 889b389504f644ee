//! Sampled battle trajectories and the epoch transitions cut from them.

use crate::error::{Error, Result};
use crate::model::{ModelSpec, StateVector};

/// Relative tolerance on epoch spacing.
pub const DT_REL_TOL: f64 = 1e-9;

/// One run: unit counts sampled on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub run: u32,
    pub states: Vec<StateVector>,
}

impl Trajectory {
    pub fn new(run: u32, states: Vec<StateVector>) -> Self {
        Self { run, states }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Checks the sampling grid is uniform with spacing `dt` and returns the
    /// consecutive-state transitions.
    pub fn transitions(&self, dt: f64) -> Result<Vec<EpochTransition>> {
        if self.states.len() < 2 {
            return Err(Error::Format(format!("run {} has fewer than 2 states", self.run)));
        }
        self.states
            .windows(2)
            .map(|w| {
                let step = w[1].t - w[0].t;
                if ((step - dt) / dt).abs() > DT_REL_TOL {
                    return Err(Error::Format(format!(
                        "run {}: spacing {} at t = {} differs from dt = {}",
                        self.run, step, w[0].t, dt
                    )));
                }
                Ok(EpochTransition::new(w[0].clone(), w[1].clone(), dt))
            })
            .collect()
    }
}

/// A set of runs of the same scenario.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ensemble {
    pub runs: Vec<Trajectory>,
}

impl Ensemble {
    pub fn new(runs: Vec<Trajectory>) -> Self {
        Self { runs }
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    /// All transitions of all runs, runs in order. Requires every state to
    /// conform to `spec` and every run to be sampled at `spec.dt()`.
    pub fn transitions(&self, spec: &ModelSpec) -> Result<Vec<EpochTransition>> {
        if self.runs.is_empty() {
            return Err(Error::Usage("ensemble is empty".into()));
        }
        let mut out = Vec::new();
        for run in &self.runs {
            for s in &run.states {
                s.validate(spec)
                    .map_err(|e| Error::Format(format!("run {} at t = {}: {e}", run.run, s.t)))?;
            }
            out.extend(run.transitions(spec.dt())?);
        }
        Ok(out)
    }

    /// Per-time arithmetic mean over runs. Runs must share a length.
    pub fn mean_trajectory(&self) -> Result<Vec<StateVector>> {
        let first = self
            .runs
            .first()
            .ok_or_else(|| Error::Usage("ensemble is empty".into()))?;
        if let Some(r) = self.runs.iter().find(|r| r.len() != first.len()) {
            return Err(Error::Format(format!(
                "run {} has {} states, run {} has {}",
                r.run,
                r.len(),
                first.run,
                first.len()
            )));
        }
        let n = self.runs.len() as f64;
        Ok((0..first.len())
            .map(|k| {
                let dim = first.states[k].dim();
                let mut m = vec![0.0; dim];
                for r in &self.runs {
                    for (acc, v) in m.iter_mut().zip(&r.states[k].m) {
                        *acc += v;
                    }
                }
                m.iter_mut().for_each(|v| *v /= n);
                StateVector::new(first.states[k].t, m)
            })
            .collect())
    }
}

/// A prepoint state, the state one epoch later, and the epoch length.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochTransition {
    pub from: StateVector,
    pub to: StateVector,
    pub dt: f64,
}

impl EpochTransition {
    pub fn new(from: StateVector, to: StateVector, dt: f64) -> Self {
        Self { from, to, dt }
    }

    /// Builds the transition whose implied rate is exactly `rate`, up to
    /// rounding of `from + rate * dt`.
    pub fn from_rate(from: StateVector, rate: &[f64], dt: f64) -> Self {
        let m = from.m.iter().zip(rate).map(|(m, r)| m + r * dt).collect();
        let to = StateVector::new(from.t + dt, m);
        Self { from, to, dt }
    }

    /// Finite-difference rate `(m_to - m_from) / dt`.
    pub fn rate(&self) -> Vec<f64> {
        self.from
            .m
            .iter()
            .zip(&self.to.m)
            .map(|(a, b)| (b - a) / self.dt)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Usage(format!("transition dt must be positive, got {}", self.dt)));
        }
        if self.from.dim() != self.to.dim() {
            return Err(Error::Specification("transition endpoints differ in dimension".into()));
        }
        if self.rate().iter().any(|r| !r.is_finite()) {
            return Err(Error::Input("transition rate is not finite".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(id: u32, ts: &[f64]) -> Trajectory {
        Trajectory::new(id, ts.iter().map(|&t| StateVector::new(t, vec![1.0; 5])).collect())
    }

    #[test]
    fn transitions_need_two_states() {
        let err = run(3, &[0.0]).transitions(5.0).unwrap_err();
        assert_eq!(err, Error::Format("run 3 has fewer than 2 states".into()));
    }

    #[test]
    fn nonuniform_spacing_rejected() {
        assert!(matches!(run(0, &[0.0, 5.0, 11.0]).transitions(5.0), Err(Error::Format(_))));
        assert_eq!(run(0, &[0.0, 5.0, 10.0]).transitions(5.0).unwrap().len(), 2);
    }

    #[test]
    fn six_by_eleven_gives_sixty() {
        let spec = ModelSpec::janus5();
        let ts: Vec<f64> = (0..11).map(|k| 5.0 * k as f64).collect();
        let e = Ensemble::new((0..6).map(|r| run(r, &ts)).collect());
        assert_eq!(e.transitions(&spec).unwrap().len(), 60);
        assert!(matches!(Ensemble::default().transitions(&spec), Err(Error::Usage(_))));
    }

    #[test]
    fn from_rate_round_trips() {
        let tr = EpochTransition::from_rate(StateVector::new(0.0, vec![10.0, 4.0]), &[-2.0, 0.5], 1.0);
        assert_eq!(tr.rate(), vec![-2.0, 0.5]);
        assert_eq!(tr.to.t, 1.0);
    }
}
