//! Canonical momenta indicators and the mechanical quantities built from
//! the prepoint Lagrangian:
//!
//! ```text
//! momentum  Pi^G = dL/dMdot^G = [Cov^-1 (Mdot - g)]^G
//! mass      g_GG' = Cov^-1
//! force     F^G  = dL/dM^G      (rate held fixed)
//! F - ma    F^G - dPi^G/dt
//! ```
//!
//! `energy` is `(1/2) Pi^T Cov Pi`, which is identically `L`.

use crate::error::{Error, Result};
use crate::likelihood::Likelihood;
use crate::model::{add_drift_jacobian, CoefficientSet, Diagonal, ModelSpec, StateVector};
use crate::series::{Ensemble, EpochTransition};

/// Inverse diffusion covariance at `state` (after flooring).
pub fn mass(lk: &Likelihood, state: &StateVector, theta: &CoefficientSet) -> Result<Diagonal> {
    let spec = lk.spec();
    spec.check(&state.m, theta)?;
    let entries = (0..spec.n_units())
        .map(|u| {
            let z = spec.z_of(theta, u);
            let s = z * lk.floored(state.m[u]);
            if s == 0.0 {
                Err(Error::DegenerateMetric {
                    unit: spec.units()[u].name.clone(),
                    detail: format!("z = {z}, count = {}", state.m[u]),
                })
            } else {
                Ok(1.0 / (s * s))
            }
        })
        .collect::<Result<_>>()?;
    Ok(Diagonal(entries))
}

pub fn momenta(lk: &Likelihood, tr: &EpochTransition, theta: &CoefficientSet) -> Result<Vec<f64>> {
    tr.validate()?;
    momenta_at(lk, &tr.from, &tr.rate(), theta)
}

pub fn momenta_at(lk: &Likelihood, state: &StateVector, rate: &[f64], theta: &CoefficientSet) -> Result<Vec<f64>> {
    let report = lk.lagrangian_at(&state.m, rate, theta)?;
    let metric = mass(lk, state, theta)?;
    Ok(metric.apply(&report.residual))
}

/// Gradient of the prepoint Lagrangian with respect to the prepoint counts,
/// holding the rate fixed.
///
/// With `d = Mdot - g` and `w^G = 1 / (z^G M^G)^2`,
/// `dL/dM^H = -sum_G w^G d^G J_GH - (d^H)^2 / ((z^H)^2 (M^H)^3)`.
/// The second term is absent for a count held at the floor.
pub fn force_at(lk: &Likelihood, state: &StateVector, rate: &[f64], theta: &CoefficientSet) -> Result<Vec<f64>> {
    let spec = lk.spec();
    let report = lk.lagrangian_at(&state.m, rate, theta)?;
    let metric = mass(lk, state, theta)?;
    let n = spec.n_units();
    let mut jac = vec![vec![0.0; n]; n];
    add_drift_jacobian(spec, &state.m, theta, &mut jac);
    let pi = metric.apply(&report.residual);
    let mut f = vec![0.0; n];
    for (g, row) in jac.iter().enumerate() {
        for (h, &j) in row.iter().enumerate() {
            f[h] -= pi[g] * j;
        }
    }
    for h in 0..n {
        if state.m[h] > lk.count_floor() {
            let d = report.residual[h];
            f[h] -= d * d * metric.entries()[h] / state.m[h];
        }
    }
    Ok(f)
}

pub fn force(lk: &Likelihood, tr: &EpochTransition, theta: &CoefficientSet) -> Result<Vec<f64>> {
    tr.validate()?;
    force_at(lk, &tr.from, &tr.rate(), theta)
}

pub fn energy_density(lk: &Likelihood, tr: &EpochTransition, theta: &CoefficientSet) -> Result<f64> {
    let pi = momenta(lk, tr, theta)?;
    let metric = mass(lk, &tr.from, theta)?;
    Ok(0.5 * pi.iter().zip(metric.entries()).map(|(p, w)| p * p / w).sum::<f64>())
}

/// `F_k - (Pi_{k+1} - Pi_k) / dt` for each interior epoch `k` of a run of
/// consecutive transitions.
pub fn el_residual(lk: &Likelihood, transitions: &[EpochTransition], theta: &CoefficientSet) -> Result<Vec<Vec<f64>>> {
    if transitions.len() < 2 {
        return Err(Error::Usage(format!(
            "F - ma needs at least 2 consecutive transitions, got {}",
            transitions.len()
        )));
    }
    let pis = transitions
        .iter()
        .map(|tr| momenta(lk, tr, theta))
        .collect::<Result<Vec<_>>>()?;
    transitions[..transitions.len() - 1]
        .iter()
        .enumerate()
        .map(|(k, tr)| {
            let f = force(lk, tr, theta)?;
            Ok(f.iter()
                .zip(pis[k + 1].iter().zip(&pis[k]))
                .map(|(f, (next, cur))| f - (next - cur) / tr.dt)
                .collect())
        })
        .collect()
}

/// Which series a [`CmiSeries`] describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesId {
    Run(u32),
    Mean,
}

impl std::fmt::Display for SeriesId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SeriesId::Run(r) => write!(f, "run_{r}"),
            SeriesId::Mean => f.write_str("mean"),
        }
    }
}

/// Indicators for one epoch, keyed by the prepoint time.
#[derive(Debug, Clone, PartialEq)]
pub struct CmiPoint {
    pub t: f64,
    pub pi: Vec<f64>,
    pub energy: f64,
    pub mass: Vec<f64>,
    pub force: Vec<f64>,
    /// `None` on the last epoch of a run.
    pub el_residual: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmiSeries {
    pub id: SeriesId,
    pub points: Vec<CmiPoint>,
}

fn series_for(lk: &Likelihood, run: u32, trs: &[EpochTransition], theta: &CoefficientSet) -> Result<CmiSeries> {
    let el = if trs.len() >= 2 { el_residual(lk, trs, theta)? } else { Vec::new() };
    let points = trs
        .iter()
        .enumerate()
        .map(|(k, tr)| {
            let pi = momenta(lk, tr, theta)?;
            let mass = mass(lk, &tr.from, theta)?;
            let energy = 0.5 * pi.iter().zip(mass.entries()).map(|(p, w)| p * p / w).sum::<f64>();
            Ok(CmiPoint {
                t: tr.from.t,
                pi,
                energy,
                mass: mass.0,
                force: force(lk, tr, theta)?,
                el_residual: el.get(k).cloned(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(CmiSeries {
        id: SeriesId::Run(run),
        points,
    })
}

fn mean_vec<'a>(rows: impl Iterator<Item = &'a Vec<f64>>, n: f64) -> Vec<f64> {
    let mut acc: Vec<f64> = Vec::new();
    for r in rows {
        if acc.is_empty() {
            acc = vec![0.0; r.len()];
        }
        acc.iter_mut().zip(r).for_each(|(a, v)| *a += v);
    }
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Per-run indicator series, in run order, followed by their per-epoch
/// arithmetic mean. Runs must have equal length.
pub fn ensemble_cmi(lk: &Likelihood, ensemble: &Ensemble, theta: &CoefficientSet) -> Result<Vec<CmiSeries>> {
    use rayon::prelude::*;

    let spec: &ModelSpec = lk.spec();
    if ensemble.is_empty() {
        return Err(Error::Usage("ensemble is empty".into()));
    }
    let len = ensemble.runs[0].len();
    if let Some(r) = ensemble.runs.iter().find(|r| r.len() != len) {
        return Err(Error::Format(format!(
            "run {} has {} states but run {} has {}",
            r.run,
            r.len(),
            ensemble.runs[0].run,
            len
        )));
    }
    let per_run: Vec<Vec<EpochTransition>> = ensemble
        .runs
        .iter()
        .map(|r| {
            for s in &r.states {
                s.validate(spec)?;
            }
            r.transitions(spec.dt())
        })
        .collect::<Result<_>>()?;
    let mut out = ensemble
        .runs
        .par_iter()
        .zip(per_run.par_iter())
        .map(|(r, trs)| series_for(lk, r.run, trs, theta))
        .collect::<Result<Vec<_>>>()?;

    let n = out.len() as f64;
    let epochs = out[0].points.len();
    let points = (0..epochs)
        .map(|k| {
            fn at(s: &CmiSeries, k: usize) -> &CmiPoint {
                &s.points[k]
            }
            let el_all = out.iter().all(|s| at(s, k).el_residual.is_some());
            CmiPoint {
                t: at(&out[0], k).t,
                pi: mean_vec(out.iter().map(|s| &at(s, k).pi), n),
                energy: out.iter().map(|s| at(s, k).energy).sum::<f64>() / n,
                mass: mean_vec(out.iter().map(|s| &at(s, k).mass), n),
                force: mean_vec(out.iter().map(|s| &at(s, k).force), n),
                el_residual: el_all.then(|| mean_vec(out.iter().filter_map(|s| at(s, k).el_residual.as_ref()), n)),
            }
        })
        .collect();
    out.push(CmiSeries {
        id: SeriesId::Mean,
        points,
    });
    Ok(out)
}
