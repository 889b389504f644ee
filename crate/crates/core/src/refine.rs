//! Exact local refinement of a fitted coefficient set.
//!
//! The epoch cost separates by target unit, and each unit's drift is linear
//! in its own coefficients. With the noise held fixed, the drift of one unit
//! therefore minimizes a weighted least-squares problem over its box. With
//! the drift held fixed, `s = z^2` minimizes
//!
//! ```text
//! A / (2 s) + B s / 8 + (n / 2) ln s
//! ```
//!
//! where `A` is the weighted residual sum of squares, `n` the transition
//! count and `B = sum dt` in log coordinates (`B = 0` in M coordinates, where
//! the drift step does not depend on `s` at all). Alternating the two steps
//! descends monotonically to a stationary point of the full cost.

use crate::likelihood::{Coordinates, Likelihood};
use crate::model::{CoefficientSet, TermKind};
use crate::series::EpochTransition;

const MAX_ROUNDS: usize = 200;
const MAX_SWEEPS: usize = 10_000;
const REL_TOL: f64 = 1e-13;

/// One unit's data: per transition the weight, the response without the
/// `s / 2` offset, and the feature of every term acting on the unit.
struct Row {
    terms: Vec<usize>,
    weight: Vec<f64>,
    response: Vec<f64>,
    features: Vec<Vec<f64>>,
    dt_sum: f64,
}

fn rows(lk: &Likelihood, transitions: &[EpochTransition]) -> Vec<Row> {
    let spec = lk.spec();
    (0..spec.n_units())
        .map(|u| {
            let terms: Vec<usize> = (0..spec.terms().len()).filter(|&j| spec.terms()[j].target == u).collect();
            let mut row = Row {
                terms,
                weight: Vec::with_capacity(transitions.len()),
                response: Vec::with_capacity(transitions.len()),
                features: Vec::with_capacity(transitions.len()),
                dt_sum: 0.0,
            };
            for tr in transitions {
                let m = &tr.from.m;
                let (w, y, scale) = match lk.coordinates() {
                    Coordinates::M => {
                        let mu = lk.floored(m[u]);
                        (tr.dt / (mu * mu), (tr.to.m[u] - m[u]) / tr.dt, 1.0)
                    }
                    Coordinates::LogM => (tr.dt, (tr.to.m[u].ln() - m[u].ln()) / tr.dt, 1.0 / m[u]),
                };
                let phi = row
                    .terms
                    .iter()
                    .map(|&j| {
                        let t = &spec.terms()[j];
                        scale
                            * match t.kind {
                                TermKind::Point => m[t.source],
                                TermKind::Area => m[t.source] * m[t.target],
                            }
                    })
                    .collect();
                row.weight.push(w);
                row.response.push(y);
                row.features.push(phi);
                row.dt_sum += tr.dt;
            }
            row
        })
        .collect()
}

fn cholesky_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let p = b.len();
    let mut l = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in 0..=i {
            let s = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; p];
    for i in 0..p {
        y[i] = (b[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        x[i] = (y[i] - (i + 1..p).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Minimizes `x^T A x / 2 - b^T x` over the box: the unconstrained solution
/// when it is feasible, projected coordinate descent otherwise.
fn box_quadratic(a: &[Vec<f64>], b: &[f64], bounds: &[(f64, f64)], start: &[f64]) -> Vec<f64> {
    if let Some(x) = cholesky_solve(a, b) {
        if x.iter().zip(bounds).all(|(v, (lo, hi))| v >= lo && v <= hi) {
            return x;
        }
    }
    let mut x: Vec<f64> = start.iter().zip(bounds).map(|(v, &(lo, hi))| v.clamp(lo, hi)).collect();
    for _ in 0..MAX_SWEEPS {
        let mut moved = false;
        for j in 0..x.len() {
            if !(a[j][j] > 0.0) {
                continue;
            }
            let (lo, hi) = bounds[j];
            let rest: f64 = (0..x.len()).filter(|&k| k != j).map(|k| a[j][k] * x[k]).sum();
            let v = ((b[j] - rest) / a[j][j]).clamp(lo, hi);
            if (v - x[j]).abs() > REL_TOL * (hi - lo) {
                moved = true;
            }
            x[j] = v;
        }
        if !moved {
            break;
        }
    }
    x
}

fn drift_step(row: &Row, offset: f64, bounds: &[(f64, f64)], start: &[f64]) -> Vec<f64> {
    let p = row.terms.len();
    let mut a = vec![vec![0.0; p]; p];
    let mut b = vec![0.0; p];
    for ((w, y), phi) in row.weight.iter().zip(&row.response).zip(&row.features) {
        for i in 0..p {
            b[i] += w * phi[i] * (y + offset);
            for k in 0..p {
                a[i][k] += w * phi[i] * phi[k];
            }
        }
    }
    box_quadratic(&a, &b, bounds, start)
}

fn noise_step(row: &Row, coef: &[f64], log_coords: bool, (lo, hi): (f64, f64)) -> f64 {
    let mut rss = 0.0;
    for ((w, y), phi) in row.weight.iter().zip(&row.response).zip(&row.features) {
        let r = y - phi.iter().zip(coef).map(|(f, c)| f * c).sum::<f64>();
        rss += w * r * r;
    }
    let n = row.weight.len() as f64;
    let b = if log_coords { row.dt_sum } else { 0.0 };
    let s = 2.0 * rss / (n + (n * n + rss * b).sqrt());
    let z = if hi <= 0.0 { -s.sqrt() } else { s.sqrt() };
    z.clamp(lo, hi)
}

/// Descends from `theta` by alternating exact drift and noise updates,
/// unit by unit, inside the spec's parameter box.
pub fn refine(lk: &Likelihood, transitions: &[EpochTransition], theta: &CoefficientSet) -> CoefficientSet {
    let spec = lk.spec();
    let bounds = spec.param_bounds();
    let n_terms = spec.terms().len();
    let log_coords = lk.coordinates() == Coordinates::LogM;
    let mut out = theta.clone();
    for (u, row) in rows(lk, transitions).iter().enumerate() {
        let slot = spec
            .noise_units()
            .iter()
            .position(|&v| v == u)
            .expect("every unit carries noise");
        let drift_bounds: Vec<(f64, f64)> = row.terms.iter().map(|&j| bounds[j]).collect();
        let mut coef: Vec<f64> = row.terms.iter().map(|&j| out.drift[j]).collect();
        let mut z = out.noise[slot];
        for _ in 0..MAX_ROUNDS {
            let offset = if log_coords { 0.5 * z * z } else { 0.0 };
            let next = drift_step(row, offset, &drift_bounds, &coef);
            let z_next = noise_step(row, &next, log_coords, bounds[n_terms + slot]);
            let settled = next
                .iter()
                .zip(&coef)
                .zip(&drift_bounds)
                .all(|((a, b), (lo, hi))| (a - b).abs() <= REL_TOL * (hi - lo))
                && (z_next - z).abs() <= REL_TOL * z.abs().max(f64::MIN_POSITIVE);
            coef = next;
            z = z_next;
            if settled || !log_coords {
                break;
            }
        }
        for (&j, c) in row.terms.iter().zip(coef) {
            out.drift[j] = c;
        }
        out.noise[slot] = z;
    }
    out
}
