//! State space and coefficients of the coupled attrition equations.
//!
//! Each unit type `G` evolves as
//!
//! ```text
//! dM^G/dt = g^G(M) + z^G M^G eta^G(t)
//! g^G     = sum_point x[G][S] M^S + sum_area y[G][S] M^S M^G
//! ```
//!
//! with diagonal, multiplicative (log-normal) white noise `eta`. A
//! [`ModelSpec`] says which `(target, source)` pairs carry a term and of what
//! kind; a [`CoefficientSet`] holds the numbers.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DRIFT_BOUNDS: (f64, f64) = (-0.1, 0.1);
pub const DEFAULT_NOISE_BOUNDS: (f64, f64) = (1e-5, 0.1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Red,
    Blue,
}

/// Point fire scales with the shooter count only, area fire with
/// shooter count times target count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TermKind {
    Point,
    Area,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Unit {
    pub name: String,
    pub side: Side,
}

/// A resolved drift term; `target` and `source` index into the unit list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DriftTerm {
    pub target: usize,
    pub source: usize,
    pub kind: TermKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermEntry {
    pub target: String,
    pub source: String,
    pub kind: TermKind,
}

/// Fitting bounds as written in a spec file: a default interval for drift
/// and for noise coefficients, plus per-parameter overrides keyed by
/// parameter name (`x[RT<-BT]`, `y[..]`, `z[RT]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    #[serde(default = "default_drift_bounds")]
    pub drift: (f64, f64),
    #[serde(default = "default_noise_bounds")]
    pub noise: (f64, f64),
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, (f64, f64)>,
}

fn default_drift_bounds() -> (f64, f64) {
    DEFAULT_DRIFT_BOUNDS
}

fn default_noise_bounds() -> (f64, f64) {
    DEFAULT_NOISE_BOUNDS
}

impl Default for BoundsSpec {
    fn default() -> Self {
        Self {
            drift: DEFAULT_DRIFT_BOUNDS,
            noise: DEFAULT_NOISE_BOUNDS,
            params: BTreeMap::new(),
        }
    }
}

/// On-disk shape of a [`ModelSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpecFile {
    pub units: Vec<Unit>,
    pub terms: Vec<TermEntry>,
    pub noise: Vec<String>,
    #[serde(default)]
    pub bounds: BoundsSpec,
    pub dt: f64,
}

/// A validated model description.
///
/// Parameters are ordered drift terms first (in declaration order), then one
/// noise coefficient per entry of the noise list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelSpecFile", into = "ModelSpecFile")]
pub struct ModelSpec {
    units: Vec<Unit>,
    terms: Vec<DriftTerm>,
    noise: Vec<usize>,
    // unit index -> position in `noise`
    noise_slot: Vec<usize>,
    bounds_spec: BoundsSpec,
    bounds: Vec<(f64, f64)>,
    dt: f64,
}

impl TryFrom<ModelSpecFile> for ModelSpec {
    type Error = Error;

    fn try_from(file: ModelSpecFile) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, u) in file.units.iter().enumerate() {
            if u.name.is_empty() {
                return Err(Error::Specification("empty unit name".into()));
            }
            if index.insert(u.name.clone(), i).is_some() {
                return Err(Error::Specification(format!("duplicate unit name {}", u.name)));
            }
        }
        if file.units.is_empty() {
            return Err(Error::Specification("model has no units".into()));
        }
        let lookup = |name: &str, role: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::Specification(format!("{role} {name} is not a declared unit")))
        };

        let mut terms = Vec::with_capacity(file.terms.len());
        for t in &file.terms {
            let term = DriftTerm {
                target: lookup(&t.target, "term target")?,
                source: lookup(&t.source, "term source")?,
                kind: t.kind,
            };
            if term.target == term.source {
                return Err(Error::Specification(format!(
                    "term {}<-{} has identical target and source",
                    t.target, t.source
                )));
            }
            if terms.contains(&term) {
                return Err(Error::Specification(format!(
                    "duplicate {:?} term {}<-{}",
                    t.kind, t.target, t.source
                )));
            }
            terms.push(term);
        }

        let n = file.units.len();
        let mut noise_slot = vec![usize::MAX; n];
        let mut noise = Vec::with_capacity(n);
        for (slot, name) in file.noise.iter().enumerate() {
            let u = lookup(name, "noise unit")?;
            if noise_slot[u] != usize::MAX {
                return Err(Error::Specification(format!("noise unit {name} listed twice")));
            }
            noise_slot[u] = slot;
            noise.push(u);
        }
        if let Some(missing) = noise_slot.iter().position(|&s| s == usize::MAX) {
            return Err(Error::Specification(format!(
                "unit {} has no noise coefficient",
                file.units[missing].name
            )));
        }

        if !(file.dt.is_finite() && file.dt > 0.0) {
            return Err(Error::Specification(format!("dt must be positive, got {}", file.dt)));
        }

        let mut spec = ModelSpec {
            units: file.units,
            terms,
            noise,
            noise_slot,
            bounds_spec: file.bounds,
            bounds: Vec::new(),
            dt: file.dt,
        };
        spec.bounds = spec.resolve_bounds()?;
        Ok(spec)
    }
}

impl From<ModelSpec> for ModelSpecFile {
    fn from(spec: ModelSpec) -> Self {
        let terms = spec
            .terms
            .iter()
            .map(|t| TermEntry {
                target: spec.units[t.target].name.clone(),
                source: spec.units[t.source].name.clone(),
                kind: t.kind,
            })
            .collect();
        let noise = spec.noise.iter().map(|&u| spec.units[u].name.clone()).collect();
        ModelSpecFile {
            units: spec.units,
            terms,
            noise,
            bounds: spec.bounds_spec,
            dt: spec.dt,
        }
    }
}

fn check_interval(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if lo.is_finite() && hi.is_finite() && lo < hi {
        Ok(())
    } else {
        Err(Error::Specification(format!("bounds for {name} must be finite with lower < upper, got [{lo}, {hi}]")))
    }
}

impl ModelSpec {
    /// The built-in five-variable scenario: two Red systems (T-72 tanks,
    /// BMP personnel carriers) against three Blue systems (tanks, armored
    /// personnel carriers, TOW missiles). Only cross-side point-fire terms
    /// are present; there is no direct-fire fratricide. Epochs are 5 min.
    pub fn janus5() -> Self {
        let unit = |name: &str, side| Unit { name: name.into(), side };
        let units = vec![
            unit("RT", Side::Red),
            unit("RBMP", Side::Red),
            unit("BT", Side::Blue),
            unit("BAPC", Side::Blue),
            unit("BTOW", Side::Blue),
        ];
        let mut terms = Vec::new();
        for red in ["RT", "RBMP"] {
            for blue in ["BT", "BAPC", "BTOW"] {
                terms.push((red, blue));
            }
        }
        for blue in ["BT", "BAPC", "BTOW"] {
            for red in ["RT", "RBMP"] {
                terms.push((blue, red));
            }
        }
        let file = ModelSpecFile {
            noise: units.iter().map(|u| u.name.clone()).collect(),
            units,
            terms: terms
                .into_iter()
                .map(|(t, s)| TermEntry {
                    target: t.into(),
                    source: s.into(),
                    kind: TermKind::Point,
                })
                .collect(),
            bounds: BoundsSpec::default(),
            dt: 5.0,
        };
        ModelSpec::try_from(file).expect("built-in spec is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Specification(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn unit_index(&self, name: &str) -> Option<usize> {
        self.units.iter().position(|u| u.name == name)
    }

    pub fn unit_names(&self) -> Vec<&str> {
        self.units.iter().map(|u| u.name.as_str()).collect()
    }

    pub fn terms(&self) -> &[DriftTerm] {
        &self.terms
    }

    /// Unit indices in noise-parameter order.
    pub fn noise_units(&self) -> &[usize] {
        &self.noise
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn bounds_spec(&self) -> &BoundsSpec {
        &self.bounds_spec
    }

    /// Replaces the bounds, re-validating them against the parameter list.
    pub fn with_bounds(mut self, bounds: BoundsSpec) -> Result<Self> {
        self.bounds_spec = bounds;
        self.bounds = self.resolve_bounds()?;
        Ok(self)
    }

    pub fn n_params(&self) -> usize {
        self.terms.len() + self.noise.len()
    }

    /// Per-parameter `(lower, upper)` in parameter order.
    pub fn param_bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn param_names(&self) -> Vec<String> {
        (0..self.n_params()).map(|i| self.param_name(i)).collect()
    }

    pub fn param_name(&self, index: usize) -> String {
        if let Some(t) = self.terms.get(index) {
            let letter = match t.kind {
                TermKind::Point => 'x',
                TermKind::Area => 'y',
            };
            format!("{letter}[{}<-{}]", self.units[t.target].name, self.units[t.source].name)
        } else {
            let u = self.noise[index - self.terms.len()];
            format!("z[{}]", self.units[u].name)
        }
    }

    /// The term of `kind` acting on `target` from `source`, if declared.
    pub fn term_index(&self, target: usize, source: usize, kind: TermKind) -> Option<usize> {
        self.terms
            .iter()
            .position(|t| t.target == target && t.source == source && t.kind == kind)
    }

    fn resolve_bounds(&self) -> Result<Vec<(f64, f64)>> {
        check_interval("drift", self.bounds_spec.drift)?;
        check_interval("noise", self.bounds_spec.noise)?;
        let names = self.param_names();
        for key in self.bounds_spec.params.keys() {
            if !names.contains(key) {
                return Err(Error::Specification(format!("bounds given for unknown parameter {key}")));
            }
        }
        names
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let b = match self.bounds_spec.params.get(name) {
                    Some(&b) => b,
                    None if i < self.terms.len() => self.bounds_spec.drift,
                    None => self.bounds_spec.noise,
                };
                check_interval(name, b).map(|_| b)
            })
            .collect()
    }

    fn check_state(&self, m: &[f64]) -> Result<()> {
        if m.len() != self.units.len() {
            return Err(Error::Specification(format!(
                "state has {} components, model has {} units",
                m.len(),
                self.units.len()
            )));
        }
        Ok(())
    }

    fn check_theta(&self, theta: &CoefficientSet) -> Result<()> {
        if theta.drift.len() != self.terms.len() || theta.noise.len() != self.noise.len() {
            return Err(Error::Specification(format!(
                "coefficient set has {} drift / {} noise entries, model has {} / {}",
                theta.drift.len(),
                theta.noise.len(),
                self.terms.len(),
                self.noise.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn check(&self, m: &[f64], theta: &CoefficientSet) -> Result<()> {
        self.check_state(m)?;
        self.check_theta(theta)
    }

    /// Noise coefficient of unit `u`.
    #[inline]
    pub fn z_of(&self, theta: &CoefficientSet, u: usize) -> f64 {
        theta.noise[self.noise_slot[u]]
    }

    /// Unchecked drift evaluation into `out`. Shapes must already conform.
    #[inline]
    pub fn drift_into(&self, m: &[f64], theta: &CoefficientSet, out: &mut [f64]) {
        out.fill(0.0);
        for (term, &c) in self.terms.iter().zip(&theta.drift) {
            out[term.target] += match term.kind {
                TermKind::Point => c * m[term.source],
                TermKind::Area => c * m[term.source] * m[term.target],
            };
        }
    }
}

/// Fit parameters of a [`ModelSpec`]: one drift coefficient per declared
/// term and one noise coefficient per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    /// Aligned with `ModelSpec::terms`; `x` for point terms, `y` for area.
    pub drift: Vec<f64>,
    /// Aligned with `ModelSpec::noise_units`.
    pub noise: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftEntry {
    pub target: String,
    pub source: String,
    pub kind: TermKind,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseEntry {
    pub unit: String,
    pub value: f64,
}

/// Named, order-independent form of a coefficient set, used for JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientFile {
    pub drift: Vec<DriftEntry>,
    pub noise: Vec<NoiseEntry>,
}

impl CoefficientSet {
    pub fn zeros(spec: &ModelSpec) -> Self {
        Self {
            drift: vec![0.0; spec.terms.len()],
            noise: vec![0.0; spec.noise.len()],
        }
    }

    /// Reference coefficients for the janus5 scenario, in [`ModelSpec::janus5`]
    /// parameter order. Noise coefficients are stored as magnitudes.
    pub fn janus5_reference() -> Self {
        Self {
            drift: vec![
                -8.6e-5, -5.9e-3, -3.6e-2, // RT <- BT, BAPC, BTOW
                -2.7e-3, -2.2e-2, -3.1e-2, // RBMP <- BT, BAPC, BTOW
                -6.7e-4, -4.7e-3, // BT <- RT, RBMP
                -1.0e-4, -4.0e-3, // BAPC <- RT, RBMP
                -2.1e-3, -1.2e-6, // BTOW <- RT, RBMP
            ],
            noise: vec![3.7e-3, 4.3e-3, 7.9e-3, 6.7e-3, 1.3e-2],
        }
    }

    /// Unpacks a flat parameter vector (drift terms, then noise).
    pub fn from_params(spec: &ModelSpec, params: &[f64]) -> Result<Self> {
        if params.len() != spec.n_params() {
            return Err(Error::Specification(format!(
                "expected {} parameters, got {}",
                spec.n_params(),
                params.len()
            )));
        }
        let (drift, noise) = params.split_at(spec.terms.len());
        Ok(Self {
            drift: drift.to_vec(),
            noise: noise.to_vec(),
        })
    }

    pub fn to_params(&self) -> Vec<f64> {
        self.drift.iter().chain(&self.noise).copied().collect()
    }

    pub fn conforms_to(&self, spec: &ModelSpec) -> bool {
        spec.check_theta(self).is_ok()
    }

    /// Point coefficient `x[target][source]`, if that term exists.
    pub fn x(&self, spec: &ModelSpec, target: usize, source: usize) -> Option<f64> {
        spec.term_index(target, source, TermKind::Point).map(|i| self.drift[i])
    }

    pub fn y(&self, spec: &ModelSpec, target: usize, source: usize) -> Option<f64> {
        spec.term_index(target, source, TermKind::Area).map(|i| self.drift[i])
    }

    pub fn z(&self, spec: &ModelSpec, unit: usize) -> f64 {
        spec.z_of(self, unit)
    }

    /// Copy with every drift coefficient multiplied by `alpha`.
    pub fn scale_drift(&self, alpha: f64) -> Self {
        Self {
            drift: self.drift.iter().map(|c| c * alpha).collect(),
            noise: self.noise.clone(),
        }
    }

    pub fn to_file(&self, spec: &ModelSpec) -> CoefficientFile {
        let name = |u: usize| spec.units[u].name.clone();
        CoefficientFile {
            drift: spec
                .terms
                .iter()
                .zip(&self.drift)
                .map(|(t, &value)| DriftEntry {
                    target: name(t.target),
                    source: name(t.source),
                    kind: t.kind,
                    value,
                })
                .collect(),
            noise: spec
                .noise
                .iter()
                .zip(&self.noise)
                .map(|(&u, &value)| NoiseEntry { unit: name(u), value })
                .collect(),
        }
    }

    /// Resolves a named coefficient file against `spec`. Every term and noise
    /// unit must appear exactly once and nothing else may appear.
    pub fn from_file(spec: &ModelSpec, file: &CoefficientFile) -> Result<Self> {
        let mismatch = |msg: String| Error::Config(format!("coefficients do not match model: {msg}"));
        let mut theta = Self {
            drift: vec![f64::NAN; spec.terms.len()],
            noise: vec![f64::NAN; spec.noise.len()],
        };
        for e in &file.drift {
            let (t, s) = match (spec.unit_index(&e.target), spec.unit_index(&e.source)) {
                (Some(t), Some(s)) => (t, s),
                _ => return Err(mismatch(format!("unknown unit in term {}<-{}", e.target, e.source))),
            };
            let i = spec
                .term_index(t, s, e.kind)
                .ok_or_else(|| mismatch(format!("no {:?} term {}<-{} in model", e.kind, e.target, e.source)))?;
            if !theta.drift[i].is_nan() {
                return Err(mismatch(format!("term {}<-{} given twice", e.target, e.source)));
            }
            if !e.value.is_finite() {
                return Err(mismatch(format!("term {}<-{} is not finite", e.target, e.source)));
            }
            theta.drift[i] = e.value;
        }
        for e in &file.noise {
            let u = spec
                .unit_index(&e.unit)
                .ok_or_else(|| mismatch(format!("unknown noise unit {}", e.unit)))?;
            let slot = spec.noise_slot[u];
            if !theta.noise[slot].is_nan() {
                return Err(mismatch(format!("noise for {} given twice", e.unit)));
            }
            if !e.value.is_finite() {
                return Err(mismatch(format!("noise for {} is not finite", e.unit)));
            }
            theta.noise[slot] = e.value;
        }
        if let Some(i) = theta.drift.iter().position(|v| v.is_nan()) {
            return Err(mismatch(format!("missing {}", spec.param_name(i))));
        }
        if let Some(i) = theta.noise.iter().position(|v| v.is_nan()) {
            return Err(mismatch(format!("missing {}", spec.param_name(spec.terms.len() + i))));
        }
        Ok(theta)
    }
}

/// Unit counts at a time `t` (minutes), in model unit order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub t: f64,
    pub m: Vec<f64>,
}

impl StateVector {
    pub fn new(t: f64, m: Vec<f64>) -> Self {
        Self { t, m }
    }

    /// Opening force levels of the janus5 scenario, read off the averaged
    /// engagement curves: RT 40, RBMP 85, BT 27, BAPC 31, BTOW 6.
    pub fn janus5_initial() -> Self {
        Self::new(0.0, vec![40.0, 85.0, 27.0, 31.0, 6.0])
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        spec.check_state(&self.m)?;
        if !self.t.is_finite() {
            return Err(Error::Specification("state time is not finite".into()));
        }
        if let Some(i) = self.m.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Specification(format!(
                "count for {} must be finite and non-negative, got {}",
                spec.units[i].name, self.m[i]
            )));
        }
        Ok(())
    }
}

/// Diagonal matrix stored as its diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagonal(pub Vec<f64>);

impl Diagonal {
    pub fn entries(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.0.len();
        (0..n)
            .map(|i| (0..n).map(|j| if i == j { self.0[i] } else { 0.0 }).collect())
            .collect()
    }

    /// Product of the diagonal entries.
    pub fn det(&self) -> f64 {
        self.0.iter().product()
    }

    /// `ln det` as a sum of logs.
    pub fn ln_det(&self) -> f64 {
        self.0.iter().map(|d| d.ln()).sum()
    }

    pub fn inverse(&self) -> Option<Diagonal> {
        if self.0.iter().any(|&d| d == 0.0 || !d.is_finite()) {
            return None;
        }
        Some(Diagonal(self.0.iter().map(|d| 1.0 / d).collect()))
    }

    pub fn mul(&self, other: &Diagonal) -> Diagonal {
        Diagonal(self.0.iter().zip(&other.0).map(|(a, b)| a * b).collect())
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.0.iter().zip(v).map(|(d, x)| d * x).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diffusion {
    /// `z^G * m^G` per unit.
    pub sigma: Vec<f64>,
    /// `(z^G m^G)^2` on the diagonal.
    pub covariance: Diagonal,
}

/// Deterministic rates `g^G` (per minute).
pub fn drift(state: &StateVector, theta: &CoefficientSet, spec: &ModelSpec) -> Result<Vec<f64>> {
    spec.check(&state.m, theta)?;
    let mut g = vec![0.0; spec.n_units()];
    spec.drift_into(&state.m, theta, &mut g);
    Ok(g)
}

pub fn diffusion(state: &StateVector, theta: &CoefficientSet, spec: &ModelSpec) -> Result<Diffusion> {
    spec.check(&state.m, theta)?;
    let sigma: Vec<f64> = (0..spec.n_units()).map(|u| spec.z_of(theta, u) * state.m[u]).collect();
    let covariance = Diagonal(sigma.iter().map(|s| s * s).collect());
    Ok(Diffusion { sigma, covariance })
}

/// `d g^G / d m^H`, row `G`, column `H`.
pub fn drift_jacobian(state: &StateVector, theta: &CoefficientSet, spec: &ModelSpec) -> Result<Vec<Vec<f64>>> {
    spec.check(&state.m, theta)?;
    let n = spec.n_units();
    let mut jac = vec![vec![0.0; n]; n];
    add_drift_jacobian(spec, &state.m, theta, &mut jac);
    Ok(jac)
}

pub(crate) fn add_drift_jacobian(spec: &ModelSpec, m: &[f64], theta: &CoefficientSet, jac: &mut [Vec<f64>]) {
    for (t, &c) in spec.terms.iter().zip(&theta.drift) {
        match t.kind {
            TermKind::Point => jac[t.target][t.source] += c,
            TermKind::Area => {
                jac[t.target][t.source] += c * m[t.target];
                jac[t.target][t.target] += c * m[t.source];
            }
        }
    }
}

/// `X^G = ln M^G`. Under this change of variables the multiplicative noise
/// has constant coefficients.
pub fn log_transform(state: &StateVector) -> Result<Vec<f64>> {
    state
        .m
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            if m > 0.0 && m.is_finite() {
                Ok(m.ln())
            } else {
                Err(Error::Domain(format!("log transform needs positive counts; component {i} is {m}")))
            }
        })
        .collect()
}

pub fn exp_transform(x: &[f64], t: f64) -> StateVector {
    StateVector::new(t, x.iter().map(|v| v.exp()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_state() -> StateVector {
        StateVector::new(0.0, vec![10.0, 20.0, 30.0, 15.0, 5.0])
    }

    #[test]
    fn janus5_layout() {
        let spec = ModelSpec::janus5();
        assert_eq!(spec.unit_names(), ["RT", "RBMP", "BT", "BAPC", "BTOW"]);
        assert_eq!(spec.terms().len(), 12);
        assert_eq!(spec.n_params(), 17);
        assert_eq!(spec.dt(), 5.0);
        assert!(spec.terms().iter().all(|t| t.kind == TermKind::Point));
        for t in spec.terms() {
            assert_ne!(spec.units()[t.target].side, spec.units()[t.source].side);
        }
        assert_eq!(spec.param_name(0), "x[RT<-BT]");
        assert_eq!(spec.param_name(16), "z[BTOW]");
    }

    #[test]
    fn dash_positions_never_read() {
        // Perturb every coefficient one at a time and record which drift
        // components react. Only declared cells may move.
        let spec = ModelSpec::janus5();
        let base = CoefficientSet::janus5_reference();
        let s = example_state();
        let g0 = drift(&s, &base, &spec).unwrap();
        let mut touched = vec![vec![false; 5]; 5];
        for i in 0..base.drift.len() {
            let mut th = base.clone();
            th.drift[i] += 1.0;
            let g = drift(&s, &th, &spec).unwrap();
            let changed: Vec<usize> = (0..5).filter(|&k| g[k] != g0[k]).collect();
            assert_eq!(changed.len(), 1);
            let t = spec.terms()[i];
            assert_eq!(changed[0], t.target);
            touched[t.target][t.source] = true;
        }
        let red = [0, 1];
        let blue = [2, 3, 4];
        for target in 0..5 {
            for source in 0..5 {
                let expected = (red.contains(&target) && blue.contains(&source))
                    || (blue.contains(&target) && red.contains(&source));
                assert_eq!(touched[target][source], expected, "cell {target},{source}");
            }
        }
    }

    #[test]
    fn drift_examples() {
        let spec = ModelSpec::janus5();
        let th = CoefficientSet::janus5_reference();
        let g = drift(&example_state(), &th, &spec).unwrap();
        assert_close!(g[2], -0.1007, 1e-12);
        assert_close!(g[0], -0.27108, 1e-12);
        let zero = drift(&StateVector::new(0.0, vec![0.0; 5]), &th, &spec).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn diffusion_examples() {
        let spec = ModelSpec::janus5();
        let mut th = CoefficientSet::janus5_reference();
        // sign of z does not reach the covariance
        th.noise[4] = -1.3e-2;
        let d = diffusion(&example_state(), &th, &spec).unwrap();
        assert_close!(d.sigma[4], -0.065, 1e-15);
        assert_close!(d.covariance.entries()[4], 4.225e-3, 1e-15);

        let one = StateVector::new(0.0, vec![1.0; 5]);
        let d = diffusion(&one, &th, &spec).unwrap();
        assert_close!(d.covariance.entries()[0], 1.369e-5, 1e-18);

        let d = diffusion(&example_state(), &CoefficientSet::zeros(&spec), &spec).unwrap();
        assert!(d.covariance.entries().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn covariance_zero_iff_factor_zero() {
        let spec = ModelSpec::janus5();
        let mut th = CoefficientSet::janus5_reference();
        th.noise[1] = 0.0;
        let s = StateVector::new(0.0, vec![10.0, 20.0, 0.0, 15.0, 5.0]);
        let d = diffusion(&s, &th, &spec).unwrap();
        for (u, &c) in d.covariance.entries().iter().enumerate() {
            assert!(c >= 0.0);
            assert_eq!(c == 0.0, u == 1 || u == 2);
        }
    }

    #[test]
    fn shape_mismatch_is_specification_error() {
        let spec = ModelSpec::janus5();
        let th = CoefficientSet::janus5_reference();
        let short = StateVector::new(0.0, vec![1.0; 4]);
        assert!(matches!(drift(&short, &th, &spec), Err(Error::Specification(_))));
        assert!(matches!(diffusion(&short, &th, &spec), Err(Error::Specification(_))));
        let mut bad = th.clone();
        bad.drift.pop();
        assert!(matches!(drift_jacobian(&example_state(), &bad, &spec), Err(Error::Specification(_))));
    }

    #[test]
    fn jacobian_point_term_is_constant() {
        let spec = ModelSpec::janus5();
        let th = CoefficientSet::janus5_reference();
        for m in [vec![1.0; 5], vec![3.0, 7.0, 11.0, 0.5, 2.0]] {
            let j = drift_jacobian(&StateVector::new(0.0, m), &th, &spec).unwrap();
            assert_eq!(j[2][0], -6.7e-4);
        }
    }

    fn two_unit_spec(kind: TermKind) -> ModelSpec {
        ModelSpec::from_json(&format!(
            r#"{{"units":[{{"name":"A","side":"Red"}},{{"name":"B","side":"Blue"}}],
                "terms":[{{"target":"A","source":"B","kind":"{kind:?}"}}],
                "noise":["A","B"],"dt":1}}"#
        ))
        .unwrap()
    }

    #[test]
    fn jacobian_area_term_product_rule() {
        let spec = two_unit_spec(TermKind::Area);
        let th = CoefficientSet {
            drift: vec![2.0],
            noise: vec![0.1, 0.1],
        };
        // target A = 4, source B = 3
        let s = StateVector::new(0.0, vec![4.0, 3.0]);
        let j = drift_jacobian(&s, &th, &spec).unwrap();
        assert_eq!(j[0][1], 8.0);
        assert_eq!(j[0][0], 6.0);
        assert_eq!(j[1], vec![0.0, 0.0]);

        let h = 1e-6;
        for col in 0..2 {
            let mut up = s.clone();
            let mut dn = s.clone();
            up.m[col] += h;
            dn.m[col] -= h;
            let fd = (drift(&up, &th, &spec).unwrap()[0] - drift(&dn, &th, &spec).unwrap()[0]) / (2.0 * h);
            assert_close!(fd, j[0][col], 1e-6 * j[0][col].abs());
        }
    }

    #[test]
    fn no_terms_gives_zero_jacobian() {
        let spec = ModelSpec::from_json(
            r#"{"units":[{"name":"A","side":"Red"},{"name":"B","side":"Blue"}],
                "terms":[],"noise":["B","A"],"dt":2}"#,
        )
        .unwrap();
        let th = CoefficientSet::zeros(&spec);
        let j = drift_jacobian(&StateVector::new(0.0, vec![5.0, 6.0]), &th, &spec).unwrap();
        assert_eq!(j, vec![vec![0.0; 2]; 2]);
    }

    #[test]
    fn log_transform_examples() {
        let x = log_transform(&StateVector::new(0.0, vec![1.0, std::f64::consts::E])).unwrap();
        assert_eq!(x[0], 0.0);
        assert_close!(x[1], 1.0, 1e-15);

        // ln via atanh series: ln m = 2 sum_k w^(2k+1)/(2k+1), w = (m-1)/(m+1)
        let series_ln = |m: f64| {
            let w = (m - 1.0) / (m + 1.0);
            let mut sum = 0.0;
            let mut p = w;
            for k in 0..2000 {
                sum += p / (2 * k + 1) as f64;
                p *= w * w;
            }
            2.0 * sum
        };
        let s = StateVector::new(0.0, vec![10.0, 20.0]);
        let x = log_transform(&s).unwrap();
        assert_close!(x[0], series_ln(10.0), 1e-13);
        assert_close!(x[1], series_ln(20.0), 1e-13);
        let back = exp_transform(&x, 0.0);
        for (a, b) in back.m.iter().zip(&s.m) {
            assert!(((a - b) / b).abs() < 1e-12);
        }

        assert!(matches!(
            log_transform(&StateVector::new(0.0, vec![1.0, 0.0])),
            Err(Error::Domain(_))
        ));
        assert!(log_transform(&StateVector::new(0.0, vec![-2.0])).is_err());
    }

    #[test]
    fn spec_validation() {
        let ok = r#"{"units":[{"name":"A","side":"Red"},{"name":"B","side":"Blue"}],
            "terms":[{"target":"A","source":"B","kind":"Point"}],"noise":["A","B"],"dt":5}"#;
        assert!(ModelSpec::from_json(ok).is_ok());

        let cases = [
            ok.replace(r#""name":"B""#, r#""name":"A""#),
            ok.replace(r#""source":"B""#, r#""source":"C""#),
            ok.replace(r#""source":"B""#, r#""source":"A""#),
            ok.replace(r#""noise":["A","B"]"#, r#""noise":["A"]"#),
            ok.replace(r#""noise":["A","B"]"#, r#""noise":["A","B","A"]"#),
            ok.replace(r#""dt":5"#, r#""dt":0"#),
            ok.replace(r#""dt":5"#, r#""dt":5,"bounds":{"drift":[1,-1]}"#),
            ok.replace(r#""dt":5"#, r#""dt":5,"bounds":{"params":{"z[C]":[0,1]}}"#),
            ok.replace(r#""dt":5"#, r#""dt":5,"extra":1"#),
        ];
        for c in &cases {
            assert!(ModelSpec::from_json(c).is_err(), "accepted {c}");
        }
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = ModelSpec::janus5();
        let back = ModelSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(back, spec);
        let mut b = BoundsSpec::default();
        b.params.insert("z[BT]".into(), (1e-4, 0.05));
        let spec = spec.with_bounds(b).unwrap();
        assert_eq!(spec.param_bounds()[14], (1e-4, 0.05));
        assert_eq!(spec.param_bounds()[0], DEFAULT_DRIFT_BOUNDS);
        assert_eq!(ModelSpec::from_json(&spec.to_json()).unwrap(), spec);
    }

    #[test]
    fn coefficient_file_matching() {
        let spec = ModelSpec::janus5();
        let th = CoefficientSet::janus5_reference();
        let mut file = th.to_file(&spec);
        file.drift.reverse();
        assert_eq!(CoefficientSet::from_file(&spec, &file).unwrap(), th);

        let mut missing = file.clone();
        missing.noise.pop();
        assert!(matches!(CoefficientSet::from_file(&spec, &missing), Err(Error::Config(_))));

        let mut extra = file.clone();
        extra.drift.push(DriftEntry {
            target: "RT".into(),
            source: "RBMP".into(),
            kind: TermKind::Point,
            value: 0.0,
        });
        assert!(CoefficientSet::from_file(&spec, &extra).is_err());
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn drift_is_linear_in_coefficients(
            m in proptest::collection::vec(0.0f64..100.0, 5),
            alpha in -10.0f64..10.0,
        ) {
            let spec = ModelSpec::janus5();
            let th = CoefficientSet::janus5_reference();
            let s = StateVector::new(0.0, m);
            let g = drift(&s, &th, &spec).unwrap();
            let ga = drift(&s, &th.scale_drift(alpha), &spec).unwrap();
            for (a, b) in g.iter().zip(&ga) {
                prop_assert!((alpha * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }
}
