//! Run configuration file.
//!
//! Every section is optional. Relative paths are resolved against the
//! directory holding the config file. Unknown keys are rejected.
//!
//! ```json
//! {
//!   "model": { "builtin": "janus5" },
//!   "sim": { "runs": 6, "epochs": 10, "substeps": 10, "seed": 0 },
//!   "fit": { "coordinates": "M", "count_floor": 1e-6 },
//!   "asa": { "max_generated": 200000, "seed": 0 },
//!   "io": { "data": "ensemble.csv", "out": "results" }
//! }
//! ```

use std::path::{Path, PathBuf};

use attrition_core::likelihood::DEFAULT_COUNT_FLOOR;
use attrition_core::model::BoundsSpec;
use attrition_core::{AsaConfig, CoefficientSet, Coordinates, Error, FitOptions, ModelSpec, SimConfig, StateVector, StepMode};
use serde::Deserialize;

use crate::{read_file, CliResult};

pub const BUILTIN_JANUS5: &str = "janus5";

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    /// `{"builtin": "janus5"}` or a full model spec document.
    #[serde(default)]
    pub model: Option<serde_json::Value>,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub asa: AsaSection,
    #[serde(default)]
    pub io: IoSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub runs: Option<usize>,
    pub epochs: Option<usize>,
    pub substeps: Option<usize>,
    pub seed: Option<u64>,
    pub count_floor: Option<f64>,
    /// Multiplies every noise coefficient; 0 gives deterministic runs.
    pub noise_scale: Option<f64>,
    pub mode: Option<StepMode>,
    /// Coefficient file; required unless the model is builtin.
    pub theta: Option<PathBuf>,
    /// Initial counts in unit order; required unless the model is builtin.
    pub initial: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub bounds: Option<BoundsSpec>,
    pub coordinates: Option<Coordinates>,
    pub count_floor: Option<f64>,
    pub refine: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsaSection {
    pub t0_gen: Option<f64>,
    pub t0_accept: Option<f64>,
    pub c: Option<f64>,
    pub c_accept: Option<f64>,
    pub reanneal_every: Option<u64>,
    pub max_generated: Option<u64>,
    pub cost_repeat_eps: Option<f64>,
    pub cost_repeat_count: Option<u32>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoSection {
    pub data: Option<PathBuf>,
    pub theta: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl RunConfigFile {
    pub fn parse(text: &str) -> Result<Self, Error> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    /// Reads a config file and makes its relative paths absolute.
    pub fn load(path: &Path) -> CliResult<Self> {
        let mut cfg = Self::parse(&read_file(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.sim.theta, &mut cfg.io.data, &mut cfg.io.theta, &mut cfg.io.out]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn is_builtin(&self) -> bool {
        match &self.model {
            None => true,
            Some(v) => v.get("builtin").is_some(),
        }
    }

    /// The model with any fit bounds applied.
    pub fn model(&self) -> Result<ModelSpec, Error> {
        let spec = match &self.model {
            None => ModelSpec::janus5(),
            Some(v) => match v.get("builtin") {
                Some(name) => {
                    let only_key = v.as_object().is_some_and(|o| o.len() == 1);
                    if name.as_str() != Some(BUILTIN_JANUS5) || !only_key {
                        return Err(Error::Config(format!(
                            "model: the only builtin is {{\"builtin\": \"{BUILTIN_JANUS5}\"}}, got {v}"
                        )));
                    }
                    ModelSpec::janus5()
                }
                None => ModelSpec::deserialize(v).map_err(|e| Error::Config(format!("model: {e}")))?,
            },
        };
        match &self.fit.bounds {
            Some(b) => spec.with_bounds(b.clone()),
            None => Ok(spec),
        }
    }

    /// Simulation settings; `seed` overrides `sim.seed`.
    pub fn sim_config(&self, spec: &ModelSpec, seed: Option<u64>) -> CliResult<SimConfig> {
        let builtin = self.is_builtin();
        let mut theta = match &self.sim.theta {
            Some(p) => read_theta(spec, p)?,
            None if builtin => CoefficientSet::janus5_reference(),
            None => return Err(Error::Config("sim.theta is required for a custom model".into()).into()),
        };
        let initial = match &self.sim.initial {
            Some(m) => StateVector::new(0.0, m.clone()),
            None if builtin => StateVector::janus5_initial(),
            None => return Err(Error::Config("sim.initial is required for a custom model".into()).into()),
        };
        if let Some(scale) = self.sim.noise_scale {
            if !(scale.is_finite() && scale >= 0.0) {
                return Err(Error::Config(format!("noise scale must be finite and >= 0, got {scale}")).into());
            }
            theta.noise.iter_mut().for_each(|z| *z *= scale);
        }
        let defaults = SimConfig::janus5(0);
        let cfg = SimConfig {
            spec: spec.clone(),
            theta,
            initial,
            n_runs: self.sim.runs.unwrap_or(defaults.n_runs),
            n_epochs: self.sim.epochs.unwrap_or(defaults.n_epochs),
            substeps_per_epoch: self.sim.substeps.unwrap_or(defaults.substeps_per_epoch),
            master_seed: seed.or(self.sim.seed).unwrap_or(0),
            count_floor: self.sim.count_floor.unwrap_or(defaults.count_floor),
            mode: self.sim.mode.unwrap_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Annealing settings for `dim` parameters; `seed` overrides `asa.seed`.
    pub fn asa_config(&self, dim: usize, seed: Option<u64>) -> AsaConfig {
        let a = &self.asa;
        let mut cfg = AsaConfig::new(dim, seed.or(a.seed).unwrap_or(0));
        if let Some(t) = a.t0_gen {
            cfg.t0_gen = vec![t; dim];
        }
        if let Some(c) = a.c {
            cfg.c = vec![c; dim];
        }
        if let Some(c) = a.c_accept {
            cfg.c_accept = c;
        }
        cfg.t0_accept = a.t0_accept;
        cfg.reanneal_every = a.reanneal_every.unwrap_or(cfg.reanneal_every);
        cfg.max_generated = a.max_generated.unwrap_or(cfg.max_generated);
        cfg.cost_repeat_eps = a.cost_repeat_eps.unwrap_or(cfg.cost_repeat_eps);
        cfg.cost_repeat_count = a.cost_repeat_count.unwrap_or(cfg.cost_repeat_count);
        cfg
    }

    pub fn fit_options(&self, spec: &ModelSpec, seed: Option<u64>) -> FitOptions {
        let mut options = FitOptions::new(spec, 0);
        options.asa = self.asa_config(spec.n_params(), seed);
        options.coordinates = self.fit.coordinates.unwrap_or_default();
        options.count_floor = self.fit.count_floor.unwrap_or(DEFAULT_COUNT_FLOOR);
        options.refine = self.fit.refine.unwrap_or(true);
        options
    }
}

/// Coefficients from a coefficient file or from the `theta` member of a fit
/// report.
pub fn read_theta(spec: &ModelSpec, path: &Path) -> CliResult<CoefficientSet> {
    let text = read_file(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let body = value.get("theta").unwrap_or(&value);
    let file = serde_json::from_value(body.clone()).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(CoefficientSet::from_file(spec, &file)?)
}
