//! Fit reports: a coefficient matrix as text, JSON and CSV.

use attrition_core::model::CoefficientFile;
use attrition_core::{Coordinates, FitOutcome, ModelSpec, TermKind};
use serde::Serialize;

use crate::table::fmt_f64;

/// Glyph for a coefficient the model does not have.
pub const DASH: &str = "-";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamReport {
    pub name: String,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub bounds_hit: bool,
}

/// Everything a fit run writes to disk. Wall time is deliberately absent so
/// that equal inputs give byte-identical files.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub theta: CoefficientFile,
    pub params: Vec<ParamReport>,
    pub cost: f64,
    pub asa_cost: f64,
    pub generated: u64,
    pub accepted: u64,
    pub bounds_hit: Vec<String>,
    pub clamp_events: usize,
    pub n_transitions: usize,
    pub coordinates: Coordinates,
}

impl FitReport {
    pub fn new(spec: &ModelSpec, outcome: &FitOutcome, coordinates: Coordinates) -> Self {
        let values = outcome.theta.to_params();
        let params: Vec<ParamReport> = spec
            .param_names()
            .into_iter()
            .zip(values)
            .zip(spec.param_bounds())
            .zip(&outcome.bounds_hit)
            .map(|(((name, value), &(lower, upper)), &hit)| ParamReport {
                name,
                value,
                lower,
                upper,
                bounds_hit: hit,
            })
            .collect();
        Self {
            theta: outcome.theta.to_file(spec),
            bounds_hit: params.iter().filter(|p| p.bounds_hit).map(|p| p.name.clone()).collect(),
            params,
            cost: outcome.cost,
            asa_cost: outcome.asa_cost,
            generated: outcome.generated,
            accepted: outcome.accepted,
            clamp_events: outcome.clamp_events,
            n_transitions: outcome.n_transitions,
            coordinates,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("parameter,value,lower,upper,bounds_hit\n");
        for p in &self.params {
            out += &format!(
                "{},{},{},{},{}\n",
                p.name,
                fmt_f64(p.value),
                fmt_f64(p.lower),
                fmt_f64(p.upper),
                p.bounds_hit
            );
        }
        out
    }

    /// Rows are equations, columns the source units and the noise `eta`.
    pub fn to_text(&self, spec: &ModelSpec) -> String {
        let values: Vec<f64> = self.params.iter().map(|p| p.value).collect();
        let mut out = format!(
            "coefficients fitted to {} transitions ({} coordinates)\n",
            self.n_transitions,
            match self.coordinates {
                Coordinates::M => "M",
                Coordinates::LogM => "logM",
            }
        );
        out += &matrix(spec, &values, TermKind::Point, true);
        if spec.terms().iter().any(|t| t.kind == TermKind::Area) {
            out += "\narea terms\n";
            out += &matrix(spec, &values, TermKind::Area, false);
        }
        out += &format!(
            "\ncost {:.6} (annealing {:.6}), {} generated, {} accepted\n",
            self.cost, self.asa_cost, self.generated, self.accepted
        );
        if !self.bounds_hit.is_empty() {
            out += &format!("at a bound: {}\n", self.bounds_hit.join(", "));
        }
        if self.clamp_events > 0 {
            out += &format!("counts raised to the floor: {}\n", self.clamp_events);
        }
        out
    }
}

/// Two significant digits.
pub fn fmt_coef(v: f64) -> String {
    format!("{v:.1E}")
}

fn matrix(spec: &ModelSpec, values: &[f64], kind: TermKind, with_noise: bool) -> String {
    let names = spec.unit_names();
    let n_terms = spec.terms().len();
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut head = vec![String::new()];
    head.extend(names.iter().map(|s| s.to_string()));
    if with_noise {
        head.push("eta".into());
    }
    rows.push(head);
    for (g, name) in names.iter().enumerate() {
        let mut row = vec![name.to_string()];
        for h in 0..names.len() {
            row.push(match spec.term_index(g, h, kind) {
                Some(j) => fmt_coef(values[j]),
                None => DASH.into(),
            });
        }
        if with_noise {
            row.push(match spec.noise_units().iter().position(|&u| u == g) {
                Some(k) => fmt_coef(values[n_terms + k]),
                None => DASH.into(),
            });
        }
        rows.push(row);
    }
    let width = rows.iter().flatten().map(String::len).max().unwrap_or(1);
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row.iter().map(|c| format!("{c:>width$}")).collect();
        out += line.join("  ").trim_end();
        out.push('\n');
    }
    out
}
