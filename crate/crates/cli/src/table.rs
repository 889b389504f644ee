//! Trajectory ensembles as CSV.
//!
//! Header `run,t,<unit1>,...,<unitN>` in model order, one row per state,
//! rows sorted by run then time. Numbers are written with 17 significant
//! digits so that reading a written file reproduces it exactly.

use std::collections::BTreeSet;
use std::path::Path;

use attrition_core::series::DT_REL_TOL;
use attrition_core::{Ensemble, Error, ModelSpec, StateVector, Trajectory};

use crate::{read_file, write_file, CliResult};

/// Full-precision rendering used by every machine-readable output.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn header(spec: &ModelSpec, first: &str) -> Vec<String> {
    [first, "t"]
        .into_iter()
        .map(String::from)
        .chain(spec.unit_names().into_iter().map(String::from))
        .collect()
}

pub fn ensemble_to_csv(spec: &ModelSpec, ensemble: &Ensemble) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header(spec, "run")).expect("writing to memory");
    for run in &ensemble.runs {
        for s in &run.states {
            let row = [run.run.to_string(), fmt_f64(s.t)]
                .into_iter()
                .chain(s.m.iter().map(|&v| fmt_f64(v)));
            w.write_record(row).expect("writing to memory");
        }
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("ascii output")
}

pub fn write_ensemble_csv(spec: &ModelSpec, ensemble: &Ensemble, path: &Path) -> CliResult<()> {
    write_file(path, &ensemble_to_csv(spec, ensemble))
}

fn format_err(line: u64, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("line {line}: {msg}"))
}

/// Parses and validates an ensemble. Errors name the offending line.
pub fn ensemble_from_csv(spec: &ModelSpec, text: &str) -> Result<Ensemble, Error> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::None)
        .from_reader(text.as_bytes());
    let expect = header(spec, "run");
    let got: Vec<String> = r
        .headers()
        .map_err(|e| format_err(1, e))?
        .iter()
        .map(String::from)
        .collect();
    if got != expect {
        return Err(format_err(1, format!("header is `{}`, expected `{}`", got.join(","), expect.join(","))));
    }

    let mut runs: Vec<Trajectory> = Vec::new();
    let mut seen = BTreeSet::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| match e.position() {
            Some(p) => format_err(p.line(), e),
            None => Error::Format(e.to_string()),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != expect.len() {
            return Err(format_err(line, format!("{} fields, expected {}", rec.len(), expect.len())));
        }
        let run: u32 = rec[0]
            .parse()
            .map_err(|_| format_err(line, format!("run id `{}` is not a non-negative integer", &rec[0])))?;
        let nums = rec
            .iter()
            .skip(1)
            .zip(&expect[1..])
            .map(|(field, name)| match field.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(format_err(line, format!("{name} value `{field}` is not a finite number"))),
            })
            .collect::<Result<Vec<f64>, Error>>()?;
        let (t, m) = (nums[0], nums[1..].to_vec());
        if let Some((u, v)) = m.iter().enumerate().find(|(_, &v)| v < 0.0) {
            return Err(format_err(line, format!("negative count {v} for {}", expect[u + 2])));
        }
        match runs.last_mut() {
            Some(cur) if cur.run == run => {
                let prev = cur.states.last().expect("runs start non-empty").t;
                if t <= prev {
                    return Err(format_err(line, format!("run {run}: time {t} does not follow {prev}")));
                }
                cur.states.push(StateVector::new(t, m));
            }
            _ => {
                if let Some(cur) = runs.last() {
                    if run < cur.run || seen.contains(&run) {
                        return Err(format_err(line, format!("run {run} is out of order")));
                    }
                }
                seen.insert(run);
                runs.push(Trajectory::new(run, vec![StateVector::new(t, m)]));
            }
        }
    }
    if runs.is_empty() {
        return Err(Error::Format("no data rows".into()));
    }
    for run in &runs {
        if run.states.len() < 2 {
            return Err(Error::Format(format!("run {} has fewer than 2 states", run.run)));
        }
        let dt = run.states[1].t - run.states[0].t;
        for w in run.states.windows(2) {
            let step = w[1].t - w[0].t;
            if (step - dt).abs() > DT_REL_TOL * dt.abs() {
                return Err(Error::Format(format!(
                    "run {}: non-uniform time step ({step} after {dt}) at t = {}",
                    run.run, w[1].t
                )));
            }
        }
    }
    Ok(Ensemble::new(runs))
}

pub fn read_ensemble_csv(spec: &ModelSpec, path: &Path) -> CliResult<Ensemble> {
    let text = read_file(path)?;
    ensemble_from_csv(spec, &text).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())).into(),
        other => other.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use attrition_core::simulator::ensemble;
    use attrition_core::SimConfig;

    fn janus5() -> ModelSpec {
        ModelSpec::janus5()
    }

    const HEAD: &str = "run,t,RT,RBMP,BT,BAPC,BTOW\n";

    #[test]
    fn round_trip_is_exact() {
        let spec = janus5();
        let mut cfg = SimConfig::janus5(12);
        cfg.n_runs = 4;
        let e = ensemble(&cfg).unwrap();
        let text = ensemble_to_csv(&spec, &e);
        assert!(text.starts_with(HEAD));
        assert!(!text.contains('\r'));
        let back = ensemble_from_csv(&spec, &text).unwrap();
        assert_eq!(back, e);
        assert_eq!(ensemble_to_csv(&spec, &back), text);
    }

    #[test]
    fn six_by_eleven_gives_sixty_transitions() {
        let spec = janus5();
        let e = ensemble(&SimConfig::janus5(1)).unwrap();
        let back = ensemble_from_csv(&spec, &ensemble_to_csv(&spec, &e)).unwrap();
        assert_eq!(back.transitions(&spec).unwrap().len(), 60);
    }

    fn err(text: &str) -> String {
        match ensemble_from_csv(&janus5(), text) {
            Err(Error::Format(m)) => m,
            other => panic!("expected a format error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_files_name_the_line() {
        assert!(err("run,t,RT,RBMP,BT,BAPC\n").contains("line 1"));
        let ragged = format!("{HEAD}0,0,1,2,3,4,5\n0,5,1,2,3,4\n");
        assert!(err(&ragged).contains("line 3"), "{}", err(&ragged));
        let negative = format!("{HEAD}0,0,1,2,3,4,5\n0,5,1,2,-3,4,5\n");
        let m = err(&negative);
        assert!(m.contains("line 3") && m.contains("BT"), "{m}");
        let text = format!("{HEAD}0,0,1,2,3,4,5\n0,5,1,2,x,4,5\n");
        assert!(err(&text).contains("line 3"));
        let backwards = format!("{HEAD}0,5,1,2,3,4,5\n0,0,1,2,3,4,5\n");
        assert!(err(&backwards).contains("line 3"));
        let interleaved = format!("{HEAD}0,0,1,2,3,4,5\n0,5,1,2,3,4,5\n1,0,1,2,3,4,5\n1,5,1,2,3,4,5\n0,10,1,2,3,4,5\n");
        assert!(err(&interleaved).contains("line 6"));
    }

    #[test]
    fn short_runs_and_uneven_steps_are_rejected() {
        let single = format!("{HEAD}0,0,1,2,3,4,5\n0,5,1,2,3,4,5\n3,0,1,2,3,4,5\n");
        assert_eq!(err(&single), "run 3 has fewer than 2 states");
        let uneven = format!("{HEAD}0,0,1,2,3,4,5\n0,5,1,2,3,4,5\n0,11,1,2,3,4,5\n");
        assert!(err(&uneven).contains("non-uniform"));
        assert!(err(HEAD).contains("no data"));
    }
}
