//! Subcommand dispatch.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use attrition_core::momenta::ensemble_cmi;
use attrition_core::simulator::{self, run_seed};
use attrition_core::{fit, minimize, Coordinates, Error, Likelihood};
use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{read_theta, RunConfigFile};
use crate::report::FitReport;
use crate::svg::line_chart;
use crate::table::{fmt_f64, read_ensemble_csv, write_ensemble_csv};
use crate::{write_file, CliError, CliResult};

pub const ENSEMBLE_CSV: &str = "ensemble.csv";
pub const ENSEMBLE_SVG: &str = "ensemble.svg";
pub const FIT_TEXT: &str = "fit.txt";
pub const FIT_JSON: &str = "fit.json";
pub const FIT_CSV: &str = "fit.csv";
pub const CMI_CSV: &str = "cmi.csv";
pub const CMI_SVG: &str = "cmi.svg";
pub const BENCH_CSV: &str = "asa_bench.csv";

#[derive(Debug, Parser)]
#[command(name = "attrition", version, about = "Stochastic attrition models: simulate, fit, canonical momenta")]
pub struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for simulation and annealing; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default: io.out from the config, else `.`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Also write an SVG chart.
    #[arg(long, global = true)]
    pub svg: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded ensemble of battles.
    Simulate {
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        substeps: Option<usize>,
        /// Scale factor on every noise coefficient.
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Fit drift and noise coefficients to an ensemble.
    Fit {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        max_generated: Option<u64>,
        #[arg(long, value_enum)]
        coordinates: Option<CoordArg>,
        /// Report the annealing result without the exact local descent.
        #[arg(long)]
        no_refine: bool,
    },
    /// Canonical momenta indicators for every run and their mean.
    Cmi {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Coefficient file or fit report.
        #[arg(long)]
        theta: Option<PathBuf>,
    },
    /// Run the optimizer on a benchmark function.
    AsaBench {
        #[arg(long, value_enum, default_value_t = Benchmark::Rastrigin)]
        function: Benchmark,
        #[arg(long, default_value_t = 4)]
        dims: usize,
        #[arg(long)]
        max_generated: Option<u64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CoordArg {
    M,
    #[value(name = "logM", alias = "logm")]
    LogM,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Benchmark {
    /// `sum (x_i - 0.3)^2` on `[-1, 1]^D`.
    Quadratic,
    /// `sum x_i^2 - 10 cos(2 pi x_i) + 10` on `[-5.12, 5.12]^D`.
    Rastrigin,
}

impl Benchmark {
    pub fn bounds(self, dims: usize) -> Vec<(f64, f64)> {
        match self {
            Benchmark::Quadratic => vec![(-1.0, 1.0); dims],
            Benchmark::Rastrigin => vec![(-5.12, 5.12); dims],
        }
    }

    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            Benchmark::Quadratic => x.iter().map(|v| (v - 0.3) * (v - 0.3)).sum(),
            Benchmark::Rastrigin => x
                .iter()
                .map(|v| v * v - 10.0 * (2.0 * std::f64::consts::PI * v).cos() + 10.0)
                .sum(),
        }
    }
}

/// Runs the parsed command and returns what should be printed on stdout.
pub fn execute(cli: Cli) -> CliResult<String> {
    match cli.threads {
        Some(0) => Err(Error::Usage("--threads must be at least 1".into()).into()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            pool.install(|| dispatch(&cli))
        }
        None => dispatch(&cli),
    }
}

fn dispatch(cli: &Cli) -> CliResult<String> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfigFile::load(p)?,
        None => RunConfigFile::default(),
    };
    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.io.out.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;

    match &cli.command {
        Command::Simulate {
            runs,
            epochs,
            substeps,
            noise,
        } => {
            cfg.sim.runs = runs.or(cfg.sim.runs);
            cfg.sim.epochs = epochs.or(cfg.sim.epochs);
            cfg.sim.substeps = substeps.or(cfg.sim.substeps);
            cfg.sim.noise_scale = noise.or(cfg.sim.noise_scale);
            simulate(&cfg, cli.seed, &out_dir, cli.svg)
        }
        Command::Fit {
            data,
            max_generated,
            coordinates,
            no_refine,
        } => {
            cfg.asa.max_generated = max_generated.or(cfg.asa.max_generated);
            if let Some(c) = coordinates {
                cfg.fit.coordinates = Some(match c {
                    CoordArg::M => Coordinates::M,
                    CoordArg::LogM => Coordinates::LogM,
                });
            }
            if *no_refine {
                cfg.fit.refine = Some(false);
            }
            let data = required(data.as_ref().or(cfg.io.data.as_ref()), "--data")?;
            fit_cmd(&cfg, &data, cli.seed, &out_dir)
        }
        Command::Cmi { data, theta } => {
            let data = required(data.as_ref().or(cfg.io.data.as_ref()), "--data")?;
            let theta = required(theta.as_ref().or(cfg.io.theta.as_ref()), "--theta")?;
            cmi(&cfg, &data, &theta, &out_dir, cli.svg)
        }
        Command::AsaBench {
            function,
            dims,
            max_generated,
        } => {
            cfg.asa.max_generated = max_generated.or(cfg.asa.max_generated);
            asa_bench(&cfg, *function, *dims, cli.seed, &out_dir)
        }
    }
}

fn required(p: Option<&PathBuf>, flag: &str) -> CliResult<PathBuf> {
    p.cloned()
        .ok_or_else(|| Error::Usage(format!("{flag} is required (or set it in the config io section)")).into())
}

fn simulate(cfg: &RunConfigFile, seed: Option<u64>, out: &Path, svg: bool) -> CliResult<String> {
    let spec = cfg.model()?;
    let sim = cfg.sim_config(&spec, seed)?;
    let ensemble = simulator::ensemble(&sim)?;
    let path = out.join(ENSEMBLE_CSV);
    write_ensemble_csv(&spec, &ensemble, &path)?;
    let mut msg = format!(
        "wrote {} runs x {} states to {}\n",
        ensemble.runs.len(),
        sim.n_epochs + 1,
        path.display()
    );
    if svg {
        let mean = ensemble.mean_trajectory()?;
        let t: Vec<f64> = mean.iter().map(|s| s.t).collect();
        let series = spec
            .unit_names()
            .iter()
            .enumerate()
            .map(|(u, n)| (n.to_string(), mean.iter().map(|s| s.m[u]).collect()))
            .collect::<Vec<_>>();
        let path = out.join(ENSEMBLE_SVG);
        write_file(&path, &line_chart("mean unit counts", "minutes", &t, &series))?;
        let _ = writeln!(msg, "wrote {}", path.display());
    }
    Ok(msg)
}

fn fit_cmd(cfg: &RunConfigFile, data: &Path, seed: Option<u64>, out: &Path) -> CliResult<String> {
    let spec = cfg.model()?;
    let ensemble = read_ensemble_csv(&spec, data)?;
    let options = cfg.fit_options(&spec, seed);
    let start = Instant::now();
    let outcome = fit(&spec, &ensemble, &options)?;
    let elapsed = start.elapsed();
    let report = FitReport::new(&spec, &outcome, options.coordinates);
    let text = report.to_text(&spec);
    write_file(&out.join(FIT_TEXT), &text)?;
    write_file(&out.join(FIT_JSON), &report.to_json())?;
    write_file(&out.join(FIT_CSV), &report.to_csv())?;
    Ok(format!("{text}wall time {:.2} s\n", elapsed.as_secs_f64()))
}

fn cmi(cfg: &RunConfigFile, data: &Path, theta: &Path, out: &Path, svg: bool) -> CliResult<String> {
    let spec = cfg.model()?;
    let ensemble = read_ensemble_csv(&spec, data)?;
    let theta = read_theta(&spec, theta)?;
    let lk = Likelihood::new(&spec).with_count_floor(cfg.fit.count_floor.unwrap_or(attrition_core::likelihood::DEFAULT_COUNT_FLOOR));
    let series = ensemble_cmi(&lk, &ensemble, &theta)?;

    let mut csv = String::from("series,t");
    for n in spec.unit_names() {
        csv.push(',');
        csv.push_str(n);
    }
    csv.push('\n');
    for s in &series {
        for p in &s.points {
            csv += &format!("{},{}", s.id, fmt_f64(p.t));
            for v in &p.pi {
                csv.push(',');
                csv += &fmt_f64(*v);
            }
            csv.push('\n');
        }
    }
    let path = out.join(CMI_CSV);
    write_file(&path, &csv)?;
    let mean = series.last().expect("ensemble_cmi ends with the mean");
    let mut msg = format!(
        "wrote {} series x {} epochs to {}\n",
        series.len(),
        mean.points.len(),
        path.display()
    );
    if svg {
        let t: Vec<f64> = mean.points.iter().map(|p| p.t).collect();
        let lines = spec
            .unit_names()
            .iter()
            .enumerate()
            .map(|(u, n)| (n.to_string(), mean.points.iter().map(|p| p.pi[u]).collect()))
            .collect::<Vec<_>>();
        let path = out.join(CMI_SVG);
        write_file(&path, &line_chart("mean canonical momenta", "minutes", &t, &lines))?;
        let _ = writeln!(msg, "wrote {}", path.display());
    }
    Ok(msg)
}

fn asa_bench(cfg: &RunConfigFile, function: Benchmark, dims: usize, seed: Option<u64>, out: &Path) -> CliResult<String> {
    if dims == 0 {
        return Err(Error::Usage("--dims must be at least 1".into()).into());
    }
    let bounds = function.bounds(dims);
    let mut config = cfg.asa_config(dims, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed(config.seed, 0));
    config.initial = Some(bounds.iter().map(|&(a, b)| rng.random_range(a..b)).collect());
    let result = minimize(|x| function.eval(x), &bounds, &config)?;
    let mut csv = String::from("generated,accepted,best_cost\n");
    for p in &result.trace {
        csv += &format!("{},{},{}\n", p.generated, p.accepted, fmt_f64(p.best_cost));
    }
    let path = out.join(BENCH_CSV);
    write_file(&path, &csv)?;
    Ok(format!(
        "best cost {:e} after {} generated ({} accepted); wrote {}\n",
        result.best_cost,
        result.generated,
        result.accepted,
        path.display()
    ))
}
