use attrition_core::momenta::{el_residual, ensemble_cmi, force, momenta};
use attrition_core::simulator::{self, ensemble, run};
use attrition_core::{
    fit, CoefficientSet, Ensemble, Error, FitOptions, Likelihood, ModelSpec, SeriesId, SimConfig, StateVector,
    Trajectory,
};

fn noiseless(seed: u64) -> SimConfig {
    let mut cfg = SimConfig::janus5(seed);
    cfg.theta.noise.iter_mut().for_each(|z| *z = 0.0);
    cfg
}

#[test]
fn attrition_is_monotone_without_noise() {
    let mut cfg = noiseless(1);
    cfg.n_epochs = 40;
    let traj = run(&cfg, 0).unwrap();
    for w in traj.states.windows(2) {
        for (a, b) in w[0].m.iter().zip(&w[1].m) {
            assert!(b <= a);
            assert!(*b >= 0.0);
        }
    }
    // BTOW is exhausted long before 200 minutes
    assert_eq!(traj.states.last().unwrap().m[4], 0.0);
}

#[test]
fn floor_is_respected_under_heavy_noise() {
    let mut cfg = SimConfig::janus5(2);
    cfg.theta.noise.iter_mut().for_each(|z| *z = 0.4);
    cfg.count_floor = 0.5;
    cfg.n_runs = 20;
    let e = ensemble(&cfg).unwrap();
    assert!(e.runs.iter().flat_map(|r| &r.states).all(|s| s.m.iter().all(|&v| v >= 0.5)));
}

#[test]
fn symmetric_duel_stays_symmetric() {
    let spec = ModelSpec::from_json(
        r#"{"units":[{"name":"R","side":"Red"},{"name":"B","side":"Blue"}],
            "terms":[{"target":"R","source":"B","kind":"Point"},{"target":"B","source":"R","kind":"Point"}],
            "noise":["R","B"],"dt":5}"#,
    )
    .unwrap();
    let theta = CoefficientSet {
        drift: vec![-0.013, -0.013],
        noise: vec![0.0, 0.0],
    };
    let cfg = SimConfig {
        spec,
        theta,
        initial: StateVector::new(0.0, vec![37.0, 37.0]),
        n_runs: 1,
        n_epochs: 30,
        substeps_per_epoch: 7,
        master_seed: 0,
        count_floor: 0.0,
        mode: simulator::StepMode::Euler,
    };
    for s in run(&cfg, 0).unwrap().states {
        assert_eq!(s.m[0], s.m[1]);
    }
}

#[test]
fn runs_do_not_depend_on_ensemble_size() {
    let mut cfg = SimConfig::janus5(99);
    cfg.n_runs = 3;
    let small = ensemble(&cfg).unwrap();
    cfg.n_runs = 9;
    let large = ensemble(&cfg).unwrap();
    assert_eq!(small.runs[..], large.runs[..3]);
    assert_eq!(large.runs[7], run(&cfg, 7).unwrap());
    assert_ne!(large.runs[0].states, large.runs[1].states);
}

#[test]
fn mean_cmi_is_the_column_average() {
    let spec = ModelSpec::janus5();
    let lk = Likelihood::new(&spec);
    let e = ensemble(&SimConfig::janus5(4)).unwrap();
    let theta = CoefficientSet::janus5_reference();
    let series = ensemble_cmi(&lk, &e, &theta).unwrap();
    assert_eq!(series.len(), 7);
    let (mean, runs) = series.split_last().unwrap();
    assert_eq!(mean.id, SeriesId::Mean);
    assert_eq!(mean.points.len(), 10);
    for (r, s) in runs.iter().enumerate() {
        assert_eq!(s.id, SeriesId::Run(r as u32));
    }
    for k in 0..10 {
        for u in 0..5 {
            let avg = runs.iter().map(|s| s.points[k].pi[u]).sum::<f64>() / 6.0;
            assert!((mean.points[k].pi[u] - avg).abs() <= 1e-12 * avg.abs().max(1.0));
        }
        assert_eq!(mean.points[k].t, 5.0 * k as f64);
    }
    assert!(mean.points[9].el_residual.is_none());
    assert!(mean.points[8].el_residual.is_some());
}

#[test]
fn el_residual_recomposes_from_force_and_momenta() {
    let spec = ModelSpec::janus5();
    let lk = Likelihood::new(&spec);
    let traj = run(&SimConfig::janus5(5), 2).unwrap();
    let trs = traj.transitions(spec.dt()).unwrap();
    let theta = CoefficientSet::janus5_reference();
    let el = el_residual(&lk, &trs, &theta).unwrap();
    assert_eq!(el.len(), trs.len() - 1);
    for k in 0..el.len() {
        let f = force(&lk, &trs[k], &theta).unwrap();
        let p0 = momenta(&lk, &trs[k], &theta).unwrap();
        let p1 = momenta(&lk, &trs[k + 1], &theta).unwrap();
        for u in 0..5 {
            let expect = f[u] - (p1[u] - p0[u]) / 5.0;
            assert!((el[k][u] - expect).abs() <= 1e-12 * expect.abs().max(1.0));
        }
    }
}

#[test]
fn fit_recovers_noise_on_a_large_ensemble() {
    let spec = ModelSpec::janus5();
    let mut cfg = SimConfig::janus5(7);
    cfg.n_runs = 64;
    let e = ensemble(&cfg).unwrap();
    let mut options = FitOptions::new(&spec, 11);
    options.asa.max_generated = 20_000;
    let out = fit(&spec, &e, &options).unwrap();
    assert_eq!(out.n_transitions, 640);
    assert!(out.cost <= out.asa_cost);
    let lk = Likelihood::new(&spec);
    let at_truth = lk.total_cost(&e, &cfg.theta).unwrap();
    assert!(out.cost < at_truth);
    for u in 0..5 {
        let (got, truth) = (out.theta.z(&spec, u), cfg.theta.z(&spec, u));
        assert!((got / truth - 1.0).abs() < 0.15, "{}: {got} vs {truth}", spec.units()[u].name);
    }
    // the three largest attrition rates
    for (t, s) in [(0, 4), (1, 4), (1, 3)] {
        assert!(out.theta.x(&spec, t, s).unwrap() < 0.0);
    }
}

#[test]
fn fit_is_deterministic_and_stays_in_bounds() {
    let spec = ModelSpec::janus5();
    let e = ensemble(&SimConfig::janus5(8)).unwrap();
    let mut options = FitOptions::new(&spec, 1);
    options.asa.max_generated = 5_000;
    let a = fit(&spec, &e, &options).unwrap();
    let b = fit(&spec, &e, &options).unwrap();
    assert_eq!(a, b);
    for (v, (lo, hi)) in a.theta.to_params().iter().zip(spec.param_bounds()) {
        assert!(v >= lo && v <= hi);
    }
}

#[test]
fn fit_rejects_constant_units() {
    let spec = ModelSpec::janus5();
    let states = (0..11)
        .map(|k| StateVector::new(5.0 * k as f64, vec![40.0, 85.0 - k as f64, 27.0, 31.0, 6.0]))
        .collect();
    let e = Ensemble::new(vec![Trajectory::new(0, states)]);
    let err = fit(&spec, &e, &FitOptions::new(&spec, 0)).unwrap_err();
    assert!(matches!(err, Error::Degenerate(_)), "{err}");
}
