use rieszflow::harness::*;
use rieszflow::kernel::KernelSpec;
use rieszflow::meanfield::{Density, Grid, GridField};
use rieszflow::Error;

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        n_list: vec![16, 32, 64],
        t_end: 0.2,
        samples: 2,
        replicates: 2,
        ..Default::default()
    };
    cfg.grid.n = 48;
    cfg
}

#[test]
fn uniform_disc_sample_is_well_prepared() {
    let spec = KernelSpec::new(2, 0.5).unwrap();
    let field = Density::Disc { radius: 0.5 }.rasterize(spec, Grid::new(2, 1.0, 128).unwrap()).unwrap();
    let (sys, rep) = sample_initial(&field, 4096, 3).unwrap();
    assert_eq!(sys.n(), 4096);
    assert!(rep.relative_gap < 0.05, "{rep:?}");
    assert!(rep.mean_ok(), "{rep:?}");
    assert!(rep.acceptance > 0.1 && rep.acceptance <= 1.0);
    let (again, _) = sample_initial(&field, 4096, 3).unwrap();
    assert_eq!(sys.positions, again.positions);
    let (other, _) = sample_initial(&field, 4096, 4).unwrap();
    assert_ne!(sys.positions, other.positions);
}

#[test]
fn line_sampler_follows_the_cell_cdf() {
    let spec = KernelSpec::new(1, 0.5).unwrap();
    let grid = Grid::new(1, 1.0, 8).unwrap();
    // mass 1/4 on each of cells 2..6
    let mut values = vec![0.0; 8];
    values[2..6].copy_from_slice(&[0.1, 0.4, 0.3, 0.2]);
    let field = GridField::probability(spec, grid, values, 0.0).unwrap();
    let (pts, acc) = sample_points(&field, 20000, 5).unwrap();
    assert_eq!(acc, 1.0);
    // cumulative mass at the edges -0.5, -0.25, 0, 0.25, 0.5
    let cdf = [0.0, 0.1, 0.5, 0.8, 1.0];
    for (k, &edge) in [-0.5, -0.25, 0.0, 0.25, 0.5].iter().enumerate() {
        let frac = pts.iter().filter(|p| p[0] < edge).count() as f64 / pts.len() as f64;
        assert!((frac - cdf[k]).abs() < 0.015, "edge {edge}: {frac} vs {}", cdf[k]);
        assert!(pts.iter().all(|p| p[1] == 0.0));
    }
    // uniform within a cell: half of cell 3 lies below -0.375
    let cell3 = pts.iter().filter(|p| p[0] >= -0.25 && p[0] < 0.0).count() as f64;
    let low = pts.iter().filter(|p| p[0] >= -0.25 && p[0] < -0.125).count() as f64;
    assert!((low / cell3 - 0.5).abs() < 0.03);
}

#[test]
fn sparse_support_aborts_rejection_sampling() {
    let spec = KernelSpec::new(2, 0.5).unwrap();
    let grid = Grid::new(2, 1.0, 64).unwrap();
    let mut values = vec![0.0; grid.cells()];
    values[5 * 64 + 5] = 1e6;
    values[58 * 64 + 58] = 1e-3;
    let field = GridField::probability(spec, grid, values, 0.0).unwrap();
    assert!(matches!(sample_points(&field, 100, 1), Err(Error::SamplingEfficiency(a)) if a < 0.01));
}

#[test]
fn convergence_run_is_order_free_and_finite() {
    let cfg = small_config();
    let sol = grid_solution(&cfg).unwrap();
    let forward: Vec<RunSeries> = cfg.n_list.iter().map(|&n| run_single(&cfg, &sol, n).unwrap()).collect();
    let mut backward: Vec<RunSeries> = cfg.n_list.iter().rev().map(|&n| run_single(&cfg, &sol, n).unwrap()).collect();
    backward.reverse();
    assert_eq!(forward, backward);

    let res = run_convergence(&cfg).unwrap();
    assert_eq!(res.runs, forward);
    for run in &res.runs {
        assert_eq!(run.points.iter().map(|p| p.t).collect::<Vec<_>>(), res.times);
        assert!(run.points.iter().all(|p| p.e_n.is_finite() && p.pp.is_finite() && p.ff > 0.0));
        assert_eq!(run.replicates.len(), 2);
        assert_ne!(run.replicates[0].seed, run.replicates[1].seed);
        for p in &run.points {
            assert_eq!(p.eta.len(), cfg.eta_schedule.len());
            assert!(p.checks.cond2.is_finite() && p.checks.cond2 > 0.0);
            assert_eq!(p.checks.cond1.len(), cfg.eta_schedule.len());
        }
        assert!(run.lp_distance > 0.0);
    }
    let fit = res.fit.unwrap();
    assert_eq!(fit.n, vec![16, 32, 64]);
    assert!(fit.exponent.is_finite());
    assert!(res.predicted_exponent < 0.0);
}

#[test]
fn failures_name_the_run() {
    let cfg = small_config();
    let mut sol = grid_solution(&cfg).unwrap();
    // a density touching the box edge at the middle sample
    let mid = &sol.snapshots[1];
    let mut values = vec![0.0; mid.grid.cells()];
    values[0] = 1.0;
    sol.snapshots[1] = GridField::probability(mid.spec, mid.grid, values, mid.t).unwrap();
    let err = run_single(&cfg, &sol, 16).unwrap_err();
    assert!(matches!(err, Error::Experiment { n: 16, t, .. } if t == 0.1), "{err}");
    assert!(err.to_string().starts_with("N = 16, t = 0.1:"), "{err}");
    assert!(run_convergence(&ExperimentConfig { s: 1.2, ..cfg.clone() }).is_err());
    let mut flow = cfg;
    flow.flow.beta = 1.0;
    assert!(run_convergence(&flow).is_err());
}

#[test]
fn stability_probe() {
    let mut cfg = ExperimentConfig { t_end: 0.3, samples: 6, ..Default::default() };
    cfg.grid.n = 64;
    let zero = run_stability(&cfg, 0.0).unwrap();
    assert!(zero.rows.iter().all(|r| r.distance < 10.0 * r.floor), "{zero:?}");
    let full = run_stability(&cfg, 0.1).unwrap();
    let half = run_stability(&cfg, 0.05).unwrap();
    assert!(full.envelope_ratio() <= 1.1, "{full:?}");
    for (a, b) in full.rows.iter().zip(&half.rows) {
        let ratio = (a.distance / b.distance).sqrt();
        // (eps / (1 + eps)) / (eps / 2 / (1 + eps / 2))
        let expected = 2.0 * 1.05 / 1.1;
        assert!((ratio / expected - 1.0).abs() < 0.2, "t = {}: {ratio}", a.t);
    }
    // distances only shrink under this flow
    assert!(full.rows.windows(2).all(|w| w[1].distance <= w[0].distance * (1.0 + 1e-9)));
}

fn quick_suite() -> SuiteConfig {
    SuiteConfig {
        patch: PatchSection { sizes: [32, 64], ..Default::default() },
        balls: BallSection { sets: 30, max_n: 16, lower_bound_sets: 30 },
        ..Default::default()
    }
}

#[test]
fn suite_defaults_and_canary() {
    assert_eq!(parse_suite_config("").unwrap(), SuiteConfig::default());
    assert_eq!(parse_suite_config("[kernel]\n[patch]\n[balls]\n").unwrap(), SuiteConfig::default());
    assert!(parse_suite_config("[kernel]\nbogus = 1\n").is_err());

    let report = run_identity_suite(&quick_suite());
    for e in &report.entries {
        if !e.name.starts_with("patch") {
            assert!(e.pass, "{e:?}");
        }
    }
    let names: Vec<&str> = report.entries.iter().map(|e| e.name.as_str()).collect();
    for prefix in ["flux", "constant", "annulus", "dissipation", "dispersion", "com_drift", "patch", "eta_defect", "ball", "lower_bound"] {
        assert!(names.iter().any(|n| n.starts_with(prefix)), "missing {prefix}");
    }

    let mut off = quick_suite();
    off.kernel.c_scale = 1.01;
    let bad = run_identity_suite(&off);
    assert!(bad.entries.iter().filter(|e| e.name.starts_with("flux")).all(|e| !e.pass));
    assert!(!bad.pass());
    assert!(bad.to_csv().starts_with("name,error,threshold,pass\n"));
}

#[test]
fn outputs_are_reproducible() {
    let cfg = ExperimentConfig { n_list: vec![8, 16], replicates: 1, ..small_config() };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let res = run_convergence(&cfg).unwrap();
        write_convergence(&cfg, &res, dir).unwrap();
    }
    let files = ["config.toml", "manifest.json", "convergence.json", "energy.csv", "eta.csv", "summary.csv", "field.csv", "plot.py"];
    for f in files {
        let x = std::fs::read(a.path().join(f)).unwrap();
        assert!(!x.is_empty(), "{f}");
        assert_eq!(x, std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(a.path().join("manifest.json")).unwrap()).unwrap();
    let text = std::fs::read_to_string(a.path().join("config.toml")).unwrap();
    assert_eq!(manifest["config_hash"], config_hash(&text));
    assert_eq!(config_hash("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    assert_eq!(parse_config(&text).unwrap(), cfg);
    let energy = std::fs::read_to_string(a.path().join("energy.csv")).unwrap();
    assert!(energy.starts_with("N,t,E_N,pp,pf,ff,energy_gap,"));
    assert_eq!(energy.lines().count(), 1 + 2 * cfg.sample_times().len());
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(40))]

    #[test]
    fn samples_land_in_the_support(seed in 0u64..u64::MAX, n in 1usize..300, d in 1usize..=2) {
        let spec = KernelSpec::new(d, 0.5).unwrap();
        let grid = Grid::new(d, 1.0, 32).unwrap();
        let field = Density::TwoBump { radius: 0.2, offset: 0.4 }.rasterize(spec, grid).unwrap();
        let (pts, _) = sample_points(&field, n, seed).unwrap();
        proptest::prop_assert_eq!(pts.len(), n);
        let h = grid.h();
        for p in &pts {
            let i = ((p[0] + 1.0) / h) as usize;
            let j = if d == 1 { 0 } else { ((p[1] + 1.0) / h) as usize };
            proptest::prop_assert!(field.values()[j * 32 + i] > 0.0, "{:?}", p);
        }
        proptest::prop_assert_eq!(sample_points(&field, n, seed).unwrap().0, pts);
    }
}
