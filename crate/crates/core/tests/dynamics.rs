use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rieszflow::dynamics::{
    dispersion_rate, dissipation_residual, integrate, integrate_with, IntegratorOptions, PairConvention,
    ParticleSystem,
};
use rieszflow::kernel::{KernelSpec, Point};

fn random_points(d: usize, n: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            if d == 1 {
                [rng.gen_range(-1.0..1.0), 0.0]
            } else {
                [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]
            }
        })
        .collect()
}

#[test]
fn mirror_symmetric_pair_stays_symmetric() {
    let k = KernelSpec::new(2, 0.5).unwrap();
    let mut sys = ParticleSystem::new(k, vec![[-0.5, 0.0], [0.5, 0.0]]).unwrap();
    let rec = integrate(&mut sys, 1.0, 1e-10).unwrap();
    for s in &rec.samples {
        assert!((s.positions[0][0] + s.positions[1][0]).abs() < 1e-9);
        assert!(s.positions[0][1].abs() < 1e-15);
    }
}

fn rk4_reference(sys: &ParticleSystem, t_end: f64, dt: f64) -> Vec<Point> {
    let mut y = sys.positions.clone();
    let steps = (t_end / dt).round() as usize;
    let vel = |p: &[Point]| ParticleSystem::new(sys.spec, p.to_vec()).unwrap().velocities().unwrap();
    let axpy = |y: &[Point], k: &[Point], h: f64| -> Vec<Point> {
        y.iter().zip(k).map(|(a, b)| [a[0] + h * b[0], a[1] + h * b[1]]).collect()
    };
    for _ in 0..steps {
        let k1 = vel(&y);
        let k2 = vel(&axpy(&y, &k1, dt / 2.0));
        let k3 = vel(&axpy(&y, &k2, dt / 2.0));
        let k4 = vel(&axpy(&y, &k3, dt));
        for i in 0..y.len() {
            for c in 0..2 {
                y[i][c] += dt / 6.0 * (k1[i][c] + 2.0 * k2[i][c] + 2.0 * k3[i][c] + k4[i][c]);
            }
        }
    }
    y
}

#[test]
fn matches_fixed_step_reference() {
    let k = KernelSpec::new(1, 0.5).unwrap();
    let start = ParticleSystem::new(k, vec![[0.0, 0.0], [0.3, 0.0], [1.0, 0.0]]).unwrap();
    let reference = rk4_reference(&start, 0.1, 1e-5);
    let mut sys = start.clone();
    integrate(&mut sys, 0.1, 1e-11).unwrap();
    for (a, b) in sys.positions.iter().zip(&reference) {
        assert!((a[0] - b[0]).abs() < 1e-6, "{a:?} vs {b:?}");
    }
}

#[test]
fn energy_is_nonincreasing_and_dissipation_holds() {
    for (d, s) in [(1, 0.0), (1, 0.5), (2, 0.0), (2, 0.5)] {
        let k = KernelSpec::new(d, s).unwrap();
        let mut sys = ParticleSystem::new(k, random_points(d, 4, 7)).unwrap();
        let opts = IntegratorOptions::clustered(0.0, 0.5, 10, 1e-3, 1e-12);
        let rec = integrate_with(&mut sys, 0.5, &opts).unwrap();
        assert_eq!(rec.energy_increases, 0);
        let r = dissipation_residual(&rec);
        assert!(r < 1e-4, "d {d} s {s}: residual {r}");
        assert!(rec.samples.iter().all(|x| x.eta_n > 0.0));
    }
}

#[test]
fn mixed_flow_still_dissipates() {
    let k = KernelSpec::new(2, 0.5).unwrap();
    let mut sys = ParticleSystem::new(k, random_points(2, 5, 3)).unwrap().with_flow(1.0, 2.0).unwrap();
    let opts = IntegratorOptions::clustered(0.0, 0.3, 6, 1e-3, 1e-12);
    let rec = integrate_with(&mut sys, 0.3, &opts).unwrap();
    assert_eq!(rec.energy_increases, 0);
    assert!(dissipation_residual(&rec) < 1e-4);
}

#[test]
fn two_body_dispersion() {
    let k = KernelSpec::new(2, 0.0).unwrap();
    let mut sys = ParticleSystem::new(k, vec![[0.0, 0.0], [0.1, 0.05]]).unwrap();
    let rec = integrate(&mut sys, 1.0, 1e-10).unwrap();
    let slope = dispersion_rate(&rec);
    assert!((slope - 1.0 / std::f64::consts::PI).abs() < 1e-6, "{slope}");
    assert!(rec.com_drift() < 1e-10);

    let mut sys = ParticleSystem::new(k, vec![[0.0, 0.0], [0.1, 0.05]])
        .unwrap()
        .with_convention(PairConvention::Unordered);
    let rec = integrate(&mut sys, 1.0, 1e-10).unwrap();
    assert!((dispersion_rate(&rec) - 0.5 / std::f64::consts::PI).abs() < 1e-6);
}

#[test]
fn csv_headers() {
    let k = KernelSpec::new(1, 0.5).unwrap();
    let mut sys = ParticleSystem::new(k, vec![[0.0, 0.0], [1.0, 0.0]]).unwrap();
    let rec = integrate(&mut sys, 0.1, 1e-8).unwrap();
    let mut buf = Vec::new();
    rec.write_series_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("t,H_N,eta_N,com_1,dispersion\n"));
    assert_eq!(text.lines().count(), rec.samples.len() + 1);
    let mut buf = Vec::new();
    rec.write_trajectory_csv(&mut buf).unwrap();
    assert!(String::from_utf8(buf).unwrap().starts_with("t,i,x1,v1\n"));
}
