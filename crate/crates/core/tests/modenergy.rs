use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rieszflow::balls::Ball;
use rieszflow::dynamics::ParticleSystem;
use rieszflow::kernel::{KernelSpec, Point};
use rieszflow::meanfield::{Density, Grid, GridField};
use rieszflow::modenergy::*;
use rieszflow::quadrature::gauss_legendre;
use rieszflow::Error;

// composite Gauss-Legendre over [a, b] with the given interior breakpoints
fn composite<F: FnMut(f64) -> f64>(a: f64, b: f64, breaks: &[f64], per: usize, order: usize, mut f: F) -> f64 {
    let rule = gauss_legendre(order);
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|x| *x > a && *x < b).collect();
    cuts.push(a);
    cuts.push(b);
    cuts.sort_by(f64::total_cmp);
    let mut acc = 0.0;
    for w in cuts.windows(2) {
        let step = (w[1] - w[0]) / per as f64;
        for k in 0..per {
            let lo = w[0] + k as f64 * step;
            for (t, wt) in rule.nodes.iter().zip(&rule.weights) {
                acc += 0.5 * step * wt * f(lo + 0.5 * step * (1.0 + t));
            }
        }
    }
    acc
}

fn smeared_grad(spec: &KernelSpec, pts: &[Point], eta: f64, x: Point, xi: f64) -> [f64; 3] {
    let w = 1.0 / pts.len() as f64;
    let mut g = [0.0; 3];
    for p in pts {
        let q = spec.grad_truncated(eta, [x[0] - p[0], x[1] - p[1]], xi);
        for k in 0..3 {
            g[k] += w * q[k];
        }
    }
    g
}

// volume integral of |xi|^gamma |grad h_{N,eta}|^2 over the lifted disc around (c, 0), d = 1
fn volume_1d(spec: &KernelSpec, pts: &[Point], eta: f64, c: f64, r: f64) -> f64 {
    let gamma = spec.gamma().unwrap();
    let a = 1.0 + gamma;
    let mut xbreaks = Vec::new();
    for p in pts {
        xbreaks.extend([p[0] - eta, p[0] + eta, p[0]]);
    }
    2.0 * composite(c - r, c + r, &xbreaks, 24, 20, |x| {
        let top = (r * r - (x - c) * (x - c)).max(0.0).sqrt();
        // t = xi^(1 + gamma) / (1 + gamma) absorbs the weight
        let tmax = top.powf(a) / a;
        let mut tb = Vec::new();
        for p in pts {
            let dx = x - p[0];
            if dx.abs() < eta {
                tb.push((eta * eta - dx * dx).sqrt().powf(a) / a);
            }
        }
        composite(0.0, tmax, &tb, 8, 20, |t| {
            let xi = (a * t).powf(1.0 / a);
            let g = smeared_grad(spec, pts, eta, [x, 0.0], xi);
            g[0] * g[0] + g[2] * g[2]
        })
    })
}

// directions tangent to the plateau circles, seen from c
fn plane_breaks(pts: &[Point], eta: f64, c: Point) -> Vec<f64> {
    let mut out = Vec::new();
    for p in pts {
        let z = [p[0] - c[0], p[1] - c[1]];
        let dist = z[0].hypot(z[1]);
        if dist > eta {
            let base = z[1].atan2(z[0]);
            let half = (eta / dist).asin();
            for a in [base - half, base + half] {
                out.push(a.rem_euclid(2.0 * PI));
            }
        }
    }
    out
}

// same in the plane for the Coulomb kernel, polar around the disc center
fn volume_plane(spec: &KernelSpec, pts: &[Point], eta: f64, c: Point, r: f64) -> f64 {
    composite(0.0, 2.0 * PI, &plane_breaks(pts, eta, c), 64, 12, |th| {
        let (u, v) = (th.cos(), th.sin());
        let mut rb = Vec::new();
        for p in pts {
            let z = [p[0] - c[0], p[1] - c[1]];
            let along = z[0] * u + z[1] * v;
            let perp2 = z[0] * z[0] + z[1] * z[1] - along * along;
            if perp2 < eta * eta {
                let half = (eta * eta - perp2).sqrt();
                rb.extend([along - half, along + half]);
            }
        }
        composite(0.0, r, &rb, 16, 12, |rho| {
            let g = smeared_grad(spec, pts, eta, [c[0] + rho * u, c[1] + rho * v], 0.0);
            rho * (g[0] * g[0] + g[1] * g[1])
        })
    })
}

fn exact_only() -> RegionOptions {
    RegionOptions { closed_form: false, ..RegionOptions::default() }
}

#[test]
fn single_centered_charge_matches_annulus_value() {
    let spec = KernelSpec::new(2, 0.5).unwrap();
    let ball = [Ball { center: [0.0, 0.0], r: 1.0 }];
    let expected = 9.0 / (4.0 * PI);
    assert!((expected - 0.716197).abs() < 1e-6);
    for opts in [RegionOptions::default(), exact_only()] {
        let e = region_energy(&spec, &[[0.0, 0.0]], 0.01, &ball, &opts).unwrap();
        assert!((e - expected).abs() < 1e-4 * expected, "{e} vs {expected}");
    }
}

#[test]
fn boundary_route_matches_volume_quadrature() {
    let cases: [(usize, f64, Vec<Point>, f64, Ball); 4] = [
        (1, 0.5, vec![[0.1, 0.0], [-0.3, 0.0], [1.4, 0.0]], 0.05, Ball { center: [0.0, 0.0], r: 0.8 }),
        (1, 0.0, vec![[0.2, 0.0], [-0.25, 0.0], [1.1, 0.0]], 0.04, Ball { center: [0.0, 0.0], r: 0.7 }),
        (1, 0.5, vec![[0.0, 0.0], [0.07, 0.0]], 0.03, Ball { center: [0.0, 0.0], r: 0.5 }),
        (2, 0.0, vec![[0.1, 0.2], [-0.3, 0.1], [0.9, -0.8]], 0.05, Ball { center: [0.0, 0.0], r: 0.7 }),
    ];
    for (d, s, pts, eta, ball) in cases {
        let spec = KernelSpec::new(d, s).unwrap();
        let green = region_energy(&spec, &pts, eta, &[ball], &exact_only()).unwrap();
        let brute = if d == 1 {
            volume_1d(&spec, &pts, eta, ball.center[0], ball.r)
        } else {
            volume_plane(&spec, &pts, eta, ball.center, ball.r)
        };
        assert!((green - brute).abs() < 1e-5 * brute, "d={d} s={s}: {green} vs {brute}");
    }
}

#[test]
fn distant_second_charge_barely_matters() {
    let spec = KernelSpec::new(2, 0.5).unwrap();
    let eta = 0.01;
    let ball = Ball { center: [0.0, 0.0], r: 0.5 };
    let pair = region_energy(&spec, &[[0.0, 0.0], [6.0, 0.0]], eta, &[ball], &exact_only()).unwrap();
    let alone = 0.25 * (spec.g_r(eta) - spec.g_r(0.5));
    assert!((pair - alone).abs() < 0.01 * alone, "{pair} vs {alone}");
    let far = RegionOptions { far_factor: Some(4.0), ..exact_only() };
    let approx = region_energy(&spec, &[[0.0, 0.0], [6.0, 0.0]], eta, &[ball], &far).unwrap();
    assert!((approx - pair).abs() < 1e-3 * pair);
}

#[test]
fn ball_inside_the_plateau_has_no_energy() {
    for (d, s) in [(1, 0.5), (2, 0.0), (2, 0.5)] {
        let spec = KernelSpec::new(d, s).unwrap();
        let e = region_energy(&spec, &[[0.0, 0.0]], 0.02, &[Ball { center: [0.0, 0.0], r: 0.02 }], &exact_only());
        assert_eq!(e.unwrap(), 0.0);
    }
}

#[test]
fn straddling_charge_is_rejected() {
    let spec = KernelSpec::new(2, 0.5).unwrap();
    let ball = Ball { center: [0.0, 0.0], r: 0.5 };
    let e = region_energy(&spec, &[[0.49, 0.0]], 0.05, &[ball], &RegionOptions::default());
    assert!(matches!(e, Err(Error::InadmissibleEta(_))));
}

#[test]
fn region_energy_is_translation_invariant() {
    let spec = KernelSpec::new(2, 0.5).unwrap();
    let pts = [[0.1, 0.05], [-0.2, 0.1], [0.6, 0.5]];
    let ball = Ball { center: [0.0, 0.0], r: 0.4 };
    let a = region_energy(&spec, &pts, 0.03, &[ball], &exact_only()).unwrap();
    let shift = |p: Point| [p[0] + 0.37, p[1] - 0.81];
    let moved: Vec<Point> = pts.iter().map(|p| shift(*p)).collect();
    let b = region_energy(&spec, &moved, 0.03, &[Ball { center: shift(ball.center), r: 0.4 }], &exact_only()).unwrap();
    assert!((a - b).abs() < 1e-8 * a, "{a} vs {b}");
    assert!(a > 0.0);
}

fn disc_field(spec: KernelSpec, l: f64, n: usize, r: f64) -> GridField {
    Density::Disc { radius: r }.rasterize(spec, Grid::new(spec.d(), l, n).unwrap()).unwrap()
}

#[test]
fn single_particle_against_uniform_disc() {
    let spec = KernelSpec::new(2, 0.0).unwrap();
    let field = disc_field(spec, 1.25, 256, 1.0);
    let sys = ParticleSystem::new(spec, vec![[0.0, 0.0]]).unwrap();
    let expected = -3.0 / (8.0 * PI);
    for eval in [PotentialEval::Interpolated, PotentialEval::Direct] {
        let rep = modulated_energy_with(&sys, &field, eval).unwrap();
        assert!((rep.e_n - expected).abs() < 1e-3, "{eval:?}: {} vs {expected}", rep.e_n);
        assert_eq!(rep.e_n, rep.pp - rep.pf + rep.ff);
    }
}

// log kernel in d = 1: int log(z^2 + xi^2) dz in closed form
fn log_cell(a: f64, b: f64, xi: f64) -> f64 {
    let prim = |z: f64| z * (z * z + xi * xi).ln() - 2.0 * z + 2.0 * xi * (z / xi).atan();
    prim(b) - prim(a)
}

#[test]
fn local_excess_matches_sphere_average_of_lifted_potential() {
    let spec = KernelSpec::new(1, 0.0).unwrap();
    let grid = Grid::new(1, 1.0, 40).unwrap();
    let field = Density::Bump { radius: 0.6 }.rasterize(spec, grid).unwrap();
    let mu = field.values().to_vec();
    let c = spec.c_ds();
    let lifted = |x: f64, xi: f64| -> f64 {
        (0..grid.n)
            .map(|k| {
                let y = grid.coord(k);
                let h = grid.h();
                -mu[k] * log_cell(y - 0.5 * h - x, y + 0.5 * h - x, xi) / (2.0 * c)
            })
            .sum()
    };
    for (x, eta) in [(0.013, 0.04), (-0.21, 0.11), (0.3, 0.007)] {
        // the sphere is a circle in (x, xi) with uniform weight when gamma = 0
        let avg = composite(0.0, PI, &[], 64, 20, |th| lifted(x + eta * th.cos(), eta * th.sin())) / PI;
        let direct = field.potential_direct([x, 0.0]);
        let excess = local_excess(&spec, &field, [x, 0.0], eta).unwrap();
        assert!((direct - avg - excess).abs() < 1e-9, "x={x}: {} vs {excess}", direct - avg);
    }
}

#[test]
fn local_excess_in_the_plane_matches_polar_quadrature() {
    for s in [0.0, 0.5] {
        let spec = KernelSpec::new(2, s).unwrap();
        let grid = Grid::new(2, 1.0, 24).unwrap();
        let field = Density::TwoBump { radius: 0.3, offset: 0.25 }.rasterize(spec, grid).unwrap();
        let x = [0.031, -0.047];
        let eta = 0.13;
        let geta = spec.g_r(eta);
        let cell = |p: Point| -> f64 {
            let i = ((p[0] + 1.0) / grid.h()).floor() as usize;
            let j = ((p[1] + 1.0) / grid.h()).floor() as usize;
            field.values()[j * grid.n + i]
        };
        // integrand ~ rho^(1-s): substitute rho = eta u^2 to smooth the origin
        let oracle = composite(0.0, 2.0 * PI, &[], 720, 8, |th| {
            composite(0.0, 1.0, &[], 60, 8, |u| {
                let rho = eta * u * u;
                let p = [x[0] + rho * th.cos(), x[1] + rho * th.sin()];
                (spec.g_r(rho) - geta) * cell(p) * rho * 2.0 * eta * u
            })
        });
        let got = local_excess(&spec, &field, x, eta).unwrap();
        assert!((got - oracle).abs() < 2e-3 * oracle, "s={s}: {got} vs {oracle}");
    }
}

fn random_config(spec: KernelSpec, n: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts: Vec<Point> = Vec::new();
    while pts.len() < n {
        let p = if spec.d() == 1 {
            [rng.gen_range(-0.5..0.5), 0.0]
        } else {
            [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)]
        };
        if pts.iter().all(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt() > 0.06) {
            pts.push(p);
        }
    }
    pts
}

#[test]
fn eta_defect_is_nonnegative_and_shrinks() {
    for (d, s) in [(1, 0.0), (1, 0.5), (2, 0.0), (2, 0.5)] {
        let spec = KernelSpec::new(d, s).unwrap();
        let field = Density::Bump { radius: 0.6 }.rasterize(spec, Grid::new(d, 1.0, 64).unwrap()).unwrap();
        for seed in 0..3 {
            let sys = ParticleSystem::new(spec, random_config(spec, 8, seed)).unwrap();
            let mut rep = modulated_energy(&sys, &field).unwrap();
            let mut last = f64::INFINITY;
            for eta in [0.02, 0.01, 0.005] {
                let e = rep.add_eta(&sys, &field, eta).unwrap();
                assert!(e.defect >= 0.0 && e.defect < last, "d={d} s={s}: {} after {last}", e.defect);
                last = e.defect;
            }
            assert_eq!(rep.eta.len(), 3);
            assert!(rep.eta[0].eta > rep.eta[2].eta);
        }
    }
}

// int over B(0, eta) of g(|y|) - g(eta), by hand
fn ball_excess(d: usize, s: f64, c: f64, eta: f64) -> f64 {
    match (d, s == 0.0) {
        (1, true) => 2.0 * eta / c,
        (1, false) => 2.0 * s * eta.powf(1.0 - s) / ((1.0 - s) * c),
        (_, true) => 2.0 * PI * eta * eta / (4.0 * c),
        (_, false) => PI * s * eta.powf(2.0 - s) / ((2.0 - s) * c),
    }
}

#[test]
fn eta_defect_follows_leading_order_law() {
    for (d, s) in [(1, 0.0), (1, 0.5), (2, 0.0), (2, 0.5), (2, 0.9)] {
        let spec = KernelSpec::new(d, s).unwrap();
        let grid = Grid::new(d, 1.0, 16).unwrap();
        let field = Density::Bump { radius: 0.7 }.rasterize(spec, grid).unwrap();
        let pts: Vec<Point> = (0..8)
            .map(|k| {
                let x = grid.coord(4 + k) + 0.17 * grid.h();
                if d == 1 { [x, 0.0] } else { [x, grid.coord(11 - k) - 0.23 * grid.h()] }
            })
            .collect();
        let sys = ParticleSystem::new(spec, pts).unwrap();
        // small spheres deep inside one cell see a constant density
        let eta = 1e-3;
        let mut expected = 0.0;
        for x in &sys.positions {
            let i = ((x[0] + 1.0) / grid.h()) as usize;
            let j = if d == 1 { 0 } else { ((x[1] + 1.0) / grid.h()) as usize };
            let cx = grid.coord(i) - x[0];
            let cy = if d == 1 { 0.0 } else { grid.coord(j) - x[1] };
            assert!(cx.abs().max(cy.abs()) < 0.5 * grid.h() - eta, "test point too close to a cell edge");
            expected += 2.0 / 8.0 * field.values()[j * grid.n + i] * ball_excess(d, s, spec.c_ds(), eta);
        }
        let got = eta_parts(&sys, &field, eta).unwrap();
        let rep = modulated_energy(&sys, &field).unwrap();
        let defect = got.value - rep.e_n - got.self_energy;
        assert!((defect - expected).abs() < 1e-6 * expected + 1e-12, "d={d} s={s}: {defect} vs {expected}");
    }
}

#[test]
fn report_json_shape() {
    let spec = KernelSpec::new(1, 0.5).unwrap();
    let field = Density::Bump { radius: 0.5 }.rasterize(spec, Grid::new(1, 1.0, 32).unwrap()).unwrap();
    let sys = ParticleSystem::new(spec, vec![[-0.2, 0.0], [0.1, 0.0]]).unwrap();
    let mut rep = modulated_energy(&sys, &field).unwrap();
    rep.add_eta(&sys, &field, 0.01).unwrap();
    let v: serde_json::Value = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
    for key in ["N", "d", "s", "t", "E_N", "pp", "pf", "ff", "eta"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert!(v["eta"][0].get("E_eta").is_some() && v["eta"][0].get("defect").is_some());
    assert!(matches!(rep.add_eta(&sys, &field, 0.2), Err(Error::InadmissibleEta(_))));
}

#[test]
fn mismatched_inputs_are_rejected() {
    let field = Density::Bump { radius: 0.5 }.rasterize(KernelSpec::new(1, 0.5).unwrap(), Grid::new(1, 1.0, 32).unwrap()).unwrap();
    let other = ParticleSystem::new(KernelSpec::new(1, 0.0).unwrap(), vec![[0.0, 0.0]]).unwrap();
    assert!(matches!(modulated_energy(&other, &field), Err(Error::GridMismatch(_))));
    let outside = ParticleSystem::new(KernelSpec::new(1, 0.5).unwrap(), vec![[1.5, 0.0]]).unwrap();
    assert!(modulated_energy(&outside, &field).is_err());
}

// each particle's mass spread uniformly over a block of k x k cells around its own cell
fn block_field(spec: KernelSpec, grid: Grid, idx: &[(usize, usize)], k: usize) -> GridField {
    let n = grid.n;
    let mut v = vec![0.0; grid.cells()];
    let half = k / 2;
    for &(i, j) in idx {
        for a in 0..k {
            for b in 0..k {
                v[(j + b - half) * n + (i + a - half)] += 1.0;
            }
        }
    }
    GridField::probability(spec, grid, v, 0.0).unwrap()
}

#[test]
fn gradient_distance_properties() {
    let spec = KernelSpec::new(2, 0.5).unwrap();
    let grid = Grid::new(2, 1.0, 48).unwrap();
    let idx: Vec<(usize, usize)> = (0..4).flat_map(|a| (0..4).map(move |b| (16 + 5 * a, 16 + 5 * b))).collect();
    let pts: Vec<Point> = idx.iter().map(|&(i, j)| [grid.coord(i), grid.coord(j)]).collect();
    let sys = ParticleSystem::new(spec, pts.clone()).unwrap();
    let window = Window::full(1.0);
    let p = 1.2;
    let mut last = f64::INFINITY;
    for k in [5, 3, 1] {
        let field = block_field(spec, grid, &idx, k);
        let v = lp_gradient_distance(&sys, &field, &[], p, &window).unwrap();
        assert!(v < last, "block {k}: {v} after {last}");
        last = v;
    }
    let field = block_field(spec, grid, &idx, 3);
    let full = lp_gradient_distance(&sys, &field, &[], p, &window).unwrap();
    let all = [Ball { center: [0.0, 0.0], r: 2.0 }];
    assert_eq!(lp_gradient_distance(&sys, &field, &all, p, &window).unwrap(), 0.0);
    assert!(full > 0.0);
    let mut prev = full;
    for r in [0.02, 0.05, 0.1] {
        let balls: Vec<Ball> = pts.iter().map(|c| Ball { center: *c, r }).collect();
        let v = lp_gradient_distance(&sys, &field, &balls, p, &window).unwrap();
        assert!(v <= prev, "r={r}: {v} after {prev}");
        prev = v;
    }
    for bad in [0.5, 2.0 * 2.0 / 2.5] {
        assert!(matches!(lp_gradient_distance(&sys, &field, &[], bad, &window), Err(Error::InvalidArgument(_))));
    }
}

#[test]
fn gradient_distance_coulomb_and_line() {
    for (d, s) in [(2, 0.0), (1, 0.5), (1, 0.0)] {
        let spec = KernelSpec::new(d, s).unwrap();
        let grid = Grid::new(d, 1.0, 64).unwrap();
        let idx: Vec<(usize, usize)> =
            if d == 1 { (0..8).map(|a| (19 + 4 * a, 0)).collect() } else { vec![(21, 21), (31, 27), (41, 41)] };
        let pts: Vec<Point> =
            idx.iter().map(|&(i, j)| if d == 1 { [grid.coord(i), 0.0] } else { [grid.coord(i), grid.coord(j)] }).collect();
        let sys = ParticleSystem::new(spec, pts).unwrap();
        let mut v = vec![0.0; grid.cells()];
        for &(i, j) in &idx {
            let k = if d == 1 { i } else { j * grid.n + i };
            v[k] = 1.0;
        }
        let near = GridField::probability(spec, grid, v, 0.0).unwrap();
        let far = Density::Bump { radius: 0.4 }.rasterize(spec, grid).unwrap();
        let a = lp_gradient_distance(&sys, &near, &[], 1.0, &Window::full(1.0)).unwrap();
        let b = lp_gradient_distance(&sys, &far, &[], 1.0, &Window::full(1.0)).unwrap();
        assert!(a.is_finite() && a < b, "d={d} s={s}: {a} vs {b}");
        // p-th powers add over a split of the window
        let p = 1.1;
        let whole = lp_gradient_distance(&sys, &far, &[], p, &Window::full(1.0)).unwrap();
        let left = Window { lo: [-1.0, -1.0], hi: [0.0, 1.0], stride: 1 };
        let right = Window { lo: [0.0, -1.0], hi: [1.0, 1.0], stride: 1 };
        let parts = [left, right].map(|w| lp_gradient_distance(&sys, &far, &[], p, &w).unwrap().powf(p));
        assert!((parts[0] + parts[1] - whole.powf(p)).abs() < 1e-10 * whole.powf(p), "d={d} s={s}");
        let coarse = lp_gradient_distance(&sys, &far, &[], p, &Window { stride: 2, ..Window::full(1.0) }).unwrap();
        assert!(coarse.is_finite() && coarse > 0.0);
    }
}
