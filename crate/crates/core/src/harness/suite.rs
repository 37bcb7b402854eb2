use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::balls::{grow_and_merge, lower_bound_check, Ball};
use crate::dynamics::{dispersion_rate, dissipation_residual, integrate_with, min_distance, IntegratorOptions, ParticleSystem};
use crate::error::{Error, Result};
use crate::kernel::{normalization_constant, KernelSpec, Point};
use crate::meanfield::{patch_exact, pde_solve, Density, Grid, Scheme};
use super::convergence::check_options;
use crate::modenergy::{modulated_energy, region_energy, RegionOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    /// Multiplies every normalization constant (1 leaves them exact).
    pub c_scale: f64,
    pub cases: Vec<(usize, f64)>,
    pub radii: Vec<f64>,
}

impl Default for KernelSection {
    fn default() -> Self {
        KernelSection { c_scale: 1.0, cases: vec![(1, 0.25), (1, 0.5), (2, 0.5), (2, 0.9)], radii: vec![0.1, 1.0, 10.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PatchSection {
    /// Coarse and fine grid sizes.
    pub sizes: [usize; 2],
    pub max_error: f64,
    pub min_order: f64,
}

impl Default for PatchSection {
    fn default() -> Self {
        PatchSection { sizes: [128, 256], max_error: 0.05, min_order: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BallSection {
    pub sets: usize,
    pub max_n: usize,
    /// Point sets (out of `sets`) that also get the lower-bound check.
    pub lower_bound_sets: usize,
}

impl Default for BallSection {
    fn default() -> Self {
        BallSection { sets: 1000, max_n: 64, lower_bound_sets: 1000 }
    }
}

/// Identity suite settings. Every section and key is optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteConfig {
    pub seed: u64,
    pub kernel: KernelSection,
    pub patch: PatchSection,
    pub balls: BallSection,
}

pub fn parse_suite_config(text: &str) -> Result<SuiteConfig> {
    toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteEntry {
    pub name: String,
    pub error: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub entries: Vec<SuiteEntry>,
}

impl SuiteReport {
    pub fn pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn failures(&self) -> Vec<&SuiteEntry> {
        self.entries.iter().filter(|e| !e.pass).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,error,threshold,pass\n");
        for e in &self.entries {
            out.push_str(&format!("{},{:e},{:e},{}\n", e.name, e.error, e.threshold, e.pass));
        }
        out
    }
}

fn entry(name: String, error: f64, threshold: f64) -> SuiteEntry {
    // NaN errors fail
    SuiteEntry { name, error, threshold, pass: error <= threshold }
}

fn failed(name: String, err: Error) -> SuiteEntry {
    log::warn!("{name}: {err}");
    SuiteEntry { name, error: f64::INFINITY, threshold: 0.0, pass: false }
}

fn spec_with(cfg: &SuiteConfig, d: usize, s: f64) -> Result<KernelSpec> {
    KernelSpec::with_constant(d, s, cfg.kernel.c_scale * normalization_constant(d, s)?)
}

fn record(entries: &mut Vec<SuiteEntry>, name: String, f: impl FnOnce() -> Result<(f64, f64)>) {
    entries.push(match f() {
        Ok((error, threshold)) => entry(name, error, threshold),
        Err(e) => failed(name, e),
    });
}

pub fn run_identity_suite(cfg: &SuiteConfig) -> SuiteReport {
    let mut entries = Vec::new();
    kernel_entries(cfg, &mut entries);
    annulus_entries(cfg, &mut entries);
    dynamics_entries(cfg, &mut entries);
    match patch(cfg) {
        Ok((error, order)) => {
            entries.push(entry("patch_l1_error".into(), error, cfg.patch.max_error));
            // stored as a shortfall so that smaller is better, like every other entry
            entries.push(entry("patch_order_shortfall".into(), (cfg.patch.min_order - order).max(0.0), 0.0));
        }
        Err(e) => entries.push(failed("patch_benchmark".into(), e)),
    }
    defect_entries(cfg, &mut entries);
    ball_entries(cfg, &mut entries);
    SuiteReport { entries }
}

fn kernel_entries(cfg: &SuiteConfig, entries: &mut Vec<SuiteEntry>) {
    for &(d, s) in &cfg.kernel.cases {
        for &t in &cfg.kernel.radii {
            record(entries, format!("flux_d{d}_s{s}_t{t}"), || {
                let flux = spec_with(cfg, d, s)?.flux(t)?;
                Ok(((flux + 1.0).abs(), 1e-6))
            });
        }
    }
    record(entries, "constant_d2_s0.5".into(), || {
        Ok(((spec_with(cfg, 2, 0.5)?.c_ds() - 4.0 * PI).abs(), 1e-12))
    });
}

fn annulus_entries(cfg: &SuiteConfig, entries: &mut Vec<SuiteEntry>) {
    let opts = RegionOptions { closed_form: false, ..RegionOptions::default() };
    for &(d, s) in &cfg.kernel.cases {
        record(entries, format!("annulus_d{d}_s{s}"), || {
            let spec = spec_with(cfg, d, s)?;
            let mut worst: f64 = 0.0;
            for eta in [0.001, 0.01, 0.05] {
                for r in [0.2, 0.5, 1.0] {
                    let e = region_energy(&spec, &[[0.0, 0.0]], eta, &[Ball { center: [0.0, 0.0], r }], &opts)?;
                    let exact = spec.g_r(eta) - spec.g_r(r);
                    worst = worst.max((e - exact).abs() / exact);
                }
            }
            Ok((worst, 1e-4))
        });
    }
}

fn random_points(rng: &mut ChaCha8Rng, d: usize, n: usize, half: f64, gap: f64) -> Vec<Point> {
    let mut pts: Vec<Point> = Vec::new();
    while pts.len() < n {
        let p = [rng.gen_range(-half..half), if d == 1 { 0.0 } else { rng.gen_range(-half..half) }];
        if pts.iter().all(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt() > gap) {
            pts.push(p);
        }
    }
    pts
}

fn dynamics_entries(cfg: &SuiteConfig, entries: &mut Vec<SuiteEntry>) {
    for d in [1, 2] {
        for s in [0.0, 0.5] {
            record(entries, format!("dissipation_d{d}_s{s}"), || {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (10 * d as u64 + (2.0 * s) as u64));
                let mut sys = ParticleSystem::new(spec_with(cfg, d, s)?, random_points(&mut rng, d, 16, 1.0, 0.0))?;
                let opts = IntegratorOptions::clustered(0.0, 0.5, 10, 1e-3, 1e-12);
                let rec = integrate_with(&mut sys, 0.5, &opts)?;
                Ok((dissipation_residual(&rec), 1e-4))
            });
        }
        for n in [2, 8, 32] {
            let run = || -> Result<(f64, f64)> {
                let spec = spec_with(cfg, d, 0.0)?;
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (100 * d + n) as u64);
                let mut sys = ParticleSystem::new(spec, random_points(&mut rng, d, n, 1.0, 0.0))?;
                let opts = IntegratorOptions::uniform(0.0, 0.5, 10, 1e-10);
                let rec = integrate_with(&mut sys, 0.5, &opts)?;
                let nf = n as f64;
                let expected = 4.0 * (nf - 1.0) / (nf * normalization_constant(d, 0.0)?);
                Ok(((dispersion_rate(&rec) - expected).abs() / expected, rec.com_drift()))
            };
            match run() {
                Ok((rel, drift)) => {
                    entries.push(entry(format!("dispersion_d{d}_n{n}"), rel, 5e-3));
                    entries.push(entry(format!("com_drift_d{d}_n{n}"), drift, 1e-9));
                }
                Err(e) => entries.push(failed(format!("dispersion_d{d}_n{n}"), e)),
            }
        }
    }
}

/// L1 error of the patch solution at the finer size and the observed order.
fn patch(cfg: &SuiteConfig) -> Result<(f64, f64)> {
    let spec = spec_with(cfg, 2, 0.0)?;
    let r0 = 1.0 / PI.sqrt();
    let mut errors = Vec::new();
    for n in cfg.patch.sizes {
        let grid = Grid::new(2, 1.0, n)?;
        let sol = pde_solve(&patch_exact(spec, grid, 1.0, r0, 0.0)?, 1.0, 0.5, Scheme::MusclSuperbee, &[])?;
        let exact = patch_exact(spec, grid, 1.0, r0, 1.0)?;
        let l1: f64 = sol.field.values().iter().zip(exact.values()).map(|(a, b)| (a - b).abs()).sum();
        errors.push(l1 * grid.cell_volume());
    }
    let ratio = cfg.patch.sizes[1] as f64 / cfg.patch.sizes[0] as f64;
    Ok((errors[1], (errors[0] / errors[1]).ln() / ratio.ln()))
}

/// Defect E_{N,eta} - E_N - g(eta)/N along a shrinking eta, relative to g(eta)/N.
pub fn eta_defects(spec: KernelSpec, seed: u64) -> Result<Vec<f64>> {
    let d = spec.d();
    let field = Density::Bump { radius: 1.7 }.rasterize(spec, Grid::new(d, 2.0, 64)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sys = ParticleSystem::new(spec, random_points(&mut rng, d, 8, 0.5, 0.06))?;
    let mut rep = modulated_energy(&sys, &field)?;
    [0.02, 0.01, 0.005]
        .iter()
        .map(|&eta| Ok(rep.add_eta(&sys, &field, eta)?.defect.abs() / (spec.g_r(eta) / 8.0)))
        .collect()
}

fn defect_entries(cfg: &SuiteConfig, entries: &mut Vec<SuiteEntry>) {
    for (d, s) in [(1, 0.0), (1, 0.25), (1, 0.5), (2, 0.5), (2, 0.9)] {
        record(entries, format!("eta_defect_d{d}_s{s}"), || {
            let spec = spec_with(cfg, d, s)?;
            let mut worst: f64 = 0.0;
            for k in 0..3 {
                let rel = eta_defects(spec, cfg.seed.wrapping_add(k))?;
                let g = |eta: f64| spec.g_r(eta) / 8.0;
                let abs = [rel[0] * g(0.02), rel[1] * g(0.01), rel[2] * g(0.005)];
                if !(abs[0] > abs[1] && abs[1] > abs[2]) {
                    return Ok((f64::INFINITY, 0.1));
                }
                worst = worst.max(rel[2]);
            }
            Ok((worst, 0.1))
        });
    }
}

fn ball_entries(cfg: &SuiteConfig, entries: &mut Vec<SuiteEntry>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xba11);
    let mut broken = 0usize;
    // largest relative shortfall -slack / rhs; negative when every slack is positive
    let mut worst_slack = f64::NEG_INFINITY;
    let mut lb_error = None;
    for k in 0..cfg.balls.sets {
        let d = rng.gen_range(1..=2);
        let n = rng.gen_range(1..=cfg.balls.max_n.max(1));
        let pts = random_points(&mut rng, d, n, 1.0, 0.0);
        let eta_n = if n > 1 { min_distance(&pts) } else { 1.0 };
        let target = n as f64 * eta_n * rng.gen_range(0.25..10.0);
        let c = match grow_and_merge(&pts, d, target, None) {
            Ok(c) => c,
            Err(_) => {
                broken += 1;
                continue;
            }
        };
        let exact = (c.total_radius - target).abs() <= 1e-12 * target;
        if c.verify(&pts).is_err() || c.check_merges(&pts).is_err() || !exact {
            broken += 1;
        }
        if k < cfg.balls.lower_bound_sets {
            let s = [0.0, 0.5, 0.9][k % 3];
            let spec = match spec_with(cfg, d, s) {
                Ok(spec) => spec,
                Err(e) => {
                    lb_error = Some(e);
                    continue;
                }
            };
            let eta = 0.5 * eta_n.min(target / n as f64);
            match lower_bound_check(&spec, &pts, &c.balls, eta, &check_options()) {
                Ok(lb) => worst_slack = worst_slack.max(-lb.slack / lb.rhs.abs()),
                Err(e) => lb_error = Some(e),
            }
        }
    }
    entries.push(entry("ball_invariants_broken_sets".into(), broken as f64, 0.0));
    let worked = grow_and_merge(&[[0.0, 0.0], [3.0, 0.0], [10.0, 0.0]], 1, 4.5, None).map(|c| c.balls);
    let expected = [Ball { center: [1.5, 0.0], r: 3.0 }, Ball { center: [10.0, 0.0], r: 1.5 }];
    entries.push(entry("ball_worked_example".into(), if worked.ok().as_deref() == Some(&expected[..]) { 0.0 } else { 1.0 }, 0.0));
    entries.push(match lb_error {
        Some(e) => failed("lower_bound_slack".into(), e),
        None => entry("lower_bound_slack".into(), worst_slack, 1e-4),
    });
}
