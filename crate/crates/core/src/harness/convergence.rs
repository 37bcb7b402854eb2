use log::info;
use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::output::thread_pool;
use super::sampling::{sample_initial, WellPreparedness};
use crate::balls::{check_cond1, check_cond2, grow_and_merge, lower_bound_check, radius_schedule, LowerBound};
use crate::dynamics::record::least_squares_slope;
use crate::dynamics::{integrate_with, IntegratorOptions, ParticleSystem};
use crate::error::{Error, Result};
use crate::quadrature::Tolerance;
use crate::meanfield::{diagnostics, gradient_lp_norm, pde_solve, PdeSolution};
use crate::modenergy::{lp_gradient_distance, modulated_energy, EtaEntry, RegionOptions, Window};

/// Hölder exponent at which the final density is probed.
pub const HOLDER_SIGMA: f64 = 0.5;
/// Decay used in the bounded-ratio probe max_t E_N(t) / (E_N(0) + N^-PROBE_DECAY).
pub const PROBE_DECAY: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionChecks {
    /// Total radius of the ball collection.
    pub radius: f64,
    pub balls: usize,
    pub eta_n: f64,
    pub cond2: f64,
    /// (eta, energy over the balls minus g(eta)/N)
    pub cond1: Vec<(f64, f64)>,
    /// At the smallest eta of the schedule.
    pub lower_bound: LowerBound,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimePoint {
    pub t: f64,
    #[serde(rename = "E_N")]
    pub e_n: f64,
    /// N^-2 H_N
    pub pp: f64,
    pub pf: f64,
    /// Field self-energy.
    pub ff: f64,
    pub energy_gap: f64,
    pub eta: Vec<EtaEntry>,
    pub checks: ConditionChecks,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSeries {
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    pub initial: WellPreparedness,
    pub points: Vec<TimePoint>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Gradient-gap diagnostic at the final time.
    pub lp_distance: f64,
    /// max_t |E_N(t)| / (|E_N(0)| + N^-0.2) for the replicate mean.
    pub monotone_ratio: f64,
    /// Every independent draw, the detailed one first.
    pub replicates: Vec<Replicate>,
    /// Replicate means at each sample time.
    #[serde(rename = "mean_E_N")]
    pub mean_e_n: Vec<f64>,
    pub mean_energy_gap: Vec<f64>,
}

/// Energy series of one independent draw.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Replicate {
    pub seed: u64,
    #[serde(rename = "E_N")]
    pub e_n: Vec<f64>,
    pub energy_gap: Vec<f64>,
    pub initial_gap: f64,
}

impl RunSeries {
    pub fn final_point(&self) -> &TimePoint {
        self.points.last().expect("a run records at least two times")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    /// N values entering the fit.
    pub n: Vec<usize>,
    /// Slope of log |mean E_N(T)| against log N.
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldSummary {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub sup_grad_h: f64,
    pub sup_hess_h: f64,
    pub support_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceResult {
    pub d: usize,
    pub s: f64,
    pub times: Vec<f64>,
    pub field: Vec<FieldSummary>,
    /// Sorted by N.
    pub runs: Vec<RunSeries>,
    pub fit: Option<RateFit>,
    pub holder_sigma: f64,
    pub holder_quotient: f64,
    /// Exponent (1-s)(1-sigma)/(1+s-sigma) at the probed sigma; reported, not asserted.
    pub predicted_exponent: f64,
    /// Discrete L^2 norm of the density gradient at the final time, reported for d = 1, s = 0.
    pub grad_mu_l2: Option<f64>,
}

/// Seed of replicate `r` of the run with N particles; depends on nothing else, so runs can
/// go in any order.
pub fn run_seed(seed: u64, n: usize, r: usize) -> u64 {
    seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (r as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Grid solution shared by all N, with snapshots at the sample times.
pub fn grid_solution(config: &ExperimentConfig) -> Result<PdeSolution> {
    let field = config.density.rasterize(config.spec()?, config.grid()?)?;
    pde_solve(&field, config.t_end, config.cfl, config.scheme, &config.sample_times())
}

pub fn run_convergence(config: &ExperimentConfig) -> Result<ConvergenceResult> {
    config.validate_convergence()?;
    let solution = grid_solution(config)?;
    let runs = thread_pool()?.install(|| {
        config.n_list.par_iter().map(|&n| run_single(config, &solution, n)).collect::<Result<Vec<_>>>()
    })?;
    summarize(config, &solution, runs)
}

fn wrap(n: usize, t: f64) -> impl Fn(Error) -> Error {
    move |e| Error::Experiment { n, t, source: Box::new(e) }
}

/// Samples, integrates and measures one particle count against the shared grid solution.
pub fn run_single(config: &ExperimentConfig, solution: &PdeSolution, n: usize) -> Result<RunSeries> {
    let times = config.sample_times();
    if solution.snapshots.len() != times.len() {
        return Err(Error::InvalidArgument("grid solution does not match the sample times".into()));
    }
    let seed = run_seed(config.seed, n, 0);
    let (mut sys, initial) = sample_initial(&solution.snapshots[0], n, seed).map_err(wrap(n, 0.0))?;
    let opts = IntegratorOptions { sample_times: times.clone(), ..IntegratorOptions::uniform(0.0, config.t_end, 1, config.tol) };
    let record = integrate_with(&mut sys, config.t_end, &opts).map_err(wrap(n, sys.t))?;
    let mut points = Vec::with_capacity(times.len());
    for (sample, field) in record.samples.iter().zip(&solution.snapshots) {
        let mut at = sys.clone();
        at.positions.clone_from(&sample.positions);
        at.t = sample.t;
        points.push(measure(config, &at, field).map_err(wrap(n, sample.t))?);
    }
    let last = &solution.snapshots[times.len() - 1];
    let window = Window { stride: config.lp_stride, ..Window::full(config.grid.half_width) };
    let lp_distance =
        lp_gradient_distance(&sys, last, &[], config.lp_exponent, &window).map_err(wrap(n, config.t_end))?;

    let mut replicates = vec![Replicate {
        seed,
        e_n: points.iter().map(|p| p.e_n).collect(),
        energy_gap: points.iter().map(|p| p.energy_gap).collect(),
        initial_gap: initial.relative_gap,
    }];
    for r in 1..config.replicates {
        replicates.push(replicate(config, solution, n, r)?);
    }
    let count = replicates.len() as f64;
    let mean = |f: &dyn Fn(&Replicate) -> &Vec<f64>| -> Vec<f64> {
        (0..times.len()).map(|k| replicates.iter().map(|r| f(r)[k]).sum::<f64>() / count).collect()
    };
    let mean_e_n = mean(&|r| &r.e_n);
    let mean_energy_gap = mean(&|r| &r.energy_gap);
    let denom = mean_e_n[0].abs() + (n as f64).powf(-PROBE_DECAY);
    let monotone_ratio = mean_e_n.iter().map(|e| e.abs() / denom).fold(0.0, f64::max);
    info!("N = {n}: mean E_N(T) = {:e}", mean_e_n[times.len() - 1]);
    Ok(RunSeries {
        n,
        seed,
        initial,
        points,
        accepted_steps: record.accepted,
        rejected_steps: record.rejected,
        lp_distance,
        monotone_ratio,
        replicates,
        mean_e_n,
        mean_energy_gap,
    })
}

// energies only, no ball checks
fn replicate(config: &ExperimentConfig, solution: &PdeSolution, n: usize, r: usize) -> Result<Replicate> {
    let seed = run_seed(config.seed, n, r);
    let (mut sys, initial) = sample_initial(&solution.snapshots[0], n, seed).map_err(wrap(n, 0.0))?;
    let times = config.sample_times();
    let opts = IntegratorOptions { sample_times: times, ..IntegratorOptions::uniform(0.0, config.t_end, 1, config.tol) };
    let record = integrate_with(&mut sys, config.t_end, &opts).map_err(wrap(n, sys.t))?;
    let mut e_n = Vec::new();
    let mut energy_gap = Vec::new();
    for (sample, field) in record.samples.iter().zip(&solution.snapshots) {
        sys.positions.clone_from(&sample.positions);
        sys.t = sample.t;
        let rep = modulated_energy(&sys, field).map_err(wrap(n, sample.t))?;
        e_n.push(rep.e_n);
        energy_gap.push((rep.pp - rep.ff).abs());
    }
    Ok(Replicate { seed, e_n, energy_gap, initial_gap: initial.relative_gap })
}

/// Region quadrature settings for the condition checks: distant charges are expanded and
/// the tolerance is loose enough for thousands of balls.
pub fn check_options() -> RegionOptions {
    RegionOptions {
        tol: Tolerance { abs: 1e-14, rel: 1e-6, max_panels: 4000 },
        closed_form: true,
        far_factor: Some(20.0),
    }
}

fn measure(config: &ExperimentConfig, sys: &ParticleSystem, field: &crate::meanfield::GridField) -> Result<TimePoint> {
    let spec = sys.spec;
    let n = sys.n();
    let mut report = modulated_energy(sys, field)?;
    let radius = match config.radius_override {
        Some(r) => r,
        None => radius_schedule(n, spec.s())?,
    };
    let balls = grow_and_merge(&sys.positions, spec.d(), radius, None)?;
    let eta_n = if n > 1 { sys.min_distance() } else { f64::INFINITY };
    let base = (0.5 * eta_n).min(radius / n as f64);
    let etas: Vec<f64> = config.eta_schedule.iter().map(|f| f * base).collect();
    for &eta in &etas {
        report.add_eta(sys, field, eta)?;
    }
    let opts = check_options();
    let cond2 = check_cond2(&spec, &sys.positions, &balls.balls)?;
    let cond1 = check_cond1(&spec, &sys.positions, &balls.balls, &etas, &opts)?;
    let smallest = etas.iter().copied().fold(f64::INFINITY, f64::min);
    let lower_bound = lower_bound_check(&spec, &sys.positions, &balls.balls, smallest, &opts)?;
    Ok(TimePoint {
        t: sys.t,
        e_n: report.e_n,
        pp: report.pp,
        pf: report.pf,
        ff: report.ff,
        energy_gap: (report.pp - report.ff).abs(),
        eta: report.eta,
        checks: ConditionChecks { radius, balls: balls.balls.len(), eta_n, cond2, cond1, lower_bound },
    })
}

/// Sorts runs by N and adds the fit and field diagnostics.
pub fn summarize(config: &ExperimentConfig, solution: &PdeSolution, mut runs: Vec<RunSeries>) -> Result<ConvergenceResult> {
    runs.sort_by_key(|r| r.n);
    let tail = &runs[runs.len().saturating_sub(3)..];
    let fit = (tail.len() >= 2).then(|| {
        let pts: Vec<(f64, f64)> =
            tail.iter().map(|r| ((r.n as f64).ln(), r.mean_e_n[r.mean_e_n.len() - 1].abs().ln())).collect();
        RateFit { n: tail.iter().map(|r| r.n).collect(), exponent: least_squares_slope(&pts) }
    });
    let last = &solution.field;
    let diag = diagnostics(last, HOLDER_SIGMA)?;
    let s = config.s;
    let sigma = HOLDER_SIGMA;
    let grad_mu_l2 = (config.d == 1 && s == 0.0).then(|| gradient_lp_norm(last, 2.0)).transpose()?;
    Ok(ConvergenceResult {
        d: config.d,
        s,
        times: config.sample_times(),
        field: solution
            .series
            .iter()
            .map(|r| FieldSummary {
                t: r.t,
                mass: r.mass,
                energy: r.energy,
                sup_grad_h: r.sup_grad_h,
                sup_hess_h: r.sup_hess_h,
                support_radius: r.support_radius,
            })
            .collect(),
        runs,
        fit,
        holder_sigma: sigma,
        holder_quotient: diag.holder_quotient,
        predicted_exponent: -(1.0 - s) * (1.0 - sigma) / (1.0 + s - sigma),
        grad_mu_l2,
    })
}
