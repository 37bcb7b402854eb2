use serde::{Deserialize, Serialize};

use super::{energy_unchecked, GridField};
use crate::error::{Error, Result};

/// One row of the solver time series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRow {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub sup_grad_h: f64,
    pub sup_hess_h: f64,
    pub support_radius: f64,
}

#[derive(Debug, Clone)]
pub struct PdeSolution {
    pub field: GridField,
    pub series: Vec<SeriesRow>,
    /// Fields at the requested sample times (including the start when listed).
    pub snapshots: Vec<GridField>,
    pub steps: usize,
    /// Total mass removed by clipping negative cells (before renormalization).
    pub clipped_mass: f64,
}

struct Faces {
    // face velocities: x faces (n+1 per row), y faces (n+1 per column)
    ux: Vec<f64>,
    uy: Vec<f64>,
}

fn face_velocities(field: &GridField) -> Result<Faces> {
    let p = field.potential_unchecked();
    let n = field.grid.n;
    if let Some(g) = p.grad.iter().find(|g| !(g[0].is_finite() && g[1].is_finite())) {
        return Err(Error::VelocityBlowUp(g[0].abs().max(g[1].abs())));
    }
    if field.grid.d == 1 {
        let mut ux = vec![0.0; n + 1];
        for i in 1..n {
            ux[i] = -0.5 * (p.grad[i - 1][0] + p.grad[i][0]);
        }
        return Ok(Faces { ux, uy: Vec::new() });
    }
    let mut ux = vec![0.0; (n + 1) * n];
    let mut uy = vec![0.0; (n + 1) * n];
    for j in 0..n {
        for i in 1..n {
            // x face between (i-1, j) and (i, j)
            ux[j * (n + 1) + i] = -0.5 * (p.grad[j * n + i - 1][0] + p.grad[j * n + i][0]);
        }
    }
    for i in 0..n {
        for j in 1..n {
            // y face between (i, j-1) and (i, j), stored column-major
            uy[i * (n + 1) + j] = -0.5 * (p.grad[(j - 1) * n + i][1] + p.grad[j * n + i][1]);
        }
    }
    Ok(Faces { ux, uy })
}

// Largest rate at which a cell can empty: outgoing face speed sum over h.
fn max_outflow_rate(field: &GridField, faces: &Faces) -> f64 {
    let n = field.grid.n;
    let h = field.grid.h();
    let mut worst: f64 = 0.0;
    if field.grid.d == 1 {
        for i in 0..n {
            let out = faces.ux[i + 1].max(0.0) + (-faces.ux[i]).max(0.0);
            worst = worst.max(out);
        }
        return worst / h;
    }
    for j in 0..n {
        for i in 0..n {
            let out = faces.ux[j * (n + 1) + i + 1].max(0.0)
                + (-faces.ux[j * (n + 1) + i]).max(0.0)
                + faces.uy[i * (n + 1) + j + 1].max(0.0)
                + (-faces.uy[i * (n + 1) + j]).max(0.0);
            worst = worst.max(out);
        }
    }
    worst / h
}

fn max_speed(faces: &Faces) -> f64 {
    faces.ux.iter().chain(&faces.uy).fold(0.0f64, |m, u| m.max(u.abs()))
}

/// Spatial reconstruction for the face fluxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// First-order donor cell with forward Euler.
    #[default]
    Upwind,
    /// Piecewise-linear reconstruction, monotonized-central limiter, two-stage SSP Runge-Kutta.
    MusclMc,
    /// As `MusclMc` with the compressive superbee limiter; keeps contact fronts sharp.
    MusclSuperbee,
}

impl Scheme {
    // extra time-step restriction keeping each stage positive
    fn positivity_factor(self) -> f64 {
        match self {
            Scheme::Upwind => 1.0,
            _ => 0.5,
        }
    }

    fn limit(self, a: f64, b: f64) -> f64 {
        if a * b <= 0.0 {
            return 0.0;
        }
        let (x, y) = (a.abs(), b.abs());
        let m = match self {
            Scheme::Upwind => 0.0,
            Scheme::MusclMc => (0.5 * (x + y)).min(2.0 * x).min(2.0 * y),
            Scheme::MusclSuperbee => (2.0 * x).min(y).max(x.min(2.0 * y)),
        };
        m.copysign(a)
    }
}

// Limited slopes (times h) along one axis; `stride` steps to the next cell along it.
fn slopes(scheme: Scheme, mu: &[f64], n: usize, lines: usize, line_stride: usize, stride: usize) -> Vec<f64> {
    let mut out = vec![0.0; mu.len()];
    for l in 0..lines {
        let base = l * line_stride;
        for i in 0..n {
            let c = mu[base + i * stride];
            let left = if i > 0 { mu[base + (i - 1) * stride] } else { 0.0 };
            let right = if i + 1 < n { mu[base + (i + 1) * stride] } else { 0.0 };
            out[base + i * stride] = scheme.limit(c - left, right - c);
        }
    }
    out
}

// d mu / dt as minus the discrete flux divergence.
fn rate_of_change(grid: &super::Grid, mu: &[f64], faces: &Faces, scheme: Scheme) -> Vec<f64> {
    let n = grid.n;
    let inv_h = 1.0 / grid.h();
    let mut du = vec![0.0; mu.len()];
    let lines = if grid.d == 1 { 1 } else { n };
    // x sweep: cells j*n + i; y sweep: cells j*n + i with j running along the line
    let sweeps: &[(usize, usize, &[f64])] =
        if grid.d == 1 { &[(n, 1, &faces.ux)] } else { &[(n, 1, &faces.ux), (1, n, &faces.uy)] };
    for &(line_stride, stride, u) in sweeps {
        let sl = (scheme != Scheme::Upwind).then(|| slopes(scheme, mu, n, lines, line_stride, stride));
        for l in 0..lines {
            let base = l * line_stride;
            for i in 1..n {
                let (a, b) = (base + (i - 1) * stride, base + i * stride);
                let uf = u[l * (n + 1) + i];
                let state = if uf > 0.0 {
                    mu[a] + sl.as_ref().map_or(0.0, |s| 0.5 * s[a])
                } else {
                    mu[b] - sl.as_ref().map_or(0.0, |s| 0.5 * s[b])
                };
                let f = uf * state * inv_h;
                du[a] -= f;
                du[b] += f;
            }
        }
    }
    du
}

fn clip(before: f64, next: &mut [f64]) -> f64 {
    let mut clipped = 0.0;
    for v in next.iter_mut() {
        if *v < 0.0 {
            clipped -= *v;
            *v = 0.0;
        }
    }
    if clipped > 0.0 {
        let after: f64 = next.iter().sum();
        let k = before / after;
        for v in next.iter_mut() {
            *v *= k;
        }
    }
    clipped
}

fn advance(field: &GridField, faces: &Faces, dt: f64, scheme: Scheme) -> Result<(GridField, f64)> {
    let mu = field.values();
    let before: f64 = mu.iter().sum();
    let du = rate_of_change(&field.grid, mu, faces, scheme);
    let mut next: Vec<f64> = mu.iter().zip(&du).map(|(m, d)| m + dt * d).collect();
    let mut clipped = 0.0;
    if scheme != Scheme::Upwind {
        clipped += clip(before, &mut next);
        let stage = GridField::new(field.spec, field.grid, next, field.t + dt)?;
        let faces1 = face_velocities(&stage)?;
        let du1 = rate_of_change(&field.grid, stage.values(), &faces1, scheme);
        next = mu
            .iter()
            .zip(stage.values())
            .zip(&du1)
            .map(|((m, s), d)| 0.5 * m + 0.5 * (s + dt * d))
            .collect();
    }
    clipped += clip(before, &mut next);
    let out = GridField::new(field.spec, field.grid, next, field.t + dt)?;
    Ok((out, clipped * field.grid.cell_volume()))
}

/// One finite-volume step of length `dt`. Returns the new field and the clipped mass.
pub fn pde_step(field: &GridField, dt: f64, scheme: Scheme) -> Result<(GridField, f64)> {
    if !(dt >= 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be nonnegative, got {dt}")));
    }
    if dt == 0.0 {
        return Ok((field.clone(), 0.0));
    }
    field.check_support()?;
    let faces = face_velocities(field)?;
    advance(field, &faces, dt, scheme)
}

fn series_row(field: &GridField) -> Result<SeriesRow> {
    let p = field.potential_unchecked();
    let sup_grad = p.grad.iter().map(|g| (g[0] * g[0] + g[1] * g[1]).sqrt()).fold(0.0, f64::max);
    let hess = field.hessian_unchecked();
    let sup_hess = hess
        .iter()
        .map(|h| (h[0] * h[0] + 2.0 * h[1] * h[1] + h[2] * h[2]).sqrt())
        .fold(0.0, f64::max);
    Ok(SeriesRow {
        t: field.t,
        mass: field.mass(),
        energy: energy_unchecked(field),
        sup_grad_h: sup_grad,
        sup_hess_h: sup_hess,
        support_radius: field.support_radius(),
    })
}

/// Advances to `t_end` with time steps capped by `cfl` (in (0, 1]), landing exactly
/// on each of `sample_times`; a series row and a snapshot are recorded at each.
pub fn pde_solve(
    field: &GridField,
    t_end: f64,
    cfl: f64,
    scheme: Scheme,
    sample_times: &[f64],
) -> Result<PdeSolution> {
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(Error::InvalidArgument(format!("cfl must lie in (0, 1], got {cfl}")));
    }
    if !(t_end >= field.t) {
        return Err(Error::InvalidArgument(format!("t_end {t_end} before field time {}", field.t)));
    }
    let mut targets: Vec<f64> = sample_times.iter().copied().filter(|&s| s > field.t && s < t_end).collect();
    targets.push(t_end);
    targets.sort_by(f64::total_cmp);
    targets.dedup();
    field.check_support()?;
    let mut cur = field.clone();
    let mut series = Vec::new();
    let mut snapshots = Vec::new();
    if sample_times.contains(&field.t) {
        series.push(series_row(&cur)?);
        snapshots.push(cur.clone());
    }
    let mut steps = 0;
    let mut clipped_total = 0.0;
    let h = field.grid.h();
    for target in targets {
        while cur.t < target {
            let faces = face_velocities(&cur)?;
            let speed = max_speed(&faces);
            if !speed.is_finite() {
                return Err(Error::VelocityBlowUp(speed));
            }
            let rate = max_outflow_rate(&cur, &faces);
            let mut dt = target - cur.t;
            if speed > 0.0 {
                dt = dt.min(cfl * h / speed);
            }
            if rate > 0.0 {
                dt = dt.min(cfl * scheme.positivity_factor() / rate);
            }
            let land = cur.t + dt >= target - 1e-12 * target.abs().max(1.0);
            let (mut next, clipped) = advance(&cur, &faces, if land { target - cur.t } else { dt }, scheme)?;
            if land {
                next.t = target;
            }
            clipped_total += clipped;
            cur = next;
            steps += 1;
        }
        if sample_times.contains(&target) {
            series.push(series_row(&cur)?);
            snapshots.push(cur.clone());
        }
    }
    Ok(PdeSolution { field: cur, series, snapshots, steps, clipped_mass: clipped_total })
}
