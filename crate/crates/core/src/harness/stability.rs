use serde::Serialize;

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::meanfield::{field_distance, field_energy, pde_solve, Density, GridField};

/// Shape added to the base density, as a fraction of its mass.
pub const PERTURBATION_SHAPE: Density = Density::Bump { radius: 0.25 };
/// Where the perturbation bump sits.
pub const PERTURBATION_OFFSET: [f64; 2] = [0.15, 0.1];
/// Gronwall constant multiplying the integrated Hessian norm.
pub const GRONWALL_C: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityRow {
    pub t: f64,
    /// Energy of the difference of the two densities.
    pub distance: f64,
    /// exp(C int_0^t sup |hess h_2|) D(0)
    pub envelope: f64,
    /// Roundoff-level distance: machine epsilon times the field energy.
    pub floor: f64,
    pub sup_hess_h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub perturbation: f64,
    pub rows: Vec<StabilityRow>,
}

impl StabilityReport {
    /// Largest D(t) / envelope(t) over rows with a nonzero envelope.
    pub fn envelope_ratio(&self) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.envelope > 0.0)
            .map(|r| r.distance / r.envelope)
            .fold(0.0, f64::max)
    }

    /// Largest D(t) / floor(t).
    pub fn floor_ratio(&self) -> f64 {
        self.rows.iter().map(|r| r.distance / r.floor).fold(0.0, f64::max)
    }
}

fn shifted_bump(base: &GridField) -> Result<Vec<f64>> {
    let grid = base.grid;
    let h = grid.h();
    let [ox, oy] = PERTURBATION_OFFSET;
    let shape = PERTURBATION_SHAPE.rasterize(base.spec, grid)?;
    // shift by whole cells so the perturbation stays a cellwise exact bump
    let (di, dj) = ((ox / h).round() as i64, if grid.d == 1 { 0 } else { (oy / h).round() as i64 });
    let n = grid.n as i64;
    let mut out = vec![0.0; grid.cells()];
    for (k, &v) in shape.values().iter().enumerate() {
        let (i, j) = ((k as i64) % n + di, (k as i64) / n + dj);
        if v > 0.0 {
            if i < 0 || i >= n || j < 0 || (grid.d == 2 && j >= n) {
                return Err(Error::InvalidArgument("perturbation leaves the grid".into()));
            }
            out[(j * n + i) as usize] = v;
        }
    }
    Ok(out)
}

/// The base density mixed with a shifted bump: (mu + eps phi) / (1 + eps).
pub fn perturbed(base: &GridField, eps: f64) -> Result<GridField> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("perturbation must be nonnegative, got {eps}")));
    }
    if eps == 0.0 {
        return Ok(base.clone());
    }
    let phi = shifted_bump(base)?;
    let values = base.values().iter().zip(&phi).map(|(m, p)| (m + eps * p) / (1.0 + eps)).collect();
    GridField::new(base.spec, base.grid, values, base.t)
}

/// Evolves the base density and its perturbation on the grid and compares their
/// distance with the Gronwall envelope built from the measured Hessian norms.
pub fn run_stability(config: &ExperimentConfig, perturbation: f64) -> Result<StabilityReport> {
    config.validate()?;
    let base = config.density.rasterize(config.spec()?, config.grid()?)?;
    let other = perturbed(&base, perturbation)?;
    let times = config.sample_times();
    let a = pde_solve(&base, config.t_end, config.cfl, config.scheme, &times)?;
    let b = pde_solve(&other, config.t_end, config.cfl, config.scheme, &times)?;
    let mut rows = Vec::with_capacity(times.len());
    let mut integral = 0.0;
    let mut d0 = 0.0;
    for (k, (fa, fb)) in a.snapshots.iter().zip(&b.snapshots).enumerate() {
        let hess = b.series[k].sup_hess_h;
        if k == 0 {
            d0 = field_distance(fa, fb)?;
        } else {
            // the larger endpoint keeps the rule an upper bound for a monotone norm
            integral += (fa.t - a.snapshots[k - 1].t) * hess.max(b.series[k - 1].sup_hess_h);
        }
        let distance = field_distance(fa, fb)?;
        rows.push(StabilityRow {
            t: fa.t,
            distance,
            envelope: (GRONWALL_C * integral).exp() * d0,
            floor: f64::EPSILON * field_energy(fa)?.abs(),
            sup_hess_h: hess,
        });
    }
    Ok(StabilityReport { perturbation, rows })
}
