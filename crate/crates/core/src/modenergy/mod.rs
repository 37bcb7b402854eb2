//! Modulated energy between a particle configuration and a grid density.

mod gradient;
mod region;

pub use gradient::{lp_gradient_distance, Window};
pub use region::{ball_energy, region_energy, RegionOptions};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dynamics::{min_distance, pair_energy, ParticleSystem};
use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, Point};
use crate::meanfield::kernels::{primitive_1d, radial_primitive};
use crate::meanfield::{field_energy, interpolate_cubic, GridField};
use crate::quadrature::{integrate, panels_with_breaks, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaEntry {
    pub eta: f64,
    #[serde(rename = "E_eta")]
    pub e_eta: f64,
    /// E_eta - E_N - g(eta)/N
    pub defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulatedEnergyReport {
    #[serde(rename = "N")]
    pub n: usize,
    pub d: usize,
    pub s: f64,
    pub t: f64,
    #[serde(rename = "E_N")]
    pub e_n: f64,
    pub pp: f64,
    pub pf: f64,
    pub ff: f64,
    /// Sorted by decreasing eta.
    pub eta: Vec<EtaEntry>,
}

/// How the potential of the field is evaluated at particle positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PotentialEval {
    /// Cubic interpolation of the FFT potential.
    #[default]
    Interpolated,
    /// Direct sum of exact cell integrals (slow).
    Direct,
}

fn check_inputs(particles: &ParticleSystem, field: &GridField) -> Result<()> {
    if particles.spec != field.spec {
        return Err(Error::GridMismatch(format!(
            "particles use (d, s) = ({}, {}) but the field uses ({}, {})",
            particles.spec.d(),
            particles.spec.s(),
            field.spec.d(),
            field.spec.s()
        )));
    }
    let l = field.grid.half_width;
    if let Some(i) = particles.positions.iter().position(|p| p[0].abs() > l || p[1].abs() > l) {
        return Err(Error::InvalidArgument(format!("particle {i} lies outside the grid box")));
    }
    Ok(())
}

fn field_potential(field: &GridField, x: Point, eval: PotentialEval) -> Result<f64> {
    Ok(match eval {
        PotentialEval::Interpolated => interpolate_cubic(&field.grid, &field.riesz_potential()?.h, x),
        PotentialEval::Direct => field.potential_direct(x),
    })
}

pub fn modulated_energy(particles: &ParticleSystem, field: &GridField) -> Result<ModulatedEnergyReport> {
    modulated_energy_with(particles, field, PotentialEval::Interpolated)
}

/// E_N = pp - pf + ff with the field potential evaluated by `eval`.
pub fn modulated_energy_with(
    particles: &ParticleSystem,
    field: &GridField,
    eval: PotentialEval,
) -> Result<ModulatedEnergyReport> {
    check_inputs(particles, field)?;
    let n = particles.n();
    let nf = n as f64;
    let pp = pair_energy(&particles.spec, &particles.positions) / (nf * nf);
    let mut hsum = 0.0;
    for &x in &particles.positions {
        hsum += field_potential(field, x, eval)?;
    }
    let pf = 2.0 * hsum / nf;
    let ff = field_energy(field)?;
    Ok(ModulatedEnergyReport {
        n,
        d: particles.spec.d(),
        s: particles.spec.s(),
        t: particles.t,
        e_n: pp - pf + ff,
        pp,
        pf,
        ff,
        eta: Vec::new(),
    })
}

impl ModulatedEnergyReport {
    /// Computes E_{N,eta}, records it with its defect, and returns the entry.
    pub fn add_eta(&mut self, particles: &ParticleSystem, field: &GridField, eta: f64) -> Result<EtaEntry> {
        let parts = eta_parts(particles, field, eta)?;
        let entry = EtaEntry { eta, e_eta: parts.value, defect: parts.value - self.e_n - parts.self_energy };
        self.eta.retain(|e| e.eta != eta);
        self.eta.push(entry);
        self.eta.sort_by(|a, b| b.eta.total_cmp(&a.eta));
        Ok(entry)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Terms of the eta-approximation E_{N,eta} = pp_eta + g(eta)/N - pf_eta + ff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaParts {
    pub eta: f64,
    pub value: f64,
    pub pp_eta: f64,
    /// g(eta)/N: energy of each smeared charge against itself.
    pub self_energy: f64,
    pub pf_eta: f64,
    pub ff: f64,
}

/// The energy of h_{N,eta} - h, where each point charge is smeared uniformly on the
/// lifted sphere of radius eta around it.
pub fn eta_approx(particles: &ParticleSystem, field: &GridField, eta: f64) -> Result<f64> {
    Ok(eta_parts(particles, field, eta)?.value)
}

pub fn eta_parts(particles: &ParticleSystem, field: &GridField, eta: f64) -> Result<EtaParts> {
    check_inputs(particles, field)?;
    let spec = particles.spec;
    let eta_n = if particles.n() > 1 { min_distance(&particles.positions) } else { f64::INFINITY };
    if !(eta > 0.0 && 2.0 * eta < eta_n.min(1.0)) {
        return Err(Error::InadmissibleEta(format!("need 0 < 2 eta < min(1, eta_N = {eta_n}), got eta = {eta}")));
    }
    let nf = particles.n() as f64;
    // separations exceed 2 eta, so smeared pairs interact exactly like point pairs
    let pp_eta = pair_energy(&spec, &particles.positions) / (nf * nf);
    let self_energy = spec.g_r(eta) / nf;
    let pot = field.riesz_potential()?;
    let mut cross = 0.0;
    for &x in &particles.positions {
        let h = interpolate_cubic(&field.grid, &pot.h, x);
        cross += h - local_excess(&spec, field, x, eta)?;
    }
    let pf_eta = 2.0 * cross / nf;
    let ff = field_energy(field)?;
    Ok(EtaParts { eta, value: pp_eta + self_energy - pf_eta + ff, pp_eta, self_energy, pf_eta, ff })
}

/// The integral over B(x, eta) of (g(|y - x|) - g(eta)) mu(y) dy for the cellwise-constant
/// density: the potential of mu at x minus its average over the smeared charge sphere.
pub fn local_excess(spec: &KernelSpec, field: &GridField, x: Point, eta: f64) -> Result<f64> {
    let grid = &field.grid;
    let h = grid.h();
    let l = grid.half_width;
    let mu = field.values();
    let n = grid.n;
    let geta = spec.g_r(eta);
    let cell_index = |v: f64| -> Option<usize> {
        let k = ((v + l) / h).floor();
        (k >= 0.0 && (k as usize) < n).then_some(k as usize)
    };
    if grid.d == 1 {
        // breakpoints at cell edges inside [x - eta, x + eta]
        let mut cuts = vec![-eta, eta];
        let first = ((x[0] - eta + l) / h).ceil() as i64;
        let last = ((x[0] + eta + l) / h).floor() as i64;
        for k in first..=last {
            let z = -l + k as f64 * h - x[0];
            if z > -eta && z < eta {
                cuts.push(z);
            }
        }
        cuts.sort_by(f64::total_cmp);
        let mut acc = 0.0;
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            if let Some(c) = cell_index(x[0] + 0.5 * (a + b)) {
                acc += mu[c] * (primitive_1d(spec, b) - primitive_1d(spec, a) - geta * (b - a));
            }
        }
        return Ok(acc);
    }
    // radial primitive of (g(t) - g(eta)) t
    let q = |rho: f64| radial_primitive(spec, rho) - 0.5 * geta * rho * rho;
    let ray = |theta: f64| -> f64 {
        let (dx, dy) = (theta.cos(), theta.sin());
        let mut cuts = vec![0.0, eta];
        for (dir, origin) in [(dx, x[0]), (dy, x[1])] {
            if dir.abs() < 1e-300 {
                continue;
            }
            let end = origin + eta * dir;
            let (lo, hi) = if dir > 0.0 { (origin, end) } else { (end, origin) };
            let first = ((lo + l) / h).ceil() as i64;
            let last = ((hi + l) / h).floor() as i64;
            for k in first..=last {
                let t = (-l + k as f64 * h - origin) / dir;
                if t > 0.0 && t < eta {
                    cuts.push(t);
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        let mut acc = 0.0;
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let m = 0.5 * (a + b);
            if let (Some(i), Some(j)) = (cell_index(x[0] + m * dx), cell_index(x[1] + m * dy)) {
                acc += mu[j * n + i] * (q(b) - q(a));
            }
        }
        acc
    };
    // kinks of the angular integrand: directions of grid corners inside the disc
    let mut breaks = Vec::new();
    let i0 = ((x[0] - eta + l) / h).ceil() as i64;
    let i1 = ((x[0] + eta + l) / h).floor() as i64;
    let j0 = ((x[1] - eta + l) / h).ceil() as i64;
    let j1 = ((x[1] + eta + l) / h).floor() as i64;
    for i in i0..=i1 {
        for j in j0..=j1 {
            let cx = -l + i as f64 * h - x[0];
            let cy = -l + j as f64 * h - x[1];
            if cx * cx + cy * cy < eta * eta && (cx != 0.0 || cy != 0.0) {
                breaks.push(cy.atan2(cx).rem_euclid(2.0 * PI));
            }
        }
        // where grid lines leave the disc the ray structure changes as well
        let cx = -l + i as f64 * h - x[0];
        if cx.abs() < eta {
            let a = (cx / eta).acos();
            breaks.push(a.rem_euclid(2.0 * PI));
            breaks.push((-a).rem_euclid(2.0 * PI));
        }
    }
    for j in j0..=j1 {
        let cy = -l + j as f64 * h - x[1];
        if cy.abs() < eta {
            let a = (cy / eta).asin();
            breaks.push(a.rem_euclid(2.0 * PI));
            breaks.push((PI - a).rem_euclid(2.0 * PI));
        }
    }
    let tol = Tolerance { abs: 1e-15, rel: 1e-11, max_panels: 4000 };
    let est = integrate(ray, &panels_with_breaks(0.0, 2.0 * PI, &breaks), tol)?;
    Ok(est.value)
}
