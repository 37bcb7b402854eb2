use serde::Serialize;

use super::{field_energy, GridField};
use crate::error::{Error, Result};

/// Grid norms of a density and its potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldDiagnostics {
    pub mass: f64,
    pub energy: f64,
    pub sup_grad_h: f64,
    /// Frobenius norm, maximized over cells.
    pub sup_hess_h: f64,
    pub sigma: f64,
    /// Largest |mu_i - mu_j| / |x_i - x_j|^sigma over cell pairs at most 8 cells apart.
    pub holder_quotient: f64,
    /// sup |hess h| / (mass + sup mu + holder quotient).
    pub ratio: f64,
    /// Discrete L^2 norm of the forward-difference gradient of mu.
    pub grad_mu_l2: f64,
    pub support_radius: f64,
}

pub fn diagnostics(field: &GridField, sigma: f64) -> Result<FieldDiagnostics> {
    if !(sigma > 0.0 && sigma <= 1.0) {
        return Err(Error::InvalidArgument(format!("sigma must lie in (0, 1], got {sigma}")));
    }
    let p = field.riesz_potential()?;
    let sup_grad_h = p.grad.iter().map(|g| g[0].hypot(g[1])).fold(0.0, f64::max);
    let sup_hess_h = field
        .hessian()?
        .iter()
        .map(|h| (h[0] * h[0] + 2.0 * h[1] * h[1] + h[2] * h[2]).sqrt())
        .fold(0.0, f64::max);
    let holder_quotient = holder(field, sigma);
    let mass = field.mass();
    let sup_mu = field.values().iter().cloned().fold(0.0, f64::max);
    let denom = mass + sup_mu + holder_quotient;
    Ok(FieldDiagnostics {
        mass,
        energy: field_energy(field)?,
        sup_grad_h,
        sup_hess_h,
        sigma,
        holder_quotient,
        ratio: if denom > 0.0 { sup_hess_h / denom } else { 0.0 },
        grad_mu_l2: gradient_lp_norm(field, 2.0)?,
        support_radius: field.support_radius(),
    })
}

fn holder(field: &GridField, sigma: f64) -> f64 {
    const REACH: isize = 8;
    let g = &field.grid;
    let n = g.n as isize;
    let h = g.h();
    let mu = field.values();
    // half-plane of offsets so each unordered pair is visited once
    let offsets: Vec<(isize, isize, f64)> = if g.d == 1 {
        (1..=REACH).map(|a| (a, 0, (a as f64 * h).powf(sigma))).collect()
    } else {
        let mut v = Vec::new();
        for b in 0..=REACH {
            for a in -REACH..=REACH {
                if (b == 0 && a <= 0) || a * a + b * b > REACH * REACH {
                    continue;
                }
                v.push((a, b, (((a * a + b * b) as f64).sqrt() * h).powf(sigma)));
            }
        }
        v
    };
    let rows = if g.d == 1 { 1 } else { n };
    let mut best: f64 = 0.0;
    for j in 0..rows {
        for i in 0..n {
            let here = mu[(j * n + i) as usize];
            for &(a, b, w) in &offsets {
                let (ii, jj) = (i + a, j + b);
                if ii < 0 || ii >= n || jj >= rows {
                    continue;
                }
                best = best.max((here - mu[(jj * n + ii) as usize]).abs() / w);
            }
        }
    }
    best
}

/// (sum over cells of |D mu|^p vol)^(1/p) with forward differences, zero outside the box.
pub fn gradient_lp_norm(field: &GridField, p: f64) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidArgument(format!("p must be >= 1, got {p}")));
    }
    let g = &field.grid;
    let n = g.n;
    let h = g.h();
    let mu = field.values();
    let at = |i: usize, j: usize| if i < n && j < n { mu[j * n + i] } else { 0.0 };
    let mut acc = 0.0;
    if g.d == 1 {
        for i in 0..n {
            let d = (at(i + 1, 0) - mu[i]) / h;
            acc += d.abs().powf(p);
        }
    } else {
        for j in 0..n {
            for i in 0..n {
                let c = mu[j * n + i];
                let dx = (at(i + 1, j) - c) / h;
                let dy = (at(i, j + 1) - c) / h;
                acc += dx.hypot(dy).powf(p);
            }
        }
    }
    Ok((acc * g.cell_volume()).powf(1.0 / p))
}
