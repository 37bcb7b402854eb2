//! Grid densities, their Riesz potential, and the transport scheme for the limiting equation.

mod density;
mod diagnostics;
mod interp;
mod io;
pub(crate) mod kernels;
mod transport;

pub use density::Density;
pub use diagnostics::{diagnostics, gradient_lp_norm, FieldDiagnostics};
pub use interp::{interpolate_cubic, interpolate_linear};
pub use io::{decode_field, encode_field, write_series_csv};
pub use kernels::{rect_integral, segment_integral, Convolver, PotentialField};
pub use transport::{pde_solve, pde_step, PdeSolution, Scheme, SeriesRow};

use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, Point};

/// Mass below which an outer layer of cells counts as empty when locating the support.
pub const TAIL_MASS: f64 = 1e-12;

/// Uniform cell-centered grid on [-L, L]^d with n cells per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub d: usize,
    pub half_width: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(d: usize, half_width: f64, n: usize) -> Result<Self> {
        if !(d == 1 || d == 2) || !(half_width > 0.0 && half_width.is_finite()) || n < 4 {
            return Err(Error::InvalidField(format!(
                "grid needs d in {{1, 2}}, L > 0 and n >= 4 (d = {d}, L = {half_width}, n = {n})"
            )));
        }
        if n > 1 << 14 {
            return Err(Error::InvalidField(format!("grid too large: n = {n}")));
        }
        Ok(Grid { d, half_width, n })
    }

    /// Cell width.
    pub fn h(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.d as i32)
    }

    pub fn cells(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.h()
    }

    /// Center of the cell with flat index `k` (row-major, x fastest).
    pub fn center(&self, k: usize) -> Point {
        if self.d == 1 {
            [self.coord(k), 0.0]
        } else {
            [self.coord(k % self.n), self.coord(k / self.n)]
        }
    }
}

/// Cell-averaged density on a grid, with a lazily computed potential.
#[derive(Debug, Clone)]
pub struct GridField {
    pub spec: KernelSpec,
    pub grid: Grid,
    pub t: f64,
    values: Vec<f64>,
    cache: OnceLock<Arc<PotentialField>>,
}

impl PartialEq for GridField {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.grid == other.grid && self.t == other.t && self.values == other.values
    }
}

impl GridField {
    /// Wraps nonnegative cell values. Mass is not checked here; see [`GridField::probability`].
    pub fn new(spec: KernelSpec, grid: Grid, values: Vec<f64>, t: f64) -> Result<Self> {
        if spec.d() != grid.d {
            return Err(Error::GridMismatch(format!("kernel d = {} but grid d = {}", spec.d(), grid.d)));
        }
        if values.len() != grid.cells() {
            return Err(Error::InvalidField(format!(
                "expected {} cell values, got {}",
                grid.cells(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidField(format!("cell value {v} is negative or not finite")));
        }
        Ok(GridField { spec, grid, t, values, cache: OnceLock::new() })
    }

    /// Like [`GridField::new`] but rescales to unit mass.
    pub fn probability(spec: KernelSpec, grid: Grid, mut values: Vec<f64>, t: f64) -> Result<Self> {
        let mass: f64 = values.iter().sum::<f64>() * grid.cell_volume();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidField(format!("mass must be positive, got {mass}")));
        }
        for v in &mut values {
            *v /= mass;
        }
        Self::new(spec, grid, values, t)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Replaces the cell values and drops the cached potential.
    pub fn set_values(&mut self, values: Vec<f64>) -> Result<()> {
        let fresh = GridField::new(self.spec, self.grid, values, self.t)?;
        *self = fresh;
        Ok(())
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn scaled(&self, a: f64) -> Result<GridField> {
        GridField::new(self.spec, self.grid, self.values.iter().map(|v| v * a).collect(), self.t)
    }

    /// Distance from the support to the box boundary. Outer square layers of cells
    /// carrying a total mass below `TAIL_MASS` are ignored.
    pub fn support_margin(&self) -> f64 {
        let g = &self.grid;
        let n = g.n;
        let mut rings = vec![0.0; n / 2 + 1];
        for (k, v) in self.values.iter().enumerate() {
            let i = k % n;
            let mut ring = i.min(n - 1 - i);
            if g.d == 2 {
                let j = k / n;
                ring = ring.min(j).min(n - 1 - j);
            }
            rings[ring] += v;
        }
        let vol = g.cell_volume();
        let mut outer = 0.0;
        for (ring, m) in rings.iter().enumerate() {
            outer += m * vol;
            if outer > TAIL_MASS {
                return ring as f64 * g.h();
            }
        }
        g.half_width
    }

    /// Smallest radius (at cell-center resolution) outside of which the mass is below `TAIL_MASS`.
    pub fn support_radius(&self) -> f64 {
        let mut cells: Vec<(f64, f64)> = self
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(|(k, v)| {
                let c = self.grid.center(k);
                ((c[0] * c[0] + c[1] * c[1]).sqrt(), *v)
            })
            .collect();
        cells.sort_by(|a, b| b.0.total_cmp(&a.0));
        let vol = self.grid.cell_volume();
        let mut outer = 0.0;
        for (r, v) in cells {
            outer += v * vol;
            if outer > TAIL_MASS {
                return r;
            }
        }
        0.0
    }

    pub(crate) fn check_support(&self) -> Result<()> {
        let required = 0.1 * self.grid.half_width;
        let margin = self.support_margin();
        if margin < required {
            return Err(Error::SupportTooClose { margin, required });
        }
        Ok(())
    }

    pub fn convolver(&self) -> Arc<Convolver> {
        Convolver::get(&self.spec, &self.grid)
    }

    /// h = g * mu and its gradient at cell centers (cached).
    pub fn riesz_potential(&self) -> Result<Arc<PotentialField>> {
        if self.cache.get().is_none() {
            self.check_support()?;
        }
        Ok(self.potential_unchecked())
    }

    // The padded convolution is exact anywhere in the box; the margin check guards the
    // modelling assumption and is skipped inside a solve where numerical tails reach the edge.
    pub(crate) fn potential_unchecked(&self) -> Arc<PotentialField> {
        if let Some(p) = self.cache.get() {
            return p.clone();
        }
        let p = Arc::new(self.convolver().apply(&self.values));
        let _ = self.cache.set(p.clone());
        p
    }

    /// Second derivatives of h at cell centers as (xx, xy, yy).
    pub fn hessian(&self) -> Result<Vec<[f64; 3]>> {
        self.check_support()?;
        Ok(self.hessian_unchecked())
    }

    pub(crate) fn hessian_unchecked(&self) -> Vec<[f64; 3]> {
        self.convolver().hessian(&self.values)
    }

    /// Potential at an arbitrary point by cubic interpolation of the cell-center values.
    pub fn potential_at(&self, x: Point) -> Result<f64> {
        let p = self.riesz_potential()?;
        Ok(interpolate_cubic(&self.grid, &p.h, x))
    }

    /// Potential at `x` by direct summation of exact cell integrals (slow; for cross-checks).
    pub fn potential_direct(&self, x: Point) -> f64 {
        let g = &self.grid;
        let h = g.h();
        let mut acc = 0.0;
        for (k, v) in self.values.iter().enumerate() {
            if *v == 0.0 {
                continue;
            }
            let c = g.center(k);
            let x0 = c[0] - 0.5 * h - x[0];
            let x1 = c[0] + 0.5 * h - x[0];
            acc += v * if g.d == 1 {
                segment_integral(&self.spec, x0, x1)
            } else {
                let y0 = c[1] - 0.5 * h - x[1];
                let y1 = c[1] + 0.5 * h - x[1];
                let far = x0.abs().min(x1.abs()).max(y0.abs().min(y1.abs())) > 4.0 * h;
                if far {
                    let r = crate::quadrature::cached_rule(4, 0.0, 0.0).expect("legendre rule");
                    crate::quadrature::fixed_legendre(&r, x0, x1, |a| {
                        crate::quadrature::fixed_legendre(&r, y0, y1, |b| self.spec.g_sq(a * a + b * b))
                    })
                } else {
                    rect_integral(&self.spec, x0, x1, y0, y1)
                }
            };
        }
        acc
    }
}

fn check_same(a: &GridField, b: &GridField) -> Result<()> {
    if a.grid != b.grid || a.spec != b.spec {
        return Err(Error::GridMismatch(format!("{:?} vs {:?}", a.grid, b.grid)));
    }
    Ok(())
}

/// Field self-energy: sum over cells of h mu times the cell volume.
pub fn field_energy(field: &GridField) -> Result<f64> {
    field.check_support()?;
    Ok(energy_unchecked(field))
}

pub(crate) fn energy_unchecked(field: &GridField) -> f64 {
    dot(&field.potential_unchecked().h, field.values()) * field.grid.cell_volume()
}

/// Energy of the signed difference of two fields on the same grid.
pub fn field_distance(a: &GridField, b: &GridField) -> Result<f64> {
    check_same(a, b)?;
    a.check_support()?;
    b.check_support()?;
    let diff: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
    if diff.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let h = a.convolver().potential(&diff);
    Ok(dot(&h, &diff) * a.grid.cell_volume())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Self-similar patch solution for d = 2, s = 0: density rho0/(1 + rho0 t) on the
/// disc of radius R0 sqrt(1 + rho0 t), rasterized with exact cell/disc overlap areas.
pub fn patch_exact(spec: KernelSpec, grid: Grid, rho0: f64, r0: f64, t: f64) -> Result<GridField> {
    if spec.d() != 2 || spec.s() != 0.0 {
        return Err(Error::InvalidArgument("patch solution exists for d = 2, s = 0 only".into()));
    }
    if !(rho0 > 0.0 && r0 > 0.0 && t >= 0.0) {
        return Err(Error::InvalidArgument(format!("bad patch parameters rho0 = {rho0}, R0 = {r0}, t = {t}")));
    }
    let rho = rho0 / (1.0 + rho0 * t);
    let r = r0 * (1.0 + rho0 * t).sqrt();
    let values = disc_overlap(&grid, r).into_iter().map(|a| rho * a).collect();
    GridField::new(spec, grid, values, t)
}

/// Fraction of each cell covered by the disc of radius r at the origin.
pub(crate) fn disc_overlap(grid: &Grid, r: f64) -> Vec<f64> {
    let h = grid.h();
    (0..grid.cells())
        .map(|k| {
            let c = grid.center(k);
            if grid.d == 1 {
                let lo = (c[0] - 0.5 * h).max(-r);
                let hi = (c[0] + 0.5 * h).min(r);
                return ((hi - lo) / h).max(0.0);
            }
            let (x0, x1, y0, y1) = (c[0] - 0.5 * h, c[0] + 0.5 * h, c[1] - 0.5 * h, c[1] + 0.5 * h);
            let a = signed_quadrant(x1, y1, r) - signed_quadrant(x0, y1, r) - signed_quadrant(x1, y0, r)
                + signed_quadrant(x0, y0, r);
            (a / (h * h)).clamp(0.0, 1.0)
        })
        .collect()
}

fn signed_quadrant(x: f64, y: f64, r: f64) -> f64 {
    let v = quadrant_area(x.abs(), y.abs(), r);
    if (x < 0.0) != (y < 0.0) {
        -v
    } else {
        v
    }
}

// Area of the disc of radius r inside [0, x] x [0, y].
fn quadrant_area(x: f64, y: f64, r: f64) -> f64 {
    let x = x.min(r);
    let y = y.min(r);
    if x * x + y * y <= r * r {
        return x * y;
    }
    let prim = |u: f64| 0.5 * (u * (r * r - u * u).max(0.0).sqrt() + r * r * (u / r).clamp(-1.0, 1.0).asin());
    let us = (r * r - y * y).max(0.0).sqrt();
    y * us + prim(x) - prim(us)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlap_is_area_exact() {
        let grid = Grid::new(2, 1.0, 64).unwrap();
        let r = 0.7;
        let area: f64 = disc_overlap(&grid, r).iter().sum::<f64>() * grid.cell_volume();
        assert!((area - std::f64::consts::PI * r * r).abs() < 1e-12);
    }

    #[test]
    fn patch_mass_is_conserved() {
        let spec = KernelSpec::new(2, 0.0).unwrap();
        let grid = Grid::new(2, 2.0, 64).unwrap();
        let r0 = 1.0 / std::f64::consts::PI.sqrt();
        for &t in &[0.0, 0.5, 1.0] {
            let f = patch_exact(spec, grid, 1.0, r0, t).unwrap();
            assert!((f.mass() - 1.0).abs() < 1e-12);
        }
    }
}
