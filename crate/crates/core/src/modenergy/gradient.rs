use crate::balls::Ball;
use crate::dynamics::ParticleSystem;
use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, Point};
use crate::meanfield::kernels::lifted_gradient_tables;
use crate::meanfield::GridField;
use crate::quadrature::{ExtendedQuadrature, Tolerance};

use super::check_inputs;

/// Box of cell centers, sampled every `stride` cells along each axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub lo: Point,
    pub hi: Point,
    pub stride: usize,
}

impl Window {
    /// Every cell of a box of half width `l`.
    pub fn full(l: f64) -> Window {
        Window { lo: [-l, -l], hi: [l, l], stride: 1 }
    }

    fn contains(&self, x: Point, d: usize) -> bool {
        (0..d).all(|k| x[k] >= self.lo[k] && x[k] <= self.hi[k])
    }
}

const XI_NODES: usize = 20;
// sub-samples per axis in cells holding a particle, where the integrand is singular
const SUB: usize = 4;

/// Discrete L^p norm, over the window cells outside `balls`, of the gradient gap between
/// the particle potential and the field potential. Outside the Coulomb case the squared
/// gap is integrated over the extra coordinate with weight |xi|^gamma.
pub fn lp_gradient_distance(
    particles: &ParticleSystem,
    field: &GridField,
    balls: &[Ball],
    p: f64,
    window: &Window,
) -> Result<f64> {
    check_inputs(particles, field)?;
    field.check_support()?;
    let spec = particles.spec;
    let d = spec.d() as f64;
    let p_max = 2.0 * d / (spec.s() + d);
    if !(p >= 1.0 && p < p_max) {
        return Err(Error::InvalidArgument(format!("p must lie in [1, {p_max}), got {p}")));
    }
    if window.stride == 0 {
        return Err(Error::InvalidArgument("window stride must be positive".into()));
    }
    let grid = field.grid;
    let h = grid.h();
    let n = grid.n;
    let dim = grid.d;
    let outside = |x: Point| balls.iter().all(|b| !b.contains(x));

    // sampled cells that are not entirely discarded
    let mut cells = Vec::new();
    for k in 0..grid.cells() {
        let (i, j) = (k % n, k / n);
        if i % window.stride != 0 || j % window.stride != 0 {
            continue;
        }
        let c = grid.center(k);
        if window.contains(c, dim) {
            cells.push(k);
        }
    }
    if cells.is_empty() {
        return Ok(0.0);
    }

    // (xi, weight) pairs; the Coulomb case has a single plane slice
    let nodes: Vec<(f64, f64)> = match spec.gamma() {
        None => vec![(0.0, 1.0)],
        Some(gamma) => {
            let rule = ExtendedQuadrature::new(gamma, XI_NODES, Tolerance::default())?;
            // both halves of the fiber
            rule.fiber_nodes(4.0 * h, 2.0 * spec.s() + 2.0)?.into_iter().map(|(xi, w)| (xi, 2.0 * w)).collect()
        }
    };

    // field gradient at the centers, per node: [x1, x2, xi]
    let field_grads: Vec<Vec<[f64; 3]>> = if spec.gamma().is_none() {
        let pot = field.riesz_potential()?;
        vec![pot.grad.iter().map(|g| [g[0], g[1], 0.0]).collect()]
    } else {
        let conv = field.convolver();
        nodes
            .iter()
            .map(|&(xi, _)| {
                let tables = lifted_gradient_tables(&spec, &grid, conv.padded_len(), xi);
                let comps = conv.convolve_tables(field.values(), &tables);
                (0..grid.cells())
                    .map(|k| {
                        if dim == 1 {
                            [comps[0][k], 0.0, comps[1][k]]
                        } else {
                            [comps[0][k], comps[1][k], comps[2][k]]
                        }
                    })
                    .collect()
            })
            .collect()
    };

    let mut occupied = vec![false; grid.cells()];
    for x in &particles.positions {
        if let Some(k) = cell_of(&grid, *x) {
            occupied[k] = true;
        }
    }

    let w = 1.0 / particles.n() as f64;
    let gap = |x: Point, k: usize| -> f64 {
        let mut total = 0.0;
        for (node, &(xi, weight)) in nodes.iter().enumerate() {
            let u = particle_gradient(&spec, &particles.positions, w, x, xi);
            let f = field_grads[node][k];
            let e = [u[0] - f[0], u[1] - f[1], u[2] - f[2]];
            total += weight * (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]);
        }
        total
    };

    let mut sum = 0.0;
    for &k in &cells {
        let c = grid.center(k);
        if !occupied[k] {
            if outside(c) {
                sum += gap(c, k).powf(0.5 * p);
            }
            continue;
        }
        // midpoint sub-samples keep clear of a particle sitting on the center
        let offs: Vec<f64> = (0..SUB).map(|a| ((a as f64 + 0.5) / SUB as f64 - 0.5) * h).collect();
        let mut acc = 0.0;
        let mut count = 0usize;
        for &oy in if dim == 1 { &[0.0][..] } else { &offs[..] } {
            for &ox in &offs {
                count += 1;
                let x = [c[0] + ox, c[1] + oy];
                if outside(x) {
                    acc += gap(x, k).powf(0.5 * p);
                }
            }
        }
        sum += acc / count as f64;
    }
    let stride = window.stride as f64;
    Ok((sum * grid.cell_volume() * stride.powi(dim as i32)).powf(1.0 / p))
}

fn cell_of(grid: &crate::meanfield::Grid, x: Point) -> Option<usize> {
    let l = grid.half_width;
    let h = grid.h();
    let idx = |v: f64| -> Option<usize> {
        let k = ((v + l) / h).floor();
        (k >= 0.0 && (k as usize) < grid.n).then_some(k as usize)
    };
    let i = idx(x[0])?;
    if grid.d == 1 {
        return Some(i);
    }
    Some(idx(x[1])? * grid.n + i)
}

// gradient of (w sum_i G(x - x_i, xi)) in (x1, x2, xi)
fn particle_gradient(spec: &KernelSpec, pos: &[Point], w: f64, x: Point, xi: f64) -> [f64; 3] {
    let mut g = [0.0; 3];
    for q in pos {
        let z = [x[0] - q[0], x[1] - q[1]];
        let r2 = z[0] * z[0] + z[1] * z[1] + xi * xi;
        if r2 == 0.0 {
            continue;
        }
        let k = spec.grad_factor_sq(r2);
        g[0] += k * z[0];
        g[1] += k * z[1];
        g[2] += k * xi;
    }
    [w * g[0], w * g[1], w * g[2]]
}
