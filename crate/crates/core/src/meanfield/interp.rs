use super::Grid;
use crate::kernel::Point;

fn frac_index(grid: &Grid, x: f64) -> (isize, f64) {
    let f = (x + grid.half_width) / grid.h() - 0.5;
    let i = f.floor();
    (i as isize, f - i)
}

fn clamp_idx(grid: &Grid, i: isize) -> usize {
    i.clamp(0, grid.n as isize - 1) as usize
}

// Catmull-Rom weights for the four nodes i-1, i, i+1, i+2
fn cubic_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        -0.5 * t3 + t2 - 0.5 * t,
        1.5 * t3 - 2.5 * t2 + 1.0,
        -1.5 * t3 + 2.0 * t2 + 0.5 * t,
        0.5 * t3 - 0.5 * t2,
    ]
}

/// Piecewise-cubic (Catmull-Rom) interpolation of cell-center values; indices are clamped at the box edge.
pub fn interpolate_cubic(grid: &Grid, values: &[f64], x: Point) -> f64 {
    let (ix, tx) = frac_index(grid, x[0]);
    let wx = cubic_weights(tx);
    if grid.d == 1 {
        return (0..4).map(|a| wx[a] * values[clamp_idx(grid, ix - 1 + a as isize)]).sum();
    }
    let (iy, ty) = frac_index(grid, x[1]);
    let wy = cubic_weights(ty);
    let mut acc = 0.0;
    for b in 0..4 {
        let row = clamp_idx(grid, iy - 1 + b as isize) * grid.n;
        let mut r = 0.0;
        for a in 0..4 {
            r += wx[a] * values[row + clamp_idx(grid, ix - 1 + a as isize)];
        }
        acc += wy[b] * r;
    }
    acc
}

/// Bilinear interpolation of cell-center values (zero outside the box).
pub fn interpolate_linear(grid: &Grid, values: &[f64], x: Point) -> f64 {
    let inside = |v: f64| v.abs() <= grid.half_width;
    if !inside(x[0]) || (grid.d == 2 && !inside(x[1])) {
        return 0.0;
    }
    let (ix, tx) = frac_index(grid, x[0]);
    let (i0, i1) = (clamp_idx(grid, ix), clamp_idx(grid, ix + 1));
    if grid.d == 1 {
        return (1.0 - tx) * values[i0] + tx * values[i1];
    }
    let (iy, ty) = frac_index(grid, x[1]);
    let (j0, j1) = (clamp_idx(grid, iy) * grid.n, clamp_idx(grid, iy + 1) * grid.n);
    (1.0 - ty) * ((1.0 - tx) * values[j0 + i0] + tx * values[j0 + i1])
        + ty * ((1.0 - tx) * values[j1 + i0] + tx * values[j1 + i1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_quadratics() {
        let grid = Grid::new(2, 1.0, 32).unwrap();
        let f = |p: Point| 0.3 + p[0] - 2.0 * p[1] + p[0] * p[1] + 0.5 * p[0] * p[0];
        let vals: Vec<f64> = (0..grid.cells()).map(|k| f(grid.center(k))).collect();
        let x = [0.123, -0.377];
        assert!((interpolate_cubic(&grid, &vals, x) - f(x)).abs() < 1e-12);
        let lin = interpolate_linear(&grid, &vals, x);
        assert!((lin - f(x)).abs() < 1e-3);
    }
}
