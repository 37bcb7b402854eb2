//! Cell-integrated kernels and free-space convolution by zero-padded FFT.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::Grid;
use crate::kernel::KernelSpec;
use crate::quadrature::{cached_rule, fixed_legendre, integrate, Panel, Rule, Tolerance};

const NEAR: i64 = 4;

/// Potential and gradient at cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField {
    pub h: Vec<f64>,
    pub grad: Vec<[f64; 2]>,
}

// Odd primitive of g(|z|) in 1D.
pub(crate) fn primitive_1d(spec: &KernelSpec, z: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    let a = z.abs();
    let v = if spec.s() == 0.0 {
        -(a * a.ln() - a) / spec.c_ds()
    } else {
        a.powf(1.0 - spec.s()) / ((1.0 - spec.s()) * spec.c_ds())
    };
    v.copysign(z)
}

// Radial primitive P(R) = int_0^R g(r) r dr in 2D.
pub(crate) fn radial_primitive(spec: &KernelSpec, r: f64) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    if spec.s() == 0.0 {
        -(0.5 * r * r * r.ln() - 0.25 * r * r) / spec.c_ds()
    } else {
        r.powf(2.0 - spec.s()) / ((2.0 - spec.s()) * spec.c_ds())
    }
}

/// int_0^a int_0^b g(|(x, y)|) dy dx for a, b >= 0.
fn corner_integral(spec: &KernelSpec, a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    let theta = b.atan2(a);
    let tol = Tolerance { abs: 1e-17, rel: 1e-14, max_panels: 500 };
    let part = |len: f64, top: f64| -> f64 {
        let f = |phi: f64| radial_primitive(spec, len / phi.cos());
        match integrate(f, &[Panel::smooth(0.0, top)], tol) {
            Ok(e) => e.value,
            Err(crate::Error::Quadrature { value, .. }) => value,
            Err(_) => f64::NAN,
        }
    };
    part(a, theta) + part(b, FRAC_PI_2 - theta)
}

fn signed_corner(spec: &KernelSpec, x: f64, y: f64) -> f64 {
    let v = corner_integral(spec, x.abs(), y.abs());
    if (x < 0.0) != (y < 0.0) {
        -v
    } else {
        v
    }
}

/// Exact integral of g over the rectangle [x0, x1] x [y0, y1] (coordinates relative to the pole).
pub fn rect_integral(spec: &KernelSpec, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    signed_corner(spec, x1, y1) - signed_corner(spec, x0, y1) - signed_corner(spec, x1, y0)
        + signed_corner(spec, x0, y0)
}

/// Exact integral of g(|z|) over [a, b] in 1D.
pub fn segment_integral(spec: &KernelSpec, a: f64, b: f64) -> f64 {
    primitive_1d(spec, b) - primitive_1d(spec, a)
}

fn tensor_gl(spec: &KernelSpec, rule: &Rule, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    fixed_legendre(rule, x0, x1, |x| fixed_legendre(rule, y0, y1, |y| spec.g_sq(x * x + y * y)))
}

// d/dz1 of g at (z1, z2)
fn dg1(spec: &KernelSpec, z1: f64, z2: f64) -> f64 {
    spec.grad_factor_sq(z1 * z1 + z2 * z2) * z1
}

struct KernelTables {
    pot: Vec<f64>,
    grad: Vec<Vec<f64>>,
}

struct HessTables {
    comps: Vec<Vec<f64>>,
}

fn offsets(m: usize) -> impl Iterator<Item = (usize, i64)> {
    let n = (m / 2) as i64;
    (0..m).filter_map(move |idx| {
        let o = if (idx as i64) < n { idx as i64 } else { idx as i64 - m as i64 };
        (o.abs() < n).then_some((idx, o))
    })
}

fn build_tables(spec: &KernelSpec, grid: &Grid, m: usize) -> KernelTables {
    let h = grid.h();
    let near_rule = cached_rule(16, 0.0, 0.0).expect("legendre rule");
    let far_rule = cached_rule(6, 0.0, 0.0).expect("legendre rule");
    let box_rule = cached_rule(4, 0.0, 0.0).expect("legendre rule");
    if grid.d == 1 {
        let mut pot = vec![0.0; m];
        let mut gx = vec![0.0; m];
        for (idx, o) in offsets(m) {
            let a = (o as f64 - 0.5) * h;
            let b = (o as f64 + 0.5) * h;
            pot[idx] = segment_integral(spec, a, b);
            gx[idx] = spec.g_r(b.abs()) - spec.g_r(a.abs());
        }
        return KernelTables { pot, grad: vec![gx] };
    }
    // exact corner values on the near lattice
    let lat = (2 * NEAR + 2) as usize;
    let mut corners = vec![0.0; lat * lat];
    for i in 0..lat {
        for j in 0..lat {
            let x = (i as f64 - (NEAR as f64 + 0.5)) * h;
            let y = (j as f64 - (NEAR as f64 + 0.5)) * h;
            corners[i * lat + j] = signed_corner(spec, x, y);
        }
    }
    let corner = |ci: i64, cj: i64| corners[((ci + NEAR) as usize) * lat + (cj + NEAR) as usize];
    let mut pot = vec![0.0; m * m];
    let mut gx = vec![0.0; m * m];
    for (iy, oy) in offsets(m) {
        for (ix, ox) in offsets(m) {
            let x0 = (ox as f64 - 0.5) * h;
            let x1 = (ox as f64 + 0.5) * h;
            let y0 = (oy as f64 - 0.5) * h;
            let y1 = (oy as f64 + 0.5) * h;
            let near = ox.abs() <= NEAR && oy.abs() <= NEAR;
            pot[iy * m + ix] = if near {
                // corner index c covers x = (c - 0.5) h ... ; x0 = (ox - 0.5) h -> c = ox
                corner(ox + 1, oy + 1) - corner(ox, oy + 1) - corner(ox + 1, oy) + corner(ox, oy)
            } else {
                tensor_gl(spec, &box_rule, x0, x1, y0, y1)
            };
            let rule = if near { &near_rule } else { &far_rule };
            gx[iy * m + ix] = fixed_legendre(rule, y0, y1, |y| spec.g_sq(x1 * x1 + y * y) - spec.g_sq(x0 * x0 + y * y));
        }
    }
    let gy = transpose(&gx, m);
    KernelTables { pot, grad: vec![gx, gy] }
}

fn build_hessian(spec: &KernelSpec, grid: &Grid, m: usize) -> HessTables {
    let h = grid.h();
    if grid.d == 1 {
        let mut hxx = vec![0.0; m];
        for (idx, o) in offsets(m) {
            let a = (o as f64 - 0.5) * h;
            let b = (o as f64 + 0.5) * h;
            hxx[idx] = spec.dg(b.abs()) * b.signum() - spec.dg(a.abs()) * a.signum();
        }
        return HessTables { comps: vec![hxx] };
    }
    let near_rule = cached_rule(16, 0.0, 0.0).expect("legendre rule");
    let far_rule = cached_rule(6, 0.0, 0.0).expect("legendre rule");
    let mut hxx = vec![0.0; m * m];
    let mut hxy = vec![0.0; m * m];
    for (iy, oy) in offsets(m) {
        for (ix, ox) in offsets(m) {
            let x0 = (ox as f64 - 0.5) * h;
            let x1 = (ox as f64 + 0.5) * h;
            let y0 = (oy as f64 - 0.5) * h;
            let y1 = (oy as f64 + 0.5) * h;
            let near = ox.abs() <= NEAR && oy.abs() <= NEAR;
            let rule = if near { &near_rule } else { &far_rule };
            hxx[iy * m + ix] = fixed_legendre(rule, y0, y1, |y| dg1(spec, x1, y) - dg1(spec, x0, y));
            hxy[iy * m + ix] = fixed_legendre(rule, x0, x1, |x| dg1(spec, x, y1) - dg1(spec, x, y0));
        }
    }
    let hyy = transpose(&hxx, m);
    HessTables { comps: vec![hxx, hxy, hyy] }
}

fn transpose(a: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            out[j * m + i] = a[i * m + j];
        }
    }
    out
}

// r^{-s} profile constant: grad_factor_sq(r2) = -k r^{-s-2} / c
fn radial_factor(spec: &KernelSpec) -> f64 {
    if spec.s() == 0.0 {
        1.0
    } else {
        spec.s()
    }
}

// int_a^b xi * grad_factor_sq(z^2 + xi^2) dz, through z = xi tan(theta)
fn lifted_segment(spec: &KernelSpec, a: f64, b: f64, xi: f64) -> f64 {
    let s = spec.s();
    let (ta, tb) = ((a / xi).atan(), (b / xi).atan());
    // cos^s has root-type endpoints near +-pi/2 when xi is small
    let tol = Tolerance { abs: 1e-15, rel: 1e-13, max_panels: 2000 };
    let inner = integrate(|t: f64| t.cos().max(0.0).powf(s), &[Panel::smooth(ta, tb)], tol).map_or_else(
        |e| match e {
            crate::Error::Quadrature { value, .. } => value,
            _ => f64::NAN,
        },
        |e| e.value,
    );
    -radial_factor(spec) / spec.c_ds() * xi.powf(-s) * inner
}

// int over the centered square of side h of xi * grad_factor_sq(|z|^2 + xi^2) dz
fn lifted_self_cell(spec: &KernelSpec, rule: &Rule, h: f64, xi: f64) -> f64 {
    let s = spec.s();
    let k = -radial_factor(spec) / spec.c_ds();
    let radial = |p: f64| -> f64 {
        if s == 0.0 {
            0.5 * ((p * p + xi * xi) / (xi * xi)).ln()
        } else {
            (xi.powf(-s) - (p * p + xi * xi).powf(-0.5 * s)) / s
        }
    };
    8.0 * k * xi * fixed_legendre(rule, 0.0, std::f64::consts::FRAC_PI_4, |t| radial(0.5 * h / t.cos()))
}

/// Cell integrals of the lifted kernel gradient at height `xi > 0`, laid out like the
/// convolution tables: [d/dx1, d/dxi] in 1D and [d/dx1, d/dx2, d/dxi] in 2D.
pub(crate) fn lifted_gradient_tables(spec: &KernelSpec, grid: &Grid, m: usize, xi: f64) -> Vec<Vec<f64>> {
    let h = grid.h();
    let near_rule = cached_rule(16, 0.0, 0.0).expect("legendre rule");
    let mid_rule = cached_rule(6, 0.0, 0.0).expect("legendre rule");
    let far_rule = cached_rule(4, 0.0, 0.0).expect("legendre rule");
    let big = |z2: f64| spec.g_sq(z2 + xi * xi);
    if grid.d == 1 {
        let mut gx = vec![0.0; m];
        let mut gxi = vec![0.0; m];
        for (idx, o) in offsets(m) {
            let a = (o as f64 - 0.5) * h;
            let b = (o as f64 + 0.5) * h;
            gx[idx] = big(b * b) - big(a * a);
            gxi[idx] = lifted_segment(spec, a, b, xi);
        }
        return vec![gx, gxi];
    }
    let mut gx = vec![0.0; m * m];
    let mut gxi = vec![0.0; m * m];
    for (iy, oy) in offsets(m) {
        for (ix, ox) in offsets(m) {
            let x0 = (ox as f64 - 0.5) * h;
            let x1 = (ox as f64 + 0.5) * h;
            let y0 = (oy as f64 - 0.5) * h;
            let y1 = (oy as f64 + 0.5) * h;
            let reach = ox.abs().max(oy.abs());
            let rule = if reach <= 2 {
                &near_rule
            } else if reach <= NEAR {
                &mid_rule
            } else {
                &far_rule
            };
            gx[iy * m + ix] = fixed_legendre(rule, y0, y1, |y| big(x1 * x1 + y * y) - big(x0 * x0 + y * y));
            gxi[iy * m + ix] = if reach == 0 {
                lifted_self_cell(spec, &near_rule, h, xi)
            } else {
                fixed_legendre(rule, x0, x1, |x| {
                    fixed_legendre(rule, y0, y1, |y| xi * spec.grad_factor_sq(x * x + y * y + xi * xi))
                })
            };
        }
    }
    let gy = transpose(&gx, m);
    vec![gx, gy, gxi]
}

/// Precomputed kernel spectra for one (kernel, grid) pair.
pub struct Convolver {
    grid: Grid,
    spec: KernelSpec,
    m: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    pot: Vec<Complex<f64>>,
    grad: Vec<Vec<Complex<f64>>>,
    hess: OnceLock<Vec<Vec<Complex<f64>>>>,
}

impl std::fmt::Debug for Convolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Convolver").field("grid", &self.grid).field("m", &self.m).finish()
    }
}

type ConvKey = (usize, u64, u64, u64, usize);

fn cache() -> &'static Mutex<HashMap<ConvKey, Arc<Convolver>>> {
    static CACHE: OnceLock<Mutex<HashMap<ConvKey, Arc<Convolver>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl Convolver {
    /// Shared convolver for this kernel and grid (built on first use).
    pub fn get(spec: &KernelSpec, grid: &Grid) -> Arc<Convolver> {
        let key = (grid.d, spec.s().to_bits(), spec.c_ds().to_bits(), grid.half_width.to_bits(), grid.n);
        if let Some(c) = cache().lock().expect("convolver cache poisoned").get(&key) {
            return c.clone();
        }
        let c = Arc::new(Convolver::new(spec, grid));
        let mut map = cache().lock().expect("convolver cache poisoned");
        if map.len() >= 12 {
            map.clear();
        }
        map.insert(key, c.clone());
        c
    }

    pub fn new(spec: &KernelSpec, grid: &Grid) -> Convolver {
        let m = 2 * grid.n;
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(m);
        let inv = planner.plan_fft_inverse(m);
        let tables = build_tables(spec, grid, m);
        let mut conv = Convolver {
            grid: *grid,
            spec: *spec,
            m,
            fwd,
            inv,
            pot: Vec::new(),
            grad: Vec::new(),
            hess: OnceLock::new(),
        };
        conv.pot = conv.spectrum(&tables.pot);
        conv.grad = tables.grad.iter().map(|g| conv.spectrum(g)).collect();
        conv
    }

    fn len(&self) -> usize {
        if self.grid.d == 1 {
            self.m
        } else {
            self.m * self.m
        }
    }

    fn transform(&self, buf: &mut [Complex<f64>], inverse: bool) {
        let plan = if inverse { &self.inv } else { &self.fwd };
        plan.process(buf);
        if self.grid.d == 2 {
            let m = self.m;
            transpose_complex(buf, m);
            plan.process(buf);
            transpose_complex(buf, m);
        }
    }

    fn spectrum(&self, table: &[f64]) -> Vec<Complex<f64>> {
        let mut buf: Vec<Complex<f64>> = table.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.transform(&mut buf, false);
        buf
    }

    fn padded_spectrum(&self, values: &[f64]) -> Vec<Complex<f64>> {
        let n = self.grid.n;
        let mut buf = vec![Complex::new(0.0, 0.0); self.len()];
        if self.grid.d == 1 {
            for i in 0..n {
                buf[i].re = values[i];
            }
        } else {
            for iy in 0..n {
                for ix in 0..n {
                    buf[iy * self.m + ix].re = values[iy * n + ix];
                }
            }
        }
        self.transform(&mut buf, false);
        buf
    }

    fn apply_kernel(&self, spec_values: &[Complex<f64>], kernel: &[Complex<f64>]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = spec_values.iter().zip(kernel).map(|(a, b)| a * b).collect();
        self.transform(&mut buf, true);
        let norm = 1.0 / self.len() as f64;
        let n = self.grid.n;
        if self.grid.d == 1 {
            (0..n).map(|i| buf[i].re * norm).collect()
        } else {
            let mut out = vec![0.0; n * n];
            for iy in 0..n {
                for ix in 0..n {
                    out[iy * n + ix] = buf[iy * self.m + ix].re * norm;
                }
            }
            out
        }
    }

    /// Potential h = g * mu and its gradient at cell centers for a (possibly signed) density.
    pub fn apply(&self, values: &[f64]) -> PotentialField {
        let sv = self.padded_spectrum(values);
        let h = self.apply_kernel(&sv, &self.pot);
        let gx = self.apply_kernel(&sv, &self.grad[0]);
        let grad = if self.grid.d == 1 {
            gx.into_iter().map(|g| [g, 0.0]).collect()
        } else {
            let gy = self.apply_kernel(&sv, &self.grad[1]);
            gx.into_iter().zip(gy).map(|(a, b)| [a, b]).collect()
        };
        PotentialField { h, grad }
    }

    /// Convolution of cell values with arbitrary kernel tables in the padded layout.
    pub(crate) fn convolve_tables(&self, values: &[f64], tables: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let sv = self.padded_spectrum(values);
        tables.iter().map(|t| self.apply_kernel(&sv, &self.spectrum(t))).collect()
    }

    pub(crate) fn padded_len(&self) -> usize {
        self.m
    }

    /// Potential only.
    pub fn potential(&self, values: &[f64]) -> Vec<f64> {
        let sv = self.padded_spectrum(values);
        self.apply_kernel(&sv, &self.pot)
    }

    /// Second derivatives at cell centers as (xx, xy, yy); in 1D only xx is filled.
    pub fn hessian(&self, values: &[f64]) -> Vec<[f64; 3]> {
        let kernels = self.hess.get_or_init(|| {
            build_hessian(&self.spec, &self.grid, self.m)
                .comps
                .iter()
                .map(|t| self.spectrum(t))
                .collect()
        });
        let sv = self.padded_spectrum(values);
        let comps: Vec<Vec<f64>> = kernels.iter().map(|k| self.apply_kernel(&sv, k)).collect();
        (0..values.len())
            .map(|i| {
                if self.grid.d == 1 {
                    [comps[0][i], 0.0, 0.0]
                } else {
                    [comps[0][i], comps[1][i], comps[2][i]]
                }
            })
            .collect()
    }
}

fn transpose_complex(buf: &mut [Complex<f64>], m: usize) {
    for i in 0..m {
        for j in (i + 1)..m {
            buf.swap(i * m + j, j * m + i);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corner_matches_brute_force() {
        for &s in &[0.0, 0.5, 1.5] {
            let spec = KernelSpec::new(2, s).unwrap();
            let exact = rect_integral(&spec, -0.3, 0.5, -0.2, 0.4);
            // brute force: split at the singularity and integrate panels adaptively
            let tol = Tolerance { abs: 1e-13, rel: 1e-11, max_panels: 20000 };
            let mut acc = 0.0;
            for &(a, b) in &[(-0.3, 0.0), (0.0, 0.5)] {
                for &(c, d) in &[(-0.2, 0.0), (0.0, 0.4)] {
                    let v = integrate(
                        |x: f64| {
                            integrate(|y: f64| spec.g_sq(x * x + y * y), &[Panel::smooth(c, d)], tol)
                                .map(|e| e.value)
                                .unwrap_or_else(|e| match e {
                                    crate::Error::Quadrature { value, .. } => value,
                                    _ => f64::NAN,
                                })
                        },
                        &[Panel::smooth(a, b)],
                        Tolerance { abs: 1e-10, rel: 1e-9, max_panels: 20000 },
                    )
                    .unwrap();
                    acc += v.value;
                }
            }
            assert!((exact - acc).abs() < 1e-6 * acc.abs().max(1.0), "s {s}: {exact} vs {acc}");
        }
    }

    #[test]
    fn segment_integral_1d() {
        let spec = KernelSpec::new(1, 0.5).unwrap();
        let v = segment_integral(&spec, -1.0, 1.0);
        assert!((v - 4.0 / spec.c_ds()).abs() < 1e-14);
    }

    // nested adaptive quadrature of f over a rectangle, splitting at the axes
    fn brute_rect<F: Fn(f64, f64) -> f64>(x0: f64, x1: f64, y0: f64, y1: f64, f: F) -> f64 {
        let tol = Tolerance { abs: 1e-14, rel: 1e-11, max_panels: 20000 };
        let split = |a: f64, b: f64| -> Vec<Panel> {
            if a < 0.0 && b > 0.0 {
                vec![Panel::smooth(a, 0.0), Panel::smooth(0.0, b)]
            } else {
                vec![Panel::smooth(a, b)]
            }
        };
        integrate(
            |x: f64| integrate(|y: f64| f(x, y), &split(y0, y1), tol).map(|e| e.value).unwrap_or(f64::NAN),
            &split(x0, x1),
            Tolerance { abs: 1e-12, rel: 1e-10, max_panels: 20000 },
        )
        .unwrap()
        .value
    }

    #[test]
    fn lifted_tables_match_brute_force() {
        let grid = Grid::new(2, 1.0, 8).unwrap();
        let h = grid.h();
        let m = 16;
        for s in [0.5, 1.2] {
            let spec = KernelSpec::new(2, s).unwrap();
            for xi in [0.05 * h, h, 6.0 * h] {
                let t = lifted_gradient_tables(&spec, &grid, m, xi);
                for (ox, oy) in [(0i64, 0i64), (1, 0), (2, -1), (5, 3)] {
                    let ix = ox.rem_euclid(m as i64) as usize;
                    let iy = oy.rem_euclid(m as i64) as usize;
                    let (x0, x1) = ((ox as f64 - 0.5) * h, (ox as f64 + 0.5) * h);
                    let (y0, y1) = ((oy as f64 - 0.5) * h, (oy as f64 + 0.5) * h);
                    let dxi = brute_rect(x0, x1, y0, y1, |x, y| xi * spec.grad_factor_sq(x * x + y * y + xi * xi));
                    let dx = brute_rect(x0, x1, y0, y1, |x, y| x * spec.grad_factor_sq(x * x + y * y + xi * xi));
                    let got = (t[2][iy * m + ix], t[0][iy * m + ix]);
                    assert!((got.0 - dxi).abs() < 1e-6 * dxi.abs(), "s={s} xi={xi} o=({ox},{oy}): {} vs {dxi}", got.0);
                    assert!((got.1 - dx).abs() < 1e-6 * dx.abs().max(1e-3 * dxi.abs()), "s={s} xi={xi} o=({ox},{oy}): {} vs {dx}", got.1);
                }
            }
        }
        let grid = Grid::new(1, 1.0, 8).unwrap();
        for s in [0.0, 0.5] {
            let spec = KernelSpec::new(1, s).unwrap();
            for xi in [0.05 * h, h, 6.0 * h] {
                let t = lifted_gradient_tables(&spec, &grid, m, xi);
                for o in [0i64, 1, -3, 6] {
                    let k = o.rem_euclid(m as i64) as usize;
                    let (a, b) = ((o as f64 - 0.5) * h, (o as f64 + 0.5) * h);
                    let tol = Tolerance { abs: 1e-14, rel: 1e-12, max_panels: 20000 };
                    let dxi = integrate(|z: f64| xi * spec.grad_factor_sq(z * z + xi * xi), &[Panel::smooth(a, b)], tol).unwrap().value;
                    assert!((t[1][k] - dxi).abs() < 1e-9 * dxi.abs(), "s={s} xi={xi} o={o}: {} vs {dxi}", t[1][k]);
                }
            }
        }
    }
}
