//! Riesz kernels, their truncations and the weighted lifted space R^d x R.
//!
//! Points of the base space are stored as `[f64; 2]` (the second slot is zero
//! when d = 1) and lifted points as `[f64; 3]` whose last slot is the extra
//! coordinate xi. In the Coulomb case d = 2, s = 0 there is no extra coordinate
//! and lifted points keep xi = 0.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadrature::{integrate, panels_with_breaks, Estimate, Panel, Tolerance};

pub type Point = [f64; 2];
pub type Lifted = [f64; 3];

const SINGULAR_RADIUS: f64 = 1e-14;

#[inline]
pub fn dist2(a: Point, b: Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

#[inline]
pub fn lift(x: Point, xi: f64) -> Lifted {
    [x[0], x[1], xi]
}

#[inline]
fn norm3(x: Lifted) -> f64 {
    (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

/// Kernel parameters and the derived normalization and extension weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    d: usize,
    s: f64,
    c_ds: f64,
    gamma: Option<f64>,
}

/// Normalization c_{d,s} making the weighted divergence of the kernel gradient a unit mass.
pub fn normalization_constant(d: usize, s: f64) -> Result<f64> {
    check_range(d, s)?;
    if s == 0.0 {
        return Ok(2.0 * PI);
    }
    let omega = if d == 1 { 2.0 } else { 2.0 * PI };
    let a = 0.5 * (s + 2.0 - d as f64);
    let b = 0.5 * d as f64;
    Ok(s * omega * crate::quadrature::ln_beta(a, b).exp())
}

fn check_range(d: usize, s: f64) -> Result<()> {
    if !(d == 1 || d == 2) || !s.is_finite() || s < 0.0 || s >= d as f64 {
        return Err(Error::KernelRange { d, s });
    }
    Ok(())
}

impl KernelSpec {
    pub fn new(d: usize, s: f64) -> Result<Self> {
        let c = normalization_constant(d, s)?;
        Self::with_constant(d, s, c)
    }

    /// Same kernel with an explicitly chosen normalization (used to probe sensitivity).
    pub fn with_constant(d: usize, s: f64, c_ds: f64) -> Result<Self> {
        check_range(d, s)?;
        if !(c_ds > 0.0 && c_ds.is_finite()) {
            return Err(Error::InvalidArgument(format!("normalization must be positive, got {c_ds}")));
        }
        let gamma = if s > d as f64 - 2.0 { Some(s + 1.0 - d as f64) } else { None };
        Ok(KernelSpec { d, s, c_ds, gamma })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn c_ds(&self) -> f64 {
        self.c_ds
    }

    /// Extension weight exponent, `None` in the Coulomb case.
    pub fn gamma(&self) -> Option<f64> {
        self.gamma
    }

    pub fn is_coulomb(&self) -> bool {
        self.gamma.is_none()
    }

    /// Dimension of the space where the kernel is a fundamental solution.
    pub fn lifted_dim(&self) -> usize {
        if self.is_coulomb() {
            self.d
        } else {
            self.d + 1
        }
    }

    /// Weight |xi|^gamma (1 in the Coulomb case).
    #[inline]
    pub fn weight(&self, xi: f64) -> f64 {
        match self.gamma {
            Some(g) if g != 0.0 => xi.abs().powf(g),
            _ => 1.0,
        }
    }

    // r^{-s} from r^2, with fast paths for the common exponents
    #[inline]
    fn pow_neg_s_sq(&self, r2: f64) -> f64 {
        if self.s == 0.5 {
            1.0 / r2.sqrt().sqrt()
        } else if self.s == 1.0 {
            1.0 / r2.sqrt()
        } else {
            r2.powf(-0.5 * self.s)
        }
    }

    /// g_s(r) without the singularity check.
    #[inline]
    pub fn g_r(&self, r: f64) -> f64 {
        if self.s == 0.0 {
            -r.ln() / self.c_ds
        } else {
            self.pow_neg_s_sq(r * r) / self.c_ds
        }
    }

    /// g_s as a function of the squared distance.
    #[inline]
    pub fn g_sq(&self, r2: f64) -> f64 {
        if self.s == 0.0 {
            -0.5 * r2.ln() / self.c_ds
        } else {
            self.pow_neg_s_sq(r2) / self.c_ds
        }
    }

    /// g_s'(r) / r as a function of r^2, the scalar factor of the gradient.
    #[inline]
    pub fn grad_factor_sq(&self, r2: f64) -> f64 {
        if self.s == 0.0 {
            -1.0 / (self.c_ds * r2)
        } else {
            -self.s * self.pow_neg_s_sq(r2) / (self.c_ds * r2)
        }
    }

    pub fn g(&self, r: f64) -> Result<f64> {
        if !(r >= SINGULAR_RADIUS) {
            return Err(Error::Singular(r));
        }
        Ok(self.g_r(r))
    }

    /// Positive part used in the boundary-distance condition; for s > 0 it is g itself.
    pub fn g_plus(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return f64::INFINITY;
        }
        self.g_r(t).max(0.0)
    }

    /// Radial derivative g_s'(r).
    pub fn dg(&self, r: f64) -> f64 {
        if self.s == 0.0 {
            -1.0 / (self.c_ds * r)
        } else {
            -self.s * r.powf(-self.s - 1.0) / self.c_ds
        }
    }

    /// Second radial derivative g_s''(r).
    pub fn d2g(&self, r: f64) -> f64 {
        if self.s == 0.0 {
            1.0 / (self.c_ds * r * r)
        } else {
            self.s * (self.s + 1.0) * r.powf(-self.s - 2.0) / self.c_ds
        }
    }

    pub fn grad_g(&self, x: Point) -> Result<Point> {
        let r2 = x[0] * x[0] + x[1] * x[1];
        if !(r2.sqrt() >= SINGULAR_RADIUS) {
            return Err(Error::Singular(r2.sqrt()));
        }
        let f = self.grad_factor_sq(r2);
        Ok([f * x[0], f * x[1]])
    }

    fn require_extension(&self) -> Result<f64> {
        self.gamma.ok_or(Error::NoExtension)
    }

    /// Kernel on the lifted space at (x, xi).
    pub fn extended_g(&self, x: Point, xi: f64) -> Result<f64> {
        self.require_extension()?;
        self.g(norm3(lift(x, xi)))
    }

    /// Gradient of the lifted kernel at a lifted point.
    pub fn extended_grad(&self, p: Lifted) -> Result<Lifted> {
        let r2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
        if !(r2.sqrt() >= SINGULAR_RADIUS) {
            return Err(Error::Singular(r2.sqrt()));
        }
        let f = self.grad_factor_sq(r2);
        Ok([f * p[0], f * p[1], f * p[2]])
    }

    /// min(g(eta), g(|(x, xi)|)). In the Coulomb case pass xi = 0.
    pub fn g_truncated(&self, eta: f64, x: Point, xi: f64) -> f64 {
        let r = norm3(lift(x, xi));
        if r <= eta {
            self.g_r(eta)
        } else {
            self.g_r(r)
        }
    }

    /// Gradient of the truncated kernel: zero on the plateau |(x, xi)| <= eta.
    pub fn grad_truncated(&self, eta: f64, x: Point, xi: f64) -> Lifted {
        let p = lift(x, xi);
        let r2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
        if r2 <= eta * eta {
            return [0.0; 3];
        }
        let f = self.grad_factor_sq(r2);
        [f * p[0], f * p[1], f * p[2]]
    }

    /// Closed form of the weighted sphere measure: t^{s+1} c / s (and 2 pi t when s = 0).
    pub fn sphere_weight_closed(&self, t: f64) -> f64 {
        if self.s == 0.0 {
            2.0 * PI * t
        } else {
            t.powf(self.s + 1.0) * self.c_ds / self.s
        }
    }

    /// Weighted volume of the lifted ball of radius r.
    pub fn ball_weight_closed(&self, r: f64) -> f64 {
        let k = self.s + 2.0;
        self.sphere_weight_closed(1.0) * r.powf(k) / k
    }

    /// Weighted measure of the sphere of radius t, computed by quadrature.
    pub fn sphere_weight_integral(&self, t: f64) -> Result<f64> {
        self.require_extension()?;
        if self.s == 0.0 {
            return Err(Error::InvalidArgument("sphere weight identity needs s > 0".into()));
        }
        let est = self.sphere_integral([0.0; 2], t, &[], Tolerance::default(), |_| 1.0)?;
        Ok(est.value)
    }

    /// Weighted flux of the kernel gradient through the sphere of radius t around its pole.
    pub fn flux(&self, t: f64) -> Result<f64> {
        let est = self.sphere_integral([0.0; 2], t, &[], Tolerance::default(), |p| {
            let g = self.grad_factor_sq(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
            // n = p / t, so n . grad = g (|p|^2) / t
            g * (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) / t
        })?;
        Ok(est.value)
    }

    /// Integral of |xi|^gamma f over the sphere of radius t around (center, 0).
    ///
    /// In the extension regime `f` must be even in xi: only the upper half is
    /// integrated. `hot` lists base points (charges) whose azimuths are used as
    /// breakpoints of the angular rule.
    pub fn sphere_integral<F: FnMut(Lifted) -> f64>(
        &self,
        center: Point,
        t: f64,
        hot: &[Point],
        tol: Tolerance,
        mut f: F,
    ) -> Result<Estimate> {
        let azimuths = |hot: &[Point]| -> Vec<f64> {
            hot.iter()
                .filter(|h| dist2(**h, center) > 0.0)
                .map(|h| {
                    let a = (h[1] - center[1]).atan2(h[0] - center[0]);
                    if a < 0.0 {
                        a + 2.0 * PI
                    } else {
                        a
                    }
                })
                .collect()
        };
        match (self.gamma, self.d) {
            (None, _) => {
                let panels = panels_with_breaks(0.0, 2.0 * PI, &azimuths(hot));
                let est = integrate(
                    |th: f64| f([center[0] + t * th.cos(), center[1] + t * th.sin(), 0.0]),
                    &panels,
                    tol,
                )?;
                Ok(scale_est(est, t))
            }
            (Some(gamma), 1) => {
                let panels = [Panel::left(0.0, 0.5 * PI, gamma), Panel::right(0.5 * PI, PI, gamma)];
                let est = integrate(
                    |th: f64| {
                        let xi = t * th.sin();
                        (xi.abs() / t).powf(gamma) * f([center[0] + t * th.cos(), 0.0, xi])
                    },
                    &panels,
                    tol,
                )?;
                Ok(scale_est(est, 2.0 * t * t.powf(gamma)))
            }
            (Some(gamma), _) => {
                let breaks = azimuths(hot);
                let inner_panels = panels_with_breaks(0.0, 2.0 * PI, &breaks);
                let inner_tol = Tolerance { abs: tol.abs * 0.1, ..tol };
                let mut failure = None;
                let est = integrate(
                    |u: f64| {
                        let rho = (1.0 - u * u).max(0.0).sqrt();
                        let xi = t * u;
                        let inner = integrate(
                            |phi: f64| {
                                f([center[0] + t * rho * phi.cos(), center[1] + t * rho * phi.sin(), xi])
                            },
                            &inner_panels,
                            inner_tol,
                        );
                        match inner {
                            Ok(e) => u.powf(gamma) * e.value,
                            Err(e) => {
                                if let Error::Quadrature { value, .. } = e {
                                    failure.get_or_insert(e);
                                    u.powf(gamma) * value
                                } else {
                                    failure.get_or_insert(e);
                                    0.0
                                }
                            }
                        }
                    },
                    &[Panel::left(0.0, 1.0, gamma)],
                    tol,
                )?;
                if let Some(e) = failure {
                    return Err(e);
                }
                Ok(scale_est(est, 2.0 * t.powf(2.0 + gamma)))
            }
        }
    }
}

fn scale_est(e: Estimate, k: f64) -> Estimate {
    Estimate { value: e.value * k, error: e.error * k.abs() }
}
