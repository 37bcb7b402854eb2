use crate::balls::Ball;
use crate::error::{Error, Result};
use crate::kernel::{dist2, KernelSpec, Lifted, Point};
use crate::quadrature::Tolerance;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionOptions {
    pub tol: Tolerance,
    /// Closed form for a ball centered on its only charge.
    pub closed_form: bool,
    /// Charges farther from the ball center than this multiple of its radius enter the
    /// boundary integral through a second-order expansion. `None` keeps every charge exact.
    pub far_factor: Option<f64>,
}

impl Default for RegionOptions {
    fn default() -> Self {
        RegionOptions {
            tol: Tolerance { abs: 1e-15, rel: 1e-10, max_panels: 4000 },
            closed_form: true,
            far_factor: None,
        }
    }
}

/// Weighted Dirichlet energy of h_{N,eta} (charges of mass 1/N smeared on lifted spheres
/// of radius eta) over the union of the lifted balls B'(y, r) of `region`.
pub fn region_energy(spec: &KernelSpec, points: &[Point], eta: f64, region: &[Ball], opts: &RegionOptions) -> Result<f64> {
    let mut total = 0.0;
    for b in region {
        total += ball_energy(spec, points, eta, *b, opts)?;
    }
    Ok(total)
}

#[derive(Clone, Copy, PartialEq)]
enum Place {
    Inside,
    Outside,
    // the whole ball sits on the flat top of this charge's truncated kernel
    Plateau,
}

fn classify(p: Point, eta: f64, ball: &Ball) -> Result<Place> {
    let dist = dist2(p, ball.center).sqrt();
    if dist + eta < ball.r {
        Ok(Place::Inside)
    } else if dist - eta > ball.r {
        Ok(Place::Outside)
    } else if dist + ball.r <= eta {
        Ok(Place::Plateau)
    } else {
        Err(Error::InadmissibleEta(format!(
            "charge at {p:?} with eta = {eta} straddles the boundary of the ball at {:?} with r = {}",
            ball.center, ball.r
        )))
    }
}

// Second-order expansion of the potential of distant charges around (y, 0).
struct FarField {
    center: Point,
    value: f64,
    grad: [f64; 2],
    // xx, xy, yy, xi-xi
    hess: [f64; 4],
}

impl FarField {
    fn new(spec: &KernelSpec, center: Point, charges: &[Point], weight: f64) -> FarField {
        let mut f = FarField { center, value: 0.0, grad: [0.0; 2], hess: [0.0; 4] };
        for c in charges {
            let z = [center[0] - c[0], center[1] - c[1]];
            let r = (z[0] * z[0] + z[1] * z[1]).sqrt();
            let (g1, g2) = (spec.dg(r), spec.d2g(r));
            let u = [z[0] / r, z[1] / r];
            f.value += weight * spec.g_r(r);
            f.grad[0] += weight * g1 * u[0];
            f.grad[1] += weight * g1 * u[1];
            let k = g1 / r;
            f.hess[0] += weight * (g2 * u[0] * u[0] + k * (1.0 - u[0] * u[0]));
            f.hess[1] += weight * (g2 - k) * u[0] * u[1];
            f.hess[2] += weight * (g2 * u[1] * u[1] + k * (1.0 - u[1] * u[1]));
            f.hess[3] += weight * k;
        }
        f
    }

    fn eval(&self, p: Lifted) -> (f64, Lifted) {
        let d = [p[0] - self.center[0], p[1] - self.center[1], p[2]];
        let hx = [
            self.hess[0] * d[0] + self.hess[1] * d[1],
            self.hess[1] * d[0] + self.hess[2] * d[1],
            self.hess[3] * d[2],
        ];
        let v = self.value
            + self.grad[0] * d[0]
            + self.grad[1] * d[1]
            + 0.5 * (hx[0] * d[0] + hx[1] * d[1] + hx[2] * d[2]);
        (v, [self.grad[0] + hx[0], self.grad[1] + hx[1], hx[2]])
    }
}

// potential and gradient of point charges of mass `weight` at a lifted point off their plateaus
fn exact_field(spec: &KernelSpec, charges: &[Point], weight: f64, p: Lifted) -> (f64, Lifted) {
    let mut v = 0.0;
    let mut g = [0.0; 3];
    for c in charges {
        let z = [p[0] - c[0], p[1] - c[1], p[2]];
        let r2 = z[0] * z[0] + z[1] * z[1] + z[2] * z[2];
        v += spec.g_sq(r2);
        let k = spec.grad_factor_sq(r2);
        g[0] += k * z[0];
        g[1] += k * z[1];
        g[2] += k * z[2];
    }
    (weight * v, [weight * g[0], weight * g[1], weight * g[2]])
}

/// Energy over a single lifted ball.
pub fn ball_energy(spec: &KernelSpec, points: &[Point], eta: f64, ball: Ball, opts: &RegionOptions) -> Result<f64> {
    if !(eta > 0.0 && ball.r > 0.0) {
        return Err(Error::InvalidArgument(format!("need eta > 0 and r > 0 (eta = {eta}, r = {})", ball.r)));
    }
    let w = 1.0 / points.len() as f64;
    let mut inside = Vec::new();
    let mut active = Vec::new();
    for &p in points {
        match classify(p, eta, &ball)? {
            Place::Inside => {
                inside.push(p);
                active.push(p);
            }
            Place::Outside => active.push(p),
            Place::Plateau => {}
        }
    }
    let geta = spec.g_r(eta);
    // volume term: each smeared charge inside against everything
    let mut volume = 0.0;
    for &x in &inside {
        let mut pot = geta;
        for &z in &active {
            if z == x {
                continue;
            }
            let d = dist2(x, z).sqrt();
            pot += if d > 2.0 * eta { spec.g_r(d) } else { smeared_pair(spec, x, z, eta, opts.tol)? };
        }
        volume += w * w * pot;
    }
    let centered = inside.len() == 1 && inside[0] == ball.center;
    let externals: Vec<Point> = active.iter().copied().filter(|p| !(centered && *p == ball.center)).collect();
    if opts.closed_form && centered {
        let own = w * w * (geta - spec.g_r(ball.r));
        return Ok(own + source_free_energy(spec, &externals, w, ball, opts)?);
    }
    let boundary = boundary_term(spec, &active, w, ball, opts)?;
    Ok((boundary + volume).max(0.0))
}

// Flux integral of |xi|^gamma H dH/dn over the lifted sphere bounding the ball, for the
// potential H of the given charges (none of which has its plateau crossing the sphere).
fn boundary_term(spec: &KernelSpec, charges: &[Point], w: f64, ball: Ball, opts: &RegionOptions) -> Result<f64> {
    let (near, far): (Vec<Point>, Vec<Point>) = match opts.far_factor {
        Some(k) => charges.iter().partition(|p| dist2(**p, ball.center).sqrt() <= k * ball.r),
        None => (charges.to_vec(), Vec::new()),
    };
    let far_field = (!far.is_empty()).then(|| FarField::new(spec, ball.center, &far, w));
    let est = spec.sphere_integral(ball.center, ball.r, &near, opts.tol, |p| {
        let (mut v, mut g) = exact_field(spec, &near, w, p);
        if let Some(ff) = &far_field {
            let (fv, fg) = ff.eval(p);
            v += fv;
            g = [g[0] + fg[0], g[1] + fg[1], g[2] + fg[2]];
        }
        v * (g[0] * (p[0] - ball.center[0]) + g[1] * (p[1] - ball.center[1]) + g[2] * p[2]) / ball.r
    })?;
    Ok(est.value)
}

// Energy over the ball of the potential of charges that all lie outside it.
fn source_free_energy(spec: &KernelSpec, charges: &[Point], w: f64, ball: Ball, opts: &RegionOptions) -> Result<f64> {
    if charges.is_empty() {
        return Ok(0.0);
    }
    let nearest = charges.iter().map(|c| dist2(*c, ball.center).sqrt()).fold(f64::INFINITY, f64::min);
    if ball.r < 1e-3 * nearest {
        let (_, g) = exact_field(spec, charges, w, [ball.center[0], ball.center[1], 0.0]);
        return Ok((g[0] * g[0] + g[1] * g[1]) * spec.ball_weight_closed(ball.r));
    }
    Ok(boundary_term(spec, charges, w, ball, opts)?.max(0.0))
}

// Average of the truncated kernel of z over the smeared charge sphere around x.
fn smeared_pair(spec: &KernelSpec, x: Point, z: Point, eta: f64, tol: Tolerance) -> Result<f64> {
    let est = spec.sphere_integral(x, eta, &[z], tol, |p| spec.g_truncated(eta, [p[0] - z[0], p[1] - z[1]], p[2]))?;
    Ok(est.value / spec.sphere_weight_closed(eta))
}
