use serde::Serialize;

use super::Ball;
use crate::dynamics::min_distance;
use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, Point};
use crate::modenergy::{ball_energy, region_energy, RegionOptions};

fn containing(balls: &[Ball], x: Point) -> Option<&Ball> {
    balls.iter().filter(|b| b.depth(x) >= 0.0).max_by(|a, b| a.depth(x).total_cmp(&b.depth(x)))
}

/// N^-2 sum_i g^+(distance of x_i to the boundary of its ball). A point on a boundary
/// gives +infinity.
pub fn check_cond2(spec: &KernelSpec, points: &[Point], balls: &[Ball]) -> Result<f64> {
    let n = points.len() as f64;
    let mut sum = 0.0;
    for (i, &x) in points.iter().enumerate() {
        let b = containing(balls, x).ok_or(Error::Uncovered(i))?;
        let t = b.depth(x);
        sum += if t > 0.0 { spec.g_plus(t) } else { f64::INFINITY };
    }
    Ok(sum / (n * n))
}

fn eta_n(points: &[Point]) -> f64 {
    if points.len() > 1 {
        min_distance(points)
    } else {
        f64::INFINITY
    }
}

// every truncation sphere must sit inside the ball of its charge
fn check_depth(points: &[Point], balls: &[Ball], eta: f64) -> Result<()> {
    for (i, &x) in points.iter().enumerate() {
        let b = containing(balls, x).ok_or(Error::Uncovered(i))?;
        if b.depth(x) <= eta {
            return Err(Error::InadmissibleEta(format!(
                "eta = {eta} reaches past the ball of point {i} (depth {})",
                b.depth(x)
            )));
        }
    }
    Ok(())
}

/// For each eta: the energy of h_{N,eta} over the balls minus g(eta)/N.
pub fn check_cond1(
    spec: &KernelSpec,
    points: &[Point],
    balls: &[Ball],
    etas: &[f64],
    opts: &RegionOptions,
) -> Result<Vec<(f64, f64)>> {
    let en = eta_n(points);
    let n = points.len() as f64;
    etas.iter()
        .map(|&eta| {
            if !(eta > 0.0 && 2.0 * eta < en) {
                return Err(Error::InadmissibleEta(format!("need 0 < 2 eta < eta_N = {en}, got eta = {eta}")));
            }
            check_depth(points, balls, eta)?;
            let e = region_energy(spec, points, eta, balls, opts)?;
            Ok((eta, e - spec.g_r(eta) / n))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBound {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    /// Energy over each ball minus (n_b / N^2)(g(eta) - g(R/N)).
    pub per_ball: Vec<f64>,
}

/// Compares the energy over the balls with (1/N)(g(eta) - g(R/N)), R the total radius.
pub fn lower_bound_check(
    spec: &KernelSpec,
    points: &[Point],
    balls: &[Ball],
    eta: f64,
    opts: &RegionOptions,
) -> Result<LowerBound> {
    if spec.s() > 1.0 {
        return Err(Error::InvalidArgument(format!("the lower bound needs s <= 1, got s = {}", spec.s())));
    }
    let n = points.len() as f64;
    let r_total: f64 = balls.iter().map(|b| b.r).sum();
    let limit = eta_n(points).min(r_total / n);
    if !(eta > 0.0 && eta < limit) {
        return Err(Error::InadmissibleEta(format!("need 0 < eta < min(eta_N, R/N) = {limit}, got {eta}")));
    }
    check_depth(points, balls, eta)?;
    let unit = spec.g_r(eta) - spec.g_r(r_total / n);
    let mut lhs = 0.0;
    let mut per_ball = Vec::with_capacity(balls.len());
    for b in balls {
        let e = ball_energy(spec, points, eta, *b, opts)?;
        let count = points.iter().filter(|x| b.depth(**x) > 0.0).count() as f64;
        lhs += e;
        per_ball.push(e - count / (n * n) * unit);
    }
    let rhs = unit / n;
    Ok(LowerBound { lhs, rhs, slack: lhs - rhs, per_ball })
}
