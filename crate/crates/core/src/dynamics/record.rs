use std::io::Write;

use crate::error::Result;
use crate::kernel::Point;

/// State of the flow at one sample time.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub positions: Vec<Point>,
    pub velocities: Vec<Point>,
    /// Sum of g over ordered pairs.
    pub h_n: f64,
    /// Energy whose gradient drives the flow (pair term in the configured convention plus confinement).
    pub flow_energy: f64,
    /// sum_i grad_i(flow energy) . v_i, the exact time derivative of `flow_energy`.
    pub power: f64,
    pub eta_n: f64,
    pub com: Point,
    pub dispersion: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub d: usize,
    pub n: usize,
    pub samples: Vec<Sample>,
    pub accepted: usize,
    pub rejected: usize,
    pub guard_rejections: usize,
    /// Accepted steps over which the flow energy went up (beyond roundoff).
    pub energy_increases: usize,
    /// (t, flow energy) after every accepted step.
    pub step_energies: Vec<(f64, f64)>,
}

impl TrajectoryRecord {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    /// Largest displacement of the center of mass from its first sampled value.
    pub fn com_drift(&self) -> f64 {
        let Some(first) = self.samples.first() else { return 0.0 };
        self.samples
            .iter()
            .map(|s| ((s.com[0] - first.com[0]).powi(2) + (s.com[1] - first.com[1]).powi(2)).sqrt())
            .fold(0.0, f64::max)
    }

    /// Per-particle trajectory CSV: `t,i,x1[,x2],v1[,v2]`.
    pub fn write_trajectory_csv<W: Write>(&self, mut w: W) -> Result<()> {
        if self.d == 1 {
            writeln!(w, "t,i,x1,v1")?;
        } else {
            writeln!(w, "t,i,x1,x2,v1,v2")?;
        }
        for s in &self.samples {
            for (i, (x, v)) in s.positions.iter().zip(&s.velocities).enumerate() {
                if self.d == 1 {
                    writeln!(w, "{},{},{},{}", s.t, i, x[0], v[0])?;
                } else {
                    writeln!(w, "{},{},{},{},{},{}", s.t, i, x[0], x[1], v[0], v[1])?;
                }
            }
        }
        Ok(())
    }

    /// Scalar series CSV: `t,H_N,eta_N,com_1[,com_2],dispersion`.
    pub fn write_series_csv<W: Write>(&self, mut w: W) -> Result<()> {
        if self.d == 1 {
            writeln!(w, "t,H_N,eta_N,com_1,dispersion")?;
        } else {
            writeln!(w, "t,H_N,eta_N,com_1,com_2,dispersion")?;
        }
        for s in &self.samples {
            if self.d == 1 {
                writeln!(w, "{},{},{},{},{}", s.t, s.h_n, s.eta_n, s.com[0], s.dispersion)?;
            } else {
                writeln!(w, "{},{},{},{},{},{}", s.t, s.h_n, s.eta_n, s.com[0], s.com[1], s.dispersion)?;
            }
        }
        Ok(())
    }
}

fn uniform_stencil(t: &[f64], k: usize) -> Option<f64> {
    if k < 2 || k + 2 >= t.len() {
        return None;
    }
    let h = t[k] - t[k - 1];
    let ok = [t[k - 1] - t[k - 2], t[k + 1] - t[k], t[k + 2] - t[k + 1]]
        .iter()
        .all(|d| (d - h).abs() <= 1e-9 * h.abs());
    ok.then_some(h)
}

/// Largest relative gap between a finite-difference derivative of the sampled
/// flow energy and the exact power sum_i grad_i E . v_i.
///
/// Samples that are the center of five equally spaced samples use the
/// five-point stencil; when the record has no such sample, interior samples
/// use the three-point stencil for uneven spacing. For alpha = 1, beta = 0 and
/// no potential the power is -N sum |v_i|^2.
pub fn dissipation_residual(record: &TrajectoryRecord) -> f64 {
    let s = &record.samples;
    let t: Vec<f64> = s.iter().map(|x| x.t).collect();
    let e: Vec<f64> = s.iter().map(|x| x.flow_energy).collect();
    let scale = s.iter().map(|x| x.power.abs()).fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    let mut check = |k: usize, fd: f64| {
        let p = s[k].power;
        let num = (fd - p).abs();
        if num == 0.0 {
            return;
        }
        let den = p.abs().max(1e-12 * scale);
        worst = worst.max(if den > 0.0 { num / den } else { f64::INFINITY });
    };
    let centers: Vec<(usize, f64)> = (0..t.len()).filter_map(|k| uniform_stencil(&t, k).map(|h| (k, h))).collect();
    if !centers.is_empty() {
        for (k, h) in centers {
            let fd = (-e[k + 2] + 8.0 * e[k + 1] - 8.0 * e[k - 1] + e[k - 2]) / (12.0 * h);
            check(k, fd);
        }
    } else if t.len() >= 3 {
        for k in 1..t.len() - 1 {
            let h1 = t[k] - t[k - 1];
            let h2 = t[k + 1] - t[k];
            let fd = -h2 / (h1 * (h1 + h2)) * e[k - 1] + (h2 - h1) / (h1 * h2) * e[k] + h1 / (h2 * (h1 + h2)) * e[k + 1];
            check(k, fd);
        }
    }
    worst
}

/// Least-squares slope of the sampled dispersion N^-2 sum_{i != j} |x_i - x_j|^2 against time.
pub fn dispersion_rate(record: &TrajectoryRecord) -> f64 {
    let pts: Vec<(f64, f64)> = record.samples.iter().map(|s| (s.t, s.dispersion)).collect();
    least_squares_slope(&pts)
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}
