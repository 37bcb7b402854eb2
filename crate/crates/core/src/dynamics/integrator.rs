use log::debug;

use super::record::{Sample, TrajectoryRecord};
use super::{center_of_mass, dispersion, min_distance, ParticleSystem};
use crate::error::{Error, Result};
use crate::kernel::Point;

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorOptions {
    /// Relative and absolute error target per step.
    pub tol: f64,
    /// Times at which samples are recorded; the integrator lands on them exactly.
    pub sample_times: Vec<f64>,
    /// A step is rejected if some pair distance shrinks below this fraction in one step.
    pub guard: f64,
    pub max_steps: usize,
}

impl IntegratorOptions {
    pub fn uniform(t0: f64, t_end: f64, intervals: usize, tol: f64) -> Self {
        let sample_times = (0..=intervals)
            .map(|k| t0 + (t_end - t0) * k as f64 / intervals as f64)
            .collect();
        IntegratorOptions { tol, sample_times, guard: 0.25, max_steps: 10_000_000 }
    }

    /// Five equally spaced samples (spacing `delta`) around each of `centers`
    /// uniformly spaced points in (t0, t_end), for finite-difference checks.
    pub fn clustered(t0: f64, t_end: f64, centers: usize, delta: f64, tol: f64) -> Self {
        let mut sample_times = vec![t0];
        for c in 1..=centers {
            let tc = t0 + (t_end - t0) * c as f64 / (centers + 1) as f64;
            sample_times.extend((-2..=2).map(|k| tc + k as f64 * delta));
        }
        sample_times.push(t_end);
        IntegratorOptions { tol, sample_times, guard: 0.25, max_steps: 10_000_000 }
    }
}

// Dormand-Prince 5(4) tableau (the flow is autonomous, so the nodes c_i are not needed)
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrate to `t_end` with 100 uniformly spaced samples.
pub fn integrate(sys: &mut ParticleSystem, t_end: f64, tol: f64) -> Result<TrajectoryRecord> {
    let opts = IntegratorOptions::uniform(sys.t, t_end, 100, tol);
    integrate_with(sys, t_end, &opts)
}

fn sample(sys: &ParticleSystem, t: f64, pos: &[Point], vel: &[Point], energy: (f64, f64)) -> Sample {
    let h_n = super::pair_energy(&sys.spec, pos);
    Sample {
        t,
        positions: pos.to_vec(),
        velocities: vel.to_vec(),
        h_n,
        flow_energy: energy.0,
        power: energy.1,
        eta_n: min_distance(pos),
        com: center_of_mass(pos),
        dispersion: dispersion(pos),
    }
}

/// Adaptive Dormand-Prince integration of the particle flow. On success `sys`
/// holds the final state.
pub fn integrate_with(sys: &mut ParticleSystem, t_end: f64, opts: &IntegratorOptions) -> Result<TrajectoryRecord> {
    if !(t_end > sys.t) || !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need t_end > t and tol > 0 (t = {}, t_end = {t_end}, tol = {})",
            sys.t, opts.tol
        )));
    }
    let n = sys.n();
    let dim = sys.spec.d();
    let mut targets: Vec<f64> = opts
        .sample_times
        .iter()
        .copied()
        .filter(|&s| s > sys.t && s < t_end)
        .collect();
    targets.push(t_end);
    targets.sort_by(f64::total_cmp);
    targets.dedup();
    let record_start = opts.sample_times.contains(&sys.t);

    let mut t = sys.t;
    let mut y = sys.positions.clone();
    let mut k: Vec<Vec<Point>> = vec![vec![[0.0; 2]; n]; 7];
    let mut energy = (0.0, 0.0);
    sys.evaluate(&y, &mut k[0], Some(&mut energy));

    let mut record = TrajectoryRecord {
        d: dim,
        n,
        samples: Vec::new(),
        accepted: 0,
        rejected: 0,
        guard_rejections: 0,
        energy_increases: 0,
        step_energies: vec![(t, energy.0)],
    };
    if record_start {
        record.samples.push(sample(sys, t, &y, &k[0], energy));
    }

    let scale_norm = |v: &[Point]| -> f64 {
        let s: f64 = v.iter().map(|p| p[0] * p[0] + p[1] * p[1]).sum();
        (s / (n * dim) as f64).sqrt()
    };
    let d0 = scale_norm(&y).max(1e-5);
    let d1 = scale_norm(&k[0]).max(1e-10);
    let mut h = (0.01 * d0 / d1).min(t_end - t).max(1e-12);

    let mut stage = vec![[0.0; 2]; n];
    let mut y_new = vec![[0.0; 2]; n];
    let mut energy_new = (0.0, 0.0);
    let mut target_idx = 0;
    let mut steps = 0usize;

    while target_idx < targets.len() {
        let target = targets[target_idx];
        let h_free = h;
        let mut hit = false;
        if t + h >= target - 1e-13 * target.abs().max(1.0) {
            h = target - t;
            hit = true;
        }
        for s in 1..7 {
            for i in 0..n {
                let mut p = y[i];
                for (m, a) in A[s].iter().enumerate().take(s) {
                    if *a != 0.0 {
                        p[0] += h * a * k[m][i][0];
                        p[1] += h * a * k[m][i][1];
                    }
                }
                stage[i] = p;
            }
            if s == 6 {
                y_new.copy_from_slice(&stage);
                sys.evaluate(&stage, &mut k[s], Some(&mut energy_new));
            } else {
                sys.evaluate(&stage, &mut k[s], None);
            }
        }
        // error estimate
        let mut acc = 0.0;
        for i in 0..n {
            for c in 0..dim {
                let mut e = 0.0;
                for (m, em) in E.iter().enumerate() {
                    e += em * k[m][i][c];
                }
                e *= h;
                let sc = opts.tol * (1.0 + y[i][c].abs().max(y_new[i][c].abs()));
                acc += (e / sc) * (e / sc);
            }
        }
        let mut err = (acc / (n * dim) as f64).sqrt();
        if !err.is_finite() {
            err = f64::INFINITY;
        }
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::StepUnderflow { t, h, min_distance: min_distance(&y) });
        }
        if err <= 1.0 {
            if let Some(ratio) = worst_ratio(&y, &y_new, opts.guard) {
                record.guard_rejections += 1;
                record.rejected += 1;
                debug!("collision guard at t = {t}: distance ratio {ratio:.3}, halving h = {h:e}");
                h *= 0.5;
                check_underflow(t, h, &y)?;
                continue;
            }
            t = if hit { target } else { t + h };
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6);
            if energy_new.0 > energy.0 + 1e-12 * energy.0.abs().max(1e-300) {
                record.energy_increases += 1;
            }
            energy = energy_new;
            record.accepted += 1;
            record.step_energies.push((t, energy.0));
            if hit {
                sys.positions.clone_from(&y);
                sys.t = t;
                record.samples.push(sample(sys, t, &y, &k[0], energy));
                target_idx += 1;
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            // a step shortened to land on a sample says little about the next one
            h = if hit { h_free.max(h * fac) } else { h * fac };
        } else {
            record.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            check_underflow(t, h, &y)?;
        }
    }
    sys.positions = y;
    sys.t = t;
    Ok(record)
}

fn check_underflow(t: f64, h: f64, y: &[Point]) -> Result<()> {
    if h < 1e-14 * t.abs().max(1.0) {
        return Err(Error::StepUnderflow { t, h, min_distance: min_distance(y) });
    }
    Ok(())
}

// Smallest new/old distance ratio when it is below `guard`, else None.
fn worst_ratio(old: &[Point], new: &[Point], guard: f64) -> Option<f64> {
    let g2 = guard * guard;
    let mut worst: Option<f64> = None;
    for i in 0..old.len() {
        for j in (i + 1)..old.len() {
            let ox = old[i][0] - old[j][0];
            let oy = old[i][1] - old[j][1];
            let nx = new[i][0] - new[j][0];
            let ny = new[i][1] - new[j][1];
            let o2 = ox * ox + oy * oy;
            let n2 = nx * nx + ny * ny;
            if n2 < g2 * o2 {
                let r = (n2 / o2).sqrt();
                worst = Some(worst.map_or(r, |w: f64| w.min(r)));
            }
        }
    }
    worst
}
