use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{pair_energy, PairConvention, ParticleSystem};
use crate::error::{Error, Result};
use crate::kernel::Point;
use crate::meanfield::{field_energy, GridField};

/// How well the sampled configuration matches its density at t = 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WellPreparedness {
    #[serde(rename = "N")]
    pub n: usize,
    /// N^-2 H_N at the sampled positions.
    pub particle_energy: f64,
    /// Double integral of g against the density.
    pub field_energy: f64,
    pub relative_gap: f64,
    pub mean: Point,
    pub field_mean: Point,
    /// Three standard errors of the sample mean, per coordinate.
    pub mean_tolerance: Point,
    /// Accepted fraction of rejection proposals (1 for inverse-CDF sampling).
    pub acceptance: f64,
}

impl WellPreparedness {
    pub fn mean_ok(&self) -> bool {
        (0..2).all(|k| (self.mean[k] - self.field_mean[k]).abs() <= self.mean_tolerance[k])
    }
}

/// i.i.d. samples of the cellwise-constant density: inverse CDF in 1D, rejection
/// against the cell maximum in 2D.
pub fn sample_points(field: &GridField, n: usize, seed: u64) -> Result<(Vec<Point>, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = field.grid;
    let h = grid.h();
    let l = grid.half_width;
    let mu = field.values();
    if grid.d == 1 {
        let mut cum = Vec::with_capacity(mu.len());
        let mut acc = 0.0;
        for &m in mu {
            acc += m;
            cum.push(acc);
        }
        let pts = (0..n)
            .map(|_| {
                let u = rng.gen_range(0.0..acc);
                let k = cum.partition_point(|&c| c <= u).min(mu.len() - 1);
                let below = if k == 0 { 0.0 } else { cum[k - 1] };
                let frac = ((u - below) / mu[k]).clamp(0.0, 1.0);
                [-l + (k as f64 + frac) * h, 0.0]
            })
            .collect();
        return Ok((pts, 1.0));
    }
    let m = grid.n;
    let top = mu.iter().copied().fold(0.0, f64::max);
    let (mut i0, mut i1, mut j0, mut j1) = (m, 0, m, 0);
    for (k, &v) in mu.iter().enumerate() {
        if v > 0.0 {
            let (i, j) = (k % m, k / m);
            i0 = i0.min(i);
            i1 = i1.max(i);
            j0 = j0.min(j);
            j1 = j1.max(j);
        }
    }
    let (x0, x1) = (-l + i0 as f64 * h, -l + (i1 + 1) as f64 * h);
    let (y0, y1) = (-l + j0 as f64 * h, -l + (j1 + 1) as f64 * h);
    let mut pts = Vec::with_capacity(n);
    let mut proposals = 0usize;
    while pts.len() < n {
        proposals += 1;
        let p = [rng.gen_range(x0..x1), rng.gen_range(y0..y1)];
        let i = (((p[0] + l) / h) as usize).min(m - 1);
        let j = (((p[1] + l) / h) as usize).min(m - 1);
        if rng.gen::<f64>() * top < mu[j * m + i] {
            pts.push(p);
        }
        if proposals >= 1000 && (pts.len() as f64) < 0.01 * proposals as f64 {
            return Err(Error::SamplingEfficiency(pts.len() as f64 / proposals as f64));
        }
    }
    Ok((pts, n as f64 / proposals as f64))
}

fn moments(field: &GridField) -> (Point, Point) {
    let grid = field.grid;
    let vol = grid.cell_volume();
    let h = grid.h();
    let (mut mean, mut sq) = ([0.0; 2], [0.0; 2]);
    for (k, &v) in field.values().iter().enumerate() {
        let c = grid.center(k);
        for a in 0..grid.d {
            mean[a] += v * vol * c[a];
            sq[a] += v * vol * (c[a] * c[a] + h * h / 12.0);
        }
    }
    let var = [sq[0] - mean[0] * mean[0], sq[1] - mean[1] * mean[1]];
    (mean, var)
}

/// Samples N particles from the field (unordered pair convention, matching the grid
/// flow) and reports the initial energy gap and the sample mean.
pub fn sample_initial(field: &GridField, n: usize, seed: u64) -> Result<(ParticleSystem, WellPreparedness)> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one particle".into()));
    }
    let (pts, acceptance) = sample_points(field, n, seed)?;
    let nf = n as f64;
    let particle_energy = pair_energy(&field.spec, &pts) / (nf * nf);
    let ff = field_energy(field)?;
    let (field_mean, var) = moments(field);
    let mut mean = [0.0; 2];
    for p in &pts {
        mean[0] += p[0] / nf;
        mean[1] += p[1] / nf;
    }
    let report = WellPreparedness {
        n,
        particle_energy,
        field_energy: ff,
        relative_gap: (particle_energy - ff).abs() / ff.abs(),
        mean,
        field_mean,
        mean_tolerance: [3.0 * (var[0] / nf).sqrt(), 3.0 * (var[1].max(0.0) / nf).sqrt()],
        acceptance,
    };
    let sys = ParticleSystem::new(field.spec, pts)?.with_convention(PairConvention::Unordered);
    Ok((sys, report))
}
