//! N-particle gradient flow with optional confinement and a rotated (conservative) term in 2D.

mod integrator;
pub(crate) mod record;

pub use integrator::{integrate, integrate_with, IntegratorOptions};
pub use record::{dispersion_rate, dissipation_residual, Sample, TrajectoryRecord};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{dist2, KernelSpec, Point};

/// How the pair gradient is counted: `Ordered` is the true gradient of the
/// ordered-pair energy (factor 2), `Unordered` counts each pair once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairConvention {
    #[default]
    Ordered,
    Unordered,
}

impl PairConvention {
    pub fn factor(self) -> f64 {
        match self {
            PairConvention::Ordered => 2.0,
            PairConvention::Unordered => 1.0,
        }
    }
}

/// External confining potential V.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Potential {
    /// V(x) = k |x - center|^2 / 2
    Harmonic { strength: f64, center: [f64; 2] },
}

impl Potential {
    pub fn value(&self, x: Point) -> f64 {
        match *self {
            Potential::Harmonic { strength, center } => 0.5 * strength * dist2(x, center),
        }
    }

    pub fn grad(&self, x: Point) -> Point {
        match *self {
            Potential::Harmonic { strength, center } => {
                [strength * (x[0] - center[0]), strength * (x[1] - center[1])]
            }
        }
    }

    /// Sup norm of the Hessian.
    pub fn hessian_bound(&self) -> f64 {
        match *self {
            Potential::Harmonic { strength, .. } => strength.abs(),
        }
    }
}

/// Energies of a configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    /// Sum of g over ordered pairs i != j.
    pub h_n: f64,
    /// h_n / N^2.
    pub normalized: f64,
    /// N times the sum of V(x_i), zero without a potential.
    pub potential: f64,
    /// The energy whose gradient drives the flow: (k/2) h_n + potential, k the pair factor.
    pub flow: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSystem {
    pub spec: KernelSpec,
    pub positions: Vec<Point>,
    pub t: f64,
    alpha: f64,
    beta: f64,
    potential: Option<Potential>,
    convention: PairConvention,
}

impl ParticleSystem {
    pub fn new(spec: KernelSpec, positions: Vec<Point>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidSystem("need at least one particle".into()));
        }
        if positions.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::InvalidSystem("non-finite position".into()));
        }
        if spec.d() == 1 && positions.iter().any(|p| p[1] != 0.0) {
            return Err(Error::InvalidSystem("1D positions must have a zero second slot".into()));
        }
        let sys = ParticleSystem {
            spec,
            positions,
            t: 0.0,
            alpha: 1.0,
            beta: 0.0,
            potential: None,
            convention: PairConvention::Ordered,
        };
        sys.check_distinct()?;
        Ok(sys)
    }

    /// Sets the flow weights. A nonzero beta needs d = 2 and alpha > 0.
    pub fn with_flow(mut self, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !beta.is_finite() {
            return Err(Error::InvalidSystem(format!("bad flow weights alpha = {alpha}, beta = {beta}")));
        }
        if beta != 0.0 && (self.spec.d() != 2 || alpha <= 0.0) {
            return Err(Error::InvalidSystem(
                "the rotated term needs d = 2 and a positive gradient weight".into(),
            ));
        }
        self.alpha = alpha;
        self.beta = beta;
        Ok(self)
    }

    pub fn with_potential(mut self, potential: Option<Potential>) -> Self {
        self.potential = potential;
        self
    }

    pub fn with_convention(mut self, convention: PairConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn potential(&self) -> Option<Potential> {
        self.potential
    }

    pub fn convention(&self) -> PairConvention {
        self.convention
    }

    fn check_distinct(&self) -> Result<()> {
        if let Some((i, j)) = coincident_pair(&self.positions) {
            return Err(Error::Coincident { i, j });
        }
        Ok(())
    }

    pub fn min_distance(&self) -> f64 {
        min_distance(&self.positions)
    }

    pub fn pairwise_energy(&self) -> Result<EnergyReport> {
        self.check_distinct()?;
        let n = self.n() as f64;
        let h_n = pair_energy(&self.spec, &self.positions);
        let potential = self
            .potential
            .map_or(0.0, |v| n * self.positions.iter().map(|&x| v.value(x)).sum::<f64>());
        Ok(EnergyReport {
            h_n,
            normalized: h_n / (n * n),
            potential,
            flow: 0.5 * self.convention.factor() * h_n + potential,
        })
    }

    pub fn velocities(&self) -> Result<Vec<Point>> {
        self.check_distinct()?;
        let mut out = vec![[0.0; 2]; self.n()];
        self.evaluate(&self.positions, &mut out, None);
        Ok(out)
    }

    /// Velocity field at `pos`; also returns the flow energy and the power
    /// sum_i grad_i E . v_i when requested. No distinctness check.
    pub(crate) fn evaluate(&self, pos: &[Point], out: &mut [Point], energy: Option<&mut (f64, f64)>) {
        let n = pos.len();
        let nf = n as f64;
        let mut grad = vec![[0.0f64; 2]; n];
        let mut h = 0.0;
        let spec = &self.spec;
        let want_energy = energy.is_some();
        for i in 0..n {
            let xi = pos[i];
            let (mut gx, mut gy) = (0.0, 0.0);
            for j in (i + 1)..n {
                let dx = xi[0] - pos[j][0];
                let dy = xi[1] - pos[j][1];
                let r2 = dx * dx + dy * dy;
                let f = spec.grad_factor_sq(r2);
                if want_energy {
                    h += spec.g_sq(r2);
                }
                gx += f * dx;
                gy += f * dy;
                grad[j][0] -= f * dx;
                grad[j][1] -= f * dy;
            }
            grad[i][0] += gx;
            grad[i][1] += gy;
        }
        // grad holds sum_{j != i} grad g(x_i - x_j); the convention factor turns it into grad_i H
        let k = self.convention.factor();
        let mut power = 0.0;
        for i in 0..n {
            let gh = [k * grad[i][0], k * grad[i][1]];
            let mut v = [-self.alpha / nf * gh[0], -self.alpha / nf * gh[1]];
            if self.beta != 0.0 {
                // rotation by +pi/2: (a, b) -> (-b, a)
                v[0] -= self.beta / nf * (-gh[1]);
                v[1] -= self.beta / nf * gh[0];
            }
            let mut ge = gh;
            if let Some(pot) = self.potential {
                let gv = pot.grad(pos[i]);
                v[0] -= gv[0];
                v[1] -= gv[1];
                ge[0] += nf * gv[0];
                ge[1] += nf * gv[1];
            }
            if self.spec.d() == 1 {
                v[1] = 0.0;
            }
            power += ge[0] * v[0] + ge[1] * v[1];
            out[i] = v;
        }
        if let Some(e) = energy {
            let hn = 2.0 * h;
            let pot = self
                .potential
                .map_or(0.0, |p| nf * pos.iter().map(|&x| p.value(x)).sum::<f64>());
            *e = (0.5 * k * hn + pot, power);
        }
    }
}

/// Sum of g over ordered pairs.
pub fn pair_energy(spec: &KernelSpec, pos: &[Point]) -> f64 {
    let mut h = 0.0;
    for i in 0..pos.len() {
        for j in (i + 1)..pos.len() {
            h += spec.g_sq(dist2(pos[i], pos[j]));
        }
    }
    2.0 * h
}

pub fn min_distance(pos: &[Point]) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..pos.len() {
        for j in (i + 1)..pos.len() {
            m = m.min(dist2(pos[i], pos[j]));
        }
    }
    m.sqrt()
}

fn coincident_pair(pos: &[Point]) -> Option<(usize, usize)> {
    let mut idx: Vec<usize> = (0..pos.len()).collect();
    idx.sort_by(|&a, &b| pos[a][0].total_cmp(&pos[b][0]).then(pos[a][1].total_cmp(&pos[b][1])));
    idx.windows(2)
        .find(|w| pos[w[0]] == pos[w[1]])
        .map(|w| (w[0].min(w[1]), w[0].max(w[1])))
}

pub fn center_of_mass(pos: &[Point]) -> Point {
    let n = pos.len() as f64;
    let mut c = [0.0; 2];
    for p in pos {
        c[0] += p[0];
        c[1] += p[1];
    }
    [c[0] / n, c[1] / n]
}

/// N^-2 sum_{i != j} |x_i - x_j|^2, computed in O(N).
pub fn dispersion(pos: &[Point]) -> f64 {
    let n = pos.len() as f64;
    let c = center_of_mass(pos);
    let var: f64 = pos.iter().map(|&p| dist2(p, c)).sum();
    2.0 * var / n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn energies() {
        let k = KernelSpec::new(2, 0.5).unwrap();
        let sys = ParticleSystem::new(k, vec![[0.0, 0.0], [1.0, 0.0]]).unwrap();
        let e = sys.pairwise_energy().unwrap();
        assert!((e.h_n - 2.0 / k.c_ds()).abs() < 1e-15);
        assert!((e.normalized - 0.5 / k.c_ds()).abs() < 1e-15);
        let tri = vec![[0.0, 0.0], [1.0, 0.0], [0.5, 3f64.sqrt() / 2.0]];
        let e = ParticleSystem::new(k, tri).unwrap().pairwise_energy().unwrap();
        assert!((e.h_n - 6.0 / k.c_ds()).abs() < 1e-14);
        let k1 = KernelSpec::new(1, 0.5).unwrap();
        let e = ParticleSystem::new(k1, vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
            .unwrap()
            .pairwise_energy()
            .unwrap();
        assert!((e.h_n * k1.c_ds() - 5.414_213_562).abs() < 1e-8);
    }

    #[test]
    fn two_body_velocity() {
        let k = KernelSpec::new(2, 0.5).unwrap();
        let sys = ParticleSystem::new(k, vec![[0.0, 0.0], [1.0, 0.0]]).unwrap();
        let v = sys.velocities().unwrap();
        assert!((v[0][0] + 0.039_788_7).abs() < 1e-7 && v[0][1].abs() < 1e-16);
        assert!((v[1][0] - 0.039_788_7).abs() < 1e-7);
        let single = ParticleSystem::new(k, vec![[0.3, 0.2]]).unwrap();
        assert_eq!(single.velocities().unwrap(), vec![[0.0, 0.0]]);
    }

    #[test]
    fn rejects_bad_systems() {
        let k = KernelSpec::new(2, 0.5).unwrap();
        assert!(matches!(
            ParticleSystem::new(k, vec![[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]]),
            Err(Error::Coincident { i: 0, j: 2 })
        ));
        assert!(ParticleSystem::new(k, vec![]).is_err());
        let sys = ParticleSystem::new(k, vec![[0.0, 0.0]]).unwrap();
        assert!(sys.clone().with_flow(0.0, 1.0).is_err());
        assert!(sys.with_flow(1.0, 1.0).is_ok());
        let k1 = KernelSpec::new(1, 0.5).unwrap();
        let sys = ParticleSystem::new(k1, vec![[0.0, 0.0]]).unwrap();
        assert!(sys.with_flow(1.0, 0.5).is_err());
    }

    #[test]
    fn velocities_match_energy_gradient() {
        let k = KernelSpec::new(2, 0.5).unwrap();
        let pos = vec![[0.1, 0.2], [0.7, -0.3], [-0.4, 0.5], [0.2, 0.9]];
        let pot = Potential::Harmonic { strength: 0.7, center: [0.1, 0.0] };
        let sys = ParticleSystem::new(k, pos.clone()).unwrap().with_potential(Some(pot));
        let v = sys.velocities().unwrap();
        let n = pos.len() as f64;
        let h = 1e-5;
        for i in 0..pos.len() {
            for c in 0..2 {
                let mut p = pos.clone();
                p[i][c] += h;
                let ep = ParticleSystem::new(k, p.clone()).unwrap().with_potential(Some(pot)).pairwise_energy().unwrap().flow;
                p[i][c] -= 2.0 * h;
                let em = ParticleSystem::new(k, p).unwrap().with_potential(Some(pot)).pairwise_energy().unwrap().flow;
                let fd = -(ep - em) / (2.0 * h) / n;
                assert!((fd - v[i][c]).abs() < 1e-8, "{fd} vs {}", v[i][c]);
            }
        }
    }

    #[test]
    fn dispersion_matches_pair_sum() {
        let pos = vec![[0.1, 0.2], [0.7, -0.3], [-0.4, 0.5]];
        let mut direct = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                direct += dist2(pos[i], pos[j]);
            }
        }
        assert!((dispersion(&pos) - direct / 9.0).abs() < 1e-14);
    }
}
