use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dynamics::Potential;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::meanfield::{Density, Grid, Scheme};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Half width L of the box [-L, L]^d.
    pub half_width: f64,
    /// Cells per axis.
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { half_width: 1.0, n: 128 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub alpha: f64,
    pub beta: f64,
    pub potential: Option<Potential>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig { alpha: 1.0, beta: 0.0, potential: None }
    }
}

/// Everything an experiment run depends on. Missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub d: usize,
    pub s: f64,
    pub density: Density,
    pub n_list: Vec<usize>,
    pub t_end: f64,
    /// Particle integrator tolerance.
    pub tol: f64,
    pub grid: GridConfig,
    /// Number of equal sample intervals on [0, t_end].
    pub samples: usize,
    /// Truncation radii as fractions of min(eta_N / 2, R / N).
    pub eta_schedule: Vec<f64>,
    /// Total ball radius; `None` uses the default schedule in N.
    pub radius_override: Option<f64>,
    pub seed: u64,
    /// Independent draws per N; energies are averaged over them, checks use the first.
    pub replicates: usize,
    pub output_dir: PathBuf,
    pub flow: FlowConfig,
    pub scheme: Scheme,
    pub cfl: f64,
    /// Exponent and sampling stride of the gradient-distance diagnostic.
    pub lp_exponent: f64,
    pub lp_stride: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            d: 2,
            s: 0.5,
            density: Density::Bump { radius: 0.5 },
            n_list: vec![64, 256, 1024],
            t_end: 0.5,
            tol: 1e-6,
            grid: GridConfig::default(),
            samples: 5,
            eta_schedule: vec![0.5, 0.25, 0.125],
            radius_override: None,
            seed: 1,
            replicates: 16,
            output_dir: PathBuf::from("out"),
            flow: FlowConfig::default(),
            scheme: Scheme::MusclSuperbee,
            cfl: 0.5,
            lp_exponent: 1.0,
            lp_stride: 4,
        }
    }
}

/// Reads a TOML experiment description and validates it.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn spec(&self) -> Result<KernelSpec> {
        KernelSpec::new(self.d, self.s)
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.d, self.grid.half_width, self.grid.n)
    }

    pub fn sample_times(&self) -> Vec<f64> {
        (0..=self.samples).map(|k| self.t_end * k as f64 / self.samples as f64).collect()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        self.spec()?;
        self.grid()?;
        self.density.validate()?;
        if self.n_list.is_empty() || self.n_list[0] < 1 || self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("n_list must be nonempty and strictly increasing, got {:?}", self.n_list));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if !(self.tol > 0.0) || self.samples == 0 || self.replicates == 0 {
            return bad("tol must be positive, samples and replicates at least 1".into());
        }
        if self.eta_schedule.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return bad(format!("eta_schedule entries must lie in (0, 1), got {:?}", self.eta_schedule));
        }
        if let Some(r) = self.radius_override {
            if !(r > 0.0 && r.is_finite()) {
                return bad(format!("radius_override must be positive, got {r}"));
            }
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) || self.lp_stride == 0 {
            return bad("cfl must lie in (0, 1] and lp_stride must be positive".into());
        }
        Ok(())
    }

    /// Extra conditions for the particle/grid comparison: 0 <= s < 1 and the pure
    /// gradient flow, which is what the grid solver integrates.
    pub fn validate_convergence(&self) -> Result<()> {
        self.validate()?;
        if self.s >= 1.0 {
            return Err(Error::InvalidArgument(format!("convergence runs need s < 1, got {}", self.s)));
        }
        if self.flow != FlowConfig::default() {
            return Err(Error::InvalidArgument(
                "convergence runs support only alpha = 1, beta = 0 and no confinement".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(parse_config("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn round_trip_and_rejections() {
        let cfg = ExperimentConfig { n_list: vec![8, 16], radius_override: Some(0.2), ..Default::default() };
        assert_eq!(parse_config(&cfg.to_toml().unwrap()).unwrap(), cfg);
        assert!(parse_config("n_list = [16, 8]").is_err());
        assert!(parse_config("bogus = 1").is_err());
        assert!(parse_config("t_end = -1.0").is_err());
        assert!(parse_config("[density]\nkind = \"disc\"\nradius = 0.3\n").is_ok());
    }
}
