use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::convergence::ConvergenceResult;
use super::stability::StabilityReport;
use super::suite::SuiteReport;
use crate::error::{Error, Result};

/// Written next to every set of results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub kind: String,
    pub version: String,
    /// SHA-256 of the normalized configuration text.
    pub config_hash: String,
    pub d: usize,
    pub s: f64,
    pub c_ds: f64,
    pub gamma: Option<f64>,
    pub seed: u64,
}

pub fn config_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut out, b| {
        let _ = write!(out, "{b:02x}");
        out
    })
}

/// Worker pool capped by `RIESZFLOW_THREADS` when it is set to a positive integer.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("RIESZFLOW_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::InvalidArgument(format!("RIESZFLOW_THREADS must be a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::InvalidArgument(e.to_string()))
}

fn manifest(kind: &str, config: &ExperimentConfig, text: &str) -> Result<Manifest> {
    let spec = config.spec()?;
    Ok(Manifest {
        kind: kind.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: config_hash(text),
        d: spec.d(),
        s: spec.s(),
        c_ds: spec.c_ds(),
        gamma: spec.gamma(),
        seed: config.seed,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

const PLOT_SCRIPT: &str = r#"import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt

root = sys.argv[1] if len(sys.argv) > 1 else "."
series = defaultdict(list)
with open(f"{root}/energy.csv") as f:
    for row in csv.DictReader(f):
        series[int(row["N"])].append((float(row["t"]), float(row["E_N"])))

fig, (a, b) = plt.subplots(1, 2, figsize=(10, 4))
for n, pts in sorted(series.items()):
    a.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=f"N={n}")
a.set_xlabel("t")
a.set_ylabel("E_N(t)")
a.legend()
ns = sorted(series)
b.loglog(ns, [abs(series[n][-1][1]) for n in ns], marker="o")
b.set_xlabel("N")
b.set_ylabel("|E_N(T)|")
fig.tight_layout()
fig.savefig(f"{root}/convergence.png", dpi=150)
"#;

/// Writes the configuration, manifest, JSON result, CSV tables and a plotting script.
pub fn write_convergence(config: &ExperimentConfig, result: &ConvergenceResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let text = config.to_toml()?;
    fs::write(dir.join("config.toml"), &text)?;
    write_json(&dir.join("manifest.json"), &manifest("convergence", config, &text)?)?;
    write_json(&dir.join("convergence.json"), result)?;

    let mut energy = String::from("N,t,E_N,pp,pf,ff,energy_gap,balls,cond2,lower_bound_slack\n");
    let mut eta = String::from("N,t,eta,E_eta,defect,cond1\n");
    let mut summary = String::from("N,seed,E_N_T,energy_gap_T,monotone_ratio,lp_distance,initial_gap,accepted,rejected\n");
    for run in &result.runs {
        for p in &run.points {
            let c = &p.checks;
            writeln!(
                energy,
                "{},{},{},{},{},{},{},{},{},{}",
                run.n, p.t, p.e_n, p.pp, p.pf, p.ff, p.energy_gap, c.balls, c.cond2, c.lower_bound.slack
            )
            .ok();
            for (e, (_, c1)) in p.eta.iter().rev().zip(&c.cond1) {
                writeln!(eta, "{},{},{},{},{},{}", run.n, p.t, e.eta, e.e_eta, e.defect, c1).ok();
            }
        }
        let last = run.final_point();
        writeln!(
            summary,
            "{},{},{},{},{},{},{},{},{}",
            run.n,
            run.seed,
            last.e_n,
            last.energy_gap,
            run.monotone_ratio,
            run.lp_distance,
            run.initial.relative_gap,
            run.accepted_steps,
            run.rejected_steps
        )
        .ok();
    }
    let mut field = String::from("t,mass,energy,sup_grad_h,sup_hess_h,support_radius\n");
    for r in &result.field {
        writeln!(field, "{},{},{},{},{},{}", r.t, r.mass, r.energy, r.sup_grad_h, r.sup_hess_h, r.support_radius).ok();
    }
    fs::write(dir.join("energy.csv"), energy)?;
    fs::write(dir.join("eta.csv"), eta)?;
    fs::write(dir.join("summary.csv"), summary)?;
    fs::write(dir.join("field.csv"), field)?;
    fs::write(dir.join("plot.py"), PLOT_SCRIPT)?;
    Ok(())
}

pub fn write_stability(config: &ExperimentConfig, report: &StabilityReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let text = config.to_toml()?;
    write_json(&dir.join("stability_manifest.json"), &manifest("stability", config, &text)?)?;
    let mut csv = String::from("t,distance,envelope,floor,sup_hess_h\n");
    for r in &report.rows {
        writeln!(csv, "{},{},{},{},{}", r.t, r.distance, r.envelope, r.floor, r.sup_hess_h).ok();
    }
    fs::write(dir.join("stability.csv"), csv)?;
    write_json(&dir.join("stability.json"), report)
}

pub fn write_suite(report: &SuiteReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("suite.csv"), report.to_csv())?;
    write_json(&dir.join("suite.json"), report)
}
