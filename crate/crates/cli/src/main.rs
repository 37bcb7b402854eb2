use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;
use rieszflow::balls::{grow_and_merge, parse_points};
use rieszflow::harness::{
    parse_config, parse_suite_config, run_convergence, run_identity_suite, run_stability, write_convergence,
    write_stability, write_suite, SuiteConfig,
};

#[derive(Parser)]
#[command(name = "rieszflow", version, about = "Riesz gradient-flow experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Particle/grid convergence experiment described by a TOML file.
    Run {
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Identity checks; exits nonzero if any entry fails.
    Suite {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ball construction for a point file (one point per line).
    Balls {
        #[arg(long)]
        points: PathBuf,
        /// Total radius.
        #[arg(long = "R")]
        r: f64,
        /// Dimension; inferred from the first point when omitted.
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Grid stability probe for a perturbed initial density.
    Stability {
        config: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        perturbation: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn infer_dim(text: &str) -> Result<usize> {
    let first = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .find(|l| !l.is_empty())
        .context("the point file has no points")?;
    Ok(first.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()).count())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = parse_config(&read(&config)?)?;
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            let result = run_convergence(&cfg)?;
            write_convergence(&cfg, &result, &dir)?;
            for r in &result.runs {
                let k = r.mean_e_n.len() - 1;
                println!("N = {:>6}  E_N(T) = {:+.6e}  gap(T) = {:.6e}", r.n, r.mean_e_n[k], r.mean_energy_gap[k]);
            }
            if let Some(fit) = &result.fit {
                println!("fitted exponent over N = {:?}: {:.4}", fit.n, fit.exponent);
            }
            info!("results in {}", dir.display());
        }
        Command::Suite { config, out } => {
            let cfg = match config {
                Some(p) => parse_suite_config(&read(&p)?)?,
                None => SuiteConfig::default(),
            };
            let report = run_identity_suite(&cfg);
            if let Some(dir) = out {
                write_suite(&report, &dir)?;
            }
            for e in &report.entries {
                let tag = if e.pass { "PASS" } else { "FAIL" };
                println!("{tag}  {:<32} {:.3e} (threshold {:.1e})", e.name, e.error, e.threshold);
            }
            if !report.pass() {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Balls { points, r, dim } => {
            let text = read(&points)?;
            let d = match dim {
                Some(d) => d,
                None => infer_dim(&text)?,
            };
            let pts = parse_points(&text, d)?;
            if pts.is_empty() {
                bail!("the point file has no points");
            }
            let balls = grow_and_merge(&pts, d, r, None)?;
            println!("{}", balls.to_json()?);
        }
        Command::Stability { config, perturbation, out } => {
            let cfg = parse_config(&read(&config)?)?;
            let report = run_stability(&cfg, perturbation)?;
            write_stability(&cfg, &report, &out.unwrap_or_else(|| cfg.output_dir.clone()))?;
            for row in &report.rows {
                println!("t = {:.3}  D = {:.6e}  envelope = {:.6e}", row.t, row.distance, row.envelope);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
