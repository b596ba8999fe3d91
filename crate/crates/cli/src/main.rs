use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use l2o_cert::experiment::{self, ExperimentConfig};
use l2o_cert::kernel;

#[derive(Parser)]
#[command(name = "l2o-cert", version, about = "Train learned optimizers and certify their convergence")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample problems, train α₀ and build the prior.
    Train(Common),
    /// Fit the posterior and compute the certificates.
    Certify(Common),
    /// Monte-Carlo check of the certificates on fresh problems.
    Validate(Common),
    /// Compare the selected algorithm with the baseline on the test split.
    Compare(Common),
    /// Run the exact finite-state kernel checks.
    VerifyKernels,
    /// Full pipeline on the built-in demo configuration (or `--config`).
    Demo(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config and `L2O_CERT_SEED`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Print the resolved configuration as JSON and exit.
    #[arg(long)]
    print_config: bool,
}

impl Common {
    fn resolve(&self, demo: bool) -> Result<(ExperimentConfig, PathBuf)> {
        if let Some(n) = self.threads {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
        }
        let mut cfg = match (&self.config, demo) {
            (Some(p), _) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
            (None, true) => ExperimentConfig::quadratic_demo(),
            (None, false) => bail!("--config is required"),
        };
        let env_seed = std::env::var("L2O_CERT_SEED").ok();
        match (self.seed, env_seed) {
            (Some(s), _) => cfg.seed = s,
            (None, Some(s)) if self.config.is_none() => {
                cfg.seed = s.parse().with_context(|| format!("L2O_CERT_SEED={s:?} is not a u64"))?
            }
            _ => {}
        }
        let out = self
            .out
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("l2o-out"));
        Ok((cfg, out))
    }
}

fn print_bounds(out: &Path, c: &l2o_cert::certify::Certificate) {
    println!("{:<22} {:>14} {:>14} {:>9}", "bound", "empirical", "value", "vacuous");
    for r in c.reports() {
        println!("{:<22} {:>14.6} {:>14.6} {:>9}", r.label(), r.query.empirical, r.bound, r.vacuous);
    }
    println!("written to {}", out.display());
}

fn verify_kernels() -> Result<()> {
    let report = kernel::self_check(0xC0FFEE)?;
    for (name, dev) in &report {
        println!("{name:<28} max deviation {dev:.3e}");
    }
    if report.iter().any(|(_, d)| !(*d <= kernel::CHECK_TOL)) {
        bail!("kernel identities violated");
    }
    println!("all kernel identities hold within {:e}", kernel::CHECK_TOL);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let common = match &cli.command {
        Command::Train(c) | Command::Certify(c) | Command::Validate(c) | Command::Compare(c) => Some((c, false)),
        Command::Demo(c) => Some((c, true)),
        Command::VerifyKernels => None,
    };
    if let Some((c, demo)) = common.filter(|(c, _)| c.print_config) {
        println!("{}", c.resolve(demo)?.0.to_json()?);
        return Ok(());
    }
    match cli.command {
        Command::Train(c) => {
            let (cfg, out) = c.resolve(false)?;
            let t = experiment::run_train(&cfg, &out)?;
            let last: Vec<f64> = t.history.iter().rev().take(100).map(|r| r.loss).collect();
            println!(
                "trained {} steps ({} divergent outer iterations); mean training loss of the last {} steps {:.6}",
                t.history.len(),
                t.divergent_outer,
                last.len(),
                last.iter().sum::<f64>() / last.len().max(1) as f64
            );
        }
        Command::Certify(c) => {
            let (cfg, out) = c.resolve(false)?;
            let a = experiment::run_certify(&cfg, &out)?;
            println!("posterior weights {:?}; selected index {}", a.posterior.weights, a.alpha_star_index);
            print_bounds(&out, &a.certificate);
        }
        Command::Validate(c) => {
            let (cfg, out) = c.resolve(false)?;
            let r = experiment::run_validate(&cfg, &out)?;
            println!("violation frequencies over {} trials (tolerance {:.4})", r.trials, r.tolerance);
            for (label, counts) in [("fixed posterior", r.fixed_posterior), ("gibbs posterior", r.gibbs_posterior)] {
                for (kind, f) in counts.frequencies(r.trials) {
                    println!("  {label:<16} {kind:<12} {f:.4}");
                }
            }
        }
        Command::Compare(c) => {
            let (cfg, out) = c.resolve(false)?;
            let r = experiment::compare_baseline(&cfg, &out)?;
            println!(
                "median stopping time: learned {} / baseline {} (converged {} / {})",
                r.learned_median_tau, r.baseline_median_tau, r.learned_converged, r.baseline_converged
            );
        }
        Command::VerifyKernels => verify_kernels()?,
        Command::Demo(c) => {
            let (cfg, out) = c.resolve(true)?;
            let r = experiment::run_experiment(&cfg, &out)?;
            print_bounds(&out, &r.certify.certificate);
            println!(
                "median stopping time: learned {} / baseline {}",
                r.comparison.learned_median_tau, r.comparison.baseline_median_tau
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
