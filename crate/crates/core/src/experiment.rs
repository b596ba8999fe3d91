//! End-to-end experiment protocol: sample problems, train `α₀`, build the
//! prior, fit the posterior on the prior split, certify on the certification
//! split, and compare `α*` with the hand-tuned baseline on the test split.
//!
//! Every stage reads and writes fixed file names in one output directory.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{hbf_optimal_params, FistaRule, HbfRule};
use crate::certify::{
    certify, monte_carlo_validity, BoundSettings, Certificate, ValidityConfig, ValidityReport,
};
use crate::error::{Error, Result};
use crate::learned::{
    Architecture, ArchitectureKind, Hyperparameters, LassoArchitecture, LearnedAlgorithm, Layout, QuadArchitecture,
};
use crate::problems::{
    sample_lasso_instance, sample_lasso_set, sample_quadratic, sample_quadratics, LassoInstance,
    ProblemDistributionConfig, ProblemSet, QuadraticInstance,
};
use crate::rng::{tags, RandomnessStream};
use crate::train::{
    build_prior, gibbs_posterior, posterior_score, select_alpha_star, support_records, train_hyperparameters,
    rollout_or_diverged, DataSplits, DiscreteDistribution, MetaOptimizer, TrainConfig, TrainRecord,
};
use crate::trajectory::{fmt_f64, write_loss_csv, AlgorithmState, Problem, StoppingConfig, TrajectoryEvent, TrajectoryRecord, UpdateRule};

pub const SCHEMA_VERSION: u32 = 1;

pub mod files {
    pub const PROBLEMS: &str = "problems.json";
    pub const ALPHA0: &str = "alpha0.json";
    pub const PRIOR: &str = "prior.json";
    pub const POSTERIOR: &str = "posterior.json";
    pub const ALPHA_STAR: &str = "alpha_star.json";
    pub const BOUNDS_JSON: &str = "bounds.json";
    pub const BOUNDS_CSV: &str = "bounds.csv";
    pub const HISTORY: &str = "training_history.csv";
    pub const SUMMARY: &str = "summary.csv";
    pub const COMPARISON: &str = "comparison.csv";
    pub const VALIDITY: &str = "validity.json";
    pub const TRAJECTORIES: &str = "trajectories";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSizes {
    pub train: usize,
    pub prior: usize,
    pub certify: usize,
    pub test: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSettings {
    pub trials: usize,
    pub m_fresh: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub problem: ProblemDistributionConfig,
    pub architecture: ArchitectureKind,
    pub train: TrainConfig,
    pub splits: SplitSizes,
    /// Event of the probability bound; defaults to `{τ < t_max}`.
    #[serde(default)]
    pub event: Option<TrajectoryEvent>,
    #[serde(default)]
    pub lambda_probability: Option<f64>,
    #[serde(default)]
    pub validation: Option<ValidationSettings>,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        self.problem.validate()?;
        self.train.validate()?;
        self.data_splits()?;
        let matches = matches!(
            (&self.problem, self.architecture),
            (ProblemDistributionConfig::Quadratic(_), ArchitectureKind::Quadratic)
                | (ProblemDistributionConfig::Lasso(_), ArchitectureKind::Lasso)
        );
        if !matches {
            return Err(Error::Config(format!(
                "architecture {:?} does not fit the {} family",
                self.architecture,
                self.problem.family_name()
            )));
        }
        if let Some(v) = self.validation {
            if v.trials == 0 || v.m_fresh == 0 {
                return Err(Error::Config("validation trials and m_fresh must be positive".into()));
            }
        }
        if let Some(l) = self.lambda_probability {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Config("lambda_probability must be positive".into()));
            }
        }
        Ok(())
    }

    /// Parse JSON, reporting the line and column of syntax and schema errors.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn data_splits(&self) -> Result<DataSplits> {
        let s = self.splits;
        DataSplits::from_sizes(s.train, s.prior, s.certify, s.test)
    }

    pub fn bound_settings(&self) -> BoundSettings {
        BoundSettings {
            epsilon: self.train.epsilon,
            lambda: self.train.lambda,
            lambda_probability: self.lambda_probability,
            t_max: self.train.t_max,
            r_max: self.train.r_max,
            event: self.event.unwrap_or(TrajectoryEvent::ConvergedBeforeMax { t_max: self.train.t_max }),
        }
    }

    /// `λ` for normalized scores on the certification split.
    pub fn lambda_normalized(&self) -> f64 {
        self.bound_settings().lambda_normalized(self.splits.certify)
    }

    fn master(&self) -> RandomnessStream {
        RandomnessStream::new(self.seed, 0)
    }

    /// The default quadratic experiment: `d = 5`.
    pub fn quadratic_default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            problem: ProblemDistributionConfig::Quadratic(crate::problems::QuadraticConfig {
                dim: 5,
                m_range: [0.01, 0.1],
                l_range: [1.0, 10.0],
            }),
            architecture: ArchitectureKind::Quadratic,
            train: TrainConfig {
                outer_iterations: 400,
                inner_iterations: 100,
                learning_rate: 3e-4,
                learning_rate_decay: 1.0,
                gradient_clip: Some(1.0),
                optimizer: MetaOptimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 },
                n_sample: 5,
                sigma_prior: 1e-3,
                lambda: None,
                epsilon: 0.05,
                r_max: 1.0,
                t_max: 300,
            },
            splits: SplitSizes { train: 200, prior: 50, certify: 200, test: 100 },
            event: None,
            lambda_probability: None,
            validation: None,
            seed: 0,
            output_dir: None,
        }
    }

    /// Small configuration for smoke runs: `d = 5`, `N = 30`, five prior points.
    pub fn quadratic_demo() -> Self {
        let mut c = Self::quadratic_default();
        c.train.outer_iterations = 100;
        c.train.learning_rate = 1e-3;
        c.splits = SplitSizes { train: 40, prior: 20, certify: 30, test: 20 };
        c
    }
}

/// Sampled problems of either family, indexed by [`DataSplits`].
pub enum Problems {
    Quadratic(Vec<QuadraticInstance>),
    Lasso(Vec<LassoInstance>),
}

pub fn sample_problems(cfg: &ExperimentConfig) -> Result<(ProblemSet, Problems)> {
    let n = cfg.data_splits()?.total();
    let stream = cfg.master().fork(tags::PROBLEMS);
    match &cfg.problem {
        ProblemDistributionConfig::Quadratic(c) => {
            let instances = sample_quadratics(c, stream, 0..n)?;
            let set = ProblemSet::Quadratic { config: c.clone(), seed: cfg.seed, instances: instances.clone() };
            Ok((set, Problems::Quadratic(instances)))
        }
        ProblemDistributionConfig::Lasso(c) => {
            let (design, instances) = sample_lasso_set(c, stream, 0..n)?;
            let set = ProblemSet::Lasso {
                config: c.clone(),
                seed: cfg.seed,
                design: (*design).clone(),
                instances: instances.iter().map(LassoInstance::data).collect(),
            };
            Ok((set, Problems::Lasso(instances)))
        }
    }
}

pub fn load_problems(out: &Path, cfg: &ExperimentConfig) -> Result<Problems> {
    let path = out.join(files::PROBLEMS);
    if !path.exists() {
        return Err(Error::Usage(format!("{} not found; run `train` first", path.display())));
    }
    let set = ProblemSet::load(&path)?;
    if set.len() != cfg.data_splits()?.total() {
        return Err(Error::Usage("problems.json does not match the configured split sizes".into()));
    }
    match set {
        ProblemSet::Quadratic { instances, .. } => Ok(Problems::Quadratic(instances)),
        lasso @ ProblemSet::Lasso { .. } => Ok(Problems::Lasso(lasso.lasso_instances()?)),
    }
}

fn load_checked<T>(path: PathBuf, load: impl Fn(&Path) -> Result<T>) -> Result<T> {
    if !path.exists() {
        return Err(Error::Usage(format!("missing checkpoint {}", path.display())));
    }
    load(&path)
}

fn stop_config<P: Problem>(cfg: &ExperimentConfig) -> Result<StoppingConfig<fn(&P, &AlgorithmState) -> bool>> {
    StoppingConfig::with_problem_criterion(cfg.train.t_max, cfg.train.r_max)
}

/// Artifacts of the training stage.
pub struct TrainArtifacts {
    pub alpha0: Hyperparameters,
    pub prior: DiscreteDistribution,
    pub history: Vec<TrainRecord>,
    pub divergent_outer: usize,
}

fn train_stage<P, A>(cfg: &ExperimentConfig, arch: &A, problems: &[P], splits: &DataSplits, out: &Path) -> Result<TrainArtifacts>
where
    P: Problem + Clone,
    A: Architecture<P>,
{
    let master = cfg.master();
    let alpha_init = Hyperparameters::init(arch.layout(), &mut master.fork(tags::INIT).rng());
    let train = &problems[splits.train.clone()];
    let sampler = |rng: &mut ChaCha8Rng| Ok(train[rng.random_range(0..train.len())].clone());
    let outcome = train_hyperparameters(&cfg.train, sampler, arch, alpha_init, &mut master.fork(tags::TRAIN).rng())?;
    let prior = build_prior(&outcome.alpha0, cfg.train.n_sample, cfg.train.sigma_prior, &mut master.fork(tags::PRIOR).rng())?;
    outcome.alpha0.save(&out.join(files::ALPHA0))?;
    prior.save(&out.join(files::PRIOR))?;
    write_history(&out.join(files::HISTORY), &outcome.history)?;
    Ok(TrainArtifacts { alpha0: outcome.alpha0, prior, history: outcome.history, divergent_outer: outcome.divergent_outer })
}

fn write_history(path: &Path, history: &[TrainRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "outer,inner,loss")?;
    for r in history {
        writeln!(f, "{},{},{}", r.outer, r.inner, fmt_f64(r.loss))?;
    }
    f.flush()?;
    Ok(())
}

/// Artifacts of the certification stage.
#[derive(Debug, Clone)]
pub struct CertifyArtifacts {
    pub posterior: DiscreteDistribution,
    pub alpha_star_index: usize,
    pub certificate: Certificate,
}

fn certify_stage<P, A>(
    cfg: &ExperimentConfig,
    arch: &A,
    problems: &[P],
    splits: &DataSplits,
    prior: &DiscreteDistribution,
    out: &Path,
) -> Result<CertifyArtifacts>
where
    P: Problem + Send,
    A: Architecture<P> + Clone,
{
    splits.assert_disjoint()?;
    let stop = stop_config::<P>(cfg)?;
    let rollouts = cfg.master().fork(tags::ROLLOUT);
    let prior_records =
        support_records(arch, prior, &problems[splits.prior.clone()], rollouts.child(tags::PRIOR, 0), &stop)?;
    let scores: Vec<f64> = prior_records.iter().map(|r| posterior_score(r, cfg.train.t_max, cfg.train.r_max)).collect();
    let posterior = gibbs_posterior(prior, &scores, cfg.lambda_normalized())?;
    let (alpha_star_index, alpha_star) = select_alpha_star(&posterior);
    posterior.save(&out.join(files::POSTERIOR))?;
    alpha_star.save(&out.join(files::ALPHA_STAR))?;

    let cert_records =
        support_records(arch, prior, &problems[splits.certify.clone()], rollouts.child(tags::TRIAL, 0), &stop)?;
    let certificate = certify(&cert_records, &posterior, prior, &cfg.bound_settings())?;
    std::fs::write(out.join(files::BOUNDS_JSON), serde_json::to_string_pretty(&certificate)?)?;
    write_bounds_csv(&out.join(files::BOUNDS_CSV), &certificate)?;
    Ok(CertifyArtifacts { posterior, alpha_star_index, certificate })
}

pub fn write_bounds_csv(path: &Path, c: &Certificate) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "kind,event,empirical,kl,lambda,epsilon,N,bound,vacuous")?;
    for r in c.reports() {
        let q = &r.query;
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{}",
            r.label(),
            r.event.as_deref().unwrap_or(""),
            fmt_f64(q.empirical),
            fmt_f64(q.kl),
            fmt_f64(q.lambda),
            fmt_f64(q.epsilon),
            q.n,
            fmt_f64(r.bound),
            r.vacuous
        )?;
    }
    f.flush()?;
    Ok(())
}

/// Outcome of comparing `α*` with the baseline on the test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub learned_median_tau: f64,
    pub baseline_median_tau: f64,
    pub learned_converged: usize,
    pub baseline_converged: usize,
    pub rows: Vec<ComparisonRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub t: usize,
    pub learned_median: f64,
    pub learned_mean: f64,
    pub learned_q95: f64,
    pub baseline_median: f64,
    pub baseline_mean: f64,
    pub baseline_q95: f64,
}

/// Linear-interpolation quantile of unsorted values.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Loss of every trajectory at `t`, holding the last value after stopping.
fn padded(records: &[TrajectoryRecord], t: usize) -> Vec<f64> {
    records.iter().map(|r| r.losses[t.min(r.losses.len() - 1)]).collect()
}

/// Per-iteration median, mean and 0.95-quantile of both algorithms' losses,
/// for `t = 0..=t_max`.
pub fn comparison_rows(learned: &[TrajectoryRecord], baseline: &[TrajectoryRecord], t_max: usize) -> Vec<ComparisonRow> {
    (0..=t_max)
        .map(|t| {
            let a = padded(learned, t);
            let b = padded(baseline, t);
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            ComparisonRow {
                t,
                learned_median: quantile(&a, 0.5),
                learned_mean: mean(&a),
                learned_q95: quantile(&a, 0.95),
                baseline_median: quantile(&b, 0.5),
                baseline_mean: mean(&b),
                baseline_q95: quantile(&b, 0.95),
            }
        })
        .collect()
}

fn compare_stage<P, A, B>(
    cfg: &ExperimentConfig,
    learned: &LearnedAlgorithm<A>,
    baseline: &B,
    problems: &[P],
    splits: &DataSplits,
    out: &Path,
) -> Result<Comparison>
where
    P: Problem + Send,
    A: Architecture<P>,
    B: UpdateRule<P>,
{
    use rayon::prelude::*;
    let stop = stop_config::<P>(cfg)?;
    let test = &problems[splits.test.clone()];
    let base = cfg.master().fork(tags::ROLLOUT).child(tags::ROLLOUT, 1);
    let run = |alg: &(dyn UpdateRule<P> + Sync)| -> Result<Vec<TrajectoryRecord>> {
        test.par_iter()
            .enumerate()
            .map(|(j, p)| rollout_or_diverged(&Dyn(alg), p, base.child(tags::ROLLOUT, j as u64), &stop))
            .collect()
    };
    let lrec = run(learned)?;
    let brec = run(baseline)?;

    let traj = out.join(files::TRAJECTORIES);
    std::fs::create_dir_all(&traj)?;
    let mut summary = std::io::BufWriter::new(std::fs::File::create(out.join(files::SUMMARY))?);
    writeln!(summary, "problem,algorithm,tau,rate,rate_bounded,converged")?;
    for (name, recs) in [("learned", &lrec), ("baseline", &brec)] {
        for (j, r) in recs.iter().enumerate() {
            let idx = splits.test.start + j;
            writeln!(summary, "{idx},{name},{},{},{},{}", r.tau, fmt_f64(r.rate), fmt_f64(r.rate_bounded), r.converged)?;
            write_loss_csv(&traj.join(format!("{name}_{idx:04}.csv")), &r.losses)?;
        }
    }
    summary.flush()?;

    let rows = comparison_rows(&lrec, &brec, cfg.train.t_max);
    write_comparison_csv(&out.join(files::COMPARISON), &rows)?;
    let taus = |r: &[TrajectoryRecord]| r.iter().map(|x| x.tau as f64).collect::<Vec<_>>();
    Ok(Comparison {
        learned_median_tau: quantile(&taus(&lrec), 0.5),
        baseline_median_tau: quantile(&taus(&brec), 0.5),
        learned_converged: lrec.iter().filter(|r| r.converged).count(),
        baseline_converged: brec.iter().filter(|r| r.converged).count(),
        rows,
    })
}

/// Adapter so trait objects can be passed where a sized rule is expected.
struct Dyn<'a, P>(&'a (dyn UpdateRule<P> + Sync));

impl<P: Problem> UpdateRule<P> for Dyn<'_, P> {
    fn step(&self, problem: &P, state: &AlgorithmState, rng: &mut ChaCha8Rng) -> AlgorithmState {
        self.0.step(problem, state, rng)
    }

    fn init_state(&self, problem: &P) -> AlgorithmState {
        self.0.init_state(problem)
    }
}

pub fn write_comparison_csv(path: &Path, rows: &[ComparisonRow]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "t,learned_median,learned_mean,learned_q95,baseline_median,baseline_mean,baseline_q95")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{}",
            r.t,
            fmt_f64(r.learned_median),
            fmt_f64(r.learned_mean),
            fmt_f64(r.learned_q95),
            fmt_f64(r.baseline_median),
            fmt_f64(r.baseline_mean),
            fmt_f64(r.baseline_q95)
        )?;
    }
    f.flush()?;
    Ok(())
}

/// Everything a full run produces.
pub struct ExperimentOutcome {
    pub train: TrainArtifacts,
    pub certify: CertifyArtifacts,
    pub comparison: Comparison,
}

fn hbf_for(cfg: &ExperimentConfig) -> Result<HbfRule> {
    match &cfg.problem {
        ProblemDistributionConfig::Quadratic(q) => Ok(HbfRule(hbf_optimal_params(q.m_range[0], q.l_range[1])?)),
        _ => Err(Error::Config("heavy-ball baseline needs the quadratic family".into())),
    }
}

fn prepare_out(cfg: &ExperimentConfig, out: &Path) -> Result<DataSplits> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    cfg.data_splits()
}

/// Sample problems, train `α₀` and build the prior.
pub fn run_train(cfg: &ExperimentConfig, out: &Path) -> Result<TrainArtifacts> {
    let splits = prepare_out(cfg, out)?;
    let (set, problems) = sample_problems(cfg)?;
    set.save(&out.join(files::PROBLEMS))?;
    match problems {
        Problems::Quadratic(p) => train_stage(cfg, &QuadArchitecture::default(), &p, &splits, out),
        Problems::Lasso(p) => train_stage(cfg, &LassoArchitecture::default(), &p, &splits, out),
    }
}

fn load_prior(out: &Path, cfg: &ExperimentConfig) -> Result<DiscreteDistribution> {
    let prior = load_checked(out.join(files::PRIOR), DiscreteDistribution::load)?;
    if prior.support.iter().any(|a| a.layout != Layout::for_kind(cfg.architecture)) {
        return Err(Error::Usage("prior checkpoint does not match the configured architecture".into()));
    }
    Ok(prior)
}

/// Posterior on the prior split and bounds on the certification split, from
/// the artifacts of [`run_train`].
pub fn run_certify(cfg: &ExperimentConfig, out: &Path) -> Result<CertifyArtifacts> {
    let splits = prepare_out(cfg, out)?;
    let prior = load_prior(out, cfg)?;
    match load_problems(out, cfg)? {
        Problems::Quadratic(p) => certify_stage(cfg, &QuadArchitecture::default(), &p, &splits, &prior, out),
        Problems::Lasso(p) => certify_stage(cfg, &LassoArchitecture::default(), &p, &splits, &prior, out),
    }
}

/// Test-split comparison of the selected `α*` against the baseline.
pub fn compare_baseline(cfg: &ExperimentConfig, out: &Path) -> Result<Comparison> {
    let splits = prepare_out(cfg, out)?;
    let alpha = load_checked(out.join(files::ALPHA_STAR), Hyperparameters::load)?;
    match load_problems(out, cfg)? {
        Problems::Quadratic(p) => {
            let learned = LearnedAlgorithm::new::<QuadraticInstance>(QuadArchitecture::default(), alpha)?;
            compare_stage(cfg, &learned, &hbf_for(cfg)?, &p, &splits, out)
        }
        Problems::Lasso(p) => {
            let learned = LearnedAlgorithm::new::<LassoInstance>(LassoArchitecture::default(), alpha)?;
            compare_stage(cfg, &learned, &FistaRule, &p, &splits, out)
        }
    }
}

/// Full pipeline: train, certify, compare.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentOutcome> {
    let train = run_train(cfg, out)?;
    let certify = run_certify(cfg, out)?;
    let comparison = compare_baseline(cfg, out)?;
    Ok(ExperimentOutcome { train, certify, comparison })
}

/// Monte-Carlo validity of the certificates for the trained prior and the
/// fitted posterior, on freshly sampled problems.
pub fn run_validate(cfg: &ExperimentConfig, out: &Path) -> Result<ValidityReport> {
    prepare_out(cfg, out)?;
    let v = cfg.validation.ok_or_else(|| Error::Config("config has no `validation` section".into()))?;
    let prior = load_prior(out, cfg)?;
    let posterior = load_checked(out.join(files::POSTERIOR), DiscreteDistribution::load)?;
    let vcfg = ValidityConfig {
        trials: v.trials,
        n_certify: cfg.splits.certify,
        m_fresh: v.m_fresh,
        bounds: cfg.bound_settings(),
        posterior_lambda: cfg.lambda_normalized(),
    };
    let base = cfg.master().fork(tags::TRIAL);
    let report = match &cfg.problem {
        ProblemDistributionConfig::Quadratic(q) => {
            let sampler = |s: RandomnessStream| sample_quadratic(q, &mut s.rng());
            monte_carlo_validity(&QuadArchitecture::default(), &prior, &posterior, sampler, &vcfg, base)?
        }
        ProblemDistributionConfig::Lasso(c) => {
            let ProblemSet::Lasso { design, .. } = ProblemSet::load(&out.join(files::PROBLEMS))? else {
                return Err(Error::Usage("problems.json is not a LASSO set".into()));
            };
            let design = Arc::new(design);
            let sampler = |s: RandomnessStream| sample_lasso_instance(&design, c, &mut s.rng());
            monte_carlo_validity(&LassoArchitecture::default(), &prior, &posterior, sampler, &vcfg, base)?
        }
    };
    std::fs::write(out.join(files::VALIDITY), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(losses: Vec<f64>) -> TrajectoryRecord {
        let tau = losses.len() - 1;
        TrajectoryRecord { losses, tau, converged: true, rate: 0.0, rate_bounded: 0.0 }
    }

    #[test]
    fn quantiles() {
        assert_eq!(quantile(&[3.0, 1.0, 2.0], 0.5), 2.0);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        assert!((quantile(&(0..=100).map(f64::from).collect::<Vec<_>>(), 0.95) - 95.0).abs() < 1e-12);
    }

    #[test]
    fn comparison_bookkeeping() {
        let a = vec![rec(vec![4.0, 2.0, 1.0]), rec(vec![3.0, 0.5]), rec(vec![8.0])];
        let rows = comparison_rows(&a, &a, 5);
        assert_eq!(rows.len(), 6);
        for r in &rows {
            assert_eq!(r.learned_median, r.baseline_median);
            assert_eq!(r.learned_mean, r.baseline_mean);
            assert_eq!(r.learned_q95, r.baseline_q95);
            assert!(r.learned_median <= r.learned_q95);
        }
        assert_eq!(rows[5].learned_median, 1.0);
    }

    #[test]
    fn config_round_trip_and_unknown_keys() {
        let c = ExperimentConfig::quadratic_default();
        let text = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), c);
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["train"]["typo"] = serde_json::json!(1);
        let err = ExperimentConfig::from_json(&serde_json::to_string_pretty(&v).unwrap()).unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
        let mut bad = c.clone();
        bad.schema_version = 7;
        assert!(bad.validate().is_err());
        let mut bad = c;
        bad.architecture = ArchitectureKind::Lasso;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn compare_without_checkpoint_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::quadratic_demo();
        assert!(matches!(compare_baseline(&cfg, dir.path()), Err(Error::Usage(_))));
    }
}
