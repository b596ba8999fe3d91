//! PAC-Bayesian certificates for the expected stopping time, the expected
//! bounded rate and the probability of trajectory events, plus a Monte-Carlo
//! check of their validity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learned::Architecture;
use crate::rng::{tags, RandomnessStream};
use crate::train::{gibbs_posterior, posterior_score, support_records, DiscreteDistribution};
use crate::trajectory::{AlgorithmState, Problem, StoppingConfig, TrajectoryEvent, TrajectoryRecord};

/// Inputs of one bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundQuery {
    pub lambda: f64,
    pub epsilon: f64,
    pub n: usize,
    /// Uniform bound of the certified quantity (`t_max`, `r_max`, or 1).
    pub f_max: f64,
    pub kl: f64,
    pub empirical: f64,
}

impl BoundQuery {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda > 0.0
            && self.lambda.is_finite()
            && self.epsilon > 0.0
            && self.epsilon <= 1.0
            && self.n > 0
            && self.f_max > 0.0
            && self.f_max.is_finite()
            && self.kl >= 0.0
            && !self.kl.is_nan()
            && self.empirical.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Argument(format!("invalid bound query {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Time,
    Rate,
    Probability,
}

impl BoundKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Time => "time",
            Self::Rate => "rate",
            Self::Probability => "probability",
        }
    }
}

/// A certified upper bound together with everything it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    /// Part of a union-bound certificate with this joint confidence `1 − ε`.
    pub joint_epsilon: Option<f64>,
    pub event: Option<String>,
    pub bound: f64,
    pub vacuous: bool,
    pub query: BoundQuery,
}

impl BoundReport {
    pub fn label(&self) -> String {
        match self.joint_epsilon {
            Some(_) => format!("combined_{}", self.kind.name()),
            None => self.kind.name().to_string(),
        }
    }
}

/// `Σ ρ_i ln(ρ_i/π_i)` with `0·ln(0/π) = 0` and `+∞` when `ρ_i > 0 = π_i`.
pub fn kl_weights(rho: &[f64], prior: &[f64]) -> Result<f64> {
    if rho.len() != prior.len() {
        return Err(Error::Argument(format!("supports of size {} and {}", rho.len(), prior.len())));
    }
    let mut kl = 0.0;
    for (&r, &p) in rho.iter().zip(prior) {
        if r > 0.0 {
            if p == 0.0 {
                return Ok(f64::INFINITY);
            }
            kl += r * (r / p).ln();
        }
    }
    Ok(kl.max(0.0))
}

/// KL divergence of two distributions on the same support.
pub fn kl_discrete(rho: &DiscreteDistribution, prior: &DiscreteDistribution) -> Result<f64> {
    if rho.support != prior.support {
        return Err(Error::Argument("distributions live on different supports".into()));
    }
    kl_weights(&rho.weights, &prior.weights)
}

/// `empirical + (kl + λ² f_max² / (2N) − ln ε) / λ`.
pub fn hoeffding_value(q: &BoundQuery) -> f64 {
    q.empirical + (q.kl + q.lambda * q.lambda * q.f_max * q.f_max / (2.0 * q.n as f64) - q.epsilon.ln()) / q.lambda
}

/// Bounded-function bound for a time or rate query. A time bound is flagged
/// vacuous when it reaches `t_max`, a rate bound when it exceeds `r_max`.
pub fn hoeffding_bound(kind: BoundKind, q: &BoundQuery) -> Result<BoundReport> {
    q.validate()?;
    let bound = hoeffding_value(q);
    let vacuous = match kind {
        BoundKind::Time => bound >= q.f_max,
        BoundKind::Rate => bound > q.f_max,
        BoundKind::Probability => bound >= 1.0,
    };
    Ok(BoundReport { kind, joint_epsilon: None, event: None, bound, vacuous, query: *q })
}

/// `√(2N ln(1/ε))`, the minimizer of `λ/(2N) + ln(1/ε)/λ` for a quantity
/// normalized to `[0, 1]`.
pub fn default_lambda(n: usize, epsilon: f64) -> f64 {
    (2.0 * n as f64 * (1.0 / epsilon).ln()).sqrt()
}

fn check_records(records: &[Vec<TrajectoryRecord>], rho: &DiscreteDistribution) -> Result<usize> {
    if records.len() != rho.len() {
        return Err(Error::Argument(format!("{} record sets for {} support points", records.len(), rho.len())));
    }
    let n = records[0].len();
    if n == 0 || records.iter().any(|r| r.len() != n) {
        return Err(Error::Argument("every support point needs the same positive number of records".into()));
    }
    Ok(n)
}

/// `ρ`-average of per-support empirical means of `f`.
pub fn rho_empirical(records: &[Vec<TrajectoryRecord>], rho: &[f64], f: impl Fn(&TrajectoryRecord) -> f64) -> f64 {
    let means: Vec<f64> = records.iter().map(|r| r.iter().map(&f).sum::<f64>() / r.len() as f64).collect();
    rho.iter().zip(&means).filter(|(w, _)| **w > 0.0).map(|(w, m)| w * m).sum()
}

fn hoeffding_from_records(
    kind: BoundKind,
    records: &[Vec<TrajectoryRecord>],
    rho: &DiscreteDistribution,
    prior: &DiscreteDistribution,
    lambda: f64,
    epsilon: f64,
    f_max: f64,
    f: impl Fn(&TrajectoryRecord) -> f64,
) -> Result<BoundReport> {
    let n = check_records(records, rho)?;
    let q = BoundQuery {
        lambda,
        epsilon,
        n,
        f_max,
        kl: kl_discrete(rho, prior)?,
        empirical: rho_empirical(records, &rho.weights, f),
    };
    hoeffding_bound(kind, &q)
}

/// Bound on `ρ[E τ]` from certification rollouts `records[i][j]`.
pub fn time_bound(
    records: &[Vec<TrajectoryRecord>],
    rho: &DiscreteDistribution,
    prior: &DiscreteDistribution,
    lambda: f64,
    epsilon: f64,
    t_max: usize,
) -> Result<BoundReport> {
    hoeffding_from_records(BoundKind::Time, records, rho, prior, lambda, epsilon, t_max as f64, |r| r.tau as f64)
}

/// Bound on `ρ[E r_b]`.
pub fn rate_bound(
    records: &[Vec<TrajectoryRecord>],
    rho: &DiscreteDistribution,
    prior: &DiscreteDistribution,
    lambda: f64,
    epsilon: f64,
    r_max: f64,
) -> Result<BoundReport> {
    hoeffding_from_records(BoundKind::Rate, records, rho, prior, lambda, epsilon, r_max, |r| r.rate_bounded)
}

fn check_phi_args(a: f64, x: f64) -> Result<()> {
    if a == 0.0 || !a.is_finite() {
        return Err(Error::Argument(format!("Φ needs a finite nonzero parameter, got {a}")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain { value: x, domain: "[0, 1]" });
    }
    Ok(())
}

fn clamp_unit(v: f64) -> f64 {
    if v < 0.0 && v > -1e-12 {
        0.0
    } else if v > 1.0 && v < 1.0 + 1e-12 {
        1.0
    } else {
        v
    }
}

/// `Φ_a(p) = −(1/a) ln(1 − (1 − e^{−a}) p)`.
pub fn phi(a: f64, p: f64) -> Result<f64> {
    check_phi_args(a, p)?;
    Ok(clamp_unit(-(f64::exp_m1(-a) * p).ln_1p() / a))
}

/// `Φ_a⁻¹(q) = (1 − e^{−aq}) / (1 − e^{−a})`.
pub fn phi_inv(a: f64, q: f64) -> Result<f64> {
    check_phi_args(a, q)?;
    Ok(clamp_unit(f64::exp_m1(-a * q) / f64::exp_m1(-a)))
}

/// `Φ⁻¹_{λ/N}(empirical + (kl + ln(1/ε))/λ)`, clamped to 1 (and flagged
/// vacuous) once the argument reaches 1.
pub fn probability_bound_from_query(q: &BoundQuery) -> Result<BoundReport> {
    q.validate()?;
    let arg = q.empirical + (q.kl + (1.0 / q.epsilon).ln()) / q.lambda;
    let (bound, vacuous) = if arg >= 1.0 { (1.0, true) } else { (phi_inv(q.lambda / q.n as f64, arg)?, false) };
    Ok(BoundReport { kind: BoundKind::Probability, joint_epsilon: None, event: None, bound, vacuous, query: *q })
}

/// Bound on `ρ[P(A)]` from per-support indicator records.
pub fn probability_bound(
    indicators: &[Vec<bool>],
    rho: &DiscreteDistribution,
    prior: &DiscreteDistribution,
    lambda: f64,
    epsilon: f64,
) -> Result<BoundReport> {
    if indicators.len() != rho.len() {
        return Err(Error::Argument(format!("{} indicator sets for {} support points", indicators.len(), rho.len())));
    }
    let n = indicators[0].len();
    if n == 0 || indicators.iter().any(|r| r.len() != n) {
        return Err(Error::Argument("every support point needs the same positive number of records".into()));
    }
    let means: Vec<f64> = indicators.iter().map(|r| r.iter().filter(|b| **b).count() as f64 / n as f64).collect();
    let q = BoundQuery { lambda, epsilon, n, f_max: 1.0, kl: kl_discrete(rho, prior)?, empirical: rho.expectation(&means) };
    probability_bound_from_query(&q)
}

/// Three bounds that hold simultaneously with probability `1 − ε`: each is
/// evaluated at `ε/3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedCertificate {
    pub epsilon: f64,
    pub time: BoundReport,
    pub rate: BoundReport,
    pub probability: BoundReport,
}

pub fn combined_certificate(time: &BoundQuery, rate: &BoundQuery, prob: &BoundQuery, epsilon: f64) -> Result<CombinedCertificate> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Argument("epsilon must lie in (0, 1)".into()));
    }
    if time.n != rate.n || rate.n != prob.n {
        return Err(Error::Argument("combined queries must share N".into()));
    }
    let e3 = epsilon / 3.0;
    let mark = |mut r: BoundReport| {
        r.joint_epsilon = Some(epsilon);
        r
    };
    Ok(CombinedCertificate {
        epsilon,
        time: mark(hoeffding_bound(BoundKind::Time, &BoundQuery { epsilon: e3, ..*time })?),
        rate: mark(hoeffding_bound(BoundKind::Rate, &BoundQuery { epsilon: e3, ..*rate })?),
        probability: mark(probability_bound_from_query(&BoundQuery { epsilon: e3, ..*prob })?),
    })
}

/// Bound parameters shared by certification and validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSettings {
    pub epsilon: f64,
    /// `λ` for quantities normalized to `[0, 1]`; the time and rate bounds
    /// use `λ/t_max` and `λ/r_max`. Defaults to [`default_lambda`].
    #[serde(default)]
    pub lambda: Option<f64>,
    /// `λ` of the probability bound; defaults to `N`.
    #[serde(default)]
    pub lambda_probability: Option<f64>,
    pub t_max: usize,
    pub r_max: f64,
    pub event: TrajectoryEvent,
}

impl BoundSettings {
    pub fn lambda_normalized(&self, n: usize) -> f64 {
        self.lambda.unwrap_or_else(|| default_lambda(n, self.epsilon))
    }

    pub fn lambda_probability(&self, n: usize) -> f64 {
        self.lambda_probability.unwrap_or(n as f64)
    }
}

/// All certificates for one posterior on one certification dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub time: BoundReport,
    pub rate: BoundReport,
    pub probability: BoundReport,
    pub combined: CombinedCertificate,
}

impl Certificate {
    pub fn reports(&self) -> [&BoundReport; 6] {
        [&self.time, &self.rate, &self.probability, &self.combined.time, &self.combined.rate, &self.combined.probability]
    }
}

/// Time, rate and event-probability bounds at `ε` each, plus their
/// union-bound combination at joint `ε`.
pub fn certify(
    records: &[Vec<TrajectoryRecord>],
    rho: &DiscreteDistribution,
    prior: &DiscreteDistribution,
    s: &BoundSettings,
) -> Result<Certificate> {
    let n = check_records(records, rho)?;
    let kl = kl_discrete(rho, prior)?;
    let lam = s.lambda_normalized(n);
    let t_max = s.t_max as f64;
    let tq = BoundQuery {
        lambda: lam / t_max,
        epsilon: s.epsilon,
        n,
        f_max: t_max,
        kl,
        empirical: rho_empirical(records, &rho.weights, |r| r.tau as f64),
    };
    let rq = BoundQuery {
        lambda: lam / s.r_max,
        f_max: s.r_max,
        empirical: rho_empirical(records, &rho.weights, |r| r.rate_bounded),
        ..tq
    };
    let pq = BoundQuery {
        lambda: s.lambda_probability(n),
        f_max: 1.0,
        empirical: rho_empirical(records, &rho.weights, |r| s.event.holds(r) as u8 as f64),
        ..tq
    };
    let label = Some(s.event.label());
    let mut probability = probability_bound_from_query(&pq)?;
    probability.event = label.clone();
    let mut combined = combined_certificate(&tq, &rq, &pq, s.epsilon)?;
    combined.probability.event = label;
    Ok(Certificate {
        time: hoeffding_bound(BoundKind::Time, &tq)?,
        rate: hoeffding_bound(BoundKind::Rate, &rq)?,
        probability,
        combined,
    })
}

/// Population values `ρ[E τ]`, `ρ[E r_b]`, `ρ[P(A)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationValues {
    pub time: f64,
    pub rate: f64,
    pub probability: f64,
}

pub fn population_values(records: &[Vec<TrajectoryRecord>], rho: &[f64], event: &TrajectoryEvent) -> PopulationValues {
    PopulationValues {
        time: rho_empirical(records, rho, |r| r.tau as f64),
        rate: rho_empirical(records, rho, |r| r.rate_bounded),
        probability: rho_empirical(records, rho, |r| event.holds(r) as u8 as f64),
    }
}

/// Which bounds a certificate violates for the given population values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violations {
    pub time: bool,
    pub rate: bool,
    pub probability: bool,
    /// At least one of the three combined sub-bounds fails.
    pub combined: bool,
}

pub fn violations(cert: &Certificate, pop: &PopulationValues) -> Violations {
    Violations {
        time: pop.time > cert.time.bound,
        rate: pop.rate > cert.rate.bound,
        probability: pop.probability > cert.probability.bound,
        combined: pop.time > cert.combined.time.bound
            || pop.rate > cert.combined.rate.bound
            || pop.probability > cert.combined.probability.bound,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidityConfig {
    pub trials: usize,
    pub n_certify: usize,
    pub m_fresh: usize,
    pub bounds: BoundSettings,
    /// `λ` of the Gibbs posterior recomputed on each certification set.
    pub posterior_lambda: f64,
}

/// Violation counts over the trials.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ViolationCounts {
    pub time: usize,
    pub rate: usize,
    pub probability: usize,
    pub combined: usize,
}

impl ViolationCounts {
    fn add(&mut self, v: Violations) {
        self.time += v.time as usize;
        self.rate += v.rate as usize;
        self.probability += v.probability as usize;
        self.combined += v.combined as usize;
    }

    pub fn frequencies(&self, trials: usize) -> [(&'static str, f64); 4] {
        let f = |c: usize| c as f64 / trials as f64;
        [("time", f(self.time)), ("rate", f(self.rate)), ("probability", f(self.probability)), ("combined", f(self.combined))]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub trials: usize,
    pub epsilon: f64,
    /// `ε + 3√(ε(1 − ε)/R)`.
    pub tolerance: f64,
    /// Posterior fixed before any certification data is drawn.
    pub fixed_posterior: ViolationCounts,
    /// Gibbs posterior recomputed from each certification set.
    pub gibbs_posterior: ViolationCounts,
}

pub fn binomial_tolerance(epsilon: f64, trials: usize) -> f64 {
    epsilon + 3.0 * (epsilon * (1.0 - epsilon) / trials as f64).sqrt()
}

/// Draw `R` certification sets of size `N` and `M` fresh problems per trial,
/// certify with the fixed posterior `rho` and with a Gibbs posterior fitted
/// to the certification set, and count the trials whose population values
/// (estimated on the fresh problems) exceed the bounds.
///
/// Trial `r` draws problem `j` from `base.child(TRIAL, r).child(PROBLEMS, j)`,
/// so results do not depend on scheduling.
pub fn monte_carlo_validity<P, A, S>(
    arch: &A,
    prior: &DiscreteDistribution,
    rho: &DiscreteDistribution,
    sampler: S,
    cfg: &ValidityConfig,
    base: RandomnessStream,
) -> Result<ValidityReport>
where
    P: Problem + Send,
    A: Architecture<P> + Clone,
    S: Fn(RandomnessStream) -> Result<P> + Sync,
{
    if cfg.trials == 0 || cfg.n_certify == 0 || cfg.m_fresh == 0 {
        return Err(Error::Argument("trials, N and M must be positive".into()));
    }
    let stop = StoppingConfig::new(cfg.bounds.t_max, cfg.bounds.r_max, |p: &P, s: &AlgorithmState| {
        p.in_convergence_set(&s.x)
    })?;
    let outcomes: Vec<(Violations, Violations)> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let ts = base.child(tags::TRIAL, trial as u64);
            let draw = |range: std::ops::Range<usize>| -> Result<Vec<P>> {
                range.map(|j| sampler(ts.child(tags::PROBLEMS, j as u64))).collect()
            };
            let cert_problems = draw(0..cfg.n_certify)?;
            let fresh = draw(cfg.n_certify..cfg.n_certify + cfg.m_fresh)?;
            let cert_records = support_records(arch, prior, &cert_problems, ts, &stop)?;
            let fresh_records = support_records(arch, prior, &fresh, ts.fork(tags::ROLLOUT), &stop)?;

            let cert = certify(&cert_records, rho, prior, &cfg.bounds)?;
            let fixed = violations(&cert, &population_values(&fresh_records, &rho.weights, &cfg.bounds.event));

            let scores: Vec<f64> =
                cert_records.iter().map(|r| posterior_score(r, cfg.bounds.t_max, cfg.bounds.r_max)).collect();
            let gibbs = gibbs_posterior(prior, &scores, cfg.posterior_lambda)?;
            let cert_g = certify(&cert_records, &gibbs, prior, &cfg.bounds)?;
            let adaptive = violations(&cert_g, &population_values(&fresh_records, &gibbs.weights, &cfg.bounds.event));
            Ok((fixed, adaptive))
        })
        .collect::<Result<_>>()?;
    let mut fixed_posterior = ViolationCounts::default();
    let mut gibbs = ViolationCounts::default();
    for (f, g) in outcomes {
        fixed_posterior.add(f);
        gibbs.add(g);
    }
    Ok(ValidityReport {
        trials: cfg.trials,
        epsilon: cfg.bounds.epsilon,
        tolerance: binomial_tolerance(cfg.bounds.epsilon, cfg.trials),
        fixed_posterior,
        gibbs_posterior: gibbs,
    })
}
