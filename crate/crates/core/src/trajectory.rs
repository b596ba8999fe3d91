//! Rollouts of parametric iterative algorithms and the trajectory statistics
//! the certificates are built from: stopping time, contraction, rate and
//! bounded rate.

use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::all_finite;
use crate::rng::{tags, RandomnessStream};

/// A parametric loss `ℓ(·, θ)` together with its convergence set.
pub trait Problem: Sync {
    fn dim(&self) -> usize;

    /// Loss used for stopping, contraction and rate statistics.
    fn loss(&self, x: &[f64]) -> f64;

    /// Membership of `(θ, x)` in the convergence set `C`.
    fn in_convergence_set(&self, x: &[f64]) -> bool;

    /// Starting point of every rollout on this instance.
    fn initial_point(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }
}

/// One step `ξ^{t+1} = A(α, θ, ξ^t, η^{t+1})`; the implementor carries `α`.
pub trait UpdateRule<P: ?Sized>: Sync {
    fn step(&self, problem: &P, state: &AlgorithmState, rng: &mut ChaCha8Rng) -> AlgorithmState;

    fn init_state(&self, problem: &P) -> AlgorithmState
    where
        P: Problem,
    {
        AlgorithmState::new(problem.initial_point())
    }
}

/// Algorithm state `ξ^t`. The optimization variable is `x`; `x_prev` holds
/// the previous iterate and `aux` any extra scalars the update rule needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmState {
    pub x: Vec<f64>,
    pub x_prev: Vec<f64>,
    pub aux: Vec<f64>,
}

impl AlgorithmState {
    /// State at rest: `x_prev = x`, no auxiliary data.
    pub fn new(x: Vec<f64>) -> Self {
        Self { x_prev: x.clone(), x, aux: Vec::new() }
    }

    pub fn with_aux(mut self, aux: Vec<f64>) -> Self {
        self.aux = aux;
        self
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.x) && all_finite(&self.x_prev) && all_finite(&self.aux)
    }
}

/// `t_max`, the convergence test and the rate cap `r_max` used for `r_b`.
#[derive(Clone, Copy)]
pub struct StoppingConfig<F> {
    pub t_max: usize,
    pub r_max: f64,
    pub convergence_test: F,
}

/// Convergence test that defers to [`Problem::in_convergence_set`].
pub type DefaultTest<P> = fn(&P, &AlgorithmState) -> bool;

impl<F> StoppingConfig<F> {
    pub fn new(t_max: usize, r_max: f64, convergence_test: F) -> Result<Self> {
        if t_max < 1 {
            return Err(Error::Config("t_max must be at least 1".into()));
        }
        if !(r_max > 0.0) {
            return Err(Error::Config("r_max must be positive".into()));
        }
        Ok(Self { t_max, r_max, convergence_test })
    }
}

impl<P: Problem> StoppingConfig<DefaultTest<P>> {
    pub fn with_problem_criterion(t_max: usize, r_max: f64) -> Result<Self> {
        fn test<P: Problem>(p: &P, s: &AlgorithmState) -> bool {
            p.in_convergence_set(&s.x)
        }
        Self::new(t_max, r_max, test::<P> as DefaultTest<P>)
    }
}

/// Summary of one stopped trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    /// `ℓ(ξ^t, θ)` for `t = 0..=tau`.
    pub losses: Vec<f64>,
    pub tau: usize,
    pub converged: bool,
    pub rate: f64,
    pub rate_bounded: f64,
}

/// Run `alg` on `theta` from `init` until the convergence test fires or
/// `t_max` iterations have been taken.
pub fn rollout<P, A, F>(
    alg: &A,
    theta: &P,
    init: AlgorithmState,
    stream: RandomnessStream,
    stop: &StoppingConfig<F>,
) -> Result<TrajectoryRecord>
where
    P: Problem + ?Sized,
    A: UpdateRule<P> + ?Sized,
    F: Fn(&P, &AlgorithmState) -> bool,
{
    if init.x.len() != theta.dim() || init.x_prev.len() != theta.dim() {
        return Err(Error::Shape(format!(
            "initial state has dimension {}, problem has {}",
            init.x.len(),
            theta.dim()
        )));
    }
    let mut rng = stream.rng();
    let mut state = init;
    let mut losses = vec![theta.loss(&state.x)];
    if !state.is_finite() || !losses[0].is_finite() {
        return Err(Error::Divergence { iteration: 0 });
    }
    let mut t = 0;
    let converged = loop {
        // Only iterates 0..=t are visible to the test.
        if (stop.convergence_test)(theta, &state) {
            break true;
        }
        if t == stop.t_max {
            break false;
        }
        state = alg.step(theta, &state, &mut rng);
        t += 1;
        let loss = theta.loss(&state.x);
        if !state.is_finite() || !loss.is_finite() {
            return Err(Error::Divergence { iteration: t });
        }
        losses.push(loss);
    };
    let rate = rate_sample(&losses);
    Ok(TrajectoryRecord { tau: t, converged, rate, rate_bounded: bounded_rate(rate, stop.r_max), losses })
}

/// Rollouts of `alg` on every problem, in parallel. Problem `i` uses the
/// child stream `(ROLLOUT, i)` of `base`; results are ordered by index.
pub fn rollout_many<P, A, F>(
    alg: &A,
    problems: &[P],
    base: RandomnessStream,
    stop: &StoppingConfig<F>,
) -> Result<Vec<TrajectoryRecord>>
where
    P: Problem + Send,
    A: UpdateRule<P> + ?Sized,
    F: Fn(&P, &AlgorithmState) -> bool + Sync,
{
    problems
        .par_iter()
        .enumerate()
        .map(|(i, p)| rollout(alg, p, alg.init_state(p), base.child(tags::ROLLOUT, i as u64), stop))
        .collect()
}

/// `c(θ, x, y) = ℓ(x, θ) / ℓ(y, θ) · 1{ℓ(y, θ) > 0}`, on precomputed losses.
pub fn contraction_from_losses(loss_x: f64, loss_y: f64) -> f64 {
    if loss_y > 0.0 {
        loss_x / loss_y
    } else {
        0.0
    }
}

/// Contraction function evaluated through the problem's loss.
pub fn contraction<P: Problem + ?Sized>(theta: &P, x: &[f64], y: &[f64]) -> f64 {
    contraction_from_losses(theta.loss(x), theta.loss(y))
}

/// `r = c(θ, z^T, z^0)^{1/T} · 1{T ≥ 1}` where `T = losses.len() - 1` and the
/// losses are the cached values of the stopped trajectory.
pub fn rate_sample(losses: &[f64]) -> f64 {
    let t = losses.len().saturating_sub(1);
    if t == 0 {
        return 0.0;
    }
    contraction_from_losses(losses[t], losses[0]).powf(1.0 / t as f64)
}

/// `r_b = r · 1{r ≤ r_max}`.
pub fn bounded_rate(rate: f64, r_max: f64) -> f64 {
    if rate <= r_max {
        rate
    } else {
        0.0
    }
}

/// Trajectory properties whose probability can be certified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectoryEvent {
    /// `{r ≤ r_target}`
    RateAtMost { r_target: f64 },
    /// `{τ < t_max}`
    ConvergedBeforeMax { t_max: usize },
    /// `{τ = t_max}`
    HitsMax { t_max: usize },
}

impl TrajectoryEvent {
    pub fn holds(&self, record: &TrajectoryRecord) -> bool {
        match *self {
            Self::RateAtMost { r_target } => record.rate <= r_target,
            Self::ConvergedBeforeMax { t_max } => record.tau < t_max,
            Self::HitsMax { t_max } => record.tau >= t_max,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Self::RateAtMost { r_target } => format!("rate<={r_target}"),
            Self::ConvergedBeforeMax { t_max } => format!("tau<{t_max}"),
            Self::HitsMax { t_max } => format!("tau=={t_max}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalStatistics {
    pub mean_tau: f64,
    pub mean_rate_bounded: f64,
    pub event_frequency: f64,
}

pub fn empirical_statistics(records: &[TrajectoryRecord], event: &TrajectoryEvent) -> Result<EmpiricalStatistics> {
    if records.is_empty() {
        return Err(Error::Argument("no trajectory records".into()));
    }
    let n = records.len() as f64;
    Ok(EmpiricalStatistics {
        mean_tau: records.iter().map(|r| r.tau as f64).sum::<f64>() / n,
        mean_rate_bounded: records.iter().map(|r| r.rate_bounded).sum::<f64>() / n,
        event_frequency: indicator_mean(records.iter().map(|r| event.holds(r))),
    })
}

/// Fraction of `true` values.
pub fn indicator_mean(values: impl IntoIterator<Item = bool>) -> f64 {
    let (hits, n) = values.into_iter().fold((0usize, 0usize), |(h, n), v| (h + v as usize, n + 1));
    if n == 0 {
        0.0
    } else {
        hits as f64 / n as f64
    }
}

/// Format a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write `(t, loss)` rows for one rollout.
pub fn write_loss_csv(path: &Path, losses: &[f64]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "t,loss")?;
    for (t, l) in losses.iter().enumerate() {
        writeln!(out, "{t},{}", fmt_f64(*l))?;
    }
    out.flush()?;
    Ok(())
}
