//! Training of `α₀` on the one-step loss, the discrete prior around it, the
//! Gibbs posterior and the final selection of `α*`.

use std::ops::Range;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learned::{Architecture, Hyperparameters, LearnedAlgorithm};
use crate::rng::{tags, RandomnessStream};
use crate::trajectory::{rollout, AlgorithmState, Problem, StoppingConfig, TrajectoryRecord, UpdateRule};

/// Weights must sum to one within this tolerance.
pub const WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub learning_rate: f64,
    /// Multiplies the learning rate after every outer iteration.
    #[serde(default = "one")]
    pub learning_rate_decay: f64,
    /// Optional cap on the Euclidean norm of each α-gradient.
    #[serde(default)]
    pub gradient_clip: Option<f64>,
    #[serde(default)]
    pub optimizer: MetaOptimizer,
    pub n_sample: usize,
    pub sigma_prior: f64,
    /// Bound parameter; `None` selects the default for the certification size.
    #[serde(default)]
    pub lambda: Option<f64>,
    pub epsilon: f64,
    pub r_max: f64,
    pub t_max: usize,
}

fn one() -> f64 {
    1.0
}

/// Update rule for `α` during training.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetaOptimizer {
    /// `α ← α − η g`
    #[default]
    GradientDescent,
    /// Adam with bias-corrected moment estimates.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

struct MetaState {
    kind: MetaOptimizer,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl MetaState {
    fn new(kind: MetaOptimizer, n: usize) -> Self {
        Self { kind, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn apply(&mut self, w: &mut [f64], g: &[f64], lr: f64) {
        match self.kind {
            MetaOptimizer::GradientDescent => {
                for (wi, gi) in w.iter_mut().zip(g) {
                    *wi -= lr * gi;
                }
            }
            MetaOptimizer::Adam { beta1, beta2, eps } => {
                self.t += 1;
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                for (((wi, gi), mi), vi) in w.iter_mut().zip(g).zip(&mut self.m).zip(&mut self.v) {
                    *mi = beta1 * *mi + (1.0 - beta1) * gi;
                    *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                    *wi -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
                }
            }
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.n_sample < 1 {
            return fail("n_sample must be at least 1");
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return fail("lambda must be positive and finite");
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return fail("epsilon must lie in (0, 1)");
        }
        if !(self.r_max > 0.0 && self.r_max.is_finite()) {
            return fail("r_max must be positive and finite");
        }
        if self.t_max < 1 {
            return fail("t_max must be at least 1");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be nonnegative and finite");
        }
        if !(self.learning_rate_decay > 0.0 && self.learning_rate_decay <= 1.0) {
            return fail("learning_rate_decay must lie in (0, 1]");
        }
        if !(self.sigma_prior >= 0.0 && self.sigma_prior.is_finite()) {
            return fail("sigma_prior must be nonnegative and finite");
        }
        if let Some(c) = self.gradient_clip {
            if !(c > 0.0) {
                return fail("gradient_clip must be positive");
            }
        }
        if let MetaOptimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) {
                return fail("Adam needs beta1, beta2 in [0, 1) and eps > 0");
            }
        }
        Ok(())
    }
}

/// Probability weights on a finite list of hyperparameter vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    pub support: Vec<Hyperparameters>,
    pub weights: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(support: Vec<Hyperparameters>, weights: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != weights.len() {
            return Err(Error::Argument(format!(
                "support of size {} with {} weights",
                support.len(),
                weights.len()
            )));
        }
        validate_weights(&weights)?;
        Ok(Self { support, weights })
    }

    pub fn uniform(support: Vec<Hyperparameters>) -> Result<Self> {
        let n = support.len().max(1);
        Self::new(support, vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Same support, different weights.
    pub fn reweighted(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(self.support.clone(), weights)
    }

    /// `Σ_i w_i v_i`.
    pub fn expectation(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).filter(|(w, _)| **w > 0.0).map(|(w, v)| w * v).sum()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let d: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::new(d.support, d.weights)
    }
}

pub fn validate_weights(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::Argument("weights must be finite and nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_TOL {
        return Err(Error::Argument(format!("weights sum to {total}, not 1")));
    }
    Ok(())
}

/// `1{ℓ(ξ^t) > 0} · ℓ(ξ^{t+1}) / ℓ(ξ^t) · 1{ξ^t ∉ C}`.
pub fn training_loss<P: Problem + ?Sized>(theta: &P, state_t: &AlgorithmState, state_t1: &AlgorithmState) -> f64 {
    let lt = theta.loss(&state_t.x);
    if lt > 0.0 && !theta.in_convergence_set(&state_t.x) {
        theta.loss(&state_t1.x) / lt
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub outer: usize,
    pub inner: usize,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub alpha0: Hyperparameters,
    pub history: Vec<TrainRecord>,
    /// Outer iterations in which at least one divergent step forced a resample.
    pub divergent_outer: usize,
}

/// Outer loop over sampled problems, inner loop of single-step updates of `α`
/// by gradient descent on `ℓ_train`.
///
/// Each inner iteration advances the running trajectory by one step and
/// backpropagates `ℓ_train` through that step only, with `ξ^t` held fixed.
/// The trajectory restarts on a freshly sampled problem when it enters the
/// convergence set, reaches `t_max`, or diverges. A divergent step does not
/// update `α` and is retried on the new problem.
pub fn train_hyperparameters<P, A, S>(
    cfg: &TrainConfig,
    mut sampler: S,
    arch: &A,
    alpha_init: Hyperparameters,
    rng: &mut ChaCha8Rng,
) -> Result<TrainOutcome>
where
    P: Problem,
    A: Architecture<P>,
    S: FnMut(&mut ChaCha8Rng) -> Result<P>,
{
    cfg.validate()?;
    if alpha_init.layout != arch.layout() {
        return Err(Error::Shape("initial hyperparameters do not match the architecture".into()));
    }
    let mut w = alpha_init.weights;
    let mut meta = MetaState::new(cfg.optimizer, w.len());
    let mut lr = cfg.learning_rate;
    let mut history = Vec::with_capacity(cfg.outer_iterations * cfg.inner_iterations);
    let mut divergent_outer = 0;
    for outer in 0..cfg.outer_iterations {
        let mut theta = sampler(rng)?;
        let mut state = arch.init_state(&theta);
        let mut t = 0;
        let mut diverged = false;
        let mut retries = 0;
        let mut inner = 0;
        while inner < cfg.inner_iterations {
            if t >= cfg.t_max || theta.in_convergence_set(&state.x) {
                theta = sampler(rng)?;
                state = arch.init_state(&theta);
                t = 0;
                continue;
            }
            let (next, cache) = arch.update_cached(&w, &theta, &state);
            let lt = theta.loss(&state.x);
            let lt1 = theta.loss(&next.x);
            let mut grad = if next.is_finite() && lt1.is_finite() {
                let u: Vec<f64> = arch.loss_gradient(&theta, &next.x).iter().map(|g| g / lt).collect();
                Some(arch.backward(&w, &cache, &u)?)
            } else {
                None
            };
            if let Some(g) = &grad {
                if g.iter().any(|v| !v.is_finite()) {
                    grad = None;
                }
            }
            let Some(mut g) = grad else {
                diverged = true;
                retries += 1;
                if retries > cfg.inner_iterations {
                    return Err(Error::TrainingFailure { divergent: divergent_outer + 1, total: outer + 1 });
                }
                theta = sampler(rng)?;
                state = arch.init_state(&theta);
                t = 0;
                continue;
            };
            let loss = training_loss(&theta, &state, &next);
            if let Some(c) = cfg.gradient_clip {
                let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n > c {
                    g.iter_mut().for_each(|v| *v *= c / n);
                }
            }
            if lr != 0.0 {
                meta.apply(&mut w, &g, lr);
            }
            history.push(TrainRecord { outer, inner, loss });
            state = next;
            t += 1;
            inner += 1;
        }
        if diverged {
            divergent_outer += 1;
        }
        lr *= cfg.learning_rate_decay;
    }
    if 2 * divergent_outer > cfg.outer_iterations {
        return Err(Error::TrainingFailure { divergent: divergent_outer, total: cfg.outer_iterations });
    }
    Ok(TrainOutcome { alpha0: Hyperparameters::new(arch.layout(), w)?, history, divergent_outer })
}

/// `{α₀} ∪ {α₀ + σ·g_i}` with standard normal `g_i`, uniform weights.
pub fn build_prior<R: Rng + ?Sized>(
    alpha0: &Hyperparameters,
    n_sample: usize,
    sigma_prior: f64,
    rng: &mut R,
) -> Result<DiscreteDistribution> {
    if n_sample < 1 {
        return Err(Error::Argument("n_sample must be at least 1".into()));
    }
    let mut support = vec![alpha0.clone()];
    for _ in 1..n_sample {
        let mut a = alpha0.clone();
        for w in &mut a.weights {
            let g: f64 = rng.sample(StandardNormal);
            *w += sigma_prior * g;
        }
        support.push(a);
    }
    DiscreteDistribution::uniform(support)
}

/// `ρ*(α_i) ∝ π(α_i) exp(−λ s_i)`, normalized in the log domain.
pub fn gibbs_posterior(prior: &DiscreteDistribution, scores: &[f64], lambda: f64) -> Result<DiscreteDistribution> {
    if scores.len() != prior.len() {
        return Err(Error::Argument(format!("{} scores for {} support points", scores.len(), prior.len())));
    }
    if !(lambda > 0.0) {
        return Err(Error::Argument("lambda must be positive".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Argument("scores must not be NaN".into()));
    }
    let logw: Vec<f64> = prior
        .weights
        .iter()
        .zip(scores)
        .map(|(&p, &s)| if p > 0.0 && s.is_finite() { p.ln() - lambda * s } else { f64::NEG_INFINITY })
        .collect();
    let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Err(Error::Degenerate("all prior mass sits on infinite scores".into()));
    }
    let unnorm: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = unnorm.iter().sum();
    prior.reweighted(unnorm.iter().map(|u| u / z).collect())
}

/// Index of the largest weight; ties go to the lowest index.
pub fn select_alpha_star(posterior: &DiscreteDistribution) -> (usize, &Hyperparameters) {
    let mut best = 0;
    for (i, w) in posterior.weights.iter().enumerate() {
        if *w > posterior.weights[best] {
            best = i;
        }
    }
    (best, &posterior.support[best])
}

/// `ρ[s] + KL(ρ‖π)/λ`, the objective the Gibbs posterior minimizes.
pub fn gibbs_objective(rho: &[f64], prior: &[f64], scores: &[f64], lambda: f64) -> f64 {
    let mut v = 0.0;
    for ((&r, &p), &s) in rho.iter().zip(prior).zip(scores) {
        if r > 0.0 {
            v += r * s + r * (r / p).ln() / lambda;
        }
    }
    v
}

/// Posterior score of one support point: `½(mean r_b / r_max + mean τ / t_max)`.
pub fn posterior_score(records: &[TrajectoryRecord], t_max: usize, r_max: f64) -> f64 {
    let n = records.len() as f64;
    let rate: f64 = records.iter().map(|r| r.rate_bounded).sum::<f64>() / n;
    let tau: f64 = records.iter().map(|r| r.tau as f64).sum::<f64>() / n;
    0.5 * (rate / r_max + tau / t_max as f64)
}

/// Like [`rollout`], but a divergent trajectory is recorded as unconverged
/// with `τ = t_max`, rate `+∞` and therefore bounded rate 0.
pub fn rollout_or_diverged<P, U, F>(
    alg: &U,
    theta: &P,
    stream: RandomnessStream,
    stop: &StoppingConfig<F>,
) -> Result<TrajectoryRecord>
where
    P: Problem,
    U: UpdateRule<P>,
    F: Fn(&P, &AlgorithmState) -> bool,
{
    match rollout(alg, theta, alg.init_state(theta), stream, stop) {
        Err(Error::Divergence { .. }) => Ok(TrajectoryRecord {
            losses: vec![theta.loss(&theta.initial_point())],
            tau: stop.t_max,
            converged: false,
            rate: f64::INFINITY,
            rate_bounded: 0.0,
        }),
        other => other,
    }
}

/// Rollouts of every support point on every problem: `records[i][j]` is
/// support point `i` on problem `j`.
pub fn support_records<P, A, F>(
    arch: &A,
    dist: &DiscreteDistribution,
    problems: &[P],
    base: RandomnessStream,
    stop: &StoppingConfig<F>,
) -> Result<Vec<Vec<TrajectoryRecord>>>
where
    P: Problem + Send,
    A: Architecture<P> + Clone,
    F: Fn(&P, &AlgorithmState) -> bool + Sync,
{
    let algs = dist
        .support
        .iter()
        .map(|a| LearnedAlgorithm::new::<P>(arch.clone(), a.clone()))
        .collect::<Result<Vec<_>>>()?;
    let n = problems.len();
    let flat: Vec<TrajectoryRecord> = (0..algs.len() * n)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / n, k % n);
            rollout_or_diverged(&algs[i], &problems[j], base.child(tags::ROLLOUT, j as u64), stop)
        })
        .collect::<Result<_>>()?;
    Ok(flat.chunks(n.max(1)).map(<[_]>::to_vec).collect())
}

/// Index ranges of the problem splits. Ranges are consecutive, so the
/// prior-construction and certification splits never share an index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplits {
    pub train: Range<usize>,
    pub prior: Range<usize>,
    pub certify: Range<usize>,
    pub test: Range<usize>,
}

impl DataSplits {
    pub fn from_sizes(train: usize, prior: usize, certify: usize, test: usize) -> Result<Self> {
        if [train, prior, certify, test].contains(&0) {
            return Err(Error::Config("all split sizes must be positive".into()));
        }
        let s = Self {
            train: 0..train,
            prior: train..train + prior,
            certify: train + prior..train + prior + certify,
            test: train + prior + certify..train + prior + certify + test,
        };
        s.assert_disjoint()?;
        Ok(s)
    }

    pub fn total(&self) -> usize {
        self.test.end
    }

    pub fn assert_disjoint(&self) -> Result<()> {
        let r = [&self.train, &self.prior, &self.certify, &self.test];
        for (a, ra) in r.iter().enumerate() {
            for rb in &r[a + 1..] {
                if ra.start < rb.end && rb.start < ra.end {
                    return Err(Error::Config(format!("splits {ra:?} and {rb:?} overlap")));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learned::{Layout, QuadArchitecture};
    use crate::learned::ArchitectureKind;
    use crate::problems::{quadratic_diagonal, QuadraticInstance};

    fn cfg() -> TrainConfig {
        TrainConfig {
            outer_iterations: 4,
            inner_iterations: 25,
            learning_rate: 1e-3,
            learning_rate_decay: 1.0,
            gradient_clip: None,
            optimizer: MetaOptimizer::GradientDescent,
            n_sample: 3,
            sigma_prior: 0.01,
            lambda: Some(1.0),
            epsilon: 0.05,
            r_max: 1.0,
            t_max: 100,
        }
    }

    fn point(v: f64) -> Hyperparameters {
        let l = Layout::for_kind(ArchitectureKind::Quadratic);
        let n = l.n_params();
        Hyperparameters::new(l, vec![v; n]).unwrap()
    }

    fn quad(rhs: f64) -> QuadraticInstance {
        QuadraticInstance { diag: quadratic_diagonal(0.5, 2.0, 2), rhs: vec![rhs, -rhs], strong_convexity: 0.5, smoothness: 2.0 }
    }

    #[test]
    fn training_loss_cases() {
        let q = QuadraticInstance { diag: vec![1.0], rhs: vec![0.0], strong_convexity: 1.0, smoothness: 1.0 };
        // ℓ = x²/2: ℓ(√8) = 4, ℓ(√2) = 1
        let a = AlgorithmState::new(vec![8f64.sqrt()]);
        let b = AlgorithmState::new(vec![2f64.sqrt()]);
        assert!((training_loss(&q, &a, &b) - 0.25).abs() < 1e-15);
        let zero = AlgorithmState::new(vec![0.0]);
        assert_eq!(training_loss(&q, &zero, &b), 0.0);
        let tiny = AlgorithmState::new(vec![1e-5]);
        assert!(q.in_convergence_set(&tiny.x));
        assert_eq!(training_loss(&q, &tiny, &b), 0.0);
    }

    #[test]
    fn zero_learning_rate_keeps_init() {
        let arch = QuadArchitecture::default();
        let mut rng = RandomnessStream::new(1, 0).rng();
        let init = Hyperparameters::init(Layout::for_kind(ArchitectureKind::Quadratic), &mut rng);
        let c = TrainConfig { learning_rate: 0.0, ..cfg() };
        let out = train_hyperparameters(&c, |r: &mut ChaCha8Rng| Ok(quad(r.random_range(0.5..2.0))), &arch, init.clone(), &mut rng).unwrap();
        assert_eq!(out.alpha0.weights, init.weights);
        assert_eq!(out.history.len(), c.outer_iterations * c.inner_iterations);
    }

    #[test]
    fn prior_cases() {
        let mut rng = RandomnessStream::new(2, 0).rng();
        let a = point(0.5);
        let p = build_prior(&a, 1, 1.0, &mut rng).unwrap();
        assert_eq!((p.len(), p.weights[0]), (1, 1.0));
        let p = build_prior(&a, 4, 0.0, &mut rng).unwrap();
        assert!(p.support.iter().all(|s| s.weights == a.weights));
        assert!(p.weights.iter().all(|w| *w == 0.25));
        let p = build_prior(&a, 3, 0.1, &mut rng).unwrap();
        assert_eq!(p.support[0], a);
        assert_ne!(p.support[1], a);
    }

    #[test]
    fn posterior_cases() {
        let prior = DiscreteDistribution::uniform(vec![point(0.0), point(1.0), point(2.0)]).unwrap();
        let post = gibbs_posterior(&prior, &[0.3, 0.7, 0.1], 1e-12).unwrap();
        for w in &post.weights {
            assert!((w - 1.0 / 3.0).abs() < 1e-9);
        }
        let lambda = 4.0;
        let post = gibbs_posterior(&prior, &[0.0, 2f64.ln() / lambda, 1e6], lambda).unwrap();
        assert!((post.weights[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((post.weights[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!(post.weights[2] < 1e-300);
        let two = DiscreteDistribution::uniform(vec![point(0.0), point(1.0)]).unwrap();
        assert_eq!(gibbs_posterior(&two, &[0.4, 0.4], 3.0).unwrap().weights, vec![0.5, 0.5]);
        assert!(matches!(
            gibbs_posterior(&two, &[f64::INFINITY, f64::INFINITY], 1.0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn argmax_selection() {
        let d = DiscreteDistribution::new(vec![point(0.0), point(1.0), point(2.0)], vec![0.2, 0.5, 0.3]).unwrap();
        assert_eq!(select_alpha_star(&d).0, 1);
        let u = DiscreteDistribution::uniform(vec![point(0.0), point(1.0), point(2.0)]).unwrap();
        assert_eq!(select_alpha_star(&u).0, 0);
        let p = DiscreteDistribution::new(vec![point(0.0), point(1.0)], vec![0.0, 1.0]).unwrap();
        assert_eq!(select_alpha_star(&p).0, 1);
    }

    #[test]
    fn splits_are_disjoint() {
        let s = DataSplits::from_sizes(10, 5, 7, 3).unwrap();
        assert_eq!(s.certify, 15..22);
        assert_eq!(s.total(), 25);
        let bad = DataSplits { prior: 8..12, ..s };
        assert!(bad.assert_disjoint().is_err());
        assert!(DataSplits::from_sizes(1, 0, 1, 1).is_err());
    }

    #[test]
    fn invalid_weights_rejected() {
        assert!(DiscreteDistribution::new(vec![point(0.0)], vec![0.9]).is_err());
        assert!(DiscreteDistribution::new(vec![point(0.0), point(1.0)], vec![1.5, -0.5]).is_err());
    }
}
