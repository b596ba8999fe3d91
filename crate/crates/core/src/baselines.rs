//! Hand-tuned baselines: heavy-ball with friction for the quadratic family
//! and FISTA for LASSO.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::{soft_threshold, LassoInstance, QuadraticInstance};
use crate::trajectory::{AlgorithmState, Problem, UpdateRule};

/// Step size `beta1` and momentum `beta2` of heavy-ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HbfParams {
    pub beta1: f64,
    pub beta2: f64,
}

/// Coefficients with the optimal worst-case rate over `m_lower`-strongly
/// convex, `l_upper`-smooth quadratics.
pub fn hbf_optimal_params(m_lower: f64, l_upper: f64) -> Result<HbfParams> {
    if !(0.0 < m_lower && m_lower <= l_upper && l_upper.is_finite()) {
        return Err(Error::Argument(format!("need 0 < m <= L, got m = {m_lower}, L = {l_upper}")));
    }
    let (sm, sl) = (m_lower.sqrt(), l_upper.sqrt());
    Ok(HbfParams { beta1: (2.0 / (sl + sm)).powi(2), beta2: ((sl - sm) / (sl + sm)).powi(2) })
}

/// `x⁺ = x − β₁∇f(x) + β₂(x − x_prev)`.
pub fn hbf_step(params: &HbfParams, grad: impl Fn(&[f64]) -> Vec<f64>, state: &AlgorithmState) -> AlgorithmState {
    let g = grad(&state.x);
    let x = state
        .x
        .iter()
        .zip(&state.x_prev)
        .zip(&g)
        .map(|((xi, pi), gi)| xi - params.beta1 * gi + params.beta2 * (xi - pi))
        .collect();
    AlgorithmState { x, x_prev: state.x.clone(), aux: Vec::new() }
}

#[derive(Debug, Clone, Copy)]
pub struct HbfRule(pub HbfParams);

impl UpdateRule<QuadraticInstance> for HbfRule {
    fn step(&self, problem: &QuadraticInstance, state: &AlgorithmState, _: &mut ChaCha8Rng) -> AlgorithmState {
        hbf_step(&self.0, |x| problem.grad(x), state)
    }
}

/// Momentum recursion `t⁺ = (1 + √(1 + 4t²)) / 2`.
pub fn fista_momentum_next(t: f64) -> f64 {
    (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0
}

/// FISTA start: `x_prev = x`, momentum value 1 stored in `aux[0]`.
pub fn fista_init(x0: Vec<f64>) -> AlgorithmState {
    AlgorithmState::new(x0).with_aux(vec![1.0])
}

/// Extrapolate with `(t − 1)/t⁺`, then take a prox-gradient step with
/// `β = 1/L` from the extrapolated point.
pub fn fista_step(inst: &LassoInstance, state: &AlgorithmState) -> AlgorithmState {
    let t = state.aux.first().copied().unwrap_or(1.0);
    let t_next = fista_momentum_next(t);
    let coef = (t - 1.0) / t_next;
    let y: Vec<f64> = state.x.iter().zip(&state.x_prev).map(|(x, p)| x + coef * (x - p)).collect();
    let beta = inst.step();
    let g = inst.smooth_grad(&y);
    let v: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| yi - beta * gi).collect();
    AlgorithmState { x: soft_threshold(&v, beta * inst.reg), x_prev: state.x.clone(), aux: vec![t_next] }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FistaRule;

impl UpdateRule<LassoInstance> for FistaRule {
    fn step(&self, problem: &LassoInstance, state: &AlgorithmState, _: &mut ChaCha8Rng) -> AlgorithmState {
        fista_step(problem, state)
    }

    fn init_state(&self, problem: &LassoInstance) -> AlgorithmState {
        fista_init(problem.initial_point())
    }
}

/// Run FISTA from `x0` until the prox residual drops below `tol` or
/// `max_iter` steps were taken; returns the last iterate.
pub fn fista_minimize(inst: &LassoInstance, x0: &[f64], max_iter: usize, tol: f64) -> Vec<f64> {
    let mut state = fista_init(x0.to_vec());
    for _ in 0..max_iter {
        if inst.prox_residual(&state.x) < tol {
            break;
        }
        state = fista_step(inst, &state);
    }
    state.x
}
