//! Learned rule for quadratics: `x⁺ = x + β·d`.
//!
//! `β` comes from a dense block `4→8→8→8→8→1` (ReLU after the first three
//! layers) on log-scaled norms and losses. `d` comes from a per-coordinate
//! block `3→10→10→10→10→10→10→1` (ReLU after layers 2 to 5) on the
//! normalized gradient, the normalized momentum and their product.

use crate::error::Result;
use crate::linalg::{normalized, norm, sub};
use crate::problems::QuadraticInstance;
use crate::trajectory::AlgorithmState;

use super::nn::{per_coord_forward, BlockSpec, ForwardCache, PerCoordBlock, PerCoordCache};
use super::{dense_spec, Architecture, ArchitectureKind, BlockKind, BlockLayout, FeatureVector, Layout};

pub const FEATURE_NAMES: &[&str] = &["log1p_grad_norm", "log1p_step_norm", "log1p_loss", "log1p_prev_loss"];
pub const CHANNEL_NAMES: &[&str] = &["gradient", "momentum", "gradient_x_momentum"];

pub(crate) fn layout() -> Layout {
    Layout {
        architecture: ArchitectureKind::Quadratic,
        blocks: vec![
            BlockLayout { name: "step_size".into(), kind: BlockKind::Dense, spec: dense_spec(&[4, 8, 8, 8, 8, 1], 0..3) },
            BlockLayout {
                name: "direction".into(),
                kind: BlockKind::PerCoord,
                spec: dense_spec(&[3, 10, 10, 10, 10, 10, 10, 1], 1..5),
            },
        ],
        channels: CHANNEL_NAMES.iter().map(|s| s.to_string()).collect(),
        features: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
    }
}

/// `log(1 + ‖∇ℓ(x)‖)`, `log(1 + ‖x − x_prev‖)`, `log(1 + ℓ(x))`,
/// `log(1 + ℓ(x_prev))`.
pub fn quad_features(theta: &QuadraticInstance, state: &AlgorithmState) -> FeatureVector {
    let g = theta.grad(&state.x);
    features_with_grad(theta, state, &g)
}

fn features_with_grad(theta: &QuadraticInstance, state: &AlgorithmState, g: &[f64]) -> FeatureVector {
    let step: f64 = state.x.iter().zip(&state.x_prev).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    FeatureVector {
        names: FEATURE_NAMES,
        values: vec![
            norm(g).ln_1p(),
            step.ln_1p(),
            theta.loss(&state.x).ln_1p(),
            theta.loss(&state.x_prev).ln_1p(),
        ],
    }
}

fn channels(state: &AlgorithmState, g: &[f64]) -> Vec<Vec<f64>> {
    let gn = normalized(g);
    let mn = normalized(&sub(&state.x, &state.x_prev));
    let prod = gn.iter().zip(&mn).map(|(a, b)| a * b).collect();
    vec![gn, mn, prod]
}

#[derive(Debug, Clone)]
pub struct QuadArchitecture {
    dense: BlockSpec,
    per_coord: BlockSpec,
    split: usize,
}

impl Default for QuadArchitecture {
    fn default() -> Self {
        let l = layout();
        let split = l.blocks[0].spec.n_params();
        Self { dense: l.blocks[0].spec.clone(), per_coord: l.blocks[1].spec.clone(), split }
    }
}

#[derive(Debug, Clone, Default)]
pub struct QuadCache {
    pub beta: f64,
    pub direction: Vec<f64>,
    dense: ForwardCache,
    per_coord: PerCoordCache,
}

impl Architecture<QuadraticInstance> for QuadArchitecture {
    type Cache = QuadCache;

    fn layout(&self) -> Layout {
        layout()
    }

    fn update(&self, w: &[f64], theta: &QuadraticInstance, state: &AlgorithmState) -> AlgorithmState {
        let (wd, wp) = w.split_at(self.split);
        let g = theta.grad(&state.x);
        let f = features_with_grad(theta, state, &g);
        let mut beta = [0.0];
        self.dense.forward(wd, &f.values, &mut beta);
        let d = per_coord_forward(&self.per_coord, wp, &channels(state, &g)).swap_remove(0);
        let x = state.x.iter().zip(&d).map(|(xi, di)| xi + beta[0] * di).collect();
        AlgorithmState { x, x_prev: state.x.clone(), aux: Vec::new() }
    }

    fn update_cached(&self, w: &[f64], theta: &QuadraticInstance, state: &AlgorithmState) -> (AlgorithmState, QuadCache) {
        let (wd, wp) = w.split_at(self.split);
        let g = theta.grad(&state.x);
        let f = features_with_grad(theta, state, &g);
        let (beta, dense) = self.dense.forward_cached(wd, &f.values);
        let block = PerCoordBlock { spec: self.per_coord.clone(), weights: wp.to_vec() };
        let (mut out, per_coord) = block.forward_cached(&channels(state, &g));
        let direction = out.swap_remove(0);
        let x = state.x.iter().zip(&direction).map(|(xi, di)| xi + beta[0] * di).collect();
        let next = AlgorithmState { x, x_prev: state.x.clone(), aux: Vec::new() };
        (next, QuadCache { beta: beta[0], direction, dense, per_coord })
    }

    fn backward(&self, w: &[f64], cache: &QuadCache, upstream: &[f64]) -> Result<Vec<f64>> {
        let (wd, wp) = w.split_at(self.split);
        let g_beta: f64 = upstream.iter().zip(&cache.direction).map(|(u, d)| u * d).sum();
        let g_dir: Vec<f64> = upstream.iter().map(|u| cache.beta * u).collect();
        let mut grad = vec![0.0; w.len()];
        self.dense.backward(wd, &cache.dense, &[g_beta], &mut grad[..self.split])?;
        let block = PerCoordBlock { spec: self.per_coord.clone(), weights: wp.to_vec() };
        let (_, gp) = block.backward(&cache.per_coord, &[g_dir])?;
        grad[self.split..].copy_from_slice(&gp);
        Ok(grad)
    }

    fn loss_gradient(&self, theta: &QuadraticInstance, x: &[f64]) -> Vec<f64> {
        theta.grad(x)
    }
}
