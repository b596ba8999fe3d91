//! Learned proximal-gradient rule for LASSO.
//!
//! A dense block `12→30→20→10→8` maps the features to channel weights
//! `s_1..s_8`. These scale the eight per-coordinate channels: normalized
//! gradient, momentum, prox residual and gradient⊙momentum, each restricted
//! to the nonzero (`>`) and zero (`0`) support of `x`. A per-coordinate block
//! `8→20→20→20→2` turns them into `d_out,1` and `d_out,2`, and
//!
//! `x⁺ = prox_{g/L}(x + (d_out,1 ⊙ 1_> − ∇h(x) + ‖x − x_prev‖ · d_out,2 ⊙ 1_0) / L)`.

use crate::error::Result;
use crate::linalg::{normalized, sub};
use crate::problems::{soft_threshold, LassoInstance};
use crate::trajectory::{AlgorithmState, Problem};

use super::nn::{per_coord_forward, BlockSpec, ForwardCache, PerCoordBlock, PerCoordCache};
use super::{dense_spec, Architecture, ArchitectureKind, BlockKind, BlockLayout, FeatureVector, Layout};

pub const FEATURE_NAMES: &[&str] = &[
    "log1p_grad_norm_nonzero",
    "log1p_grad_norm_zero",
    "log1p_momentum_norm_nonzero",
    "log1p_momentum_norm_zero",
    "log1p_prox_point_norm_nonzero",
    "log1p_prox_point_norm_zero",
    "delta_loss",
    "delta_nonsmooth",
    "delta_smooth",
    "grad_dot_momentum_nonzero",
    "grad_dot_momentum_zero",
    "regularization",
];

pub const CHANNEL_NAMES: &[&str] = &[
    "gradient_nonzero",
    "gradient_zero",
    "momentum_nonzero",
    "momentum_zero",
    "residual_nonzero",
    "residual_zero",
    "gradmom_nonzero",
    "gradmom_zero",
];

pub(crate) fn layout() -> Layout {
    Layout {
        architecture: ArchitectureKind::Lasso,
        blocks: vec![
            BlockLayout { name: "channel_weights".into(), kind: BlockKind::Dense, spec: dense_spec(&[12, 30, 20, 10, 8], 0..3) },
            BlockLayout { name: "direction".into(), kind: BlockKind::PerCoord, spec: dense_spec(&[8, 20, 20, 20, 2], 0..3) },
        ],
        channels: CHANNEL_NAMES.iter().map(|s| s.to_string()).collect(),
        features: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
    }
}

/// Everything the features, channels and update share.
struct Prepared {
    grad: Vec<f64>,
    nonzero: Vec<bool>,
    momentum_norm: f64,
    features: FeatureVector,
    directions: [Vec<f64>; 8],
}

fn split_norms(v: &[f64], nonzero: &[bool]) -> (f64, f64) {
    let (mut a, mut b) = (0.0, 0.0);
    for (vi, &nz) in v.iter().zip(nonzero) {
        if nz {
            a += vi * vi;
        } else {
            b += vi * vi;
        }
    }
    (a.sqrt(), b.sqrt())
}

fn split_dot(u: &[f64], v: &[f64], nonzero: &[bool]) -> (f64, f64) {
    let (mut a, mut b) = (0.0, 0.0);
    for ((ui, vi), &nz) in u.iter().zip(v).zip(nonzero) {
        if nz {
            a += ui * vi;
        } else {
            b += ui * vi;
        }
    }
    (a, b)
}

fn prepare(theta: &LassoInstance, state: &AlgorithmState) -> Prepared {
    let x = &state.x;
    let nonzero: Vec<bool> = x.iter().map(|&v| v != 0.0).collect();
    let grad = theta.smooth_grad(x);
    let momentum = sub(x, &state.x_prev);
    let prox = theta.prox_grad_point(x);
    let residual = sub(x, &prox);

    let (g_nz, g_z) = split_norms(&grad, &nonzero);
    let (m_nz, m_z) = split_norms(&momentum, &nonzero);
    let (p_nz, p_z) = split_norms(&prox, &nonzero);
    let gn = normalized(&grad);
    let mn = normalized(&momentum);
    let rn = normalized(&residual);
    let gm: Vec<f64> = gn.iter().zip(&mn).map(|(a, b)| a * b).collect();
    let (s_nz, s_z) = split_dot(&gn, &mn, &nonzero);
    let features = FeatureVector {
        names: FEATURE_NAMES,
        values: vec![
            g_nz.ln_1p(),
            g_z.ln_1p(),
            m_nz.ln_1p(),
            m_z.ln_1p(),
            p_nz.ln_1p(),
            p_z.ln_1p(),
            theta.loss(x) - theta.loss(&state.x_prev),
            theta.nonsmooth_part(x) - theta.nonsmooth_part(&state.x_prev),
            theta.smooth_part(x) - theta.smooth_part(&state.x_prev),
            s_nz,
            s_z,
            theta.reg,
        ],
    };
    let mask = |v: &[f64], keep: bool| -> Vec<f64> {
        v.iter().zip(&nonzero).map(|(vi, &nz)| if nz == keep { *vi } else { 0.0 }).collect()
    };
    let directions = [
        mask(&gn, true),
        mask(&gn, false),
        mask(&mn, true),
        mask(&mn, false),
        mask(&rn, true),
        mask(&rn, false),
        mask(&gm, true),
        mask(&gm, false),
    ];
    let momentum_norm = m_nz.hypot(m_z);
    Prepared { grad, nonzero, momentum_norm, features, directions }
}

/// The twelve input features, in [`FEATURE_NAMES`] order.
pub fn lasso_features(theta: &LassoInstance, state: &AlgorithmState) -> FeatureVector {
    prepare(theta, state).features
}

#[derive(Debug, Clone)]
pub struct LassoArchitecture {
    dense: BlockSpec,
    per_coord: BlockSpec,
    split: usize,
}

impl Default for LassoArchitecture {
    fn default() -> Self {
        let l = layout();
        let split = l.blocks[0].spec.n_params();
        Self { dense: l.blocks[0].spec.clone(), per_coord: l.blocks[1].spec.clone(), split }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LassoCache {
    directions: Vec<Vec<f64>>,
    nonzero: Vec<bool>,
    active: Vec<bool>,
    momentum_norm: f64,
    lipschitz: f64,
    dense: ForwardCache,
    per_coord: PerCoordCache,
}

fn scaled_channels(directions: &[Vec<f64>], scales: &[f64]) -> Vec<Vec<f64>> {
    directions.iter().zip(scales).map(|(d, s)| d.iter().map(|v| s * v).collect()).collect()
}

fn pre_prox(theta: &LassoInstance, state: &AlgorithmState, p: &Prepared, out: &[Vec<f64>]) -> Vec<f64> {
    let l = theta.lipschitz();
    (0..state.x.len())
        .map(|i| {
            let learned = if p.nonzero[i] { out[0][i] } else { p.momentum_norm * out[1][i] };
            state.x[i] + (learned - p.grad[i]) / l
        })
        .collect()
}

impl Architecture<LassoInstance> for LassoArchitecture {
    type Cache = LassoCache;

    fn layout(&self) -> Layout {
        layout()
    }

    fn update(&self, w: &[f64], theta: &LassoInstance, state: &AlgorithmState) -> AlgorithmState {
        let (wd, wp) = w.split_at(self.split);
        let p = prepare(theta, state);
        let mut scales = [0.0; 8];
        self.dense.forward(wd, &p.features.values, &mut scales);
        let out = per_coord_forward(&self.per_coord, wp, &scaled_channels(&p.directions, &scales));
        let v = pre_prox(theta, state, &p, &out);
        AlgorithmState { x: soft_threshold(&v, theta.step() * theta.reg), x_prev: state.x.clone(), aux: Vec::new() }
    }

    fn update_cached(&self, w: &[f64], theta: &LassoInstance, state: &AlgorithmState) -> (AlgorithmState, LassoCache) {
        let (wd, wp) = w.split_at(self.split);
        let p = prepare(theta, state);
        let (scales, dense) = self.dense.forward_cached(wd, &p.features.values);
        let block = PerCoordBlock { spec: self.per_coord.clone(), weights: wp.to_vec() };
        let (out, per_coord) = block.forward_cached(&scaled_channels(&p.directions, &scales));
        let v = pre_prox(theta, state, &p, &out);
        let kappa = theta.step() * theta.reg;
        let active = v.iter().map(|vi| vi.abs() > kappa).collect();
        let next = AlgorithmState { x: soft_threshold(&v, kappa), x_prev: state.x.clone(), aux: Vec::new() };
        let cache = LassoCache {
            directions: p.directions.to_vec(),
            nonzero: p.nonzero,
            active,
            momentum_norm: p.momentum_norm,
            lipschitz: theta.lipschitz(),
            dense,
            per_coord,
        };
        (next, cache)
    }

    fn backward(&self, w: &[f64], cache: &LassoCache, upstream: &[f64]) -> Result<Vec<f64>> {
        let (wd, wp) = w.split_at(self.split);
        let d = upstream.len();
        let mut g_out = vec![vec![0.0; d], vec![0.0; d]];
        for i in 0..d {
            if !cache.active.get(i).copied().unwrap_or(false) {
                continue;
            }
            let gv = upstream[i] / cache.lipschitz;
            if cache.nonzero[i] {
                g_out[0][i] = gv;
            } else {
                g_out[1][i] = gv * cache.momentum_norm;
            }
        }
        let block = PerCoordBlock { spec: self.per_coord.clone(), weights: wp.to_vec() };
        let (g_channels, gp) = block.backward(&cache.per_coord, &g_out)?;
        let g_scales: Vec<f64> = g_channels
            .iter()
            .zip(&cache.directions)
            .map(|(gc, dc)| gc.iter().zip(dc).map(|(a, b)| a * b).sum())
            .collect();
        let mut grad = vec![0.0; w.len()];
        self.dense.backward(wd, &cache.dense, &g_scales, &mut grad[..self.split])?;
        grad[self.split..].copy_from_slice(&gp);
        Ok(grad)
    }

    /// `∇h(x) + λ·sign(x)` with `sign(0) = 0`.
    fn loss_gradient(&self, theta: &LassoInstance, x: &[f64]) -> Vec<f64> {
        theta
            .smooth_grad(x)
            .into_iter()
            .zip(x)
            .map(|(g, xi)| if *xi == 0.0 { g } else { g + theta.reg * xi.signum() })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learned::{Hyperparameters, LearnedAlgorithm};
    use crate::linalg::norm;
    use crate::problems::{sample_lasso_family, LassoConfig, LassoDesign, LassoInstanceData};
    use crate::rng::RandomnessStream;
    use crate::trajectory::UpdateRule;
    use rand::Rng;
    use std::sync::Arc;

    fn instance(seed: u64) -> LassoInstance {
        let cfg = LassoConfig { dim: 10, rows: 5, reg_range: [0.05, 0.2], entry_half_width: 0.5 };
        sample_lasso_family(&cfg, 1, &mut RandomnessStream::new(seed, 0).rng()).unwrap().1.remove(0)
    }

    fn sparse_state() -> AlgorithmState {
        AlgorithmState {
            x: vec![0.0, 0.5, 0.0, -1.0, 0.2, 0.0, 0.0, 0.3, 0.0, -0.4],
            x_prev: vec![0.1, 0.4, 0.0, -0.7, 0.0, 0.0, 0.2, 0.3, -0.1, -0.2],
            aux: vec![],
        }
    }

    #[test]
    fn zero_data_features() {
        let inst = instance(1);
        let zero = LassoInstance::from_data(
            inst.design.clone(),
            LassoInstanceData { rhs: vec![0.0; 5], reg: 0.3, reference_optimum: 0.0 },
        );
        let f = lasso_features(&zero, &AlgorithmState::new(vec![0.0; 10]));
        assert!(f.values[..11].iter().all(|v| *v == 0.0));
        assert_eq!(f.get("regularization"), Some(0.3));
    }

    #[test]
    fn split_norms_are_pythagorean() {
        let inst = instance(2);
        let s = sparse_state();
        let g = inst.smooth_grad(&s.x);
        let nz: Vec<bool> = s.x.iter().map(|v| *v != 0.0).collect();
        let (a, b) = split_norms(&g, &nz);
        assert!((a * a + b * b - norm(&g).powi(2)).abs() < 1e-12);
        let f = lasso_features(&inst, &s);
        assert!((f.values[0] - a.ln_1p()).abs() == 0.0);
        assert_eq!(f.get("delta_loss"), Some(inst.loss(&s.x) - inst.loss(&s.x_prev)));
    }

    #[test]
    fn zero_alpha_is_one_ista_step() {
        let inst = instance(3);
        let alg = LearnedAlgorithm::new::<LassoInstance>(LassoArchitecture::default(), Hyperparameters::zeros(layout())).unwrap();
        let s = sparse_state();
        let next = alg.step(&inst, &s, &mut RandomnessStream::new(0, 0).rng());
        assert_eq!(next.x, inst.prox_grad_point(&s.x));
    }

    #[test]
    fn prox_is_applied_last() {
        let inst = instance(4);
        let h = Hyperparameters::init(layout(), &mut RandomnessStream::new(5, 0).rng());
        let arch = LassoArchitecture::default();
        let s = sparse_state();
        let next = arch.update(&h.weights, &inst, &s);
        let (_, cache) = arch.update_cached(&h.weights, &inst, &s);
        for (xi, act) in next.x.iter().zip(&cache.active) {
            assert_eq!(*xi == 0.0, !act);
        }
    }

    #[test]
    fn weight_gradient_matches_finite_differences() {
        let inst = instance(6);
        let arch = LassoArchitecture::default();
        let mut rng = RandomnessStream::new(7, 0).rng();
        let w: Vec<f64> = (0..layout().n_params()).map(|_| rng.random_range(-0.3..0.3)).collect();
        let s = sparse_state();
        let u: Vec<f64> = (0..10).map(|i| (i as f64 * 0.7).cos()).collect();
        let obj = |w: &[f64]| arch.update(w, &inst, &s).x.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
        let (_, cache) = arch.update_cached(&w, &inst, &s);
        let grad = arch.backward(&w, &cache, &u).unwrap();
        let h = 1e-6;
        for k in (0..w.len()).step_by(11) {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[k] += h;
            wm[k] -= h;
            let fd = (obj(&wp) - obj(&wm)) / (2.0 * h);
            assert!((fd - grad[k]).abs() <= 1e-5 * (1.0 + fd.abs()), "{k}: {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn degenerate_states_stay_finite() {
        let inst = instance(8);
        let design: Arc<LassoDesign> = inst.design.clone();
        let zero = LassoInstance::from_data(design, LassoInstanceData { rhs: vec![0.0; 5], reg: 0.1, reference_optimum: 0.0 });
        let h = Hyperparameters::init(layout(), &mut RandomnessStream::new(9, 0).rng());
        let arch = LassoArchitecture::default();
        for (th, s) in [(&zero, AlgorithmState::new(vec![0.0; 10])), (&inst, AlgorithmState::new(vec![1.0; 10]))] {
            let next = arch.update(&h.weights, th, &s);
            assert!(next.is_finite());
            assert!(lasso_features(th, &s).values.iter().all(|v| v.is_finite()));
        }
    }
}
