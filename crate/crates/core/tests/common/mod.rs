#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use l2o_cert::learned::{Architecture, LassoArchitecture, QuadArchitecture};
use l2o_cert::problems::{sample_lasso_set, sample_quadratics, LassoConfig, LassoInstance, QuadraticConfig, QuadraticInstance};
use l2o_cert::rng::RandomnessStream;
use l2o_cert::trajectory::{AlgorithmState, Problem};
use rand::Rng;

/// Relative error of the analytic α-gradient of the one-step training loss
/// `ℓ(x⁺)/ℓ(x)` against central differences over every weight, or `None`
/// when some stencil `w ± h e_k` straddles a kink (ReLU or soft-threshold
/// boundary), detected by disagreeing one-sided differences.
pub fn training_gradient_error<P: Problem, A: Architecture<P>>(arch: &A, w: &[f64], theta: &P, state: &AlgorithmState) -> Option<f64> {
    let lt = theta.loss(&state.x);
    let objective = |w: &[f64]| theta.loss(&arch.update(w, theta, state).x) / lt;
    let (next, cache) = arch.update_cached(w, theta, state);
    let u: Vec<f64> = arch.loss_gradient(theta, &next.x).iter().map(|g| g / lt).collect();
    let analytic = arch.backward(w, &cache, &u).unwrap();
    let h = 1e-6;
    let f0 = objective(w);
    let mut wp = w.to_vec();
    let mut numeric = Vec::with_capacity(w.len());
    let mut one_sided_gap: f64 = 0.0;
    for k in 0..w.len() {
        wp[k] = w[k] + h;
        let fp = objective(&wp);
        wp[k] = w[k] - h;
        let fm = objective(&wp);
        wp[k] = w[k];
        numeric.push((fp - fm) / (2.0 * h));
        one_sided_gap = one_sided_gap.max((((fp - f0) - (f0 - fm)) / h).abs());
    }
    let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = numeric.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    (one_sided_gap <= 1e-4 * scale).then_some(diff / scale)
}

/// Errors on `n` configurations that avoid kinks, and the number of drawn
/// configurations that were redrawn because they did not.
pub struct GradientSweep {
    pub errors: Vec<f64>,
    pub redrawn: usize,
}

fn random_weights(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-0.1..=0.1)).collect()
}

/// Small iterate close to the minimizer after a long previous step. Near the
/// minimizer `ℓ_train` is sensitive to the tiny learned step, and a small
/// `x` keeps that step from being rounded away in `x + βd`.
fn near_minimizer_state(p: &QuadraticInstance, rng: &mut impl Rng) -> AlgorithmState {
    let x: Vec<f64> = p.minimizer().iter().map(|v| v + rng.random_range(-1e-7..=1e-7)).collect();
    let x_prev = x.iter().map(|v| v + rng.random_range(-10.0..=10.0)).collect();
    AlgorithmState { x, x_prev, aux: Vec::new() }
}

/// Sparse iterate far from its predecessor, so that the learned correction
/// dominates the rounding of `x⁺`.
fn sparse_state(d: usize, rng: &mut impl Rng) -> AlgorithmState {
    let x: Vec<f64> = (0..d).map(|_| if rng.random_bool(0.5) { 0.0 } else { rng.random_range(-0.01..=0.01) }).collect();
    let x_prev = x.iter().map(|v| v + rng.random_range(-100.0..=100.0)).collect();
    AlgorithmState { x, x_prev, aux: Vec::new() }
}

/// Gradient errors of the quadratic architecture on `n` random
/// (problem, state, weights) configurations.
pub fn quadratic_gradient_errors(n: usize, seed: u64) -> GradientSweep {
    let cfg = QuadraticConfig { dim: 6, m_range: [0.05, 0.5], l_range: [1.0, 10.0] };
    let arch = QuadArchitecture::default();
    let n_params = Architecture::<QuadraticInstance>::layout(&arch).n_params();
    let mut rng = RandomnessStream::new(seed, 2).rng();
    let mut sweep = GradientSweep { errors: Vec::new(), redrawn: 0 };
    let mut i = 0;
    while sweep.errors.len() < n {
        let mut p = sample_quadratics(&cfg, RandomnessStream::new(seed, 1), i..i + 1).unwrap().remove(0);
        i += 1;
        p.rhs.iter_mut().for_each(|b| *b *= 1e-6);
        let w = random_weights(n_params, &mut rng);
        let s = near_minimizer_state(&p, &mut rng);
        match training_gradient_error(&arch, &w, &p, &s) {
            Some(e) => sweep.errors.push(e),
            None => sweep.redrawn += 1,
        }
    }
    sweep
}

pub fn lasso_gradient_errors(n: usize, seed: u64) -> GradientSweep {
    let cfg = LassoConfig { dim: 20, rows: 10, reg_range: [0.05, 0.2], entry_half_width: 0.5 };
    let arch = LassoArchitecture::default();
    let n_params = Architecture::<LassoInstance>::layout(&arch).n_params();
    let mut rng = RandomnessStream::new(seed, 2).rng();
    let mut sweep = GradientSweep { errors: Vec::new(), redrawn: 0 };
    let mut batch = 0;
    while sweep.errors.len() < n {
        let (_, problems) = sample_lasso_set(&cfg, RandomnessStream::new(seed, 1 + batch), 0..n).unwrap();
        batch += 1;
        for p in &problems {
            if sweep.errors.len() == n {
                break;
            }
            let w = random_weights(n_params, &mut rng);
            let s = sparse_state(p.dim(), &mut rng);
            match training_gradient_error(&arch, &w, p, &s) {
                Some(e) => sweep.errors.push(e),
                None => sweep.redrawn += 1,
            }
        }
    }
    sweep
}

/// Plain ISTA written against the raw design entries.
pub fn ista_oracle(inst: &LassoInstance, x0: &[f64], iterations: usize) -> Vec<Vec<f64>> {
    let a = &inst.design.matrix;
    let (p, d) = (a.rows, a.cols);
    let step = 1.0 / inst.design.lipschitz;
    let mut x = x0.to_vec();
    let mut out = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let mut r = vec![0.0; p];
        for i in 0..p {
            r[i] = (0..d).map(|j| a.data[i * d + j] * x[j]).sum::<f64>() - inst.rhs[i];
        }
        let g: Vec<f64> = (0..d).map(|j| (0..p).map(|i| a.data[i * d + j] * r[i]).sum()).collect();
        let kappa = step * inst.reg;
        x = x
            .iter()
            .zip(&g)
            .map(|(xi, gi)| {
                let v = xi - step * gi;
                v.signum() * (v.abs() - kappa).max(0.0)
            })
            .collect();
        out.push(x.clone());
    }
    out
}

/// Every file below `dir`, keyed by relative path.
pub fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let key = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(key, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}
