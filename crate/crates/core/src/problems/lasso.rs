//! LASSO problems `½‖Ax − b‖² + λ‖x‖₁` sharing one design matrix.
//!
//! The trajectory loss of an instance is its suboptimality
//! `F(x) − F*`, with `F*` computed once per instance by a long FISTA run, so
//! that contraction and rate statistics measure progress toward the optimum.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::baselines::fista_minimize;
use crate::error::{Error, Result};
use crate::linalg::{norm, Matrix};
use crate::problems::quadratic::uniform;
use crate::trajectory::Problem;

/// Prox-residual threshold of the convergence set.
pub const RESIDUAL_TOL: f64 = 1e-6;

pub const POWER_ITER_TOL: f64 = 1e-10;
pub const POWER_ITER_MAX: usize = 10_000;

/// FISTA budget for the reference optimum of each instance.
const REFERENCE_ITERS: usize = 20_000;

/// Sampling ranges for the LASSO family.
///
/// Design entries are `U[-entry_half_width, entry_half_width]`, shared by
/// every instance; right-hand sides are standard multivariate normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LassoConfig {
    pub dim: usize,
    pub rows: usize,
    pub reg_range: [f64; 2],
    #[serde(default = "default_half_width")]
    pub entry_half_width: f64,
}

fn default_half_width() -> f64 {
    0.5
}

impl LassoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.rows == 0 || self.rows > self.dim {
            return Err(Error::Config(format!("need 0 < p <= d, got p = {}, d = {}", self.rows, self.dim)));
        }
        let [lo, hi] = self.reg_range;
        if !(0.0 < lo && lo <= hi && hi.is_finite()) {
            return Err(Error::Config(format!("invalid regularization range {:?}", self.reg_range)));
        }
        if !(self.entry_half_width > 0.0) {
            return Err(Error::Config("entry_half_width must be positive".into()));
        }
        Ok(())
    }
}

/// Shared design matrix with the largest eigenvalue of `AᵀA`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoDesign {
    pub matrix: Matrix,
    pub lipschitz: f64,
}

impl LassoDesign {
    pub fn new(matrix: Matrix) -> Result<Self> {
        let lipschitz = largest_eigenvalue_ata(&matrix)?;
        Ok(Self { matrix, lipschitz })
    }
}

/// `θ = (b, λ)` for a fixed design.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoInstance {
    pub design: Arc<LassoDesign>,
    pub rhs: Vec<f64>,
    pub reg: f64,
    /// `F*` up to the reference solver's accuracy.
    pub reference_optimum: f64,
}

/// Serializable per-instance payload of a [`LassoInstance`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoInstanceData {
    pub rhs: Vec<f64>,
    pub reg: f64,
    pub reference_optimum: f64,
}

/// Largest eigenvalue of `AᵀA` by power iteration from the normalized ones
/// vector, using the Rayleigh quotient as the estimate.
pub fn largest_eigenvalue_ata(a: &Matrix) -> Result<f64> {
    let mut v = vec![1.0 / (a.cols as f64).sqrt(); a.cols];
    let mut estimate = 0.0;
    for _ in 0..POWER_ITER_MAX {
        let w = a.tr_mul_vec(&a.mul_vec(&v));
        let next = crate::linalg::dot(&v, &w);
        let n = norm(&w);
        if n == 0.0 {
            return Ok(0.0);
        }
        v = w.iter().map(|x| x / n).collect();
        if (next - estimate).abs() <= POWER_ITER_TOL * next.abs() {
            return Ok(next);
        }
        estimate = next;
    }
    Err(Error::Numeric(format!("power iteration did not converge in {POWER_ITER_MAX} iterations")))
}

pub fn sample_lasso_design<R: Rng + ?Sized>(cfg: &LassoConfig, rng: &mut R) -> Result<LassoDesign> {
    cfg.validate()?;
    let h = cfg.entry_half_width;
    let data = (0..cfg.rows * cfg.dim).map(|_| rng.random_range(-h..=h)).collect();
    LassoDesign::new(Matrix { rows: cfg.rows, cols: cfg.dim, data })
}

pub fn sample_lasso_instance<R: Rng + ?Sized>(
    design: &Arc<LassoDesign>,
    cfg: &LassoConfig,
    rng: &mut R,
) -> Result<LassoInstance> {
    let reg = uniform(rng, cfg.reg_range);
    let rhs = (0..design.matrix.rows).map(|_| rng.sample(StandardNormal)).collect();
    LassoInstance::with_reference(design.clone(), rhs, reg)
}

/// One shared design plus `n` instances.
pub fn sample_lasso_family<R: Rng + ?Sized>(
    cfg: &LassoConfig,
    n: usize,
    rng: &mut R,
) -> Result<(Arc<LassoDesign>, Vec<LassoInstance>)> {
    let design = Arc::new(sample_lasso_design(cfg, rng)?);
    let instances = (0..n).map(|_| sample_lasso_instance(&design, cfg, rng)).collect::<Result<_>>()?;
    Ok((design, instances))
}

/// Componentwise `1{|v_i| > κ} (v_i − κ sign(v_i))`.
pub fn soft_threshold(v: &[f64], kappa: f64) -> Vec<f64> {
    v.iter()
        .map(|&vi| if vi.abs() > kappa { vi - kappa * vi.signum() } else { 0.0 })
        .collect()
}

impl LassoInstance {
    pub fn with_reference(design: Arc<LassoDesign>, rhs: Vec<f64>, reg: f64) -> Result<Self> {
        if rhs.len() != design.matrix.rows {
            return Err(Error::Shape("rhs length differs from design rows".into()));
        }
        let mut inst = Self { design, rhs, reg, reference_optimum: 0.0 };
        let x = fista_minimize(&inst, &vec![0.0; inst.dim()], REFERENCE_ITERS, 1e-13);
        inst.reference_optimum = inst.objective(&x);
        Ok(inst)
    }

    pub fn from_data(design: Arc<LassoDesign>, data: LassoInstanceData) -> Self {
        Self { design, rhs: data.rhs, reg: data.reg, reference_optimum: data.reference_optimum }
    }

    pub fn data(&self) -> LassoInstanceData {
        LassoInstanceData { rhs: self.rhs.clone(), reg: self.reg, reference_optimum: self.reference_optimum }
    }

    pub fn lipschitz(&self) -> f64 {
        self.design.lipschitz
    }

    /// Prox step size `β = 1/L`.
    pub fn step(&self) -> f64 {
        1.0 / self.design.lipschitz
    }

    fn residual(&self, x: &[f64]) -> Vec<f64> {
        let mut r = self.design.matrix.mul_vec(x);
        for (ri, bi) in r.iter_mut().zip(&self.rhs) {
            *ri -= bi;
        }
        r
    }

    /// `h(x) = ½‖Ax − b‖²`
    pub fn smooth_part(&self, x: &[f64]) -> f64 {
        0.5 * self.residual(x).iter().map(|r| r * r).sum::<f64>()
    }

    /// `g(x) = λ‖x‖₁`
    pub fn nonsmooth_part(&self, x: &[f64]) -> f64 {
        self.reg * x.iter().map(|v| v.abs()).sum::<f64>()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.smooth_part(x) + self.nonsmooth_part(x)
    }

    /// `∇h(x) = Aᵀ(Ax − b)`
    pub fn smooth_grad(&self, x: &[f64]) -> Vec<f64> {
        self.design.matrix.tr_mul_vec(&self.residual(x))
    }

    /// `prox_{βg}(x − β∇h(x))` with `β = 1/L`.
    pub fn prox_grad_point(&self, x: &[f64]) -> Vec<f64> {
        let beta = self.step();
        let g = self.smooth_grad(x);
        let v: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - beta * gi).collect();
        soft_threshold(&v, beta * self.reg)
    }

    pub fn prox_residual(&self, x: &[f64]) -> f64 {
        let p = self.prox_grad_point(x);
        norm(&crate::linalg::sub(x, &p))
    }

    pub fn converged(&self, x: &[f64]) -> bool {
        self.prox_residual(x) < RESIDUAL_TOL
    }

    /// `F(x) − F*`, floored at zero.
    pub fn suboptimality(&self, x: &[f64]) -> f64 {
        (self.objective(x) - self.reference_optimum).max(0.0)
    }
}

impl Problem for LassoInstance {
    fn dim(&self) -> usize {
        self.design.matrix.cols
    }

    fn loss(&self, x: &[f64]) -> f64 {
        self.suboptimality(x)
    }

    fn in_convergence_set(&self, x: &[f64]) -> bool {
        self.converged(x)
    }

    /// `Aᵀb / L`: a dense start away from the sparse solution.
    fn initial_point(&self) -> Vec<f64> {
        let beta = self.step();
        self.design.matrix.tr_mul_vec(&self.rhs).into_iter().map(|v| beta * v).collect()
    }
}
