//! Diagonal least-squares problems `½‖Ax − b‖²` with controlled strong
//! convexity and smoothness.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::trajectory::Problem;

/// Loss threshold of the convergence set.
pub const LOSS_TOL: f64 = 1e-8;
/// Gradient-norm threshold of the convergence set.
pub const GRAD_TOL: f64 = 1e-6;

/// Sampling ranges for the quadratic family.
///
/// The right-hand side is drawn with i.i.d. standard normal entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticConfig {
    pub dim: usize,
    pub m_range: [f64; 2],
    pub l_range: [f64; 2],
}

impl QuadraticConfig {
    pub fn validate(&self) -> Result<()> {
        let [m_lo, m_hi] = self.m_range;
        let [l_lo, l_hi] = self.l_range;
        if self.dim == 0 {
            return Err(Error::Config("quadratic dimension must be positive".into()));
        }
        if !(0.0 < m_lo && m_lo <= m_hi && m_hi <= l_lo && l_lo <= l_hi && l_hi.is_finite()) {
            return Err(Error::Config(format!(
                "need 0 < m_- <= m_+ <= L_- <= L_+, got m in {:?}, L in {:?}",
                self.m_range, self.l_range
            )));
        }
        Ok(())
    }
}

/// `θ = (A, b)` with `A = diag(diag)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticInstance {
    pub diag: Vec<f64>,
    pub rhs: Vec<f64>,
    pub strong_convexity: f64,
    pub smoothness: f64,
}

/// `a_ii = √m + i (√L − √m) / d` for `i = 1..=d`.
pub fn quadratic_diagonal(m: f64, l: f64, d: usize) -> Vec<f64> {
    let (sm, sl) = (m.sqrt(), l.sqrt());
    (1..=d).map(|i| sm + i as f64 * (sl - sm) / d as f64).collect()
}

pub fn sample_quadratic<R: Rng + ?Sized>(cfg: &QuadraticConfig, rng: &mut R) -> Result<QuadraticInstance> {
    cfg.validate()?;
    let m = uniform(rng, cfg.m_range);
    let l = uniform(rng, cfg.l_range);
    let rhs = (0..cfg.dim).map(|_| rng.sample(StandardNormal)).collect();
    Ok(QuadraticInstance { diag: quadratic_diagonal(m, l, cfg.dim), rhs, strong_convexity: m, smoothness: l })
}

pub(crate) fn uniform<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

impl QuadraticInstance {
    fn residual<'a>(&'a self, x: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
        self.diag.iter().zip(x).zip(&self.rhs).map(|((a, xi), b)| a * xi - b)
    }

    /// `½‖Ax − b‖²`
    pub fn loss(&self, x: &[f64]) -> f64 {
        0.5 * self.residual(x).map(|r| r * r).sum::<f64>()
    }

    /// `Aᵀ(Ax − b)`
    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        self.residual(x).zip(&self.diag).map(|(r, a)| a * r).collect()
    }

    pub fn converged(&self, x: &[f64]) -> bool {
        self.loss(x) < LOSS_TOL || norm(&self.grad(x)) < GRAD_TOL
    }

    /// The unique minimizer `A⁻¹b`.
    pub fn minimizer(&self) -> Vec<f64> {
        self.rhs.iter().zip(&self.diag).map(|(b, a)| b / a).collect()
    }
}

impl Problem for QuadraticInstance {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn loss(&self, x: &[f64]) -> f64 {
        QuadraticInstance::loss(self, x)
    }

    fn in_convergence_set(&self, x: &[f64]) -> bool {
        self.converged(x)
    }
}
