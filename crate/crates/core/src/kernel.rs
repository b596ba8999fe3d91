//! Exact finite-state transition kernels.
//!
//! On a finite state space a transition kernel is a row-stochastic matrix,
//! kernel composition is a matrix product and path laws are finite joint
//! distributions. This makes the semigroup, product and factorization
//! identities of the trajectory model checkable to machine precision.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Tolerance for row sums and total masses.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Upper bound on the number of explicitly enumerated paths of one chain.
pub const MAX_PATHS: u128 = 100_000;

/// Upper bound on the number of joint paths visited by
/// [`joint_factorization_check`]. The joint paths are streamed, never stored.
pub const MAX_JOINT_PATHS: u128 = 1 << 25;

/// Row-stochastic matrix `probs[x][y] = P(next = y | current = x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteKernel {
    probs: Matrix,
}

impl FiniteKernel {
    pub fn new(rows: usize, cols: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != rows * cols {
            return Err(Error::Shape(format!(
                "expected {rows}x{cols} = {} entries, got {}",
                rows * cols,
                probs.len()
            )));
        }
        let kernel = Self { probs: Matrix { rows, cols, data: probs } };
        kernel.validate()?;
        Ok(kernel)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged kernel rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        Self { probs: Matrix::identity(n) }
    }

    fn validate(&self) -> Result<()> {
        for r in 0..self.rows() {
            let row = self.probs.row(r);
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Argument(format!("row {r} has an entry outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::Argument(format!("row {r} sums to {s}, not 1")));
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.probs.rows
    }

    pub fn cols(&self) -> usize {
        self.probs.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    #[inline]
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.probs.get(from, to)
    }

    pub fn row(&self, from: usize) -> &[f64] {
        self.probs.row(from)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.probs
    }

    pub fn max_abs_diff(&self, other: &FiniteKernel) -> f64 {
        self.probs.max_abs_diff(&other.probs)
    }
}

/// Nonnegative weights over a finite state space.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMeasure {
    pub weights: Vec<f64>,
}

impl FiniteMeasure {
    /// Probability measure; weights must be nonnegative and sum to one.
    pub fn probability(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Argument("negative or NaN measure weight".into()));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::Argument(format!("probability weights sum to {s}")));
        }
        Ok(Self { weights })
    }

    pub fn dirac(n: usize, at: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[at] = 1.0;
        Self { weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `μγ(B) = Σ_x μ(x) γ(x, B)`
    pub fn push(&self, gamma: &FiniteKernel) -> Result<FiniteMeasure> {
        if self.len() != gamma.rows() {
            return Err(Error::Shape(format!(
                "measure over {} states pushed through kernel with {} rows",
                self.len(),
                gamma.rows()
            )));
        }
        let mut out = vec![0.0; gamma.cols()];
        for (x, &w) in self.weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(gamma.row(x)) {
                *o += w * p;
            }
        }
        Ok(FiniteMeasure { weights: out })
    }
}

/// Joint law of `(ξ^{t_0}, …, ξ^{t_{K}})` on a finite state space.
///
/// Paths are indexed in mixed radix with the earliest time point most
/// significant.
#[derive(Debug, Clone, PartialEq)]
pub struct PathDistribution {
    pub n_states: usize,
    pub horizon: usize,
    pub joint: Vec<f64>,
}

impl PathDistribution {
    pub fn index(&self, path: &[usize]) -> usize {
        path_index(path, self.n_states)
    }

    pub fn prob(&self, path: &[usize]) -> f64 {
        self.joint[self.index(path)]
    }

    pub fn total(&self) -> f64 {
        self.joint.iter().sum()
    }

    /// Marginal law of the `k`-th recorded time point.
    pub fn marginal(&self, k: usize) -> FiniteMeasure {
        let mut weights = vec![0.0; self.n_states];
        let stride = self.n_states.pow((self.horizon - 1 - k) as u32);
        for (i, p) in self.joint.iter().enumerate() {
            weights[(i / stride) % self.n_states] += p;
        }
        FiniteMeasure { weights }
    }

    /// Probability of the set of paths satisfying `event`.
    pub fn event_prob(&self, event: &dyn Fn(&[usize]) -> bool) -> f64 {
        let mut path = vec![0; self.horizon];
        let mut p = 0.0;
        for (i, w) in self.joint.iter().enumerate() {
            path_from_index(i, self.n_states, &mut path);
            if event(&path) {
                p += w;
            }
        }
        p
    }
}

fn path_index(path: &[usize], n: usize) -> usize {
    path.iter().fold(0, |acc, &s| acc * n + s)
}

fn path_from_index(mut i: usize, n: usize, out: &mut [usize]) {
    for slot in out.iter_mut().rev() {
        *slot = i % n;
        i /= n;
    }
}

fn check_enumeration(n: usize, len: usize, limit: u128) -> Result<()> {
    let requested = (n as u128).checked_pow(len as u32).unwrap_or(u128::MAX);
    if requested > limit {
        return Err(Error::TooLarge { requested, limit });
    }
    Ok(())
}

/// `(μν)(x, B) = Σ_y μ(x, y) ν(y, B)`.
pub fn kernel_compose(mu: &FiniteKernel, nu: &FiniteKernel) -> Result<FiniteKernel> {
    if mu.cols() != nu.rows() {
        return Err(Error::Shape(format!(
            "cannot compose {}x{} with {}x{}",
            mu.rows(),
            mu.cols(),
            nu.rows(),
            nu.cols()
        )));
    }
    Ok(FiniteKernel { probs: mu.probs.matmul(&nu.probs) })
}

/// `(μ⊗ν)(x, (y, z)) = μ(x, y) ν(y, z)`; the target pair `(y, z)` is stored
/// at column `y * nu.cols() + z`.
pub fn kernel_product(mu: &FiniteKernel, nu: &FiniteKernel) -> Result<FiniteKernel> {
    if mu.cols() != nu.rows() {
        return Err(Error::Shape(format!(
            "cannot form product of {}x{} and {}x{}",
            mu.rows(),
            mu.cols(),
            nu.rows(),
            nu.cols()
        )));
    }
    let zc = nu.cols();
    let mut probs = Matrix::zeros(mu.rows(), mu.cols() * zc);
    for x in 0..mu.rows() {
        for y in 0..mu.cols() {
            let m = mu.prob(x, y);
            for z in 0..zc {
                probs.data[x * probs.cols + y * zc + z] = m * nu.prob(y, z);
            }
        }
    }
    Ok(FiniteKernel { probs })
}

/// `γ^t` with `γ^0 = δ`.
pub fn semigroup_power(gamma: &FiniteKernel, t: usize) -> Result<FiniteKernel> {
    if !gamma.is_square() {
        return Err(Error::Shape("semigroup power of a non-square kernel".into()));
    }
    let mut acc = FiniteKernel::identity(gamma.rows());
    for _ in 0..t {
        acc = kernel_compose(&acc, gamma)?;
    }
    Ok(acc)
}

/// Joint law of the chain at the strictly increasing `times`, started from
/// `init` at time 0.
pub fn path_law(init: &FiniteMeasure, gamma: &FiniteKernel, times: &[usize]) -> Result<PathDistribution> {
    if times.is_empty() {
        return Err(Error::Argument("empty time list".into()));
    }
    if times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Argument(format!("times {times:?} are not strictly increasing")));
    }
    if !gamma.is_square() || init.len() != gamma.rows() {
        return Err(Error::Shape("init/kernel dimension mismatch".into()));
    }
    let n = gamma.rows();
    check_enumeration(n, times.len(), MAX_PATHS)?;

    let first = init.push(&semigroup_power(gamma, times[0])?)?;
    let mut joint = first.weights;
    for w in times.windows(2) {
        let gap = semigroup_power(gamma, w[1] - w[0])?;
        let mut next = vec![0.0; joint.len() * n];
        for (i, &p) in joint.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let last = i % n;
            for (y, q) in gap.row(last).iter().enumerate() {
                next[i * n + y] = p * q;
            }
        }
        joint = next;
    }
    Ok(PathDistribution { n_states: n, horizon: times.len(), joint })
}

/// Kernel of `N` independently evolving chains on the product space.
///
/// Product states are mixed-radix with chain 0 most significant.
pub fn tensor_kernel(gammas: &[FiniteKernel]) -> Result<FiniteKernel> {
    if gammas.iter().any(|g| !g.is_square()) {
        return Err(Error::Shape("tensor of non-square kernels".into()));
    }
    let sizes: Vec<usize> = gammas.iter().map(FiniteKernel::rows).collect();
    let total: usize = sizes.iter().product();
    let mut probs = Matrix::zeros(total, total);
    let mut from = vec![0; sizes.len()];
    let mut to = vec![0; sizes.len()];
    for i in 0..total {
        mixed_radix(i, &sizes, &mut from);
        for j in 0..total {
            mixed_radix(j, &sizes, &mut to);
            probs.data[i * total + j] =
                gammas.iter().enumerate().map(|(n, g)| g.prob(from[n], to[n])).product();
        }
    }
    Ok(FiniteKernel { probs })
}

/// Product measure over the same mixed-radix product space as [`tensor_kernel`].
pub fn tensor_measure(inits: &[FiniteMeasure]) -> FiniteMeasure {
    let sizes: Vec<usize> = inits.iter().map(FiniteMeasure::len).collect();
    let total: usize = sizes.iter().product();
    let mut digits = vec![0; sizes.len()];
    let weights = (0..total)
        .map(|i| {
            mixed_radix(i, &sizes, &mut digits);
            inits.iter().zip(&digits).map(|(m, &d)| m.weights[d]).product()
        })
        .collect();
    FiniteMeasure { weights }
}

fn mixed_radix(mut i: usize, sizes: &[usize], out: &mut [usize]) {
    for (slot, &s) in out.iter_mut().zip(sizes).rev() {
        *slot = i % s;
        i /= s;
    }
}

/// Maximum absolute discrepancy between the path law of the joint chain on
/// `S_1 × … × S_N` and the product of the individual path laws, over all
/// joint paths of `horizon` consecutive time points starting at 0.
pub fn joint_factorization_check(
    gammas: &[FiniteKernel],
    inits: &[FiniteMeasure],
    horizon: usize,
) -> Result<f64> {
    if gammas.len() != inits.len() || gammas.is_empty() {
        return Err(Error::Shape("need one initial law per kernel".into()));
    }
    if horizon == 0 {
        return Err(Error::Argument("horizon must be positive".into()));
    }
    let times: Vec<usize> = (0..horizon).collect();
    let per_chain = gammas
        .iter()
        .zip(inits)
        .map(|(g, m)| path_law(m, g, &times))
        .collect::<Result<Vec<_>>>()?;

    let joint_gamma = tensor_kernel(gammas)?;
    let joint_init = tensor_measure(inits);
    let n_joint = joint_gamma.rows();
    check_enumeration(n_joint, horizon, MAX_JOINT_PATHS)?;

    let sizes: Vec<usize> = gammas.iter().map(FiniteKernel::rows).collect();
    let mut digits = vec![0; sizes.len()];
    let mut chain_paths = vec![vec![0usize; horizon]; sizes.len()];
    let mut joint_path = vec![0usize; horizon];
    let mut worst: f64 = 0.0;

    let total = (n_joint as u128).pow(horizon as u32) as usize;
    for idx in 0..total {
        path_from_index(idx, n_joint, &mut joint_path);
        let mut p_joint = joint_init.weights[joint_path[0]];
        for w in joint_path.windows(2) {
            p_joint *= joint_gamma.prob(w[0], w[1]);
        }
        for (t, &s) in joint_path.iter().enumerate() {
            mixed_radix(s, &sizes, &mut digits);
            for (n, &d) in digits.iter().enumerate() {
                chain_paths[n][t] = d;
            }
        }
        let p_factored: f64 = per_chain.iter().zip(&chain_paths).map(|(law, path)| law.prob(path)).product();
        worst = worst.max((p_joint - p_factored).abs());
    }
    Ok(worst)
}

/// Exact law of `τ = min(t_max, inf{t ≥ 0 : ξ^t ∈ target})`, returned as
/// masses for `τ = 0, …, t_max`.
pub fn hitting_time_law(
    init: &FiniteMeasure,
    gamma: &FiniteKernel,
    target: &[usize],
    t_max: usize,
) -> Result<Vec<f64>> {
    if !gamma.is_square() || init.len() != gamma.rows() {
        return Err(Error::Shape("init/kernel dimension mismatch".into()));
    }
    let n = gamma.rows();
    if let Some(&bad) = target.iter().find(|&&s| s >= n) {
        return Err(Error::Argument(format!("target state {bad} out of range")));
    }
    let mut in_target = vec![false; n];
    for &s in target {
        in_target[s] = true;
    }
    let mut law = vec![0.0; t_max + 1];
    // Mass that has not yet entered the target.
    let mut alive = init.weights.clone();
    for t in 0..t_max {
        for s in 0..n {
            if in_target[s] {
                law[t] += alive[s];
                alive[s] = 0.0;
            }
        }
        alive = FiniteMeasure { weights: alive }.push(gamma)?.weights;
    }
    law[t_max] = alive.iter().sum();
    Ok(law)
}

/// Both sides of the Bernoulli Laplace-transform identity for `n_chains`
/// i.i.d. copies of the chain observed over `horizon` time points:
///
/// * `lhs = E[exp(-(λ/N) Σ_n 1_A(path_n))]` by enumerating all `N`-tuples of
///   paths,
/// * `rhs = (1 - (1 - e^{-λ/N}) p)^N` with `p = P(A)`.
pub fn bernoulli_laplace_check(
    gamma: &FiniteKernel,
    init: &FiniteMeasure,
    event: &dyn Fn(&[usize]) -> bool,
    horizon: usize,
    lambda: f64,
    n_chains: usize,
) -> Result<(f64, f64)> {
    if n_chains == 0 {
        return Err(Error::Argument("need at least one chain".into()));
    }
    let times: Vec<usize> = (0..horizon).collect();
    let law = path_law(init, gamma, &times)?;
    let n_paths = law.joint.len();
    check_enumeration(n_paths, n_chains, MAX_JOINT_PATHS)?;

    let mut path = vec![0; horizon];
    let hits: Vec<bool> = (0..n_paths)
        .map(|i| {
            path_from_index(i, law.n_states, &mut path);
            event(&path)
        })
        .collect();
    let p: f64 = law.joint.iter().zip(&hits).filter(|(_, &h)| h).map(|(w, _)| w).sum();

    let scale = lambda / n_chains as f64;
    let total = (n_paths as u128).pow(n_chains as u32) as usize;
    let mut tuple = vec![0; n_chains];
    let mut lhs = 0.0;
    for idx in 0..total {
        path_from_index(idx, n_paths, &mut tuple);
        let mut weight = 1.0;
        let mut count = 0usize;
        for &pi in &tuple {
            weight *= law.joint[pi];
            count += hits[pi] as usize;
        }
        if weight != 0.0 {
            lhs += weight * (-scale * count as f64).exp();
        }
    }
    let rhs = (1.0 - (1.0 - (-scale).exp()) * p).powi(n_chains as i32);
    Ok((lhs, rhs))
}

/// Tolerance of the randomized self-check.
pub const CHECK_TOL: f64 = 1e-12;

/// Random row-stochastic `rows × cols` kernel with some exact zeros.
pub fn random_kernel<R: rand::Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> FiniteKernel {
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let mut row: Vec<f64> = (0..cols).map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() }).collect();
        if row.iter().all(|v| *v == 0.0) {
            row[rng.random_range(0..cols)] = 1.0;
        }
        let total: f64 = row.iter().sum();
        data.extend(row.iter().map(|v| v / total));
    }
    FiniteKernel { probs: Matrix { rows, cols, data } }
}

/// Random probability vector on `n` states.
pub fn random_measure<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> FiniteMeasure {
    let k = random_kernel(1, n, rng);
    FiniteMeasure { weights: k.row(0).to_vec() }
}

/// Randomized checks of the kernel identities on small instances
/// (`|S| ≤ 4`, horizon `≤ 4`, `N ≤ 3` chains). Returns the largest
/// deviation observed for each identity.
pub fn self_check(seed: u64) -> Result<Vec<(&'static str, f64)>> {
    use rand::Rng;
    let mut rng = crate::rng::RandomnessStream::new(seed, 0).rng();
    let mut ck: f64 = 0.0;
    let mut marginal: f64 = 0.0;
    let mut factor: f64 = 0.0;
    let mut laplace: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(2..=4);
        let g = random_kernel(n, n, &mut rng);
        let (s, t) = (rng.random_range(0..4), rng.random_range(0..4));
        let lhs = semigroup_power(&g, s + t)?;
        let rhs = kernel_compose(&semigroup_power(&g, s)?, &semigroup_power(&g, t)?)?;
        ck = ck.max(lhs.max_abs_diff(&rhs));

        let m = rng.random_range(2..=4);
        let nu = random_kernel(n, m, &mut rng);
        let prod = kernel_product(&g, &nu)?;
        let comp = kernel_compose(&g, &nu)?;
        for x in 0..n {
            for z in 0..m {
                let second: f64 = (0..n).map(|y| prod.prob(x, y * m + z)).sum();
                marginal = marginal.max((second - comp.prob(x, z)).abs());
            }
            for y in 0..n {
                let first: f64 = (0..m).map(|z| prod.prob(x, y * m + z)).sum();
                marginal = marginal.max((first - g.prob(x, y)).abs());
            }
        }
    }
    for _ in 0..4 {
        let chains = rng.random_range(1..=3);
        let horizon = rng.random_range(1..=4);
        let sizes: Vec<usize> = (0..chains).map(|_| rng.random_range(2..=4)).collect();
        let joint: u128 = sizes.iter().map(|&s| s as u128).product::<u128>().pow(horizon as u32);
        if joint > MAX_JOINT_PATHS {
            continue;
        }
        let gammas: Vec<_> = sizes.iter().map(|&s| random_kernel(s, s, &mut rng)).collect();
        let inits: Vec<_> = sizes.iter().map(|&s| random_measure(s, &mut rng)).collect();
        factor = factor.max(joint_factorization_check(&gammas, &inits, horizon)?);
    }
    for _ in 0..10 {
        let n = rng.random_range(2..=4);
        let horizon = rng.random_range(1..=4);
        let chains = rng.random_range(1..=3);
        let g = random_kernel(n, n, &mut rng);
        let init = random_measure(n, &mut rng);
        let target = rng.random_range(0..n);
        let event = move |path: &[usize]| path.contains(&target);
        let lambda = rng.random_range(0.1..5.0);
        let (l, r) = bernoulli_laplace_check(&g, &init, &event, horizon, lambda, chains)?;
        laplace = laplace.max((l - r).abs());
    }
    Ok(vec![
        ("chapman-kolmogorov", ck),
        ("product marginals", marginal),
        ("joint factorization", factor),
        ("bernoulli laplace identity", laplace),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> FiniteKernel {
        FiniteKernel::from_rows(&[vec![0.5, 0.5], vec![0.1, 0.9]]).unwrap()
    }

    #[test]
    fn self_check_passes() {
        for (name, dev) in self_check(7).unwrap() {
            assert!(dev <= CHECK_TOL, "{name}: {dev}");
        }
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        assert!(FiniteKernel::from_rows(&[vec![0.5, 0.6]]).is_err());
        assert!(FiniteKernel::from_rows(&[vec![1.5, -0.5]]).is_err());
        assert!(FiniteKernel::new(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn compose_identity_cases() {
        let k = two_state();
        let id = FiniteKernel::identity(2);
        assert_eq!(kernel_compose(&id, &k).unwrap(), k);
        assert_eq!(kernel_compose(&k, &id).unwrap(), k);
    }

    #[test]
    fn compose_two_state_by_hand() {
        let k = two_state();
        let kk = kernel_compose(&k, &k).unwrap();
        // 0.5*0.5 + 0.5*0.1
        assert!((kk.prob(0, 0) - 0.30).abs() < 1e-15);
        assert!((kk.prob(1, 1) - (0.1 * 0.5 + 0.9 * 0.9)).abs() < 1e-15);
    }

    #[test]
    fn compose_shape_error() {
        let a = FiniteKernel::from_rows(&[vec![0.5, 0.5]]).unwrap();
        let b = FiniteKernel::from_rows(&[vec![1.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(kernel_compose(&a, &b), Err(Error::Shape(_))));
        assert!(matches!(kernel_product(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn product_entries_and_dirac() {
        let mu = two_state();
        let nu = FiniteKernel::from_rows(&[vec![0.2, 0.8], vec![0.7, 0.3]]).unwrap();
        let prod = kernel_product(&mu, &nu).unwrap();
        // (μ⊗ν)(0, (0, 1)) = μ(0,0) ν(0,1)
        assert!((prod.prob(0, 1) - 0.5 * 0.8).abs() < 1e-15);
        // all four pairs from state 1
        for y in 0..2 {
            for z in 0..2 {
                assert!((prod.prob(1, y * 2 + z) - mu.prob(1, y) * nu.prob(y, z)).abs() < 1e-15);
            }
        }
        let dirac = FiniteKernel::identity(2);
        let dp = kernel_product(&dirac, &nu).unwrap();
        for x in 0..2 {
            for y in 0..2 {
                for z in 0..2 {
                    let expect = if y == x { nu.prob(x, z) } else { 0.0 };
                    assert_eq!(dp.prob(x, y * 2 + z), expect);
                }
            }
        }
    }

    #[test]
    fn power_zero_and_one() {
        let k = two_state();
        assert_eq!(semigroup_power(&k, 0).unwrap(), FiniteKernel::identity(2));
        assert_eq!(semigroup_power(&k, 1).unwrap(), k);
    }

    #[test]
    fn path_law_single_time_zero_is_init() {
        let init = FiniteMeasure::probability(vec![0.3, 0.7]).unwrap();
        let law = path_law(&init, &two_state(), &[0]).unwrap();
        assert_eq!(law.joint, init.weights);
    }

    #[test]
    fn path_law_rejects_unsorted_times() {
        let init = FiniteMeasure::dirac(2, 0);
        assert!(matches!(path_law(&init, &two_state(), &[2, 1]), Err(Error::Argument(_))));
        assert!(matches!(path_law(&init, &two_state(), &[1, 1]), Err(Error::Argument(_))));
    }

    #[test]
    fn path_law_size_guard() {
        let k = FiniteKernel::identity(10);
        let init = FiniteMeasure::dirac(10, 0);
        let times: Vec<usize> = (0..6).collect();
        assert!(matches!(path_law(&init, &k, &times), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn permutation_kernel_gives_point_mass_on_orbit() {
        let perm = FiniteKernel::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
        ])
        .unwrap();
        let law = path_law(&FiniteMeasure::dirac(3, 0), &perm, &[0, 1, 2, 3, 4]).unwrap();
        assert_eq!(law.prob(&[0, 1, 2, 0, 1]), 1.0);
        assert_eq!(law.total(), 1.0);
    }

    #[test]
    fn factorization_single_chain_is_exact() {
        let dev = joint_factorization_check(
            &[two_state()],
            &[FiniteMeasure::probability(vec![0.4, 0.6]).unwrap()],
            3,
        )
        .unwrap();
        assert_eq!(dev, 0.0);
    }

    #[test]
    fn factorization_dirac_identical_chains() {
        let k = two_state();
        let dev = joint_factorization_check(
            &[k.clone(), k],
            &[FiniteMeasure::dirac(2, 1), FiniteMeasure::dirac(2, 1)],
            4,
        )
        .unwrap();
        assert!(dev < 1e-12);
    }

    #[test]
    fn hitting_time_trivial_cases() {
        let k = two_state();
        let law = hitting_time_law(&FiniteMeasure::dirac(2, 1), &k, &[1], 5).unwrap();
        assert_eq!(law[0], 1.0);
        assert!(law[1..].iter().all(|&p| p == 0.0));

        let law = hitting_time_law(&FiniteMeasure::dirac(2, 0), &k, &[], 5).unwrap();
        assert_eq!(law[5], 1.0);
        assert_eq!(law.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn bernoulli_trivial_probabilities() {
        let k = two_state();
        let init = FiniteMeasure::dirac(2, 0);
        let (l, r) = bernoulli_laplace_check(&k, &init, &|_| false, 3, 1.3, 2).unwrap();
        assert!((l - 1.0).abs() < 1e-15 && (r - 1.0).abs() < 1e-15);
        let (l, r) = bernoulli_laplace_check(&k, &init, &|_| true, 3, 1.3, 2).unwrap();
        assert!((l - (-1.3f64).exp()).abs() < 1e-14);
        assert!((r - (-1.3f64).exp()).abs() < 1e-14);
    }
}
