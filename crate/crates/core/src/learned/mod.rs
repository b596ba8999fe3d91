//! Learned update rules: a flat hyperparameter vector `α`, its layout, and
//! the quadratic and LASSO architectures built from bias-free blocks.

pub mod lasso;
pub mod nn;
pub mod quad;

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{AlgorithmState, Problem, UpdateRule};

pub use lasso::{lasso_features, LassoArchitecture};
pub use nn::{Activation, BlockSpec, DenseBlock, ForwardCache, PerCoordBlock, PerCoordCache};
pub use quad::{quad_features, QuadArchitecture};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchitectureKind {
    Quadratic,
    Lasso,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Dense,
    PerCoord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLayout {
    pub name: String,
    pub kind: BlockKind,
    pub spec: BlockSpec,
}

/// Describes how the flat weight vector splits into blocks. Blocks are stored
/// back to back in the listed order; inside a block, layers follow each other
/// and each layer matrix is row-major `out × in`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub architecture: ArchitectureKind,
    pub blocks: Vec<BlockLayout>,
    /// Names of the per-coordinate input channels, in order.
    pub channels: Vec<String>,
    /// Names of the dense-block input features, in order.
    pub features: Vec<String>,
}

impl Layout {
    pub fn n_params(&self) -> usize {
        self.blocks.iter().map(|b| b.spec.n_params()).sum()
    }

    /// Weight range of every block.
    pub fn ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut off = 0;
        self.blocks
            .iter()
            .map(|b| {
                let r = off..off + b.spec.n_params();
                off = r.end;
                r
            })
            .collect()
    }

    pub fn for_kind(kind: ArchitectureKind) -> Self {
        match kind {
            ArchitectureKind::Quadratic => quad::layout(),
            ArchitectureKind::Lasso => lasso::layout(),
        }
    }
}

/// An unflattened block.
#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    Dense(DenseBlock),
    PerCoord(PerCoordBlock),
}

impl Block {
    fn weights(&self) -> &[f64] {
        match self {
            Self::Dense(b) => &b.weights,
            Self::PerCoord(b) => &b.weights,
        }
    }
}

/// The flat vector `α` together with its layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Checkpoint", try_from = "Checkpoint")]
pub struct Hyperparameters {
    pub layout: Layout,
    pub weights: Vec<f64>,
}

impl Hyperparameters {
    pub fn new(layout: Layout, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != layout.n_params() {
            return Err(Error::Shape(format!(
                "layout needs {} weights, got {}",
                layout.n_params(),
                weights.len()
            )));
        }
        Ok(Self { layout, weights })
    }

    pub fn zeros(layout: Layout) -> Self {
        let n = layout.n_params();
        Self { layout, weights: vec![0.0; n] }
    }

    /// `U[−s, s]` with `s = 1/√fan_in`; the last layer of every block is
    /// further scaled by 0.01.
    pub fn init<R: Rng + ?Sized>(layout: Layout, rng: &mut R) -> Self {
        let mut weights = Vec::with_capacity(layout.n_params());
        for block in &layout.blocks {
            let n_layers = block.spec.n_layers();
            for (k, (fan_in, fan_out, _)) in block.spec.layers().enumerate() {
                let mut s = 1.0 / (fan_in as f64).sqrt();
                if k + 1 == n_layers {
                    s *= 0.01;
                }
                weights.extend((0..fan_in * fan_out).map(|_| rng.random_range(-s..=s)));
            }
        }
        Self { layout, weights }
    }

    pub fn unflatten(&self) -> Vec<Block> {
        self.layout
            .blocks
            .iter()
            .zip(self.layout.ranges())
            .map(|(b, r)| {
                let w = self.weights[r].to_vec();
                match b.kind {
                    BlockKind::Dense => Block::Dense(DenseBlock { spec: b.spec.clone(), weights: w }),
                    BlockKind::PerCoord => Block::PerCoord(PerCoordBlock { spec: b.spec.clone(), weights: w }),
                }
            })
            .collect()
    }

    pub fn flatten(layout: Layout, blocks: &[Block]) -> Result<Self> {
        if blocks.len() != layout.blocks.len() {
            return Err(Error::Shape(format!("layout has {} blocks, got {}", layout.blocks.len(), blocks.len())));
        }
        let weights: Vec<f64> = blocks.iter().flat_map(|b| b.weights().iter().copied()).collect();
        Self::new(layout, weights)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// On-disk form: layout plus weights as hex-encoded IEEE-754 bit patterns.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    layout: Layout,
    weights_hex: Vec<String>,
}

impl From<Hyperparameters> for Checkpoint {
    fn from(h: Hyperparameters) -> Self {
        Self { layout: h.layout, weights_hex: h.weights.iter().map(|w| format!("{:016x}", w.to_bits())).collect() }
    }
}

impl TryFrom<Checkpoint> for Hyperparameters {
    type Error = Error;

    fn try_from(c: Checkpoint) -> Result<Self> {
        let weights = c
            .weights_hex
            .iter()
            .map(|s| {
                u64::from_str_radix(s, 16)
                    .map(f64::from_bits)
                    .map_err(|e| Error::Config(format!("bad weight encoding {s:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(c.layout, weights)
    }
}

/// Named scalar inputs of a dense block.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub names: &'static [&'static str],
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| *n == name).map(|i| self.values[i])
    }
}

/// A fixed computation graph mapping `(α, θ, ξ^t)` to `ξ^{t+1}`, with the
/// reverse pass needed for one-step training.
pub trait Architecture<P: Problem>: Sync + Send {
    type Cache;

    fn layout(&self) -> Layout;

    /// Inference step with weights `w` laid out as [`Architecture::layout`].
    fn update(&self, w: &[f64], theta: &P, state: &AlgorithmState) -> AlgorithmState;

    /// Same step, recording what the reverse pass needs.
    fn update_cached(&self, w: &[f64], theta: &P, state: &AlgorithmState) -> (AlgorithmState, Self::Cache);

    /// `∂L/∂α` given `∂L/∂x^{t+1}`.
    fn backward(&self, w: &[f64], cache: &Self::Cache, upstream: &[f64]) -> Result<Vec<f64>>;

    /// Gradient (or a subgradient) of the trajectory loss `ℓ(·, θ)`.
    fn loss_gradient(&self, theta: &P, x: &[f64]) -> Vec<f64>;

    fn init_state(&self, theta: &P) -> AlgorithmState {
        AlgorithmState::new(theta.initial_point())
    }
}

/// An architecture with a fixed `α`: a deterministic update rule.
#[derive(Debug, Clone)]
pub struct LearnedAlgorithm<A> {
    pub arch: A,
    pub alpha: Hyperparameters,
}

impl<A> LearnedAlgorithm<A> {
    pub fn new<P: Problem>(arch: A, alpha: Hyperparameters) -> Result<Self>
    where
        A: Architecture<P>,
    {
        if alpha.layout != arch.layout() {
            return Err(Error::Shape("hyperparameter layout does not match the architecture".into()));
        }
        Ok(Self { arch, alpha })
    }
}

impl<P: Problem, A: Architecture<P>> UpdateRule<P> for LearnedAlgorithm<A> {
    fn step(&self, problem: &P, state: &AlgorithmState, _: &mut ChaCha8Rng) -> AlgorithmState {
        self.arch.update(&self.alpha.weights, problem, state)
    }

    fn init_state(&self, problem: &P) -> AlgorithmState {
        self.arch.init_state(problem)
    }
}

pub(crate) fn dense_spec(widths: &[usize], relu_layers: std::ops::Range<usize>) -> BlockSpec {
    let acts = (0..widths.len() - 1)
        .map(|k| if relu_layers.contains(&k) { Activation::Relu } else { Activation::Identity })
        .collect();
    BlockSpec::new(widths.to_vec(), acts).expect("static block layout")
}
