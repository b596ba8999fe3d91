//! Parametric problem families and their serialized problem sets.

pub mod lasso;
pub mod quadratic;

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{tags, RandomnessStream};

pub use lasso::{
    largest_eigenvalue_ata, sample_lasso_design, sample_lasso_family, sample_lasso_instance, soft_threshold,
    LassoConfig, LassoDesign, LassoInstance, LassoInstanceData,
};
pub use quadratic::{quadratic_diagonal, sample_quadratic, QuadraticConfig, QuadraticInstance};

/// Distribution `P_P` over problem instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemDistributionConfig {
    Quadratic(QuadraticConfig),
    Lasso(LassoConfig),
}

impl ProblemDistributionConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Quadratic(c) => c.validate(),
            Self::Lasso(c) => c.validate(),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Self::Quadratic(_) => "quadratic",
            Self::Lasso(_) => "lasso",
        }
    }
}

/// Instance `index` drawn from its own stream, so datasets of any size
/// share their prefix.
pub fn sample_quadratics(cfg: &QuadraticConfig, stream: RandomnessStream, indices: std::ops::Range<usize>) -> Result<Vec<QuadraticInstance>> {
    indices
        .map(|i| sample_quadratic(cfg, &mut stream.child(tags::PROBLEMS, i as u64).rng()))
        .collect()
}

/// Design drawn from the `DESIGN` stream, instance `i` from its own stream.
pub fn sample_lasso_set(
    cfg: &LassoConfig,
    stream: RandomnessStream,
    indices: std::ops::Range<usize>,
) -> Result<(Arc<LassoDesign>, Vec<LassoInstance>)> {
    let design = Arc::new(sample_lasso_design(cfg, &mut stream.child(tags::DESIGN, 0).rng())?);
    let instances = indices
        .map(|i| sample_lasso_instance(&design, cfg, &mut stream.child(tags::PROBLEMS, i as u64).rng()))
        .collect::<Result<_>>()?;
    Ok((design, instances))
}

/// A sampled dataset together with everything needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ProblemSet {
    Quadratic { config: QuadraticConfig, seed: u64, instances: Vec<QuadraticInstance> },
    Lasso { config: LassoConfig, seed: u64, design: LassoDesign, instances: Vec<LassoInstanceData> },
}

impl ProblemSet {
    pub fn len(&self) -> usize {
        match self {
            Self::Quadratic { instances, .. } => instances.len(),
            Self::Lasso { instances, .. } => instances.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lasso_instances(&self) -> Result<Vec<LassoInstance>> {
        match self {
            Self::Lasso { design, instances, .. } => {
                let design = Arc::new(design.clone());
                Ok(instances.iter().cloned().map(|d| LassoInstance::from_data(design.clone(), d)).collect())
            }
            _ => Err(Error::Usage("not a LASSO problem set".into())),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
