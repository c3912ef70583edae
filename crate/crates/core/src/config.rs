//! Run configuration shared by every stage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters and run controls.
///
/// `alpha` is the document–topic Dirichlet prior, `eta` the topic–relation
/// Dirichlet prior and `gamma` the acquaintance-CRP penalty factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub alpha: f64,
    pub eta: f64,
    pub gamma: f64,
    /// Cap on the tree depth. `None` lets the data decide.
    pub max_depth: Option<u32>,
    pub gibbs_iterations: u32,
    pub acrp_max_passes: u32,
    pub rng_seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            alpha: 1.0,
            eta: 0.1,
            gamma: 0.01,
            max_depth: None,
            gibbs_iterations: 2000,
            acrp_max_passes: 100,
            rng_seed: 0,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Config(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::Config(format!("eta must be > 0, got {}", self.eta)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if self.max_depth == Some(0) {
            return Err(Error::Config("max_depth must be positive".into()));
        }
        if self.gibbs_iterations == 0 {
            return Err(Error::Config("gibbs_iterations must be positive".into()));
        }
        if self.acrp_max_passes == 0 {
            return Err(Error::Config("acrp_max_passes must be positive".into()));
        }
        Ok(())
    }
}
