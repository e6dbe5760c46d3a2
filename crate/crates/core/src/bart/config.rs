use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreePrior {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaPrior {
    pub df: f64,
    /// Prior probability that σ lies below the least-squares residual SD.
    pub q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPrior {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoveProbs {
    pub grow: f64,
    pub prune: f64,
    pub change: f64,
}

/// Sampler settings. Missing JSON fields take the continuous defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BartConfig {
    pub n_trees: usize,
    pub n_burn: usize,
    pub n_keep: usize,
    pub tree_prior: TreePrior,
    pub leaf_scale_k: f64,
    pub sigma_prior: SigmaPrior,
    pub dart_enabled: bool,
    pub dart_beta_prior: BetaPrior,
    pub move_probs: MoveProbs,
    pub seed: u64,
    /// Hold σ fixed at this value (outcome scale) instead of sampling it.
    pub fixed_sigma: Option<f64>,
}

impl Default for BartConfig {
    fn default() -> Self {
        Self {
            n_trees: 200,
            n_burn: 1000,
            n_keep: 1000,
            tree_prior: TreePrior { alpha: 0.95, beta: 2.0 },
            leaf_scale_k: 2.0,
            sigma_prior: SigmaPrior { df: 3.0, q: 0.9 },
            dart_enabled: true,
            dart_beta_prior: BetaPrior { a: 0.5, b: 1.0 },
            move_probs: MoveProbs {
                grow: 0.28,
                prune: 0.28,
                change: 0.44,
            },
            seed: 0,
            fixed_sigma: None,
        }
    }
}

impl BartConfig {
    /// Defaults for binary response models (fewer trees).
    pub fn probit_default() -> Self {
        Self {
            n_trees: 50,
            ..Self::default()
        }
    }

    /// Same config with a different tree count and chain length.
    pub fn with_size(mut self, n_trees: usize, n_burn: usize, n_keep: usize) -> Self {
        self.n_trees = n_trees;
        self.n_burn = n_burn;
        self.n_keep = n_keep;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.move_probs;
        let bad = |msg: &str| Err(Error::config(msg));
        if self.n_keep == 0 {
            return bad("n_keep must be at least 1");
        }
        if self.n_trees == 0 {
            return bad("n_trees must be at least 1");
        }
        if !(self.tree_prior.alpha > 0.0 && self.tree_prior.alpha < 1.0) {
            return bad("tree_prior.alpha must lie in (0, 1)");
        }
        if !(self.tree_prior.beta > 0.0) {
            return bad("tree_prior.beta must be positive");
        }
        if !(self.leaf_scale_k > 0.0) {
            return bad("leaf_scale_k must be positive");
        }
        if !(self.sigma_prior.df > 0.0) || !(self.sigma_prior.q > 0.0 && self.sigma_prior.q < 1.0) {
            return bad("sigma_prior needs df > 0 and q in (0, 1)");
        }
        if !(self.dart_beta_prior.a > 0.0 && self.dart_beta_prior.b > 0.0) {
            return bad("dart_beta_prior parameters must be positive");
        }
        if m.grow < 0.0 || m.prune < 0.0 || m.change < 0.0 || (m.grow + m.prune + m.change - 1.0).abs() > 1e-9 {
            return bad("move_probs must be a probability vector");
        }
        if m.grow == 0.0 || m.prune == 0.0 {
            return bad("move_probs.grow and move_probs.prune must be positive");
        }
        if let Some(s) = self.fixed_sigma {
            if !(s > 0.0 && s.is_finite()) {
                return bad("fixed_sigma must be positive");
            }
        }
        Ok(())
    }
}
