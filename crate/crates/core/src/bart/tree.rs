use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::dist::std_normal_cdf;
use crate::error::{Error, Result};

pub(crate) const LEAF: u32 = u32::MAX;

/// One node of a flattened tree. Internal nodes send `x[var] < value` to
/// `left` and everything else to `left + 1`; leaves carry their parameter in
/// `value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub var: u32,
    pub left: u32,
    pub value: f64,
}

impl Node {
    pub fn leaf(value: f64) -> Self {
        Self {
            var: LEAF,
            left: 0,
            value,
        }
    }

    pub fn split(var: usize, cut: f64, left: usize) -> Self {
        Self {
            var: var as u32,
            left: left as u32,
            value: cut,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.var == LEAF
    }
}

/// A binary decision tree stored in a flat array, root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn stump(value: f64) -> Self {
        Self {
            nodes: vec![Node::leaf(value)],
        }
    }

    /// Single split `x[var] < cut` with the given leaf values.
    pub fn single_split(var: usize, cut: f64, left: f64, right: f64) -> Self {
        Self {
            nodes: vec![Node::split(var, cut, 1), Node::leaf(left), Node::leaf(right)],
        }
    }

    /// Index of the leaf reached by `x`.
    #[inline]
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut k = 0usize;
        loop {
            let node = &self.nodes[k];
            if node.var == LEAF {
                return k;
            }
            k = node.left as usize + usize::from(x[node.var as usize] >= node.value);
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.nodes[self.leaf_index(x)].value
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn n_internal(&self) -> usize {
        self.nodes.len() - self.n_leaves()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, k: usize) -> usize {
            let n = &t.nodes[k];
            if n.is_leaf() {
                0
            } else {
                1 + go(t, n.left as usize).max(go(t, n.left as usize + 1))
            }
        }
        go(self, 0)
    }

    /// Adds split counts per predictor into `counts`.
    pub fn count_splits(&self, counts: &mut [usize]) {
        for n in &self.nodes {
            if !n.is_leaf() {
                counts[n.var as usize] += 1;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForestKind {
    Continuous,
    Probit,
}

/// One posterior draw of the sum-of-trees model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub kind: ForestKind,
    /// Residual standard deviation on the outcome scale (continuous only).
    pub sigma: f64,
    /// Split-variable probabilities (a simplex over predictors).
    pub split_probs: Vec<f64>,
    pub offset: f64,
}

impl Forest {
    /// `offset + Σ_k g_k(x)`.
    #[inline]
    pub fn latent(&self, x: &[f64]) -> f64 {
        self.offset + self.trees.iter().map(|t| t.eval(x)).sum::<f64>()
    }

    /// Conditional mean for continuous forests, `Φ(latent)` for probit ones.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let p = self.split_probs.len();
        if x.len() != p {
            return Err(Error::Dimension {
                expected: p,
                got: x.len(),
            });
        }
        Ok(self.predict_unchecked(x))
    }

    #[inline]
    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> f64 {
        match self.kind {
            ForestKind::Continuous => self.latent(x),
            ForestKind::Probit => std_normal_cdf(self.latent(x)),
        }
    }
}

/// Data-dependent constants recorded at fit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingInfo {
    pub n_obs: usize,
    pub n_features: usize,
    /// Outcome centre and range used for the internal `[-0.5, 0.5]` scale
    /// (continuous); probit fits use centre = offset, scale = 1.
    pub center: f64,
    pub scale: f64,
    /// Leaf prior standard deviation on the internal scale.
    pub leaf_sd: f64,
    /// Scale `λ` of the `ν λ / χ²_ν` prior on σ², internal scale.
    pub sigma_lambda: f64,
    pub sigma_df: f64,
}

/// Retained MCMC draws of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorEnsemble {
    pub kind: ForestKind,
    pub draws: Vec<Forest>,
    pub info: TrainingInfo,
}

const FORMAT: &str = "ppcm-bart-ensemble";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    ensemble: T,
}

impl PosteriorEnsemble {
    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }

    pub fn n_features(&self) -> usize {
        self.info.n_features
    }

    /// Posterior mean of `predict` over draws.
    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        let mut s = 0.0;
        for f in &self.draws {
            s += f.predict(x)?;
        }
        Ok(s / self.draws.len() as f64)
    }

    /// Posterior share of splits on each predictor, pooled over draws.
    pub fn split_proportions(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.n_features()];
        for f in &self.draws {
            for t in &f.trees {
                t.count_splits(&mut counts);
            }
        }
        let total: usize = counts.iter().sum();
        counts
            .iter()
            .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
            .collect()
    }

    /// JSON file with a `{format, version, ensemble}` envelope.
    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        let env = Envelope {
            format: FORMAT.to_string(),
            version: VERSION,
            ensemble: self,
        };
        serde_json::to_writer(w, &env).map_err(|e| Error::Other(format!("serialize ensemble: {e}")))
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        let env: Envelope<PosteriorEnsemble> =
            serde_json::from_reader(r).map_err(|e| Error::Other(format!("parse ensemble: {e}")))?;
        if env.format != FORMAT || env.version != VERSION {
            return Err(Error::Other(format!(
                "unsupported ensemble file {} v{}",
                env.format, env.version
            )));
        }
        Ok(env.ensemble)
    }
}
