//! Bayesian additive regression trees with an optional sparse Dirichlet
//! prior on split variables.
//!
//! Continuous outcomes are shifted and scaled to `[-0.5, 0.5]` before fitting;
//! stored forests are on the original scale. Binary outcomes use probit data
//! augmentation with a fixed offset `Φ⁻¹(mean r)`.

mod config;
pub mod dart;
mod sampler;
mod tree;

pub use config::{BartConfig, BetaPrior, MoveProbs, SigmaPrior, TreePrior};
pub use dart::{update_dart_split_probs, DartState};
pub use tree::{Forest, ForestKind, Node, PosteriorEnsemble, Tree, TrainingInfo};

use nalgebra::{DMatrix, DVector};

use crate::dist::{chi_squared_quantile, std_normal_quantile};
use crate::error::{Error, Result};
use crate::rng::{purpose, stream};
use sampler::{run_chain, ChainSpec, Columns};

const SIGMA_FLOOR: f64 = 1e-3;

fn check_inputs(x: &[Vec<f64>], n_y: usize, cfg: &BartConfig) -> Result<usize> {
    cfg.validate()?;
    if x.len() != n_y {
        return Err(Error::Dimension {
            expected: x.len(),
            got: n_y,
        });
    }
    if x.len() < 2 {
        return Err(Error::config("at least two observations are required"));
    }
    let p = x[0].len();
    if p == 0 {
        return Err(Error::config("at least one predictor is required"));
    }
    for row in x {
        if row.len() != p {
            return Err(Error::Dimension {
                expected: p,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("predictor matrix contains non-finite values"));
        }
    }
    Ok(p)
}

/// Residual SD of the least-squares fit of `y` on `[1, X]`, or the plain SD
/// when there are too few observations for the regression.
pub(crate) fn ols_residual_sd(x: &[Vec<f64>], y: &[f64]) -> f64 {
    let n = y.len();
    let p = x.first().map_or(0, Vec::len);
    let mean = y.iter().sum::<f64>() / n as f64;
    let sd = || (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0).max(1.0)).sqrt();
    if n <= p + 1 {
        return sd();
    }
    let design = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] });
    let yv = DVector::from_column_slice(y);
    let svd = design.clone().svd(true, true);
    match svd.solve(&yv, 1e-10) {
        Ok(beta) => {
            let resid = &yv - &design * beta;
            (resid.norm_squared() / (n - p - 1) as f64).sqrt()
        }
        Err(_) => sd(),
    }
}

/// Fits `y = f(x) + ε`, `ε ~ N(0, σ²)`.
pub fn fit_continuous(x: &[Vec<f64>], y: &[f64], cfg: &BartConfig) -> Result<PosteriorEnsemble> {
    let p = check_inputs(x, y.len(), cfg)?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::config("outcome contains non-finite values"));
    }
    let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let center = 0.5 * (lo + hi);
    let scale = if hi > lo { hi - lo } else { 1.0 };
    let y_int: Vec<f64> = y.iter().map(|v| (v - center) / scale).collect();

    let sigma_hat = ols_residual_sd(x, &y_int).max(SIGMA_FLOOR);
    let df = cfg.sigma_prior.df;
    let lambda = sigma_hat * sigma_hat * chi_squared_quantile(1.0 - cfg.sigma_prior.q, df) / df;
    let leaf_sd = 0.5 / (cfg.leaf_scale_k * (cfg.n_trees as f64).sqrt());
    let spec = ChainSpec {
        kind: ForestKind::Continuous,
        cfg,
        leaf_sd,
        sigma_df: df,
        sigma_lambda: lambda,
        sigma_init: sigma_hat,
        out_scale: scale,
        out_offset: center,
    };
    let cols = Columns::from_rows(x, p);
    let mut rng = stream(cfg.seed, &[purpose::BART_OUTCOME]);
    let draws = run_chain(&cols, y_int, None, 0.0, &spec, &mut rng);
    Ok(PosteriorEnsemble {
        kind: ForestKind::Continuous,
        draws,
        info: TrainingInfo {
            n_obs: y.len(),
            n_features: p,
            center,
            scale,
            leaf_sd,
            sigma_lambda: lambda,
            sigma_df: df,
        },
    })
}

/// Fits `P(r = 1 | x) = Φ(offset + f(x))` by latent-variable augmentation.
pub fn fit_probit(x: &[Vec<f64>], r: &[bool], cfg: &BartConfig) -> Result<PosteriorEnsemble> {
    let p = check_inputs(x, r.len(), cfg)?;
    let ones = r.iter().filter(|&&v| v).count();
    if ones == 0 || ones == r.len() {
        return Err(Error::DegenerateOutcome(format!(
            "binary outcome has a single class ({ones} of {} positive)",
            r.len()
        )));
    }
    let offset = std_normal_quantile(ones as f64 / r.len() as f64);
    let leaf_sd = 3.0 / (cfg.leaf_scale_k * (cfg.n_trees as f64).sqrt());
    let spec = ChainSpec {
        kind: ForestKind::Probit,
        cfg,
        leaf_sd,
        sigma_df: 0.0,
        sigma_lambda: 0.0,
        sigma_init: 1.0,
        out_scale: 1.0,
        out_offset: offset,
    };
    let cols = Columns::from_rows(x, p);
    let mut rng = stream(cfg.seed, &[purpose::BART_RESPONSE]);
    let draws = run_chain(&cols, vec![0.0; r.len()], Some(r), offset, &spec, &mut rng);
    Ok(PosteriorEnsemble {
        kind: ForestKind::Probit,
        draws,
        info: TrainingInfo {
            n_obs: r.len(),
            n_features: p,
            center: offset,
            scale: 1.0,
            leaf_sd,
            sigma_lambda: 0.0,
            sigma_df: 0.0,
        },
    })
}

/// Prediction from a single forest.
pub fn predict(forest: &Forest, x: &[f64]) -> Result<f64> {
    forest.predict(x)
}
