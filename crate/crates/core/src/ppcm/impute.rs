//! Sequential forward imputation of response and outcome histories.

use std::sync::Arc;

use rand::Rng;

use super::sensitivity::SensitivityDraws;
use crate::bart::{ForestKind, PosteriorEnsemble};
use crate::data::Panel;
use crate::dist::normal;
use crate::error::{Error, Result};
use crate::rng::{purpose, StreamFamily};

/// Posterior of a wave's outcome model: conditional mean and residual SD per
/// posterior draw. Draw indices wrap modulo `n_draws`.
pub trait OutcomeModel: Send + Sync {
    fn n_draws(&self) -> usize;
    fn n_features(&self) -> usize;
    fn mean(&self, draw: usize, x: &[f64]) -> f64;
    fn sigma(&self, draw: usize) -> f64;
}

/// Posterior of a wave's response model, `P(r_t = 1 | history)`.
pub trait ResponseModel: Send + Sync {
    fn n_draws(&self) -> usize;
    fn prob(&self, draw: usize, x: &[f64]) -> f64;
}

impl OutcomeModel for PosteriorEnsemble {
    fn n_draws(&self) -> usize {
        self.draws.len()
    }

    fn n_features(&self) -> usize {
        self.info.n_features
    }

    fn mean(&self, draw: usize, x: &[f64]) -> f64 {
        self.draws[draw % self.draws.len()].latent(x)
    }

    fn sigma(&self, draw: usize) -> f64 {
        self.draws[draw % self.draws.len()].sigma
    }
}

impl ResponseModel for PosteriorEnsemble {
    fn n_draws(&self) -> usize {
        self.draws.len()
    }

    fn prob(&self, draw: usize, x: &[f64]) -> f64 {
        let f = &self.draws[draw % self.draws.len()];
        debug_assert_eq!(f.kind, ForestKind::Probit);
        f.predict_unchecked(x)
    }
}

/// Outcome model with a fixed mean and SD.
#[derive(Debug, Clone, Copy)]
pub struct ConstantOutcome {
    pub mean: f64,
    pub sigma: f64,
    pub n_features: usize,
}

impl OutcomeModel for ConstantOutcome {
    fn n_draws(&self) -> usize {
        1
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn mean(&self, _: usize, _: &[f64]) -> f64 {
        self.mean
    }

    fn sigma(&self, _: usize) -> f64 {
        self.sigma
    }
}

/// Response probability that ignores the history.
#[derive(Debug, Clone, Copy)]
pub struct ConstantResponse(pub f64);

impl ResponseModel for ConstantResponse {
    fn n_draws(&self) -> usize {
        1
    }

    fn prob(&self, _: usize, _: &[f64]) -> f64 {
        self.0
    }
}

/// Per-wave models, indexed by wave `0..=T`. `response[0]` is unused. A
/// missing response model at `t >= 1` means every simulated responder at
/// `t - 1` keeps responding, which is harmless whenever the dropout offset is
/// zero.
#[derive(Clone)]
pub struct WaveModels {
    pub outcome: Vec<Arc<dyn OutcomeModel>>,
    pub response: Vec<Option<Arc<dyn ResponseModel>>>,
}

impl WaveModels {
    pub fn waves(&self) -> usize {
        self.outcome.len()
    }

    pub fn n_draws(&self) -> usize {
        self.outcome.iter().map(|m| m.n_draws()).max().unwrap_or(0)
    }
}

/// Result of one forward pass, indexed `[t][i]`; entries for units not alive
/// at `t` are NaN (outcomes) or `false` (responses).
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardImputation {
    pub y_star: Vec<Vec<f64>>,
    pub r_star: Vec<Vec<bool>>,
    pub prediction: Vec<Vec<f64>>,
}

/// One forward trajectory per unit for posterior draw `draw`.
///
/// Per unit and wave the stream yields one uniform (response, from `t = 1`)
/// and one normal (history noise), in that order, so two calls that differ
/// only in the sensitivity draws share every random number.
pub fn impute_forward(
    panel: &Panel,
    models: &WaveModels,
    sens: &SensitivityDraws,
    draw: usize,
    seed: u64,
) -> Result<ForwardImputation> {
    let waves = panel.waves();
    let n = panel.n_units();
    if models.waves() != waves || models.response.len() != waves {
        return Err(Error::config(format!(
            "{} outcome / {} response models for {waves} waves",
            models.waves(),
            models.response.len()
        )));
    }
    let mut hist_dims = 0;
    for t in 0..waves {
        hist_dims += panel.schema.covariates[t].len();
        let expected = hist_dims + t;
        let got = models.outcome[t].n_features();
        if got != expected {
            return Err(Error::Estimation {
                wave: t,
                message: format!("outcome model expects {got} features, history has {expected}"),
            });
        }
    }

    let mut out = ForwardImputation {
        y_star: vec![vec![f64::NAN; n]; waves],
        r_star: vec![vec![false; n]; waves],
        prediction: vec![vec![f64::NAN; n]; waves],
    };
    let family = StreamFamily::new(seed, &[purpose::IMPUTE, draw as u64]);
    let mut cov = Vec::new();
    let mut x = Vec::new();
    let mut y_hist: Vec<f64> = Vec::with_capacity(waves);
    for i in 0..n {
        let mut rng = family.sub(i as u64);
        y_hist.clear();
        let mut r_prev = true;
        for t in 0..waves {
            if !panel.is_alive(i, t) {
                break;
            }
            cov.clear();
            if !panel.covariate_history(i, t, &mut cov) {
                return Err(Error::Invariant {
                    unit_id: panel.unit_ids[i].clone(),
                    wave: t,
                    message: "covariates missing for an alive unit".into(),
                });
            }
            x.clear();
            x.extend_from_slice(&cov);
            x.extend_from_slice(&y_hist);

            let r = if t == 0 {
                true
            } else {
                let u: f64 = rng.random();
                match &models.response[t] {
                    Some(m) => r_prev && u < m.prob(draw, &x),
                    None => r_prev,
                }
            };
            let eps = normal(&mut rng);
            let model = &models.outcome[t];
            let m = model.mean(draw, &x);
            let offset = if r { 0.0 } else { sens.gamma[t][i] };
            let y = m + offset + model.sigma(draw) * eps;
            out.y_star[t][i] = y;
            out.r_star[t][i] = r;
            out.prediction[t][i] = m + offset - sens.delta[t][i];
            y_hist.push(y);
            r_prev = r;
        }
    }
    Ok(out)
}
