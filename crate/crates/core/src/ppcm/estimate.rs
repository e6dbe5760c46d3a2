//! End-to-end estimation: per-wave model fits, then one sensitivity draw and
//! one forward imputation per posterior draw.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::aggregate::{default_age_grid, ppcm_at_wave, ppcm_by_age, ppcm_overall, AgeGrid};
use super::impute::{impute_forward, ConstantResponse, OutcomeModel, ResponseModel, WaveModels};
use super::sensitivity::{sample_sensitivity, SensitivityConfig};
use crate::bart::{fit_continuous, fit_probit, BartConfig};
use crate::data::{CohortFrame, Panel, PopulationFrame};
use crate::dist::quantile_sorted;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CohortMode {
    Mortal,
    Immortal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpcmOptions {
    pub mode: CohortMode,
    /// Posterior draws to keep; defaults to the outcome models' draw count.
    pub n_posterior: Option<usize>,
    /// Ages for the age curve; `Some(vec![])` selects the observed ages.
    pub age_grid: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for PpcmOptions {
    fn default() -> Self {
        Self {
            mode: CohortMode::Mortal,
            n_posterior: None,
            age_grid: None,
            seed: 0,
        }
    }
}

/// Fits an outcome model for one wave.
pub trait OutcomeLearner: Sync {
    fn fit(&self, x: &[Vec<f64>], y: &[f64], names: &[String], seed: u64) -> Result<Arc<dyn OutcomeModel>>;
}

/// Sum-of-trees outcome models.
#[derive(Debug, Clone)]
pub struct BartLearner(pub BartConfig);

impl OutcomeLearner for BartLearner {
    fn fit(&self, x: &[Vec<f64>], y: &[f64], _names: &[String], seed: u64) -> Result<Arc<dyn OutcomeModel>> {
        let cfg = self.0.clone().with_seed(seed);
        Ok(Arc::new(fit_continuous(x, y, &cfg)?))
    }
}

/// Training rows `[x̄_t, ȳ*_{t-1}]` and targets for the wave-`t` outcome model.
pub fn outcome_training(cohort: &CohortFrame, t: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let units = cohort.responders_at(t)?;
    if units.is_empty() {
        return Err(Error::Estimation {
            wave: t,
            message: "no responders to fit the outcome model".into(),
        });
    }
    let mut xs = Vec::with_capacity(units.len());
    let mut ys = Vec::with_capacity(units.len());
    for i in units {
        xs.push(history_row(cohort, i, t)?);
        ys.push(cohort.outcome[i][t].expect("responder outcome"));
    }
    Ok((xs, ys))
}

/// Rows and labels for the wave-`t` response model: units that responded
/// through `t - 1` and are alive at `t`.
pub fn response_training(cohort: &CohortFrame, t: usize) -> Result<(Vec<Vec<f64>>, Vec<bool>)> {
    let prev = cohort.responders_at(t - 1)?;
    let mut xs = Vec::new();
    let mut labels = Vec::new();
    for i in prev.into_iter().filter(|&i| cohort.panel.is_alive(i, t)) {
        xs.push(history_row(cohort, i, t)?);
        labels.push(cohort.responded[i][t]);
    }
    if xs.is_empty() {
        return Err(Error::Estimation {
            wave: t,
            message: "no previous-wave responders alive to fit the response model".into(),
        });
    }
    Ok((xs, labels))
}

fn history_row(cohort: &CohortFrame, i: usize, t: usize) -> Result<Vec<f64>> {
    let mut row = Vec::new();
    if !cohort.panel.covariate_history(i, t, &mut row) {
        return Err(Error::Invariant {
            unit_id: cohort.panel.unit_ids[i].clone(),
            wave: t,
            message: "covariates missing for an alive unit".into(),
        });
    }
    row.extend(cohort.outcome_history(i, t));
    Ok(row)
}

/// Feature names of the wave-`t` history.
pub fn feature_names(panel: &Panel, t: usize) -> Vec<String> {
    let mut names = panel.schema.history_names(t);
    names.extend((0..t).map(|k| format!("outcome@{k}")));
    names
}

/// Fits every wave's outcome model and, when `response_cfg` is given, every
/// follow-up wave's response model.
pub fn fit_wave_models(
    cohort: &CohortFrame,
    learner: &dyn OutcomeLearner,
    response_cfg: Option<&BartConfig>,
    seed: u64,
) -> Result<WaveModels> {
    let waves = cohort.panel.waves();
    let outcome = (0..waves)
        .into_par_iter()
        .map(|t| {
            let (x, y) = outcome_training(cohort, t)?;
            let names = feature_names(&cohort.panel, t);
            if names.is_empty() {
                return Err(Error::Estimation {
                    wave: t,
                    message: "no predictors (empty covariate schema at baseline)".into(),
                });
            }
            learner
                .fit(&x, &y, &names, derive_seed(seed, &[purpose::BART_OUTCOME, t as u64]))
                .map_err(|e| wave_error(t, e))
        })
        .collect::<Result<Vec<_>>>()?;
    let response = (0..waves)
        .into_par_iter()
        .map(|t| -> Result<Option<Arc<dyn ResponseModel>>> {
            let Some(cfg) = response_cfg else { return Ok(None) };
            if t == 0 {
                return Ok(None);
            }
            let (x, r) = response_training(cohort, t)?;
            let ones = r.iter().filter(|&&v| v).count();
            if ones == 0 || ones == r.len() {
                return Ok(Some(Arc::new(ConstantResponse(ones as f64 / r.len() as f64))));
            }
            let cfg = cfg.clone().with_seed(derive_seed(seed, &[purpose::BART_RESPONSE, t as u64]));
            Ok(Some(Arc::new(fit_probit(&x, &r, &cfg).map_err(|e| wave_error(t, e))?)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WaveModels { outcome, response })
}

fn wave_error(t: usize, e: Error) -> Error {
    match e {
        Error::Estimation { .. } | Error::Invariant { .. } | Error::RankDeficient { .. } => e,
        other => Error::Estimation {
            wave: t,
            message: other.to_string(),
        },
    }
}

/// Panel seen by the immortal-cohort analysis: everyone stays alive, only
/// baseline covariates are kept, and a missing age after death is carried
/// forward from baseline by the median age increment of units with both ages.
pub fn immortal_view(panel: &Panel) -> Panel {
    let waves = panel.waves();
    let n = panel.n_units();
    let mut schema = panel.schema.clone();
    for t in 1..waves {
        schema.covariates[t].clear();
    }
    let mut covariates = vec![panel.covariates[0].clone()];
    covariates.extend((1..waves).map(|_| vec![Some(Vec::new()); n]));
    let mut age = panel.age.clone();
    for t in 1..waves {
        let mut incr: Vec<f64> = (0..n)
            .filter_map(|i| Some(panel.age[i][t]? - panel.age[i][0]?))
            .collect();
        if incr.is_empty() {
            continue;
        }
        incr.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let step = quantile_sorted(&incr, 0.5);
        for row in age.iter_mut() {
            if row[t].is_none() {
                row[t] = row[0].map(|a| a + step);
            }
        }
    }
    Panel {
        schema,
        unit_ids: panel.unit_ids.clone(),
        alive: vec![vec![true; waves]; n],
        age,
        covariates,
    }
}

fn immortal_cohort(cohort: &CohortFrame) -> CohortFrame {
    CohortFrame {
        panel: immortal_view(&cohort.panel),
        responded: cohort.responded.clone(),
        outcome: cohort.outcome.clone(),
    }
}

/// Posterior of the survivor-restricted means.
#[derive(Debug, Clone, PartialEq)]
pub struct PpcmPosterior {
    /// Follow-up waves `1..=T`.
    pub waves: Vec<usize>,
    /// `wave_draws[d][w]` for wave `waves[w]`.
    pub wave_draws: Vec<Vec<Option<f64>>>,
    /// Pooled mean over waves `1..=T` per draw.
    pub overall_draws: Vec<Option<f64>>,
    pub age_grid: Vec<f64>,
    /// `age_draws[d][g]`.
    pub age_draws: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetSummary {
    pub target: String,
    pub point: Option<f64>,
    pub lo95: Option<f64>,
    pub hi95: Option<f64>,
}

/// Posterior mean and equal-tailed 95% interval; `None` if any draw is absent.
pub fn summarize_draws(target: String, draws: &[Option<f64>]) -> TargetSummary {
    let vals: Option<Vec<f64>> = draws.iter().copied().collect();
    match vals {
        Some(mut v) if !v.is_empty() => {
            let point = crate::dist::mean(&v);
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            TargetSummary {
                target,
                point: Some(point),
                lo95: Some(quantile_sorted(&v, 0.025)),
                hi95: Some(quantile_sorted(&v, 0.975)),
            }
        }
        _ => TargetSummary {
            target,
            point: None,
            lo95: None,
            hi95: None,
        },
    }
}

pub fn wave_label(t: usize) -> String {
    format!("wave:{t}")
}

pub fn age_label(a: f64) -> String {
    format!("age:{a}")
}

fn column(draws: &[Vec<Option<f64>>], k: usize) -> Vec<Option<f64>> {
    draws.iter().map(|d| d[k]).collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl PpcmPosterior {
    pub fn n_draws(&self) -> usize {
        self.overall_draws.len()
    }

    pub fn wave_summary(&self, t: usize) -> Option<TargetSummary> {
        let k = self.waves.iter().position(|&w| w == t)?;
        Some(summarize_draws(wave_label(t), &column(&self.wave_draws, k)))
    }

    pub fn overall_summary(&self) -> TargetSummary {
        summarize_draws("overall".into(), &self.overall_draws)
    }

    pub fn age_summaries(&self) -> Vec<TargetSummary> {
        self.age_grid
            .iter()
            .enumerate()
            .map(|(k, &a)| summarize_draws(age_label(a), &column(&self.age_draws, k)))
            .collect()
    }

    /// Wave targets, then the pooled target, then the age curve.
    pub fn summary(&self) -> Vec<TargetSummary> {
        let mut out: Vec<TargetSummary> = self.waves.iter().filter_map(|&t| self.wave_summary(t)).collect();
        out.push(self.overall_summary());
        out.extend(self.age_summaries());
        out
    }

    /// Long CSV `draw,wave_or_age,value`.
    pub fn write_posterior_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Other(format!("write posterior: {e}"));
        wr.write_record(["draw", "wave_or_age", "value"]).map_err(err)?;
        for d in 0..self.n_draws() {
            for (k, &t) in self.waves.iter().enumerate() {
                wr.write_record([d.to_string(), wave_label(t), fmt_opt(self.wave_draws[d][k])])
                    .map_err(err)?;
            }
            wr.write_record([d.to_string(), "overall".into(), fmt_opt(self.overall_draws[d])])
                .map_err(err)?;
            for (k, &a) in self.age_grid.iter().enumerate() {
                wr.write_record([d.to_string(), age_label(a), fmt_opt(self.age_draws[d][k])])
                    .map_err(err)?;
            }
        }
        wr.flush().map_err(|e| Error::Other(e.to_string()))
    }

    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        write_summaries(w, &self.summary())
    }

    /// `age,point,lo95,hi95`.
    pub fn write_age_curve_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Other(format!("write age curve: {e}"));
        wr.write_record(["age", "point", "lo95", "hi95"]).map_err(err)?;
        for (a, s) in self.age_grid.iter().zip(self.age_summaries()) {
            wr.write_record([a.to_string(), fmt_opt(s.point), fmt_opt(s.lo95), fmt_opt(s.hi95)])
                .map_err(err)?;
        }
        wr.flush().map_err(|e| Error::Other(e.to_string()))
    }
}

pub fn write_summaries<W: Write>(w: W, rows: &[TargetSummary]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::Other(format!("write summary: {e}"));
    wr.write_record(["target", "point", "lo95", "hi95"]).map_err(err)?;
    for s in rows {
        wr.write_record([s.target.clone(), fmt_opt(s.point), fmt_opt(s.lo95), fmt_opt(s.hi95)])
            .map_err(err)?;
    }
    wr.flush().map_err(|e| Error::Other(e.to_string()))
}

pub fn write_file(path: &Path, f: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> Result<()>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = std::io::BufWriter::new(file);
    f(&mut buf)?;
    buf.flush().map_err(|e| Error::io(path, e))
}

fn check_frames(population: &PopulationFrame, cohort: &CohortFrame) -> Result<()> {
    if population.panel.schema != cohort.panel.schema {
        return Err(Error::Schema("population and cohort schemas differ".into()));
    }
    if population.panel.waves() < 2 {
        return Err(Error::config("at least two waves (baseline plus one follow-up) are required"));
    }
    Ok(())
}

/// Runs the posterior loop over already fitted models. The population panel
/// must be the one the models' features refer to (use [`immortal_view`] for
/// the immortal analysis).
pub fn posterior_from_models(
    panel: &Panel,
    models: &WaveModels,
    sens: &SensitivityConfig,
    options: &PpcmOptions,
) -> Result<PpcmPosterior> {
    let waves = panel.waves();
    sens.validate(waves - 1)?;
    let n_draws = options.n_posterior.unwrap_or_else(|| models.n_draws());
    if n_draws == 0 {
        return Err(Error::config("at least one posterior draw is required"));
    }
    let grid = match &options.age_grid {
        None => AgeGrid::new(Vec::new()),
        Some(g) if g.is_empty() => AgeGrid::new(default_age_grid(panel)),
        Some(g) => AgeGrid::new(g.clone()),
    };
    if options.age_grid.is_some() {
        let missing = (0..panel.n_units())
            .flat_map(|i| (1..waves).map(move |t| (i, t)))
            .find(|&(i, t)| panel.is_alive(i, t) && panel.age[i][t].is_none());
        if let Some((i, t)) = missing {
            return Err(Error::Invariant {
                unit_id: panel.unit_ids[i].clone(),
                wave: t,
                message: "age missing for an alive unit (required for the age curve)".into(),
            });
        }
    }

    let per_draw = (0..n_draws)
        .into_par_iter()
        .map(|d| {
            let sd = sample_sensitivity(sens, panel, options.seed, d as u64)?;
            let imp = impute_forward(panel, models, &sd, d, options.seed)?;
            let wave_vals: Vec<Option<f64>> = (1..waves)
                .map(|t| ppcm_at_wave(&imp.prediction[t], panel, t))
                .collect();
            let overall = ppcm_overall(&imp.prediction, panel);
            let ages = ppcm_by_age(&imp.prediction, panel, &grid);
            Ok((wave_vals, overall, ages))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut post = PpcmPosterior {
        waves: (1..waves).collect(),
        wave_draws: Vec::with_capacity(n_draws),
        overall_draws: Vec::with_capacity(n_draws),
        age_grid: grid.values().to_vec(),
        age_draws: Vec::with_capacity(n_draws),
    };
    for (w, o, a) in per_draw {
        post.wave_draws.push(w);
        post.overall_draws.push(o);
        post.age_draws.push(a);
    }
    Ok(post)
}

/// Models fitted once and reusable across sensitivity settings.
#[derive(Clone)]
pub struct FittedPpcm {
    pub mode: CohortMode,
    pub panel: Panel,
    pub models: WaveModels,
}

impl FittedPpcm {
    /// Fits the per-wave models. Response models are only fitted when
    /// `with_response` is set; they matter only under a non-zero dropout
    /// offset and are never used in immortal mode.
    pub fn fit(
        population: &PopulationFrame,
        cohort: &CohortFrame,
        learner: &dyn OutcomeLearner,
        response_cfg: &BartConfig,
        with_response: bool,
        mode: CohortMode,
        seed: u64,
    ) -> Result<Self> {
        check_frames(population, cohort)?;
        let (panel, fitted_cohort) = match mode {
            CohortMode::Mortal => (population.panel.clone(), None),
            CohortMode::Immortal => (immortal_view(&population.panel), Some(immortal_cohort(cohort))),
        };
        let cohort_ref = fitted_cohort.as_ref().unwrap_or(cohort);
        let response = (with_response && mode == CohortMode::Mortal).then_some(response_cfg);
        let models = fit_wave_models(cohort_ref, learner, response, seed)?;
        Ok(Self { mode, panel, models })
    }

    pub fn posterior(&self, sens: &SensitivityConfig, options: &PpcmOptions) -> Result<PpcmPosterior> {
        let zero = SensitivityConfig::zero();
        let sens = match self.mode {
            CohortMode::Mortal => sens,
            CohortMode::Immortal => &zero,
        };
        if sens.has_dropout_offset() && self.models.response.iter().skip(1).any(Option::is_none) {
            return Err(Error::config("a dropout offset needs fitted response models"));
        }
        posterior_from_models(&self.panel, &self.models, sens, options)
    }
}

/// Full estimation under `options.mode` with sum-of-trees models.
pub fn estimate_ppcm(
    population: &PopulationFrame,
    cohort: &CohortFrame,
    outcome_cfg: &BartConfig,
    response_cfg: &BartConfig,
    sens: &SensitivityConfig,
    options: &PpcmOptions,
) -> Result<PpcmPosterior> {
    sens.validate(population.panel.waves().saturating_sub(1))?;
    let fitted = FittedPpcm::fit(
        population,
        cohort,
        &BartLearner(outcome_cfg.clone()),
        response_cfg,
        sens.has_dropout_offset(),
        options.mode,
        options.seed,
    )?;
    fitted.posterior(sens, options)
}

/// Immortal-cohort analysis: death treated as ignorable dropout, baseline
/// covariates only, no offsets.
pub fn estimate_ppcm_immortal(
    population: &PopulationFrame,
    cohort: &CohortFrame,
    outcome_cfg: &BartConfig,
    options: &PpcmOptions,
) -> Result<PpcmPosterior> {
    let opts = PpcmOptions {
        mode: CohortMode::Immortal,
        ..options.clone()
    };
    estimate_ppcm(
        population,
        cohort,
        outcome_cfg,
        &BartConfig::probit_default(),
        &SensitivityConfig::zero(),
        &opts,
    )
}
