//! Design-weighted estimators: naive responder mean, Hájek-type HT with
//! longitudinal participation weights, and GREG.

use serde::Serialize;

use super::cells::CellTable;
use super::linear::ols;
use super::probit_reg::ProbitFit;
use crate::data::{CohortFrame, Panel};
use crate::dist::{compensated_sum, mean, sample_variance};
use crate::error::{Error, Result};
use crate::ppcm::{response_training, AgeGrid};

const Z95: f64 = 1.959963984540054;

/// Point estimate with a 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Estimate {
    pub fn normal(point: f64, var: f64) -> Self {
        let half = Z95 * var.max(0.0).sqrt();
        Self {
            point,
            lo: point - half,
            hi: point + half,
        }
    }
}

/// Responder mean at wave `t` with a normal-theory interval.
pub fn sample_estimate(cohort: &CohortFrame, t: usize) -> Result<Estimate> {
    let ys: Vec<f64> = cohort
        .responders_at(t)?
        .into_iter()
        .map(|i| cohort.outcome[i][t].expect("responder outcome"))
        .collect();
    if ys.len() < 2 {
        return Err(Error::Estimation {
            wave: t,
            message: "fewer than two responders".into(),
        });
    }
    Ok(Estimate::normal(mean(&ys), sample_variance(&ys) / ys.len() as f64))
}

/// Hájek mean `Σ w y / Σ w` with the linearisation variance
/// `n/(n-1) Σ w²(y - ȳ_w)² / (Σ w)²`.
pub fn weighted_mean_estimate(ys: &[f64], ws: &[f64]) -> Estimate {
    let n = ys.len() as f64;
    let sw = compensated_sum(ws.iter().copied());
    let point = compensated_sum(ys.iter().zip(ws).map(|(y, w)| w * y)) / sw;
    let ss = compensated_sum(ys.iter().zip(ws).map(|(y, w)| (w * (y - point)).powi(2)));
    let var = if n > 1.0 { n / (n - 1.0) * ss / (sw * sw) } else { 0.0 };
    Estimate::normal(point, var)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Participation {
    /// Every eligible unit responded.
    Always,
    Model(ProbitFit),
}

/// Per-wave response-propensity fits, indexed by wave (entry 0 unused).
#[derive(Debug, Clone, PartialEq)]
pub struct ParticipationModels {
    pub waves: Vec<Participation>,
}

impl ParticipationModels {
    pub fn fit(cohort: &CohortFrame) -> Result<Self> {
        let mut waves = vec![Participation::Always];
        for t in 1..cohort.panel.waves() {
            let (x, r) = response_training(cohort, t)?;
            let ones = r.iter().filter(|&&v| v).count();
            waves.push(if ones == r.len() {
                Participation::Always
            } else if ones == 0 {
                return Err(Error::Estimation {
                    wave: t,
                    message: "no responders".into(),
                });
            } else {
                Participation::Model(ProbitFit::fit(&x, &r)?)
            });
        }
        Ok(Self { waves })
    }

    /// Every wave treated as fully responding.
    pub fn full_response(waves: usize) -> Self {
        Self {
            waves: vec![Participation::Always; waves],
        }
    }
}

/// Responders at `t` with weights `cell weight / Π_{k<=t} π̂_ik`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveWeights {
    pub wave: usize,
    pub units: Vec<usize>,
    pub weights: Vec<f64>,
}

pub fn participation_weights(
    cohort: &CohortFrame,
    cells: &CellTable,
    models: &ParticipationModels,
    t: usize,
) -> Result<WaveWeights> {
    let base = cells.unit_weights(cohort)?;
    let units = cohort.responders_at(t)?;
    let mut weights = Vec::with_capacity(units.len());
    let mut row = Vec::new();
    for &i in &units {
        let mut w = base[i];
        for k in 1..=t {
            if let Participation::Model(fit) = &models.waves[k] {
                row.clear();
                cohort.panel.covariate_history(i, k, &mut row);
                row.extend(cohort.outcome_history(i, k));
                let p = fit.prob(&row);
                if p <= 0.0 {
                    return Err(Error::Estimation {
                        wave: k,
                        message: format!("zero participation probability for unit {}", cohort.panel.unit_ids[i]),
                    });
                }
                w /= p;
            }
        }
        weights.push(w);
    }
    Ok(WaveWeights { wave: t, units, weights })
}

pub fn ht_estimate(cohort: &CohortFrame, cells: &CellTable, models: &ParticipationModels, t: usize) -> Result<Estimate> {
    let ww = participation_weights(cohort, cells, models, t)?;
    if ww.units.is_empty() {
        return Err(Error::Estimation {
            wave: t,
            message: "no responders".into(),
        });
    }
    let ys: Vec<f64> = ww.units.iter().map(|&i| cohort.outcome[i][t].unwrap()).collect();
    Ok(weighted_mean_estimate(&ys, &ww.weights))
}

/// HT by age cohort, pooling responders over waves `1..=T`.
pub fn ht_by_age(
    cohort: &CohortFrame,
    cells: &CellTable,
    models: &ParticipationModels,
    grid: &AgeGrid,
) -> Result<Vec<Option<Estimate>>> {
    let g = grid.values().len();
    let mut ys = vec![Vec::new(); g];
    let mut ws = vec![Vec::new(); g];
    for t in 1..cohort.panel.waves() {
        let ww = participation_weights(cohort, cells, models, t)?;
        for (&i, &w) in ww.units.iter().zip(&ww.weights) {
            if let Some(k) = cohort.panel.age[i][t].and_then(|a| grid.assign(a)) {
                ys[k].push(cohort.outcome[i][t].unwrap());
                ws[k].push(w);
            }
        }
    }
    Ok((0..g)
        .map(|k| (!ys[k].is_empty()).then(|| weighted_mean_estimate(&ys[k], &ws[k])))
        .collect())
}

/// GREG decomposition: population mean of the linear predictions plus the
/// weighted mean residual of responders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GregParts {
    pub prediction_mean: f64,
    pub correction: f64,
    pub estimate: Estimate,
}

struct GregWave {
    coef: Vec<f64>,
    weights: WaveWeights,
    residuals: Vec<f64>,
}

fn linear_predict(coef: &[f64], x: &[f64]) -> f64 {
    coef[0] + coef[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
}

fn greg_wave(cohort: &CohortFrame, cells: &CellTable, models: &ParticipationModels, t: usize) -> Result<GregWave> {
    let weights = participation_weights(cohort, cells, models, t)?;
    if weights.units.is_empty() {
        return Err(Error::Estimation {
            wave: t,
            message: "no responders".into(),
        });
    }
    let mut xs = Vec::with_capacity(weights.units.len());
    let mut ys = Vec::with_capacity(weights.units.len());
    for &i in &weights.units {
        let mut row = Vec::new();
        cohort.panel.covariate_history(i, t, &mut row);
        xs.push(row);
        ys.push(cohort.outcome[i][t].unwrap());
    }
    let names = cohort.panel.schema.history_names(t);
    let coef = ols(&xs, &ys, &names).map_err(|e| match e {
        Error::RankDeficient { .. } => e,
        other => Error::Estimation {
            wave: t,
            message: other.to_string(),
        },
    })?;
    let residuals = xs.iter().zip(&ys).map(|(x, y)| y - linear_predict(&coef, x)).collect();
    Ok(GregWave {
        coef,
        weights,
        residuals,
    })
}

fn population_predictions(population: &Panel, coef: &[f64], t: usize) -> Vec<(usize, f64)> {
    let mut row = Vec::new();
    (0..population.n_units())
        .filter(|&i| population.is_alive(i, t))
        .map(|i| {
            row.clear();
            population.covariate_history(i, t, &mut row);
            (i, linear_predict(coef, &row))
        })
        .collect()
}

pub fn greg_estimate(
    population: &Panel,
    cohort: &CohortFrame,
    cells: &CellTable,
    models: &ParticipationModels,
    t: usize,
) -> Result<GregParts> {
    let gw = greg_wave(cohort, cells, models, t)?;
    let preds = population_predictions(population, &gw.coef, t);
    if preds.is_empty() {
        return Err(Error::Estimation {
            wave: t,
            message: "no survivors in the population".into(),
        });
    }
    let prediction_mean = compensated_sum(preds.iter().map(|p| p.1)) / preds.len() as f64;
    let corr = weighted_mean_estimate(&gw.residuals, &gw.weights.weights);
    let var = ((corr.hi - corr.point) / Z95).powi(2);
    Ok(GregParts {
        prediction_mean,
        correction: corr.point,
        estimate: Estimate::normal(prediction_mean + corr.point, var),
    })
}

/// GREG by age cohort: per wave, the cohort's prediction total plus its
/// survivor count times the cohort's weighted mean residual, pooled over
/// waves `1..=T`.
pub fn greg_by_age(
    population: &Panel,
    cohort: &CohortFrame,
    cells: &CellTable,
    models: &ParticipationModels,
    grid: &AgeGrid,
) -> Result<Vec<Option<Estimate>>> {
    let g = grid.values().len();
    let mut totals = vec![0.0; g];
    let mut counts = vec![0usize; g];
    let mut var_terms: Vec<Vec<(f64, f64)>> = vec![Vec::new(); g];
    let mut corr_terms: Vec<Vec<(f64, f64)>> = vec![Vec::new(); g];
    for t in 1..cohort.panel.waves() {
        let gw = greg_wave(cohort, cells, models, t)?;
        let mut wave_counts = vec![0usize; g];
        for (i, m) in population_predictions(population, &gw.coef, t) {
            if let Some(k) = population.age[i][t].and_then(|a| grid.assign(a)) {
                totals[k] += m;
                wave_counts[k] += 1;
            }
        }
        let mut es = vec![Vec::new(); g];
        let mut ws = vec![Vec::new(); g];
        for ((&i, &w), &e) in gw.weights.units.iter().zip(&gw.weights.weights).zip(&gw.residuals) {
            if let Some(k) = cohort.panel.age[i][t].and_then(|a| grid.assign(a)) {
                es[k].push(e);
                ws[k].push(w);
            }
        }
        for k in 0..g {
            counts[k] += wave_counts[k];
            if !es[k].is_empty() && wave_counts[k] > 0 {
                let c = weighted_mean_estimate(&es[k], &ws[k]);
                let v = ((c.hi - c.point) / Z95).powi(2);
                corr_terms[k].push((wave_counts[k] as f64, c.point));
                var_terms[k].push((wave_counts[k] as f64, v));
            }
        }
    }
    Ok((0..g)
        .map(|k| {
            if counts[k] == 0 {
                return None;
            }
            let nk = counts[k] as f64;
            let corr: f64 = corr_terms[k].iter().map(|(n, c)| n * c).sum();
            let var: f64 = var_terms[k].iter().map(|(n, v)| (n / nk).powi(2) * v).sum();
            Some(Estimate::normal((totals[k] + corr) / nk, var))
        })
        .collect())
}
